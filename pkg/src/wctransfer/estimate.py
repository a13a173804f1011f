"""Streaming Monte-Carlo and importance-sampling estimators with RHW stopping.

Both estimators consume an iterable lazily, in chunks, and stop at the first
sample count ``N >= min_samples`` whose confidence-interval relative
half-width drops to the threshold. Running mean and sum of squared
deviations are carried across chunks with the Welford/Chan update, so the
result does not depend on the chunk size beyond the last few ulps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable

import numpy as np

from .core import DiscreteDistribution, EstimateResult, MetricVector
from .errors import ConfigError, DimensionError, InsufficientDataError, ZeroSupportError


@dataclass(frozen=True)
class StoppingRule:
    """``confidence`` is the miss probability c; intervals have coverage 1 - c."""

    confidence: float = 0.05
    rhw_threshold: float = 0.01
    min_samples: int = 100
    max_samples: int = 10_000_000

    def __post_init__(self) -> None:
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence must lie in (0, 1)")
        if not self.rhw_threshold > 0:
            raise ConfigError("rhw_threshold must be positive")
        if self.min_samples < 1 or self.max_samples < self.min_samples:
            raise ConfigError("need 1 <= min_samples <= max_samples")

    @property
    def z(self) -> float:
        return NormalDist().inv_cdf(1.0 - self.confidence / 2.0)

    def to_dict(self) -> dict:
        return {
            "confidence": self.confidence,
            "rhw_threshold": self.rhw_threshold,
            "min_samples": self.min_samples,
            "max_samples": self.max_samples,
        }


class RunningMoments:
    """Welford accumulator with a vectorized batch update."""

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def prefix(self, chunk: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Counts, means and M2 after absorbing each prefix of ``chunk``.

        Deviations are taken from the current mean (or the chunk's first
        value when empty) to keep the cumulative sums well conditioned.
        """
        shift = self.mean if self.n else float(chunk[0])
        y = chunk - shift
        s1 = np.cumsum(y)
        s2 = np.cumsum(y * y)
        n = self.n + np.arange(1, chunk.shape[0] + 1, dtype=np.float64)
        # earlier samples deviate from their own mean by zero in sum
        mean = shift + s1 / n
        m2 = self.m2 + s2 - s1 * s1 / n
        return n, mean, np.maximum(m2, 0.0)

    def absorb(self, n: float, mean: float, m2: float) -> None:
        self.n, self.mean, self.m2 = int(n), float(mean), float(m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else math.inf


def _half_width(z: float, m2: np.ndarray, n: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(n > 1, m2 / np.maximum(n - 1, 1), np.inf)
        return z * np.sqrt(var) / np.sqrt(n)


def _stop_mask(hw: np.ndarray, mean: np.ndarray, threshold: float) -> np.ndarray:
    # zero mean: RHW undefined, fall back to an absolute half-width test
    absm = np.abs(mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(absm > 0, hw / absm, hw)
    return rel <= threshold


def _run(values: Iterable[float], rule: StoppingRule, chunk_size: int) -> EstimateResult:
    z = rule.z
    acc = RunningMoments()
    it = iter(values)
    converged = False
    while acc.n < rule.max_samples:
        take = min(chunk_size, rule.max_samples - acc.n)
        chunk = np.fromiter(itertools.islice(it, take), dtype=np.float64)
        if chunk.size == 0:
            break
        if not np.all(np.isfinite(chunk)):
            raise ConfigError("stream contains non-finite values")
        n, mean, m2 = acc.prefix(chunk)
        hw = _half_width(z, m2, n)
        ok = _stop_mask(hw, mean, rule.rhw_threshold) & (n >= rule.min_samples) & (n > 1)
        hits = np.flatnonzero(ok)
        i = int(hits[0]) if hits.size else chunk.size - 1
        acc.absorb(n[i], mean[i], m2[i])
        if hits.size:
            converged = True
            break
        if chunk.size < take:
            break
    if acc.n < rule.min_samples:
        raise InsufficientDataError(
            f"stream ended after {acc.n} samples, {rule.min_samples} required"
        )
    hw = float(_half_width(z, np.array([acc.m2]), np.array([float(acc.n)]))[0])
    rhw = hw / abs(acc.mean) if acc.mean != 0 else None
    return EstimateResult(
        mean=acc.mean,
        half_width=hw,
        rhw=rhw,
        n_samples=acc.n,
        confidence=rule.confidence,
        converged=converged,
    )


def mc_estimate(samples: Iterable[float], rule: StoppingRule, chunk_size: int = 4096) -> EstimateResult:
    """Plain sample mean of the metric with normal-approximation half-width."""
    return _run(samples, rule, chunk_size)


def _weighted(samples: Iterable[tuple[float, float, float]]) -> Iterable[float]:
    for psi, p, q in samples:
        if q <= 0:
            raise ZeroSupportError(f"sample has proposal probability {q}; likelihood ratio undefined")
        yield psi * (p / q)


def is_estimate(
    samples: Iterable[tuple[float, float, float]], rule: StoppingRule, chunk_size: int = 4096
) -> EstimateResult:
    """Importance-sampling mean of ``psi * p / q`` over samples drawn from ``q``."""
    return _run(_weighted(samples), rule, chunk_size)


def expectation(dist: DiscreteDistribution, psi: MetricVector) -> float:
    """Exactly rounded ``sum(psi * prob)``."""
    if len(psi) != len(dist):
        raise DimensionError(f"metric has {len(psi)} values, support has {len(dist)} points")
    return math.fsum((psi.values * dist.probs).tolist())


def variance(dist: DiscreteDistribution, psi: MetricVector) -> float:
    m = expectation(dist, psi)
    d = psi.values - m
    return math.fsum((d * d * dist.probs).tolist())
