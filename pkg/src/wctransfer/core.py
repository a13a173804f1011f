"""Shared domain types: quantized supports, distributions, metrics, reward configs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, EmptyInputError, InputError

MAX_DECIMALS = 12

SupportPoint = tuple[int, ...]
"""Coordinates stored as integers scaled by ``10**decimals``."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def quantize(values: Any, decimals: int) -> np.ndarray:
    """Scale by ``10**decimals`` and round half away from zero to int64."""
    x = np.asarray(values, dtype=np.float64) * (10.0**decimals)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot quantize non-finite values")
    if np.any(np.abs(x) >= 2.0**62):
        raise DomainError(f"value too large to quantize at {decimals} decimals")
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def dequantize(points: Any, decimals: int) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) / (10.0**decimals)


def _lexsort_rows(points: np.ndarray) -> np.ndarray:
    # np.lexsort treats the last key as primary
    return np.lexsort(points.T[::-1])


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability vector over a finite, lexicographically sorted set of support points.

    ``points`` is an ``(n, dim)`` int64 array of quantized coordinates and
    ``probs`` the matching probabilities; both arrays are read-only.
    """

    decimals: int
    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.int64, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        prb = np.array(self.probs, dtype=np.float64, copy=True).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] != prb.shape[0]:
            raise DimensionError(
                f"support has {pts.shape[0]} points but {prb.shape[0]} probabilities given"
            )
        if pts.shape[0] == 0:
            raise EmptyInputError("distribution needs at least one support point")
        if not 0 <= self.decimals <= MAX_DECIMALS:
            raise ConfigError(f"decimals must be in [0, {MAX_DECIMALS}], got {self.decimals}")
        if not np.all(np.isfinite(prb)) or np.any(prb < 0):
            raise DomainError("probabilities must be finite and non-negative")
        total = math.fsum(prb)
        if total <= 0:
            raise DomainError("probabilities sum to zero")
        prb = prb / total
        order = _lexsort_rows(pts)
        pts, prb = pts[order], prb[order]
        if pts.shape[0] > 1 and np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise InputError("duplicate support points")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "probs", _readonly(prb))

    @classmethod
    def from_counts(cls, counts: "CountMap") -> "DiscreteDistribution":
        if not counts.counts:
            raise EmptyInputError("no counts to normalize")
        keys = list(counts.counts)
        pts = np.array(keys, dtype=np.int64)
        cnt = np.array([counts.counts[k] for k in keys], dtype=np.float64)
        return cls(counts.decimals, pts, cnt)

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[Sequence[int], float]], decimals: int
    ) -> "DiscreteDistribution":
        pairs = list(pairs)
        if not pairs:
            raise EmptyInputError("no support points")
        pts = np.array([list(p) for p, _ in pairs], dtype=np.int64)
        return cls(decimals, pts, [w for _, w in pairs])

    def with_probs(self, probs: np.ndarray) -> "DiscreteDistribution":
        """Same support, new probability vector (renormalized)."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != self.probs.shape:
            raise DimensionError("probability vector does not match support size")
        new = object.__new__(DiscreteDistribution)
        total = math.fsum(probs)
        if not np.all(np.isfinite(probs)) or np.any(probs < 0) or total <= 0:
            raise DomainError("probabilities must be finite, non-negative and not all zero")
        object.__setattr__(new, "decimals", self.decimals)
        object.__setattr__(new, "points", self.points)
        object.__setattr__(new, "probs", _readonly(probs / total))
        return new

    def __len__(self) -> int:
        return int(self.probs.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def support(self) -> list[SupportPoint]:
        return [tuple(int(c) for c in row) for row in self.points]

    def coords(self) -> np.ndarray:
        """Dequantized coordinates, shape ``(n, dim)``."""
        return dequantize(self.points, self.decimals)

    def same_support(self, other: "DiscreteDistribution") -> bool:
        return (
            self.decimals == other.decimals
            and self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return self.same_support(other) and bool(np.array_equal(self.probs, other.probs))

    def to_dict(self) -> dict:
        return {
            "decimals": int(self.decimals),
            "support": self.points.tolist(),
            "probs": [float(p) for p in self.probs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteDistribution":
        try:
            return cls(int(data["decimals"]), np.array(data["support"], dtype=np.int64), data["probs"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed distribution document: {exc}") from exc


@dataclass(frozen=True, eq=False)
class MetricVector:
    """Metric value per support point, aligned index-for-index with a distribution."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise DomainError("metric values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def from_coords(cls, dist: DiscreteDistribution) -> "MetricVector":
        if dist.dim != 1:
            raise DimensionError("metric from coords needs a one-dimensional support")
        return cls(dist.coords()[:, 0])

    def check_aligned(self, dist: DiscreteDistribution) -> None:
        if len(self) != len(dist):
            raise DimensionError(f"metric has {len(self)} values, support has {len(dist)} points")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetricVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))


R1_TERMS = ("r_x", "r_xdot", "r_j", "r_jdot", "r_h", "r_a")


@dataclass(frozen=True)
class RewardConfig:
    """Linear reward ``sum(weights[i] * r[i])`` over the masked terms."""

    term_names: tuple[str, ...]
    weights: tuple[float, ...]
    mask: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "term_names", tuple(str(t) for t in self.term_names))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        mask = tuple(bool(m) for m in self.mask) if self.mask else (True,) * len(self.term_names)
        object.__setattr__(self, "mask", mask)
        n = len(self.term_names)
        if len(self.weights) != n or len(self.mask) != n:
            raise ConfigError("weights and mask must match term_names in length")
        if n == 0 or not any(self.mask):
            raise ConfigError("at least one reward term must be active")
        if len(set(self.term_names)) != n:
            raise ConfigError("duplicate term names")
        if not all(math.isfinite(w) for w in self.weights):
            raise ConfigError("weights must be finite")

    @classmethod
    def stability(cls, weights: Sequence[float], term_names: Sequence[str] = R1_TERMS) -> "RewardConfig":
        """Variant that keeps only the torso orientation and angular-velocity terms."""
        names = tuple(term_names)
        mask = tuple(n in ("r_x", "r_xdot") for n in names)
        return cls(names, tuple(weights), mask)

    @property
    def active_weights(self) -> np.ndarray:
        return np.array([w for w, m in zip(self.weights, self.mask) if m], dtype=np.float64)

    @property
    def active_index(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.mask, dtype=bool))

    def effective_weights(self) -> np.ndarray:
        return np.where(np.array(self.mask, dtype=bool), np.array(self.weights), 0.0)

    def to_dict(self) -> dict:
        return {
            "term_names": list(self.term_names),
            "weights": list(self.weights),
            "mask": list(self.mask),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        return cls(tuple(data["term_names"]), tuple(data["weights"]), tuple(data.get("mask", ())))


def reward_of_step(features: Sequence[float], config: RewardConfig) -> float:
    f = np.asarray(features, dtype=np.float64).reshape(-1)
    if f.shape[0] != len(config.term_names):
        raise DimensionError(
            f"feature vector has {f.shape[0]} entries, config expects {len(config.term_names)}"
        )
    return math.fsum(w * x for w, x, m in zip(config.weights, f, config.mask) if m)


def rewards_of_steps(features: np.ndarray, config: RewardConfig) -> np.ndarray:
    """Vectorized :func:`reward_of_step` over an ``(n_steps, n_terms)`` array."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != len(config.term_names):
        raise DimensionError("feature matrix does not match reward term count")
    idx = config.active_index
    return f[:, idx] @ config.active_weights


@dataclass(frozen=True)
class EvalLog:
    """Per-step reward feature vectors for one policy, grouped by episode."""

    policy_id: str
    episodes: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        eps = tuple(_readonly(np.array(e, dtype=np.float64, copy=True)) for e in self.episodes)
        object.__setattr__(self, "episodes", eps)
        if not eps or all(e.size == 0 for e in eps):
            raise EmptyInputError(f"log for policy {self.policy_id!r} has no steps")
        widths = {e.shape[1] for e in eps if e.ndim == 2 and e.shape[0] > 0}
        if any(e.ndim != 2 for e in eps if e.size) or len(widths) != 1:
            raise DimensionError(f"log for policy {self.policy_id!r} mixes step vector lengths")

    @property
    def n_terms(self) -> int:
        return next(e.shape[1] for e in self.episodes if e.size)

    @property
    def n_steps(self) -> int:
        return sum(e.shape[0] for e in self.episodes if e.size)

    def check_config(self, config: RewardConfig) -> None:
        if self.n_terms != len(config.term_names):
            raise DimensionError(
                f"log for {self.policy_id!r} has {self.n_terms} reward terms, "
                f"config has {len(config.term_names)}"
            )

    def steps(self, burn_in: int = 0) -> np.ndarray:
        """All steps pooled across episodes, skipping the first ``burn_in`` of each."""
        parts = [e[burn_in:] for e in self.episodes if e.size]
        parts = [p for p in parts if p.shape[0]]
        if not parts:
            raise EmptyInputError(f"burn-in of {burn_in} leaves no steps for {self.policy_id!r}")
        return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class EstimateResult:
    mean: float
    half_width: float
    rhw: float | None
    n_samples: int
    confidence: float
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "half_width": self.half_width,
            "rhw": self.rhw,
            "n": self.n_samples,
            "converged": self.converged,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimateResult":
        return cls(
            mean=float(data["mean"]),
            half_width=float(data["half_width"]),
            rhw=None if data["rhw"] is None else float(data["rhw"]),
            n_samples=int(data["n"]),
            confidence=float(data["confidence"]),
            converged=bool(data["converged"]),
        )
