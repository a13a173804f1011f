"""Empirical stationary distributions from evaluation logs via uniform rounding."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    MAX_DECIMALS,
    DiscreteDistribution,
    EvalLog,
    MetricVector,
    RewardConfig,
    dequantize,
    quantize,
    rewards_of_steps,
)
from .errors import ConfigError, EmptyInputError


class Space(str, Enum):
    REWARD_SCALAR = "reward_scalar"
    REWARD_TERMS = "reward_terms"


@dataclass(frozen=True)
class DiscretizeConfig:
    decimals: int = 2
    space: Space = Space.REWARD_SCALAR
    burn_in: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "space", Space(self.space))
        if not isinstance(self.decimals, int) or not 0 <= self.decimals <= MAX_DECIMALS:
            raise ConfigError(f"decimals must be an integer in [0, {MAX_DECIMALS}]")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")

    def to_dict(self) -> dict:
        return {"decimals": self.decimals, "space": self.space.value, "burn_in": self.burn_in}


@dataclass
class CountMap:
    """Raw (unnormalized) visit counts keyed by quantized support point."""

    decimals: int
    counts: Counter = field(default_factory=Counter)

    def total(self) -> int:
        return sum(self.counts.values())


def quantized_states(log: EvalLog, reward: RewardConfig, disc: DiscretizeConfig) -> np.ndarray:
    """Quantized state of every pooled step, shape ``(n_steps, dim)``."""
    log.check_config(reward)
    steps = log.steps(disc.burn_in)
    if disc.space is Space.REWARD_SCALAR:
        values = rewards_of_steps(steps, reward).reshape(-1, 1)
    else:
        values = steps[:, reward.active_index]
    return quantize(values, disc.decimals)


def count_states(log: EvalLog, reward: RewardConfig, disc: DiscretizeConfig) -> CountMap:
    q = quantized_states(log, reward, disc)
    uniq, cnt = np.unique(q, axis=0, return_counts=True)
    counts = Counter({tuple(int(c) for c in row): int(n) for row, n in zip(uniq, cnt)})
    return CountMap(disc.decimals, counts)


def mix_counts(a: CountMap, b: CountMap) -> CountMap:
    if a.decimals != b.decimals:
        raise ConfigError(f"cannot merge counts at {a.decimals} and {b.decimals} decimals")
    return CountMap(a.decimals, a.counts + b.counts)


def metric_for(dist: DiscreteDistribution, reward: RewardConfig, space: Space) -> MetricVector:
    """Metric value at every support point of a distribution built in ``space``."""
    coords = dequantize(dist.points, dist.decimals)
    if Space(space) is Space.REWARD_SCALAR:
        return MetricVector(coords[:, 0])
    return MetricVector(coords @ reward.active_weights)


def empirical_distribution(
    log: EvalLog, reward: RewardConfig, disc: DiscretizeConfig
) -> tuple[DiscreteDistribution, MetricVector]:
    counts = count_states(log, reward, disc)
    if not counts.counts:
        raise EmptyInputError("log produced no states")
    dist = DiscreteDistribution.from_counts(counts)
    return dist, metric_for(dist, reward, disc.space)


def requantize(dist: DiscreteDistribution, decimals: int) -> DiscreteDistribution:
    """Round support points to fewer decimals and sum the merged probabilities."""
    if decimals > dist.decimals:
        raise ConfigError("requantize can only coarsen the support")
    step = 10 ** (dist.decimals - decimals)
    pts = dist.points
    coarse = np.sign(pts) * ((np.abs(pts) + step // 2) // step) if step > 1 else pts
    merged: Counter = Counter()
    for row, p in zip(coarse.tolist(), dist.probs.tolist()):
        merged[tuple(row)] += p
    return DiscreteDistribution.from_pairs(merged.items(), decimals)
