"""Worst-case performance indicators for ranking simulator-trained policies.

The worst-case value of a policy is the extreme expected metric over all
distributions within a chi-square ball of its simulated stationary
distribution; ranking policies by it is compared with ranking by the
direct simulated expectation.
"""

from .core import (
    DiscreteDistribution,
    EstimateResult,
    EvalLog,
    MetricVector,
    RewardConfig,
    reward_of_step,
)
from .discretize import DiscretizeConfig, Space, empirical_distribution, mix_counts
from .estimate import StoppingRule, expectation, is_estimate, mc_estimate
from .rank import PolicyScore, RankReport, rank_policies, scc_sweep, spearman
from .synth import EnsembleConfig, EnsembleResult, generate_pair, run_ensemble_experiment
from .wcopt import (
    Direction,
    WorstCaseProblem,
    WorstCaseSolution,
    chi_square_divergence,
    oracle_worst_case,
    solve_worst_case,
    worst_case_curve,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteDistribution",
    "DiscretizeConfig",
    "Direction",
    "EnsembleConfig",
    "EnsembleResult",
    "EstimateResult",
    "EvalLog",
    "MetricVector",
    "PolicyScore",
    "RankReport",
    "RewardConfig",
    "Space",
    "StoppingRule",
    "WorstCaseProblem",
    "WorstCaseSolution",
    "chi_square_divergence",
    "empirical_distribution",
    "expectation",
    "generate_pair",
    "is_estimate",
    "mc_estimate",
    "mix_counts",
    "oracle_worst_case",
    "rank_policies",
    "reward_of_step",
    "run_ensemble_experiment",
    "scc_sweep",
    "solve_worst_case",
    "spearman",
    "worst_case_curve",
]
