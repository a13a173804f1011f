"""Synthetic policy pairs for checking that worst-case values rank at least as well as direct ones.

Each pair shares one metric vector ``psi`` on a support of ``support_size``
states. The "real" distributions ``p1``, ``p2`` are symmetric Dirichlet draws
tilted so that ``E_p1[psi] - E_p2[psi] == gap``; the "simulated" ``q1``, ``q2``
are ``p_i`` multiplied by independent Dirichlet(noise) weights and
renormalized. A pair is ranked correctly when an indicator orders the
simulated pair the same way as the known real order.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import DiscreteDistribution, MetricVector
from .errors import ConfigError
from .wcopt import Direction, WorstCaseProblem, solve_worst_case

MAX_SYNTH_SUPPORT = 10_000


@dataclass(frozen=True)
class EnsembleConfig:
    n_pairs: int = 2000
    support_size: int = 50
    gap: float = 0.05
    noise: float = 5.0
    k: float = 1.0
    seed: int = 0
    direction: Direction = Direction.MINIMIZE
    p_concentration: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        if self.n_pairs < 1:
            raise ConfigError("n_pairs must be positive")
        if not 2 <= self.support_size <= MAX_SYNTH_SUPPORT:
            raise ConfigError(f"support_size must be in [2, {MAX_SYNTH_SUPPORT}]")
        if not self.gap > 0:
            raise ConfigError("gap must be positive")
        # noise == 0 is accepted as "no perturbation" (q = p)
        if not self.noise >= 0:
            raise ConfigError("noise must be non-negative")
        if not (math.isfinite(self.k) and self.k >= 0):
            raise ConfigError("k must be a finite non-negative number")
        if not self.p_concentration > 0:
            raise ConfigError("p_concentration must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = self.direction.value
        return d


@dataclass(frozen=True)
class SyntheticPair:
    p1: np.ndarray
    p2: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    psi: np.ndarray


@dataclass(frozen=True)
class PairOutcome:
    index: int
    e_q1: float
    e_q2: float
    wc1: float
    wc2: float
    var_q: float
    var_rho: float
    correct_q: bool
    correct_rho: bool


@dataclass(frozen=True)
class EnsembleResult:
    p_correct_q: float
    p_correct_rho: float
    n_pairs: int
    mean_var_q: float
    mean_var_rho: float
    frac_var_reduced: float = 1.0
    config: dict = field(default_factory=dict)

    @property
    def standard_error(self) -> float:
        """Pooled binomial standard error of the difference of the two fractions."""
        pbar = 0.5 * (self.p_correct_q + self.p_correct_rho)
        return math.sqrt(2.0 * pbar * (1.0 - pbar) / self.n_pairs)

    def to_dict(self) -> dict:
        return {
            "p_correct_q": self.p_correct_q,
            "p_correct_rho": self.p_correct_rho,
            "n_pairs": self.n_pairs,
            "mean_var_q": self.mean_var_q,
            "mean_var_rho": self.mean_var_rho,
            "frac_var_reduced": self.frac_var_reduced,
            "standard_error": self.standard_error,
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleResult":
        return cls(
            p_correct_q=float(data["p_correct_q"]),
            p_correct_rho=float(data["p_correct_rho"]),
            n_pairs=int(data["n_pairs"]),
            mean_var_q=float(data["mean_var_q"]),
            mean_var_rho=float(data["mean_var_rho"]),
            frac_var_reduced=float(data.get("frac_var_reduced", 1.0)),
            config=dict(data.get("config", {})),
        )


def _tilt(p: np.ndarray, psi: np.ndarray, t: float) -> np.ndarray:
    z = t * psi
    w = p * np.exp(z - z.max())
    return w / w.sum()


def _gap_at(p1: np.ndarray, p2: np.ndarray, psi: np.ndarray, t: float) -> float:
    return float(_tilt(p1, psi, t) @ psi - _tilt(p2, psi, -t) @ psi)


def enforce_gap(p1: np.ndarray, p2: np.ndarray, psi: np.ndarray, gap: float,
                tol: float = 1e-11) -> tuple[np.ndarray, np.ndarray]:
    """Tilt ``p1`` up and ``p2`` down along ``psi`` by one scalar until the means differ by ``gap``.

    The mean difference is increasing in the tilt, so the scalar is found by
    bracketing and bisection.
    """
    span = float(psi.max() - psi.min())
    if gap > span:
        raise ConfigError(f"gap {gap} exceeds the metric range {span}")
    if gap == span:
        hi_mass = (psi == psi.max()).astype(float)
        lo_mass = (psi == psi.min()).astype(float)
        return hi_mass / hi_mass.sum(), lo_mass / lo_mass.sum()
    lo, hi = -1.0, 1.0
    for _ in range(200):
        if _gap_at(p1, p2, psi, lo) <= gap:
            break
        lo *= 2.0
    for _ in range(200):
        if _gap_at(p1, p2, psi, hi) >= gap:
            break
        hi *= 2.0
    g_lo, g_hi = _gap_at(p1, p2, psi, lo), _gap_at(p1, p2, psi, hi)
    if not g_lo <= gap <= g_hi:
        raise ConfigError(f"gap {gap} not reachable by tilting")
    t = 0.5 * (lo + hi)
    for _ in range(300):
        t = 0.5 * (lo + hi)
        g = _gap_at(p1, p2, psi, t)
        if abs(g - gap) <= tol or hi - lo <= 1e-15 * max(1.0, abs(t)):
            break
        if g < gap:
            lo = t
        else:
            hi = t
    return _tilt(p1, psi, t), _tilt(p2, psi, -t)


def _perturb(p: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    if noise == 0:
        return p.copy()
    w = rng.dirichlet(np.full(p.shape[0], noise))
    q = p * w
    s = q.sum()
    if not s > 0:
        return p.copy()
    return q / s


def generate_pair(config: EnsembleConfig, rng: np.random.Generator) -> SyntheticPair:
    n = config.support_size
    psi = np.sort(rng.standard_normal(n))
    alpha = np.full(n, config.p_concentration)
    p1 = rng.dirichlet(alpha)
    p2 = rng.dirichlet(alpha)
    p1, p2 = enforce_gap(p1, p2, psi, config.gap)
    q1 = _perturb(p1, config.noise, rng)
    q2 = _perturb(p2, config.noise, rng)
    return SyntheticPair(p1, p2, q1, q2, psi)


def pair_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _weighted_var(p: np.ndarray, psi: np.ndarray) -> float:
    m = math.fsum((p * psi).tolist())
    return math.fsum((p * (psi - m) ** 2).tolist())


def evaluate_pair(config: EnsembleConfig, index: int) -> PairOutcome:
    pair = generate_pair(config, pair_rng(config.seed, index))
    support = np.arange(config.support_size)
    psi = MetricVector(pair.psi)
    e_q, wc, var_q, var_rho = [], [], [], []
    for q in (pair.q1, pair.q2):
        dist = DiscreteDistribution(0, support, q)
        sol = solve_worst_case(WorstCaseProblem(dist, psi, config.k, config.direction))
        e_q.append(math.fsum((dist.probs * pair.psi).tolist()))
        wc.append(sol.value)
        var_q.append(_weighted_var(dist.probs, pair.psi))
        var_rho.append(_weighted_var(sol.rho.probs, pair.psi))
    # E_p1 > E_p2 by construction
    return PairOutcome(
        index=index,
        e_q1=e_q[0],
        e_q2=e_q[1],
        wc1=wc[0],
        wc2=wc[1],
        var_q=0.5 * (var_q[0] + var_q[1]),
        var_rho=0.5 * (var_rho[0] + var_rho[1]),
        correct_q=e_q[0] > e_q[1],
        correct_rho=wc[0] > wc[1],
    )


def run_pairs(config: EnsembleConfig, workers: int = 1) -> list[PairOutcome]:
    idx = range(config.n_pairs)
    if workers <= 1:
        return [evaluate_pair(config, i) for i in idx]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: evaluate_pair(config, i), idx))


def summarize(config: EnsembleConfig, outcomes: list[PairOutcome]) -> EnsembleResult:
    n = len(outcomes)
    return EnsembleResult(
        p_correct_q=sum(o.correct_q for o in outcomes) / n,
        p_correct_rho=sum(o.correct_rho for o in outcomes) / n,
        n_pairs=n,
        mean_var_q=math.fsum(o.var_q for o in outcomes) / n,
        mean_var_rho=math.fsum(o.var_rho for o in outcomes) / n,
        frac_var_reduced=sum(o.var_rho <= o.var_q for o in outcomes) / n,
        config=config.to_dict(),
    )


def run_ensemble_experiment(config: EnsembleConfig, workers: int = 1) -> EnsembleResult:
    return summarize(config, run_pairs(config, workers))


def write_outcomes_csv(outcomes: list[PairOutcome], path: str | Path) -> None:
    cols = list(PairOutcome.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for o in outcomes:
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(o).values()])
