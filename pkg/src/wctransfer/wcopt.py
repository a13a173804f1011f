"""Worst-case expectation over a chi-square ball around a reference distribution.

The problem solved is::

    max_rho  sum(psi * rho)
    s.t.     sum(rho) = 1,  0 <= rho <= 1,
             sum(rho**2 / q - rho) <= k

(or the ``min`` counterpart). On the simplex the quadratic constraint is
``chi2(rho || q) = sum(rho**2 / q) - 1 <= k``.

Solution strategy
-----------------
1. ``k == 0`` forces ``rho = q``.
2. If the q-proportional point mass on the argmax set fits the budget
   (``1 / q(argmax) - 1 <= k``) it is optimal (saturation).
3. Otherwise the constraint is tight and stationarity gives
   ``rho = q * (psi - alpha)_+ / S`` for a threshold ``alpha``. With the
   active set fixed to the states with ``psi > alpha``, the tightness
   condition reduces to ``(V + u**2) = (1 + k) * Q * u**2`` where ``Q``, ``V``
   are the q-mass and q-conditional variance of psi on the active set and
   ``u = mean - alpha``, so ``alpha`` has a closed form per active set.
   The divergence of ``rho(alpha)`` increases with ``alpha``, which locates
   the right active set from the values at the breakpoints.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import DiscreteDistribution, MetricVector
from .errors import CapacityError, ConfigError, DimensionError, DomainError, SolverError

MAX_SUPPORT = 10_000_000
ORACLE_MAX_SUPPORT = 6


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"

    @classmethod
    def parse(cls, value: "str | Direction") -> "Direction":
        if isinstance(value, Direction):
            return value
        v = str(value).lower()
        if v in ("max", "maximize"):
            return cls.MAXIMIZE
        if v in ("min", "minimize"):
            return cls.MINIMIZE
        raise ConfigError(f"unknown direction {value!r}")


@dataclass(frozen=True)
class WorstCaseProblem:
    q: DiscreteDistribution
    psi: MetricVector
    k: float
    direction: Direction = Direction.MAXIMIZE

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        if not math.isfinite(self.k) or self.k < 0:
            raise DomainError(f"divergence budget must be a finite non-negative number, got {self.k}")
        self.psi.check_aligned(self.q)


@dataclass(frozen=True)
class WorstCaseSolution:
    rho: DiscreteDistribution
    value: float
    active: bool
    kkt_residual: float

    def to_dict(self, k: float | None = None) -> dict:
        out = {} if k is None else {"k": k}
        out.update(
            value=self.value,
            active=self.active,
            kkt_residual=self.kkt_residual,
            rho=[float(p) for p in self.rho.probs],
        )
        return out


def chi_square_divergence(rho: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """``sum(rho**2 / q - rho)`` over states with ``q > 0``; ``inf`` if rho leaks onto q = 0."""
    if not rho.same_support(q):
        raise DimensionError("rho and q must share the same support")
    return chi_square_form(rho.probs, q.probs)


def chi_square_form(rho: np.ndarray, q: np.ndarray) -> float:
    rho = np.asarray(rho, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if rho.shape != q.shape:
        raise DimensionError("rho and q must have the same length")
    pos = q > 0
    if np.any(rho[~pos] > 0):
        return math.inf
    r, qq = rho[pos], q[pos]
    # same quantity as sum(r**2/q - r), without cancellation when rho is near q
    d = r - qq
    val = math.fsum((d * (d / qq)).tolist()) + (math.fsum(r.tolist()) - math.fsum(qq.tolist()))
    return max(val, 0.0)


# -- solver ----------------------------------------------------------------


@dataclass
class _Raw:
    rho: np.ndarray
    alpha: float
    beta: float
    saturated: bool


def _maximize(q: np.ndarray, psi: np.ndarray, k: float) -> _Raw:
    """Maximizer on arrays; ``q`` sums to one, ``psi`` finite."""
    n = q.shape[0]
    pos = np.flatnonzero(q > 0)
    qp, pp = q[pos], psi[pos]
    top = float(pp.max())
    if k == 0.0:
        return _Raw(q.copy(), -math.inf, math.inf, False)

    in_top = pp == top
    q_top = math.fsum(qp[in_top].tolist())
    # 1/q_top - 1 <= k, with a few ulps of slack for q_top = 1/n style inputs
    if 1.0 / q_top - 1.0 <= k + 8 * np.finfo(float).eps * (1.0 + k):
        rho = np.zeros(n)
        rho[pos[in_top]] = qp[in_top] / q_top
        return _Raw(rho, top, 0.0, True)

    order = np.argsort(-pp, kind="stable")
    vals = pp[order]
    qs = qp[order]
    y = vals - top  # <= 0, shifted for conditioning
    ends = np.flatnonzero(np.r_[vals[1:] != vals[:-1], True])  # last index of each value group
    group_vals = y[ends]
    cq = np.cumsum(qs)[ends]
    c1 = np.cumsum(qs * y)[ends]
    c2 = np.cumsum(qs * y * y)[ends]
    n_groups = ends.shape[0]

    # active set = first j+1 groups; evaluate the divergence ratio at alpha = next group value
    mean_a = c1 / cq
    var_a = np.maximum(c2 / cq - mean_a * mean_a, 0.0)
    target = 1.0 + k
    j = n_groups - 1
    if n_groups > 1:
        d = mean_a[:-1] - group_vals[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (var_a[:-1] + d * d) / (cq[:-1] * d * d)
        hit = np.flatnonzero(ratio <= target)
        if hit.size:
            j = int(hit[0])

    Q, m, V = float(cq[j]), float(mean_a[j]), float(var_a[j])
    # (1 + k) Q - 1 written without cancellation for tiny k
    rest = math.fsum(qs[ends[j] + 1:].tolist())
    denom = k * Q - rest
    if V <= 0.0 or denom <= 0.0:
        raise SolverError("degenerate active set while locating the threshold")
    u = math.sqrt(V / denom)
    if not math.isfinite(u * float(np.abs(y).max(initial=1.0) + 1.0)):
        # k below float resolution: the ball is q to machine precision
        return _Raw(q.copy(), -math.inf, math.inf, False)
    alpha = m - u
    hi = float(group_vals[j])
    lo = float(group_vals[j + 1]) if j + 1 < n_groups else -math.inf
    alpha = min(max(alpha, lo), hi)

    w = np.maximum(y - alpha, 0.0)
    wq = qs * w
    s1 = math.fsum(wq.tolist())
    if not s1 > 0:
        raise SolverError("threshold removed all mass")
    rho_sorted = wq / s1
    rho = np.zeros(n)
    rho[pos[order]] = rho_sorted
    return _Raw(rho, alpha + top, s1 / 2.0, False)


def _repair(rho: np.ndarray, q: np.ndarray, k: float) -> np.ndarray:
    """Normalize and pull rho toward q restricted to rho's support.

    The centre c = q_A / Q_A lies strictly inside the ball and
    sum(c * (rho - c) / q) = 0, so chi2 along the segment is
    C + t**2 (chi2(rho) - C) with C = chi2(c). One shrink step fixes
    rounding overshoot and states outside the support stay exactly zero.
    """
    rho = rho / math.fsum(rho.tolist())
    on = rho > 0
    centre = np.where(on, q, 0.0)
    centre = centre / math.fsum(centre.tolist())
    c = chi_square_form(centre, q)
    for _ in range(8):
        div = chi_square_form(rho, q)
        if div <= k:
            return rho
        t = math.sqrt(max(k - c, 0.0) / (div - c)) * (1.0 - 4 * np.finfo(float).eps)
        rho = np.where(on, centre + t * (rho - centre), 0.0)
        rho = np.maximum(rho, 0.0)
        rho = rho / math.fsum(rho.tolist())
    if chi_square_form(rho, q) <= k + 1e-12:
        return rho
    raise SolverError("could not restore feasibility")


def _kkt_residual(rho: np.ndarray, q: np.ndarray, psi: np.ndarray, raw: _Raw) -> float:
    scale = max(1.0, float(np.max(np.abs(psi))))
    if math.isfinite(raw.alpha):
        scale = max(scale, abs(raw.alpha))  # terms are of order |alpha| when k is small
    pos = q > 0
    if raw.saturated or not math.isfinite(raw.alpha):
        primal = abs(math.fsum(rho.tolist()) - 1.0)
        return primal / scale if raw.saturated else primal
    r, qq, pp = rho[pos], q[pos], psi[pos]
    on = raw.rho[pos] > 0
    stat = np.abs(pp[on] - raw.alpha - 2.0 * raw.beta * r[on] / qq[on])
    off = np.maximum(pp[~on] - raw.alpha, 0.0)
    worst = max(float(stat.max(initial=0.0)), float(off.max(initial=0.0)))
    return worst / scale


def solve_worst_case(problem: WorstCaseProblem) -> WorstCaseSolution:
    q_dist, psi_vec, k = problem.q, problem.psi, float(problem.k)
    n = len(q_dist)
    if n == 0:
        raise DimensionError("empty support")
    if n > MAX_SUPPORT:
        raise CapacityError(f"support of {n} points exceeds the {MAX_SUPPORT} point limit")
    q = np.asarray(q_dist.probs)
    sign = 1.0 if problem.direction is Direction.MAXIMIZE else -1.0
    work = sign * np.asarray(psi_vec.values)

    if n == 1 or k == 0.0:
        rho = q.copy()
        raw = _Raw(rho, -math.inf, math.inf, False)
    else:
        raw = _maximize(q, work, k)
        rho = raw.rho if raw.saturated else _repair(raw.rho, q, k)

    rho_dist = q_dist.with_probs(rho)
    value = math.fsum((psi_vec.values * rho_dist.probs).tolist())
    div = chi_square_form(rho_dist.probs, q)
    active = div >= k - 1e-9 * max(1.0, k)
    return WorstCaseSolution(
        rho=rho_dist,
        value=value,
        active=bool(active),
        kkt_residual=_kkt_residual(rho_dist.probs, q, work, raw),
    )


def worst_case_curve(
    q: DiscreteDistribution,
    psi: MetricVector,
    ks: Sequence[float],
    direction: Direction | str = Direction.MAXIMIZE,
) -> list[tuple[float, float]]:
    if len(ks) == 0:
        raise ConfigError("need at least one divergence budget")
    return [
        (float(k), solve_worst_case(WorstCaseProblem(q, psi, float(k), direction)).value)
        for k in ks
    ]


# -- oracle ----------------------------------------------------------------


def _grid_best(
    q: np.ndarray, w: np.ndarray, budget: float, units: int, incumbent: float, block: int = 4096
) -> float:
    """Exact maximum of ``w @ rho`` over grid points ``rho = v / units`` in the ball.

    Breadth-first enumeration of coordinates with two prunes: remaining mass
    must still fit the budget (min of ``sum rho_i**2 / q_i`` at fixed mass
    ``r`` is ``r**2 / Q``), and an upper bound on the attainable objective
    (the better of ``r * max w`` and the Cauchy-Schwarz bound with
    non-negativity dropped) must reach the incumbent.
    """
    tol = 1e-12
    m = q.shape[0]
    used = np.zeros(1, dtype=np.int64)
    part = np.zeros(1)
    div = np.zeros(1)
    grid = np.arange(units + 1, dtype=np.int64)
    for j in range(m - 1):
        rest_q = q[j + 1:]
        rest_w = w[j + 1:]
        Q = float(rest_q.sum())
        mbar = float(rest_q @ rest_w) / Q
        spread = math.sqrt(max(float(rest_q @ (rest_w - mbar) ** 2), 0.0))
        wmax = float(rest_w.max())
        keep_u, keep_p, keep_d = [], [], []
        for s in range(0, used.shape[0], block):
            U = used[s:s + block, None]
            v = grid[None, :]
            ok = v <= units - U
            U2 = U + v
            x = v / units
            P2 = part[s:s + block, None] + w[j] * x
            D2 = div[s:s + block, None] + x * x / q[j]
            r = (units - U2) / units
            slack = budget - D2 - r * r / Q
            ok &= slack >= -tol
            ub = P2 + np.minimum(r * wmax, r * mbar + spread * np.sqrt(np.maximum(slack, 0.0)))
            ok &= ub >= incumbent - tol
            keep_u.append(U2[ok])
            keep_p.append(P2[ok])
            keep_d.append(D2[ok])
        used = np.concatenate(keep_u)
        part = np.concatenate(keep_p)
        div = np.concatenate(keep_d)
        if used.size == 0:
            return incumbent
    r = (units - used) / units
    final = part + w[-1] * r
    feas = div + r * r / q[-1] <= budget + tol
    if np.any(feas):
        incumbent = max(incumbent, float(final[feas].max()))
    return incumbent


def _nearest_grid_point(q: np.ndarray, units: int) -> np.ndarray:
    """Largest-remainder rounding of ``q * units`` to integers summing to ``units``."""
    raw = q * units
    base = np.floor(raw).astype(np.int64)
    short = units - int(base.sum())
    if short > 0:
        base[np.argsort(-(raw - base), kind="stable")[:short]] += 1
    return base


def oracle_worst_case(problem: WorstCaseProblem, resolution: float = 1e-3) -> float:
    """Best objective over the simplex grid of step ``resolution`` inside the ball.

    Independent of :func:`solve_worst_case`: it never uses the threshold
    structure of the optimum, only enumeration with admissible pruning, and
    returns exactly the grid maximum (up to float comparison slack).
    """
    n = len(problem.q)
    if n > ORACLE_MAX_SUPPORT:
        raise CapacityError(f"oracle supports at most {ORACLE_MAX_SUPPORT} points, got {n}")
    units = int(round(1.0 / resolution))
    if units < 1 or abs(units * resolution - 1.0) > 1e-9:
        raise ConfigError("resolution must divide 1 into an integer number of steps")
    sign = 1.0 if problem.direction is Direction.MAXIMIZE else -1.0
    q_all = np.asarray(problem.q.probs)
    pos = q_all > 0
    q = q_all[pos]
    w = sign * np.asarray(problem.psi.values)[pos]
    budget = 1.0 + float(problem.k)
    if q.shape[0] == 1:
        return sign * float(w[0])

    incumbent = -math.inf
    near = _nearest_grid_point(q, units) / units
    if math.fsum((near * near / q).tolist()) <= budget + 1e-12:
        incumbent = float(w @ near)
    for coarse in (10, 20, 50, 100, 200, 250, 500):
        if units % coarse == 0 and coarse < units:
            incumbent = _grid_best(q, w, budget, coarse, incumbent)
    best = _grid_best(q, w, budget, units, incumbent)
    if not math.isfinite(best):
        raise SolverError("no grid point satisfies the divergence constraint at this resolution")
    return sign * best


def brute_force_grid(problem: WorstCaseProblem, resolution: float) -> float:
    """Unpruned enumeration of every grid point; only usable for coarse grids."""
    units = int(round(1.0 / resolution))
    sign = 1.0 if problem.direction is Direction.MAXIMIZE else -1.0
    q = np.asarray(problem.q.probs)
    w = sign * np.asarray(problem.psi.values)
    n = q.shape[0]
    best = -math.inf
    for head in itertools.product(range(units + 1), repeat=n - 1):
        last = units - sum(head)
        if last < 0:
            continue
        rho = np.array([*head, last]) / units
        if chi_square_form(rho, q) <= problem.k + 1e-12:
            best = max(best, float(w @ rho))
    return sign * best
