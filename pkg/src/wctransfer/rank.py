"""Policy ordering and Spearman rank agreement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, UndefinedCorrelationError


class Order(str, Enum):
    ASCENDING = "ascending"
    DESCENDING = "descending"


@dataclass(frozen=True)
class PolicyScore:
    policy_id: str
    indicator: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.indicator):
            raise InputError(f"indicator for {self.policy_id!r} is not finite")


@dataclass(frozen=True)
class RankReport:
    reference: tuple[str, ...]
    candidate: tuple[str, ...]
    scc: float
    per_k: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if sorted(self.reference) != sorted(self.candidate):
            raise InputError("reference and candidate rank different policy sets")
        if not -1.0 - 1e-12 <= self.scc <= 1.0 + 1e-12:
            raise InputError(f"scc {self.scc} outside [-1, 1]")

    def to_dict(self) -> dict:
        out = {"reference": list(self.reference), "candidate": list(self.candidate), "scc": self.scc}
        if self.per_k is not None:
            out["per_k"] = [[k, s] for k, s in self.per_k]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RankReport":
        per_k = data.get("per_k")
        return cls(
            reference=tuple(data["reference"]),
            candidate=tuple(data["candidate"]),
            scc=float(data["scc"]),
            per_k=None if per_k is None else tuple((float(k), float(s)) for k, s in per_k),
        )


def scores_from_mapping(mapping: Mapping[str, float]) -> list[PolicyScore]:
    return [PolicyScore(str(pid), float(v)) for pid, v in mapping.items()]


def _check_unique(scores: Sequence[PolicyScore]) -> None:
    ids = [s.policy_id for s in scores]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise InputError(f"duplicate policy ids: {dup}")


def rank_policies(scores: Sequence[PolicyScore], order: Order | str = Order.ASCENDING) -> list[str]:
    """Policies sorted by indicator; ties always break by ascending policy id."""
    _check_unique(scores)
    sign = 1.0 if Order(order) is Order.ASCENDING else -1.0
    return [s.policy_id for s in sorted(scores, key=lambda s: (sign * s.indicator, s.policy_id))]


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the positions they occupy."""
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    n = a.shape[0]
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(n, dtype=np.float64)
    sa = a[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(ref_scores: Sequence[float], cand_scores: Sequence[float]) -> float:
    """Pearson correlation of the average-rank vectors."""
    a = np.asarray(ref_scores, dtype=np.float64).reshape(-1)
    b = np.asarray(cand_scores, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise InputError("score vectors differ in length")
    if a.shape[0] < 2:
        raise UndefinedCorrelationError("need at least two scores")
    ra = average_ranks(a)
    rb = average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    saa = math.fsum((da * da).tolist())
    sbb = math.fsum((db * db).tolist())
    if saa == 0 or sbb == 0:
        raise UndefinedCorrelationError("all scores tied; rank correlation undefined")
    r = math.fsum((da * db).tolist()) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def spearman_scores(reference: Sequence[PolicyScore], candidate: Sequence[PolicyScore]) -> float:
    """Spearman correlation after aligning two score lists by policy id."""
    _check_unique(reference)
    _check_unique(candidate)
    ref = {s.policy_id: s.indicator for s in reference}
    cand = {s.policy_id: s.indicator for s in candidate}
    if set(ref) != set(cand):
        raise InputError("reference and candidate cover different policies")
    ids = sorted(ref)
    return spearman([ref[i] for i in ids], [cand[i] for i in ids])


def scc_sweep(
    reference: Sequence[PolicyScore],
    per_policy_curves: Mapping[str, Sequence[tuple[float, float]]],
) -> list[tuple[float, float]]:
    _check_unique(reference)
    ref_ids = sorted(s.policy_id for s in reference)
    if sorted(per_policy_curves) != ref_ids:
        raise InputError("curves and reference cover different policies")
    grids = {pid: [float(k) for k, _ in per_policy_curves[pid]] for pid in ref_ids}
    grid = grids[ref_ids[0]]
    if any(g != grid for g in grids.values()):
        raise InputError("worst-case curves do not share the same k grid")
    out = []
    for i, k in enumerate(grid):
        cand = [PolicyScore(pid, float(per_policy_curves[pid][i][1])) for pid in ref_ids]
        out.append((k, spearman_scores(reference, cand)))
    return out


def rank_report(
    reference: Sequence[PolicyScore],
    candidate: Sequence[PolicyScore],
    order: Order | str = Order.ASCENDING,
    per_k: Sequence[tuple[float, float]] | None = None,
) -> RankReport:
    return RankReport(
        reference=tuple(rank_policies(reference, order)),
        candidate=tuple(rank_policies(candidate, order)),
        scc=spearman_scores(reference, candidate),
        per_k=None if per_k is None else tuple((float(k), float(s)) for k, s in per_k),
    )
