"""End-to-end run: logs -> per-policy distributions, estimates, worst-case curves -> rankings."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import tomli

from .core import R1_TERMS, EvalLog, RewardConfig, rewards_of_steps
from .discretize import DiscretizeConfig, Space, empirical_distribution
from .errors import ConfigError, InputError, InsufficientDataError, ParseError
from .estimate import StoppingRule, expectation, mc_estimate, variance
from .logio import read_logs
from .rank import Order, PolicyScore, rank_policies, rank_report, scc_sweep, spearman_scores
from .wcopt import Direction, WorstCaseProblem, solve_worst_case

THREADS_ENV = "WCTRANSFER_THREADS"


def worker_count(default: int | None = None) -> int:
    raw = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        return max(1, n)
    return max(1, min(default or cap, cap))


@dataclass(frozen=True)
class RunConfig:
    reward: RewardConfig
    disc: DiscretizeConfig = field(default_factory=DiscretizeConfig)
    stopping: StoppingRule = field(default_factory=StoppingRule)
    ks: tuple[float, ...] = (0.0,)
    direction: Direction = Direction.MINIMIZE
    order: Order = Order.ASCENDING
    logs: tuple[str, ...] = ()
    reference: str | None = None
    output: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        object.__setattr__(self, "order", Order(self.order))
        ks = tuple(float(k) for k in self.ks)
        if not ks:
            raise ConfigError("ks must not be empty")
        if any(not math.isfinite(k) or k < 0 for k in ks):
            raise ConfigError("ks must be finite and non-negative")
        if list(ks) != sorted(ks):
            raise ConfigError("ks must be sorted ascending")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "logs", tuple(str(p) for p in self.logs))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {}
        d.update(self.reward.to_dict())
        d.update(self.disc.to_dict())
        d.update(self.stopping.to_dict())
        d.update(
            ks=list(self.ks),
            direction=self.direction.value,
            order=self.order.value,
            logs=list(self.logs),
            reference=self.reference,
            output=self.output,
        )
        return d

    @classmethod
    def from_flat(cls, flat: Mapping[str, Any]) -> "RunConfig":
        """Build from a flat key-value mapping whose keys mirror the field names."""
        known = {
            "term_names", "weights", "mask", "decimals", "space", "burn_in", "confidence",
            "rhw_threshold", "min_samples", "max_samples", "ks", "direction", "order", "logs",
            "reference", "output",
        }
        unknown = set(flat) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "weights" not in flat:
            raise ConfigError("reward weights are required (no default exists)")
        weights = list(flat["weights"])
        terms = flat.get("term_names")
        if terms is None:
            terms = R1_TERMS if len(weights) == len(R1_TERMS) else [f"r{i}" for i in range(len(weights))]
        try:
            stop_defaults = StoppingRule()
            return cls(
                reward=RewardConfig(tuple(terms), tuple(weights), tuple(flat.get("mask") or ())),
                disc=DiscretizeConfig(
                    decimals=int(flat.get("decimals", 2)),
                    space=Space(flat.get("space", Space.REWARD_SCALAR.value)),
                    burn_in=int(flat.get("burn_in", 0)),
                ),
                stopping=StoppingRule(
                    confidence=float(flat.get("confidence", stop_defaults.confidence)),
                    rhw_threshold=float(flat.get("rhw_threshold", stop_defaults.rhw_threshold)),
                    min_samples=int(flat.get("min_samples", stop_defaults.min_samples)),
                    max_samples=int(flat.get("max_samples", stop_defaults.max_samples)),
                ),
                ks=tuple(flat.get("ks", (0.0,))),
                direction=flat.get("direction", Direction.MINIMIZE.value),
                order=flat.get("order", Order.ASCENDING.value),
                logs=tuple(flat.get("logs", ())),
                reference=flat.get("reference"),
                output=flat.get("output"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from exc


def load_config_file(path: str | Path) -> dict:
    """Flat TOML document, or a JSON report/config (its ``config`` key if present)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}", path=str(path)) from exc
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno, str(path)) from exc
        return dict(data.get("config", data))
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(str(exc), path=str(path)) from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    return data


def load_scores(path: str | Path) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read scores: {exc}", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, str(path)) from exc
    if not isinstance(data, dict) or not data:
        raise InputError(f"{path}: expected a non-empty JSON object keyed by policy id")
    return data


def policy_summary(log: EvalLog, config: RunConfig) -> dict:
    dist, psi = empirical_distribution(log, config.reward, config.disc)
    rewards = rewards_of_steps(log.steps(config.disc.burn_in), config.reward)
    try:
        estimate: dict | None = mc_estimate(rewards.tolist(), config.stopping).to_dict()
    except InsufficientDataError:
        estimate = None  # fewer steps than min_samples; report stays usable
    curve = []
    for k in config.ks:
        sol = solve_worst_case(WorstCaseProblem(dist, psi, k, config.direction))
        curve.append(
            {
                "k": k,
                "value": sol.value,
                "active": sol.active,
                "variance": variance(sol.rho, psi),
            }
        )
    return {
        "n_steps": int(rewards.shape[0]),
        "support_size": len(dist),
        "expectation": expectation(dist, psi),
        "variance": variance(dist, psi),
        "estimate": estimate,
        "curve": curve,
    }


def run_pipeline(config: RunConfig, logs: Mapping[str, EvalLog] | None = None,
                 reference: Mapping[str, float] | None = None) -> dict:
    if logs is None:
        if not config.logs:
            raise InputError("no input logs given")
        logs = read_logs(config.logs, config.reward.term_names)
    if reference is None and config.reference:
        reference = {str(k): float(v) for k, v in load_scores(config.reference).items()}
    ids = sorted(logs)
    for pid in ids:
        logs[pid].check_config(config.reward)

    workers = min(worker_count(), len(ids))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            summaries = dict(zip(ids, pool.map(lambda p: policy_summary(logs[p], config), ids)))
    else:
        summaries = {pid: policy_summary(logs[pid], config) for pid in ids}

    report: dict[str, Any] = {"config": config.to_dict(), "policies": {pid: summaries[pid] for pid in ids}}
    if len(ids) >= 2:
        direct = [PolicyScore(pid, summaries[pid]["expectation"]) for pid in ids]
        ranking = {"direct": rank_policies(direct, config.order), "per_k": []}
        for i, k in enumerate(config.ks):
            wc = [PolicyScore(pid, summaries[pid]["curve"][i]["value"]) for pid in ids]
            ranking["per_k"].append({"k": k, "order": rank_policies(wc, config.order)})
        report["ranking"] = ranking
        if reference is not None:
            ref = [PolicyScore(pid, float(v)) for pid, v in sorted(reference.items())]
            if sorted(reference) != ids:
                raise InputError("reference scores and logs cover different policies")
            curves = {pid: [(c["k"], c["value"]) for c in summaries[pid]["curve"]] for pid in ids}
            sweep = scc_sweep(ref, curves)
            rep = rank_report(ref, direct, config.order, per_k=sweep)
            report["scc"] = {
                "direct": spearman_scores(ref, direct),
                "reference_order": list(rep.reference),
                "per_k": [[k, s] for k, s in sweep],
            }
    elif reference is not None:
        raise InputError("ranking against a reference needs at least two policies")
    return report


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_report(report: dict, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json", out / "curves.csv"]
    written[0].write_text(dumps(report))
    with open(written[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "k", "value", "expectation"])
        for pid, s in report["policies"].items():
            for c in s["curve"]:
                w.writerow([pid, repr(c["k"]), repr(c["value"]), repr(s["expectation"])])
    curves = {pid: [[c["k"], c["value"]] for c in s["curve"]] for pid, s in report["policies"].items()}
    (out / "curves.json").write_text(dumps(curves))
    written.append(out / "curves.json")
    scores = {pid: s["expectation"] for pid, s in report["policies"].items()}
    (out / "scores.json").write_text(dumps(scores))
    written.append(out / "scores.json")
    if "scc" in report:
        p = out / "scc.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "scc"])
            for k, s in report["scc"]["per_k"]:
                w.writerow([repr(k), repr(s)])
        written.append(p)
    return written
