"""``wctransfer`` command line.

Exit codes: 0 success, 2 input/config/parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import R1_TERMS, DiscreteDistribution, MetricVector, rewards_of_steps
from .discretize import DiscretizeConfig, Space, empirical_distribution
from .errors import InputError, NumericalError, ParseError
from .estimate import StoppingRule, mc_estimate
from .logio import read_logs
from .pipeline import (
    RunConfig,
    dumps,
    load_config_file,
    load_scores,
    run_pipeline,
    worker_count,
    write_report,
)
from .rank import Order, PolicyScore, rank_report, scc_sweep
from .synth import EnsembleConfig, run_pairs, summarize, write_outcomes_csv
from .wcopt import Direction, WorstCaseProblem, solve_worst_case, worst_case_curve

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _bools(text: str) -> list[bool]:
    out = []
    for x in text.split(","):
        x = x.strip().lower()
        if x in ("1", "true", "t", "yes", "y"):
            out.append(True)
        elif x in ("0", "false", "f", "no", "n"):
            out.append(False)
        else:
            raise argparse.ArgumentTypeError(f"not a boolean: {x!r}")
    return out


def _add_reward_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("reward")
    g.add_argument("--config", help="flat TOML (or JSON report) config; flags override it")
    g.add_argument("--terms", help="comma-separated reward term names (default: the six r1 terms)")
    g.add_argument("--weights", type=_floats, help="comma-separated reward weights (required)")
    g.add_argument("--mask", type=_bools, help="comma-separated 0/1 term mask")
    g.add_argument("--variant", choices=["r1", "r2"],
                   help="r2 keeps only r_x and r_xdot (overrides --mask)")
    g.add_argument("--decimals", type=int)
    g.add_argument("--space", choices=[s.value for s in Space])
    g.add_argument("--burn-in", type=int, dest="burn_in")


def _add_stopping_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("stopping rule")
    g.add_argument("--confidence", type=float, help="miss probability c (interval coverage 1-c)")
    g.add_argument("--rhw", type=float, dest="rhw_threshold", help="relative half-width threshold")
    g.add_argument("--min-samples", type=int, dest="min_samples")
    g.add_argument("--max-samples", type=int, dest="max_samples")


def _flat_from_args(args: argparse.Namespace) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    if getattr(args, "config", None):
        flat.update(load_config_file(args.config))
    if getattr(args, "terms", None):
        flat["term_names"] = [t.strip() for t in args.terms.split(",") if t.strip()]
    for key in ("weights", "mask", "decimals", "space", "burn_in", "confidence",
                "rhw_threshold", "min_samples", "max_samples", "direction", "order",
                "reference", "output"):
        val = getattr(args, key, None)
        if val is not None:
            flat[key] = val
    if getattr(args, "k", None):
        flat["ks"] = sorted(args.k)
    if getattr(args, "logs", None):
        flat["logs"] = list(args.logs)
    if getattr(args, "variant", None) == "r2":
        names = flat.get("term_names") or list(R1_TERMS)
        flat["mask"] = [n in ("r_x", "r_xdot") for n in names]
    elif getattr(args, "variant", None) == "r1":
        flat.pop("mask", None)
    return flat


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig.from_flat(_flat_from_args(args))


def _emit(obj: Any, out: str | None) -> None:
    text = dumps(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands -----------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    logs = read_logs(cfg.logs, cfg.reward.term_names)
    result = {}
    for pid, log in logs.items():
        dist, psi = empirical_distribution(log, cfg.reward, cfg.disc)
        entry: dict[str, Any] = {"n_steps": log.n_steps, "support_size": len(dist)}
        if args.out_dir:
            d = Path(args.out_dir)
            d.mkdir(parents=True, exist_ok=True)
            (d / f"{pid}.dist.json").write_text(dumps(dist.to_dict()))
            (d / f"{pid}.psi.json").write_text(dumps([float(v) for v in psi.values]))
            entry["dist"] = str(d / f"{pid}.dist.json")
            entry["psi"] = str(d / f"{pid}.psi.json")
        else:
            entry["distribution"] = dist.to_dict()
            entry["psi"] = [float(v) for v in psi.values]
        result[pid] = entry
    _emit(result, None)
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    logs = read_logs(cfg.logs, cfg.reward.term_names)
    if args.policy:
        if args.policy not in logs:
            raise InputError(f"policy {args.policy!r} not in log")
        logs = {args.policy: logs[args.policy]}
    results = {}
    for pid, log in logs.items():
        log.check_config(cfg.reward)
        rewards = rewards_of_steps(log.steps(cfg.disc.burn_in), cfg.reward)
        results[pid] = mc_estimate(rewards.tolist(), cfg.stopping).to_dict()
    _emit(next(iter(results.values())) if len(results) == 1 else results, args.out)
    return EXIT_OK


def _load_dist(path: str) -> DiscreteDistribution:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read distribution: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, path) from exc
    return DiscreteDistribution.from_dict(data)


def _load_psi(source: str, dist: DiscreteDistribution) -> MetricVector:
    if source == "coords":
        return MetricVector.from_coords(dist)
    try:
        data = json.loads(Path(source).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read metric file: {exc}", path=source) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, source) from exc
    if isinstance(data, dict):
        data = data.get("values", data.get("psi"))
    psi = MetricVector(np.asarray(data, dtype=float))
    psi.check_aligned(dist)
    return psi


def cmd_worst_case(args: argparse.Namespace) -> int:
    dist = _load_dist(args.dist)
    psi = _load_psi(args.psi, dist)
    ks = args.k or [0.0]
    out = []
    for k in ks:
        sol = solve_worst_case(WorstCaseProblem(dist, psi, k, Direction.parse(args.direction)))
        out.append(sol.to_dict(k=k))
    _emit(out[0] if len(out) == 1 else out, args.out)
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    ref_raw = load_scores(args.reference)
    cand_raw = load_scores(args.candidate)
    reference = [PolicyScore(str(p), float(v)) for p, v in sorted(ref_raw.items())]
    is_curves = all(isinstance(v, list) for v in cand_raw.values())
    if is_curves:
        curves = {str(p): [(float(k), float(v)) for k, v in c] for p, c in cand_raw.items()}
        sweep = scc_sweep(reference, curves)
        first = [PolicyScore(p, c[0][1]) for p, c in sorted(curves.items())]
        report = rank_report(reference, first, args.order, per_k=sweep)
    else:
        cand = [PolicyScore(str(p), float(v)) for p, v in sorted(cand_raw.items())]
        report = rank_report(reference, cand, args.order)
        sweep = None
    _emit(report.to_dict(), args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "scc"])
            for k, s in sweep or [(float("nan"), report.scc)]:
                w.writerow([repr(k), repr(s)])
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    logs = read_logs(cfg.logs, cfg.reward.term_names)
    curves = {}
    for pid in sorted(logs):
        dist, psi = empirical_distribution(logs[pid], cfg.reward, cfg.disc)
        curves[pid] = [[k, v] for k, v in worst_case_curve(dist, psi, cfg.ks, cfg.direction)]
    _emit(curves, args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "k", "value"])
            for pid, c in curves.items():
                for k, v in c:
                    w.writerow([pid, repr(k), repr(v)])
    return EXIT_OK


def cmd_synth_validate(args: argparse.Namespace) -> int:
    config = EnsembleConfig(
        n_pairs=args.n_pairs,
        support_size=args.support_size,
        gap=args.gap,
        noise=args.noise,
        k=args.k,
        seed=args.seed,
        direction=Direction.parse(args.direction),
        p_concentration=args.p_concentration,
    )
    outcomes = run_pairs(config, worker_count())
    result = summarize(config, outcomes)
    _emit(result.to_dict(), args.out)
    if args.csv:
        write_outcomes_csv(outcomes, args.csv)
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    report = run_pipeline(cfg)
    if cfg.output:
        write_report(report, cfg.output)
        sys.stdout.write(dumps({"output": cfg.output, "policies": sorted(report["policies"])}))
    else:
        sys.stdout.write(dumps(report))
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wctransfer",
        description="Worst-case (chi-square ball) performance indicators for ranking policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="logs -> discretized empirical distributions")
    p.add_argument("logs", nargs="+", help="JSONL or CSV log files (shards are pooled)")
    _add_reward_args(p)
    p.add_argument("--out-dir", help="write <policy>.dist.json and <policy>.psi.json here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("estimate", help="Monte-Carlo mean reward with RHW stopping")
    p.add_argument("logs", nargs="+")
    _add_reward_args(p)
    _add_stopping_args(p)
    p.add_argument("--policy", help="only this policy")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("worst-case", help="solve the worst-case problem for one distribution")
    p.add_argument("--dist", required=True, help="serialized distribution JSON")
    p.add_argument("--psi", default="coords", help="'coords' or path to a JSON list of metric values")
    p.add_argument("--k", type=float, action="append", help="divergence budget (repeatable)")
    p.add_argument("--direction", default="max", choices=["max", "min", "maximize", "minimize"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_worst_case)

    p = sub.add_parser("rank", help="Spearman agreement between reference and candidate scores")
    p.add_argument("--reference", required=True, help="JSON {policy: score}")
    p.add_argument("--candidate", required=True, help="JSON {policy: score} or {policy: [[k, value], ...]}")
    p.add_argument("--order", default="ascending", choices=[o.value for o in Order])
    p.add_argument("--csv", help="write (k, scc) rows here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("sweep", help="worst-case value over a grid of budgets, per policy")
    p.add_argument("logs", nargs="+")
    _add_reward_args(p)
    p.add_argument("--k", type=float, action="append", help="divergence budget (repeatable)")
    p.add_argument("--direction", choices=["max", "min", "maximize", "minimize"])
    p.add_argument("--csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth-validate", help="synthetic ranking experiment (direct vs worst-case)")
    d = EnsembleConfig()
    p.add_argument("--n-pairs", type=int, default=d.n_pairs)
    p.add_argument("--support-size", type=int, default=d.support_size)
    p.add_argument("--gap", type=float, default=d.gap)
    p.add_argument("--noise", type=float, default=d.noise)
    p.add_argument("--k", type=float, default=d.k)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--direction", default="min", choices=["max", "min", "maximize", "minimize"])
    p.add_argument("--p-concentration", type=float, default=d.p_concentration)
    p.add_argument("--csv", help="per-pair outcomes")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth_validate)

    p = sub.add_parser("pipeline", help="full run: ingest, estimate, sweep, rank, report")
    p.add_argument("logs", nargs="*")
    _add_reward_args(p)
    _add_stopping_args(p)
    p.add_argument("--k", type=float, action="append", help="divergence budget (repeatable)")
    p.add_argument("--direction", choices=["max", "min", "maximize", "minimize"])
    p.add_argument("--order", choices=[o.value for o in Order])
    p.add_argument("--reference", help="JSON {policy: real-world score}")
    p.add_argument("--out", dest="output", help="output directory for report.json and CSVs")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
