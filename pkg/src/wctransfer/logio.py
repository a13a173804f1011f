"""Reading evaluation logs (JSONL or CSV) into :class:`EvalLog` objects.

JSONL: one object per step, ``{"policy": str, "episode": int, "step": int, "r": [floats]}``.
CSV: header ``policy,episode,step,<term>,<term>,...`` and one row per step.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import EvalLog
from .errors import DimensionError, EmptyInputError, ParseError

_Rows = dict[str, dict[int, list[tuple[int, list[float]]]]]


def _finish(rows: _Rows) -> dict[str, EvalLog]:
    logs: dict[str, EvalLog] = {}
    for policy in sorted(rows):
        episodes = []
        for ep in sorted(rows[policy]):
            steps = sorted(rows[policy][ep], key=lambda s: s[0])
            seen = [s for s, _ in steps]
            if len(set(seen)) != len(seen):
                raise ParseError(f"duplicate step index in policy {policy!r} episode {ep}")
            episodes.append(np.array([r for _, r in steps], dtype=np.float64))
        logs[policy] = EvalLog(policy, tuple(episodes))
    if not logs:
        raise EmptyInputError("log contains no steps")
    return logs


def _add(rows: _Rows, policy: str, episode: int, step: int, r: list[float], width: list[int],
         line: int, path: str) -> None:
    if not all(math.isfinite(x) for x in r):
        raise ParseError("non-finite reward term", line, path)
    if width and len(r) != width[0]:
        raise ParseError(f"expected {width[0]} reward terms, found {len(r)}", line, path)
    width[:] = [len(r)]
    rows[policy][episode].append((step, r))


def _new_rows() -> _Rows:
    return defaultdict(lambda: defaultdict(list))


def _collect_jsonl(lines: Iterable[str], path: str, rows: _Rows, width: list[int]) -> None:
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
            policy = str(obj["policy"])
            episode = int(obj["episode"])
            step = int(obj["step"])
            r = [float(x) for x in obj["r"]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed step record ({exc})", lineno, path) from exc
        if not r:
            raise ParseError("empty reward vector", lineno, path)
        _add(rows, policy, episode, step, r, width, lineno, path)


def _collect_csv(lines: Iterable[str], path: str, rows: _Rows, width: list[int]) -> tuple[str, ...]:
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyInputError(f"{path}: empty CSV") from None
    if header[:3] != ["policy", "episode", "step"] or len(header) < 4:
        raise ParseError("header must start with policy,episode,step followed by term columns", 1, path)
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise ParseError(f"expected {len(header)} columns, found {len(rec)}", lineno, path)
        try:
            episode, step = int(rec[1]), int(rec[2])
            r = [float(x) for x in rec[3:]]
        except ValueError as exc:
            raise ParseError(f"bad numeric field ({exc})", lineno, path) from exc
        _add(rows, rec[0].strip(), episode, step, r, width, lineno, path)
    return tuple(header[3:])


def parse_jsonl(lines: Iterable[str], path: str = "<jsonl>") -> dict[str, EvalLog]:
    rows = _new_rows()
    _collect_jsonl(lines, path, rows, [])
    return _finish(rows)


def parse_csv(lines: Iterable[str], path: str = "<csv>") -> tuple[dict[str, EvalLog], tuple[str, ...]]:
    """Returns the logs and the reward term names taken from the header."""
    rows = _new_rows()
    terms = _collect_csv(lines, path, rows, [])
    return _finish(rows), terms


def read_logs(
    paths: str | Path | Iterable[str | Path], term_names: tuple[str, ...] | None = None
) -> dict[str, EvalLog]:
    """Load one or more JSONL/CSV log files into one log per policy.

    Format is chosen by suffix (``.csv`` means CSV, anything else JSONL).
    Steps from all files are pooled before grouping, so a log split into
    shards by episode reads back identical to the unsplit file. When
    ``term_names`` is given, CSV headers must match it.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    rows = _new_rows()
    width: list[int] = []
    for path in map(Path, paths):
        try:
            text = path.read_text()
        except OSError as exc:
            raise ParseError(f"cannot read log: {exc}", path=str(path)) from exc
        if path.suffix.lower() == ".csv":
            terms = _collect_csv(text.splitlines(), str(path), rows, width)
            if term_names is not None and tuple(term_names) != terms:
                raise DimensionError(
                    f"{path}: CSV terms {terms} do not match configured {tuple(term_names)}"
                )
        else:
            _collect_jsonl(text.splitlines(), str(path), rows, width)
    return _finish(rows)


def write_jsonl(logs: dict[str, EvalLog], path: str | Path) -> None:
    with open(path, "w") as fh:
        for pid in sorted(logs):
            for ep, steps in enumerate(logs[pid].episodes):
                for i, r in enumerate(steps):
                    fh.write(json.dumps({"policy": pid, "episode": ep, "step": i, "r": r.tolist()}) + "\n")


def write_csv(logs: dict[str, EvalLog], term_names: tuple[str, ...], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "episode", "step", *term_names])
        for pid in sorted(logs):
            for ep, steps in enumerate(logs[pid].episodes):
                for i, r in enumerate(steps):
                    w.writerow([pid, ep, i, *(repr(float(x)) for x in r)])
