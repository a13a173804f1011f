import json

import numpy as np
import pytest

from wctransfer.cli import main
from wctransfer.core import EvalLog, RewardConfig
from wctransfer.discretize import DiscretizeConfig, empirical_distribution
from wctransfer.errors import InputError
from wctransfer.estimate import expectation
from wctransfer.logio import write_jsonl
from wctransfer.pipeline import RunConfig, dumps, run_pipeline
from wctransfer.wcopt import Direction, WorstCaseProblem, solve_worst_case

TERMS = ("a", "b")
WEIGHTS = "1.0,0.5"


def make_logs(tmp_path, n_policies=3, steps=400, seed=0):
    rng = np.random.default_rng(seed)
    logs = {}
    for i in range(n_policies):
        eps = tuple(np.round(rng.normal(i * 0.3, 1.0, size=(steps // 4, 2)), 2) for _ in range(4))
        logs[f"pol{i}"] = EvalLog(f"pol{i}", eps)
    path = tmp_path / "logs.jsonl"
    write_jsonl(logs, path)
    return logs, path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_ingest_and_worst_case(tmp_path, capsys):
    _, path = make_logs(tmp_path, 1)
    code, out, _ = run(capsys, "ingest", path, "--terms", "a,b", "--weights", WEIGHTS,
                       "--decimals", "1", "--out-dir", tmp_path / "d")
    assert code == 0
    entry = json.loads(out)["pol0"]
    code, out, _ = run(capsys, "worst-case", "--dist", entry["dist"], "--psi", entry["psi"],
                       "--k", "0", "--k", "1.0", "--direction", "min")
    assert code == 0
    res = json.loads(out)
    assert [r["k"] for r in res] == [0.0, 1.0]
    assert res[1]["value"] <= res[0]["value"]


def test_worst_case_coords(tmp_path, capsys):
    dist = tmp_path / "d.json"
    dist.write_text(json.dumps({"decimals": 0, "support": [[0], [1]], "probs": [0.5, 0.5]}))
    code, out, _ = run(capsys, "worst-case", "--dist", dist, "--k", "1")
    assert code == 0 and json.loads(out)["value"] == pytest.approx(1.0, abs=1e-12)


def test_estimate_and_exit_codes(tmp_path, capsys):
    _, path = make_logs(tmp_path, 2)
    code, out, _ = run(capsys, "estimate", path, "--terms", "a,b", "--weights", WEIGHTS,
                       "--policy", "pol1", "--rhw", "10", "--min-samples", "50")
    assert code == 0 and json.loads(out)["n"] >= 50
    # more samples required than the log holds: numerical failure
    code, _, err = run(capsys, "estimate", path, "--terms", "a,b", "--weights", WEIGHTS,
                       "--min-samples", "100000")
    assert code == 3 and "numerical" in err
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"policy": "x", "episode": 0, "step": 0, "r": [1, 2]}\n{"policy": \n')
    code, _, err = run(capsys, "estimate", bad, "--terms", "a,b", "--weights", WEIGHTS)
    assert code == 2 and ":2" in err
    code, _, _ = run(capsys, "estimate", path, "--terms", "a,b")
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        main(["worst-case"])
    assert exc.value.code == 2


def test_rank_and_sweep(tmp_path, capsys):
    _, path = make_logs(tmp_path, 3)
    curves = tmp_path / "curves.json"
    code, _, _ = run(capsys, "sweep", path, "--terms", "a,b", "--weights", WEIGHTS,
                     "--k", "0", "--k", "0.5", "--direction", "min", "--out", curves,
                     "--csv", tmp_path / "sweep.csv")
    assert code == 0
    ref = tmp_path / "ref.json"
    ref.write_text(json.dumps({"pol0": 0.0, "pol1": 0.3, "pol2": 0.6}))
    code, out, _ = run(capsys, "rank", "--reference", ref, "--candidate", curves,
                       "--csv", tmp_path / "scc.csv")
    assert code == 0
    rep = json.loads(out)
    assert [k for k, _ in rep["per_k"]] == [0.0, 0.5]
    assert (tmp_path / "scc.csv").read_text().startswith("k,scc")
    two = tmp_path / "two.json"
    two.write_text(json.dumps({"pol0": 1.0, "pol1": 2.0}))
    assert run(capsys, "rank", "--reference", ref, "--candidate", two)[0] == 2


def test_synth_validate(tmp_path, capsys):
    code, out, _ = run(capsys, "synth-validate", "--n-pairs", "20", "--support-size", "10",
                       "--gap", "0.1", "--k", "0.5", "--csv", tmp_path / "pairs.csv")
    assert code == 0
    res = json.loads(out)
    assert res["n_pairs"] == 20 and res["config"]["k"] == 0.5
    assert len((tmp_path / "pairs.csv").read_text().splitlines()) == 21
    assert run(capsys, "synth-validate", "--gap", "100")[0] == 2


def test_pipeline_end_to_end_matches_modules(tmp_path, capsys):
    logs, path = make_logs(tmp_path, 2)
    out_dir = tmp_path / "out"
    code, _, _ = run(capsys, "pipeline", path, "--terms", "a,b", "--weights", WEIGHTS,
                     "--decimals", "1", "--k", "0", "--k", "1", "--min-samples", "50",
                     "--rhw", "100", "--out", out_dir)
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())
    reward = RewardConfig(TERMS, (1.0, 0.5))
    disc = DiscretizeConfig(1)
    for pid, log in logs.items():
        dist, psi = empirical_distribution(log, reward, disc)
        got = report["policies"][pid]
        assert got["expectation"] == expectation(dist, psi)
        wc = solve_worst_case(WorstCaseProblem(dist, psi, 1.0, Direction.MINIMIZE)).value
        assert got["curve"][1]["value"] == wc
        assert got["curve"][0]["value"] == got["expectation"]
    assert report["ranking"]["direct"] == sorted(logs, key=lambda p: report["policies"][p]["expectation"])
    assert "scc" not in report
    # the embedded config reproduces the report
    code, _, _ = run(capsys, "pipeline", "--config", out_dir / "report.json", "--out", tmp_path / "again")
    assert code == 0
    assert (tmp_path / "again" / "report.json").read_text().replace("again", "out") == \
        (out_dir / "report.json").read_text()


def test_single_policy_and_reference(tmp_path, capsys):
    logs, _ = make_logs(tmp_path, 3)
    cfg = RunConfig(RewardConfig(TERMS, (1.0, 0.5)), DiscretizeConfig(1), ks=(0.0, 0.5))
    single = run_pipeline(cfg, {"pol0": logs["pol0"]})
    assert "ranking" not in single and "scc" not in single
    assert len(single["policies"]["pol0"]["curve"]) == 2
    direct = {pid: run_pipeline(cfg, {pid: logs[pid]})["policies"][pid]["expectation"] for pid in logs}
    full = run_pipeline(cfg, logs, reference=direct)
    assert full["scc"]["per_k"][0] == [0.0, 1.0]
    with pytest.raises(InputError):
        run_pipeline(cfg, {"pol0": logs["pol0"]}, reference={"pol0": 1.0})


def test_config_file_and_flag_override(tmp_path, capsys):
    _, path = make_logs(tmp_path, 2)
    conf = tmp_path / "run.toml"
    conf.write_text(f'term_names = ["a", "b"]\nweights = [1.0, 0.5]\nks = [0.0, 2.0]\n'
                    f'logs = ["{path}"]\nmin_samples = 10\ndecimals = 1\n')
    code, out, _ = run(capsys, "pipeline", "--config", conf, "--k", "0.25")
    assert code == 0
    assert json.loads(out)["config"]["ks"] == [0.25]
    conf.write_text('weights = [1.0]\nbogus = 1\n')
    assert run(capsys, "pipeline", "--config", conf)[0] == 2


def test_thread_cap_does_not_change_report(tmp_path, monkeypatch):
    logs, _ = make_logs(tmp_path, 4)
    cfg = RunConfig(RewardConfig(TERMS, (1.0, 0.5)), DiscretizeConfig(1), ks=(0.0, 0.5, 1.0))
    monkeypatch.setenv("WCTRANSFER_THREADS", "1")
    serial = dumps(run_pipeline(cfg, logs))
    monkeypatch.setenv("WCTRANSFER_THREADS", "3")
    assert dumps(run_pipeline(cfg, logs)) == serial
    monkeypatch.setenv("WCTRANSFER_THREADS", "many")
    with pytest.raises(InputError):
        run_pipeline(cfg, logs)
