import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from krsoliton.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def read_json(path):
    return json.loads(Path(path).read_text())


def all_files(root):
    return sorted(str(p.relative_to(root)) for p in Path(root).rglob("*") if p.is_file())


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# ------------------------------------------------------------------ soliton

def test_soliton_n1_closed_form(tmp_path):
    out = tmp_path / "s"
    assert main(["soliton", "--n", "1", "--s-min", "-5", "--s-max", "5", "--points", "101", "--out", str(out)]) == 0
    rep = read_json(out / "report.json")
    assert rep["closed_form_max_dev"] <= 1e-10
    assert all(rep["invariants"].values())


def test_soliton_bad_points_is_usage_error(tmp_path):
    assert main(["soliton", "--n", "2", "--points", "1", "--out", str(tmp_path / "s")]) == 1
    assert not (tmp_path / "s").exists()


def test_argparse_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["soliton", "--n", "two"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1


def test_soliton_n2_profile(tmp_path):
    out = tmp_path / "s"
    assert main(["soliton", "--n", "2", "--s-min", "-10", "--s-max", "60", "--points", "1401", "--out", str(out)]) == 0
    with open(out / "profile.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "phi", "dphi", "d2phi", "d3phi"] and len(rows) == 1402
    rep = read_json(out / "report.json")
    assert rep["ode_residual_max"] <= 1e-10 and rep["flow_ready"]
    man = read_json(out / "manifest.json")
    assert man["command"] == "soliton" and man["outputs"] == all_files(out)


# ------------------------------------------------------------------ barrier

def test_barrier_soliton_case(tmp_path):
    out = tmp_path / "b"
    assert main(["barrier", "--n", "2", "--K", "0", "--R", "0.5", "--out", str(out)]) == 0
    assert read_json(out / "certification.json")["certified"]


def test_barrier_find_R(tmp_path):
    out = tmp_path / "b"
    assert main(["barrier", "--n", "2", "--K", "1", "--alpha", "0.5", "--find-R", "--out", str(out)]) == 0
    cert = read_json(out / "certification.json")
    assert cert["certified"] and cert["spec"]["R"] == 31.5
    assert all(m["min"] > 0 for m in cert["margins"])
    assert read_json(out / "manifest.json")["outputs"] == all_files(out)


def test_barrier_rejects_n1(tmp_path, capsys):
    assert main(["barrier", "--n", "1", "--K", "0.1", "--R", "1", "--out", str(tmp_path / "b")]) == 1
    assert "n >= 2" in capsys.readouterr().err


def test_barrier_uncertified_fixed_R(tmp_path):
    out = tmp_path / "b"
    code = main(["barrier", "--n", "2", "--K", "1", "--R", "1", "--out", str(out)])
    assert code != 0
    assert not read_json(out / "certification.json")["certified"]


def test_barrier_search_exhausted(tmp_path):
    out = tmp_path / "b"
    assert main(["barrier", "--n", "2", "--K", "1", "--find-R", "--R-max", "4", "--out", str(out)]) == 3
    assert read_json(out / "manifest.json")["verdicts"] == {"certified": "fail"}


def test_barrier_needs_R_or_search(tmp_path):
    assert main(["barrier", "--n", "2", "--K", "1", "--out", str(tmp_path / "b")]) == 1


# ------------------------------------------------------------------ flow

def test_flow_zero_config(tmp_path):
    out = tmp_path / "f"
    assert main(["flow", "--config", str(CONFIGS / "zero.json"), "--out-dir", str(out)]) == 0
    summary = read_json(out / "summary.json")
    assert summary["verdicts"]["stationary"] == "pass"
    assert (out / "state_t0.5.csv").exists() and (out / "state_t1.csv").exists()
    assert read_json(out / "manifest.json")["outputs"] == all_files(out)


def test_flow_barrier_config(tmp_path):
    out = tmp_path / "f"
    assert main(["flow", "--config", str(CONFIGS / "barrier_stability.json"), "--out-dir", str(out)]) == 0
    v = read_json(out / "summary.json")["verdicts"]
    assert v["osc monotone"] == "pass" and v["lp monotone"] == "pass"
    with open(out / "diagnostics.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "sup", "inf", "osc", "lp", "eq_rr_min", "eq_rr_max", "eq_tt_min",
                      "eq_tt_max", "monotone", "sign_changes"]


def test_flow_comparison_config(tmp_path, monkeypatch):
    monkeypatch.setenv("KRS_THREADS", "2")
    out = tmp_path / "f"
    assert main(["flow", "--config", str(CONFIGS / "comparison.json"), "--out-dir", str(out)]) == 0
    summary = read_json(out / "summary.json")
    assert summary["verdicts"]["ordering preserved"] == "pass"
    assert set(summary["runs"]) == {"lower", "middle", "upper"}
    assert read_json(out / "manifest.json")["outputs"] == all_files(out)


def test_flow_is_byte_deterministic(tmp_path):
    cfg = str(CONFIGS / "zero.json")
    cfg_b = write_config(tmp_path, {"t_end": 0.5, "checkpoints": [0.25],
                                    "initial": {"kind": "compact_bump",
                                                "params": {"center": 5, "width": 3, "height": 0.05}}})
    for c in (cfg, cfg_b):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["flow", "--config", c, "--out-dir", str(a)]) == 0
        assert main(["flow", "--config", c, "--out-dir", str(b)]) == 0
        files = all_files(a)
        assert files == all_files(b)
        for f in files:
            if f == "manifest.json":
                ma, mb = read_json(a / f), read_json(b / f)
                for key in ("started", "finished"):
                    ma.pop(key), mb.pop(key)
                assert ma == mb
            else:
                assert (a / f).read_bytes() == (b / f).read_bytes()
        for d in (a, b):
            for f in all_files(d):
                os.remove(d / f)


def test_flow_digest_matches_config_bytes(tmp_path):
    import hashlib
    out = tmp_path / "f"
    cfg = CONFIGS / "zero.json"
    main(["flow", "--config", str(cfg), "--out-dir", str(out)])
    assert read_json(out / "manifest.json")["config_digest"] == hashlib.sha256(cfg.read_bytes()).hexdigest()


def test_flow_bad_config_is_usage_error(tmp_path):
    bad = write_config(tmp_path, {"t_end": 1.0, "bogus": 3, "initial": {"kind": "zero"}})
    assert main(["flow", "--config", bad, "--out-dir", str(tmp_path / "f")]) == 1
    missing = str(tmp_path / "nope.json")
    assert main(["flow", "--config", missing, "--out-dir", str(tmp_path / "f")]) == 1
    two = write_config(tmp_path, {"initials": [{"kind": "zero"}, {"kind": "zero"}]}, "two.json")
    assert main(["flow", "--config", two, "--out-dir", str(tmp_path / "f")]) == 1


def test_flow_abort_exit_4(tmp_path):
    cfg = write_config(tmp_path, {
        "s_min": 0.0, "s_max": 30.0, "points": 601, "stepper": "explicit_rk4", "adaptive": False,
        "dt": 1.0, "t_end": 1.0, "max_halvings": 1,
        "initial": {"kind": "compact_bump", "params": {"center": 10, "width": 4, "height": 0.1}}})
    out = tmp_path / "f"
    assert main(["flow", "--config", cfg, "--out-dir", str(out)]) == 4
    summary = read_json(out / "summary.json")
    assert summary["runs"]["run"]["status"] == "aborted"
    assert summary["verdicts"]["completed"] == "fail"


def test_flow_checkpoint_round_trip(tmp_path):
    cfg = write_config(tmp_path, {"t_end": 0.5, "checkpoints": [0.5],
                                  "initial": {"kind": "compact_bump",
                                              "params": {"center": 5, "width": 3, "height": 0.05}}})
    out = tmp_path / "f"
    assert main(["flow", "--config", cfg, "--out-dir", str(out)]) == 0
    cfg2 = write_config(tmp_path, {"t_end": 0.0001,
                                   "initial": {"kind": "from_file",
                                               "params": {"path": str(out / "state_t0.5.csv")}}}, "c2.json")
    out2 = tmp_path / "g"
    assert main(["flow", "--config", cfg2, "--out-dir", str(out2)]) == 0
    init = read_json(out2 / "summary.json")["runs"]["run"]["initial"]
    with open(out / "state_t0.5.csv") as fh:
        b = np.array([float(r[1]) for r in list(csv.reader(fh))[1:]])
    assert init["sup"] == b.max()
