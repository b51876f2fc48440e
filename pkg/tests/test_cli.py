import io as _io
import json

import pytest

from trialsearch.cli import oracle_check, run


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_example1(capsys):
    code, out, _ = _run(capsys, "solve", "--toy", "example1", "--solver", "cdp",
                        "--delta", "0", "--epsilon", "0")
    assert code == 0
    assert "expected search length: 1.4\n" in out
    code, out, _ = _run(capsys, "solve", "--toy", "example1", "--solver", "greedy")
    assert "expected search length: 1.5\n" in out


def test_oracle_check(capsys):
    code, out, _ = _run(capsys, "oracle-check", "--instances", "50", "--k", "3", "--ny", "2", "--seed", "7")
    assert code == 0
    assert "50/50 matches" in out


def test_usage_errors(capsys):
    code, _, err = _run(capsys, "solve", "--bogus-flag")
    assert code == 1 and "usage" in err
    code, _, err = _run(capsys)
    assert code == 1 and "usage" in err
    code, _, _ = _run(capsys, "sweep", "--toy", "a6", "--grid", "a,b", "--out", "x.csv")
    assert code == 1


def test_data_errors(capsys, tmp_path):
    code, _, err = _run(capsys, "fit", "--spec", str(tmp_path / "missing.json"),
                        "--in", "x.csv", "--out", "m.json")
    assert code == 2 and err.startswith("error:")


def test_pipeline_deterministic(capsys, tmp_path):
    outputs = []
    for run_id in ("a", "b"):
        d = tmp_path / run_id
        assert _run(capsys, "generate", "--seed", "3", "--k", "3", "--n-train", "150",
                    "--n-test", "60", "--out", str(d))[0] == 0
        assert _run(capsys, "fit", "--spec", str(d / "spec.json"), "--in", str(d / "train.csv"),
                    "--estimator", "historical", "--out", str(d / "model.json"))[0] == 0
        assert _run(capsys, "solve", "--model", str(d / "model.json"), "--solver", "cdp",
                    "--delta", "0.2", "--bound", "upper", "--out", str(d / "policy.json"))[0] == 0
        assert _run(capsys, "eval", "--policy", str(d / "policy.json"), "--panel",
                    str(d / "test_panel.csv"), "--out", str(d / "res.csv"),
                    "--curve-out", str(d / "curve.csv"))[0] == 0
        assert _run(capsys, "eval", "--behavior", str(d / "train.csv"), "--spec", str(d / "spec.json"),
                    "--panel", str(d / "test_panel.csv"), "--out", str(d / "beh.csv"))[0] == 0
        assert _run(capsys, "sweep", "--solver", "greedy", "--spec", str(d / "spec.json"),
                    "--in", str(d / "train.csv"), "--panel", str(d / "test_panel.csv"),
                    "--grid-points", "3", "--out", str(d / "sweep.csv"))[0] == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) == 10


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"stopping": {"delta": 0.5}, "solver": {"solver": "cdp"}}))
    _, out, _ = _run(capsys, "--config", str(cfg), "solve", "--toy", "a6")
    assert "first action 1" in out
    # explicit flag wins over the file
    _, out, _ = _run(capsys, "--config", str(cfg), "solve", "--toy", "a6", "--delta", "0")
    assert "expected search length: 1.5" in out


def test_step_session(capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", _io.StringIO("0\n"))
    code, out, _ = _run(capsys, "step", "--toy", "example1", "--solver", "cdp", "--alpha", "2",
                        "--delta", "0.2")
    assert code == 0
    assert "delta/alpha = 0.1" in out
    assert "rho exact=" in out and "upper=" in out and "lower=" in out
    assert "recommend action 1" in out
    lines = [ln for ln in out.splitlines() if ln.startswith("recommend action")]
    actions = [int(ln.split()[2].rstrip(";")) for ln in lines]
    assert len(actions) == len(set(actions))


def test_step_rejects_bad_input(capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", _io.StringIO("1 9\n1 1\n"))
    code, out, _ = _run(capsys, "step", "--toy", "example1")
    assert code == 0
    assert "invalid input" in out
    assert "STOP" in out


def test_oracle_check_function():
    reports = oracle_check(5, 2, 2, seed=1)
    assert all(r["match"] for r in reports)
