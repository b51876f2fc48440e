import json

import numpy as np
import pytest

from trialsearch import io
from trialsearch.core import Context, ProblemSpec, RepeatedAction, SpecMismatch, Subject
from trialsearch.dgp import generate_subjects
from trialsearch.evaluation import EvalConfig, evaluate, fit_model
from trialsearch.solvers import solve_cdp, solve_ndp
from trialsearch.stopping import StoppingConfig


def test_trajectory_roundtrip(tmp_path, tiny_data):
    path = tmp_path / "t.csv"
    io.write_trajectories(path, tiny_data)
    back = io.read_trajectories(path, tiny_data.spec)
    assert back.trajectories == tiny_data.trajectories
    io.write_trajectories(tmp_path / "t2.csv", back)
    assert (tmp_path / "t2.csv").read_bytes() == path.read_bytes()


def test_trajectory_errors(tmp_path, tiny_spec):
    p = tmp_path / "bad.csv"
    header = "subject_id,x0,step,action,outcome_index,terminal\n"
    p.write_text(header + "s1,0,1,0,1,0\ns1,0,2,0,2,1\n")
    with pytest.raises(RepeatedAction, match="s1"):
        io.read_trajectories(p, tiny_spec)
    p.write_text(header + "s1,0,1,7,1,1\n")
    with pytest.raises(io.ParseError) as exc:
        io.read_trajectories(p, tiny_spec)
    assert exc.value.line == 2
    p.write_text(header + "s1,0,1,x,1,1\n")
    with pytest.raises(io.ParseError):
        io.read_trajectories(p, tiny_spec)
    p.write_text(header + "s1,0,2,0,1,1\n")
    with pytest.raises(io.ParseError):
        io.read_trajectories(p, tiny_spec)
    p.write_text("subject_id,step,action,outcome_index,terminal\n")
    with pytest.raises(SpecMismatch):
        io.read_trajectories(p, tiny_spec)


def test_panel_roundtrip(tmp_path, tiny_spec):
    subjects = [Subject(Context((1,)), (0, 2, 1)), Subject(Context((0,)), (2, 2, 0))]
    path = tmp_path / "p.csv"
    io.write_panels(path, tiny_spec, subjects)
    assert io.read_panels(path, tiny_spec) == subjects
    path.write_text("subject_id,x0,y0,y1\n0,0,1,1\n")
    with pytest.raises(SpecMismatch, match="y2"):
        io.read_panels(path, tiny_spec)


def test_spec_and_model_roundtrip(tmp_path, small_data):
    io.save_spec(tmp_path / "s.json", small_data.spec)
    assert io.load_spec(tmp_path / "s.json") == small_data.spec
    for est in ("historical", "logistic"):
        model = fit_model(small_data, est)
        io.save_model(tmp_path / "m.json", model)
        back = io.load_model(tmp_path / "m.json")
        for ctx in small_data.spec.contexts():
            np.testing.assert_array_equal(back.table(ctx), model.table(ctx))


def test_policy_roundtrip_behaves_identically(tmp_path, small_instance, small_data):
    model = fit_model(small_data, "historical")
    test = generate_subjects(small_instance, 200)
    for policy in (solve_cdp(model, StoppingConfig(0.0, 0.3)), solve_ndp(model, 0.2)):
        io.save_policy(tmp_path / "p.json", policy)
        back = io.load_policy(tmp_path / "p.json")
        assert evaluate(back, test, EvalConfig()) == evaluate(policy, test, EvalConfig())


def test_format_version_checked(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"format_version": 99, "spec": {}}))
    with pytest.raises(SpecMismatch):
        io.load_spec(p)
    p.write_text("{not json")
    with pytest.raises(io.ParseError):
        io.load_spec(p)


def test_instance_roundtrip(tmp_path, small_instance):
    io.save_instance(tmp_path / "i.json", small_instance)
    back = io.load_instance(tmp_path / "i.json")
    np.testing.assert_array_equal(back.outcome, small_instance.outcome)


def test_results_csv(tmp_path, small_instance, small_data):
    model = fit_model(small_data, "historical")
    test = generate_subjects(small_instance, 50)
    m = evaluate(solve_cdp(model, StoppingConfig()), test)
    row = {"solver": "cdp", "estimator": "historical", "parameter": "delta", "value": 0.0,
           "seed": 0, "metrics": m}
    io.write_results(tmp_path / "r.csv", [row])
    io.write_curves(tmp_path / "c.csv", [row])
    back = io.read_results(tmp_path / "r.csv")
    assert float(back[0]["efficacy"]) == pytest.approx(m.efficacy)
    assert list(back[0]) == io.RESULT_FIELDS
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert len(lines) == 1 + small_data.spec.k
