import math

import numpy as np
import pytest

from trialsearch.core import STOP, Context, History, ProblemSpec, Subject
from trialsearch.dgp import generate_subjects
from trialsearch.evaluation import (
    EvalConfig,
    PolicyRepeatedAction,
    build_policy,
    evaluate,
    fit_emulated_behavior,
    fit_model,
    mean_and_se,
    rollout,
    sweep,
)
from trialsearch.solvers import GreedyPolicy, Policy, solve_cdp
from trialsearch.stopping import StoppingConfig

C0 = Context((0,))


class Fixed(Policy):
    def __init__(self, spec, actions):
        self.spec = spec
        self.actions = actions

    def decide(self, h, rng=None):
        return self.actions[len(h)] if len(h) < len(self.actions) else STOP


def test_rollout_and_repeat_detection():
    spec = ProblemSpec(3, (0, 1, 2))
    s = Subject(C0, (0, 2, 1))
    tr = rollout(Fixed(spec, [2, 1]), s)
    assert [(t.action, t.outcome_index) for t in tr.trials] == [(2, 1), (1, 2)]
    assert tr.terminal
    with pytest.raises(PolicyRepeatedAction):
        rollout(Fixed(spec, [1, 1]), s)
    capped = rollout(Fixed(spec, [0, 1, 2]), s, max_steps=1)
    assert len(capped) == 1 and not capped.terminal


def test_metrics_by_hand():
    spec = ProblemSpec(2, (0, 1))
    subjects = [Subject(C0, (1, 0)), Subject(C0, (0, 1)), Subject(C0, (0, 0))]
    m = evaluate(Fixed(spec, [0]), subjects, EvalConfig(), spec)
    assert m.efficacy == pytest.approx(2 / 3)
    assert m.mean_search_time == 1.0 and m.worst_search_time == 1
    assert m.best_so_far_curve == pytest.approx([1 / 3, 1 / 3])
    # tolerance epsilon lets a near miss count
    m = evaluate(Fixed(spec, [0]), subjects, EvalConfig(epsilon=1.0), spec)
    assert m.efficacy == 1.0


def test_empty_trajectory_fails():
    spec = ProblemSpec(2, (0, 1))
    m = evaluate(Fixed(spec, []), [Subject(C0, (0, 0))], EvalConfig(), spec)
    assert m.efficacy == 0.0 and m.mean_search_time == 0.0
    assert all(math.isnan(v) for v in m.best_so_far_curve)


def test_weighted_evaluation_matches_exact(example1):
    subjects, w = example1.exact_subjects()
    policy = solve_cdp(example1.model, StoppingConfig())
    m = evaluate(policy, subjects, EvalConfig(), weights=w)
    assert m.efficacy == pytest.approx(1.0)
    assert m.mean_search_time == pytest.approx(1.4)


def test_emulated_behavior(small_data):
    beh = fit_emulated_behavior(small_data, seed=1)
    p = beh.probabilities(History(Context((0,))))
    assert p.sum() == pytest.approx(1.0)
    assert p[-1] == 0.0          # the generator never stops at the root
    subjects = generate_subjects_for(small_data)
    m = evaluate(beh, subjects, EvalConfig(seed=3))
    m2 = evaluate(beh, subjects, EvalConfig(seed=3))
    assert m.efficacy == m2.efficacy


def generate_subjects_for(data):
    rng = np.random.default_rng(0)
    k, ny = data.spec.k, data.spec.n_outcomes
    return [Subject(Context((int(rng.integers(2)),)), tuple(rng.integers(ny, size=k))) for _ in range(40)]


@pytest.mark.parametrize("estimator", ["tabular", "historical", "logistic"])
def test_fit_model(small_data, estimator):
    model = fit_model(small_data, estimator)
    assert model.spec == small_data.spec
    with pytest.raises(ValueError):
        fit_model(small_data, "forest")


def test_build_policy(example1):
    assert isinstance(build_policy("greedy", example1.model, 0.1, StoppingConfig()), GreedyPolicy)
    with pytest.raises(ValueError):
        build_policy("bogus", example1.model, 0.1, StoppingConfig())


def test_sweep(small_instance, small_data):
    test = generate_subjects(small_instance, 100)
    res = sweep("cdp", [0.0, 0.5, 1.0], small_data, test)
    assert res.parameter == "delta" and len(res.rows) == 3
    times = [r.metrics.mean_search_time for r in res.rows]
    assert times[0] >= times[1] >= times[2] == 0.0
    assert all(a == STOP for a in res.rows[2].first_actions.values())
    res = sweep("ndp", [0.1, 0.4], small_data, test)
    assert res.parameter == "lambda"
    with pytest.raises(ValueError):
        sweep("cdp", [], small_data, test)


def test_mean_and_se():
    m, se = mean_and_se([1.0, 2.0, 3.0])
    assert m == 2.0 and se == pytest.approx(1 / math.sqrt(3))
    assert mean_and_se([5.0]) == (5.0, 0.0)


def test_sweep_on_exact_toy(example1, a6):
    subjects, w = example1.exact_subjects()
    grid = np.linspace(0, 1, 10)
    res = sweep("cdp", grid, example1.model, subjects, weights=w)
    assert len(res.rows) == 10
    times = [r.metrics.mean_search_time for r in res.rows]
    assert all(b <= a + 1e-12 for a, b in zip(times, times[1:]))
    assert res.rows[0].metrics.efficacy == pytest.approx(1.0)
    subjects, w = a6.exact_subjects()
    res = sweep("ndp", np.linspace(0.05, 0.5, 10), a6.model, subjects, weights=w)
    assert all(r.first_actions[C0] == 0 for r in res.rows)


def test_emulated_behavior_examples():
    from trialsearch.core import Dataset, Trajectory, extend

    spec = ProblemSpec(3, (0, 1))
    data = Dataset(spec, trajectories=[Trajectory(C0, ((2, 1),))])
    beh = fit_emulated_behavior(data)
    p = beh.probabilities(extend(History(C0), 2, 1))
    assert p[-1] == 1.0
    p = beh.probabilities(History(C0))
    np.testing.assert_array_equal(p, [0, 0, 1, 0])
    # unseen history: uniform over untried plus the marginal stop rate (1 stop / 2 decisions)
    p = beh.probabilities(extend(History(C0), 0, 0))
    np.testing.assert_allclose(p, [0, 0.25, 0.25, 0.5])


def test_exhaustive_policy():
    spec = ProblemSpec(3, (0, 1, 2))
    rng = np.random.default_rng(1)
    subjects = [Subject(C0, tuple(rng.integers(3, size=3))) for _ in range(20)]
    m = evaluate(Fixed(spec, [0, 1, 2]), subjects, EvalConfig(), spec)
    assert m.efficacy == pytest.approx(1.0) and m.mean_search_time == pytest.approx(3.0)
    assert all(b >= a for a, b in zip(m.best_so_far_curve, m.best_so_far_curve[1:]))
