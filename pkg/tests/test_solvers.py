import numpy as np
import pytest

from trialsearch.core import STOP, Context, History, ProblemSpec, RepeatedAction, extend
from trialsearch.dgp import random_latent_model
from trialsearch.model import LatentOutcomeModel
from trialsearch.solvers import (
    CdpPolicy,
    GreedyPolicy,
    InstanceTooLarge,
    NdpPolicy,
    brute_force_optimal,
    count_policies,
    decide_greedy,
    expected_search_length,
    greedy_score,
    reachable_histories,
    solve_cdp,
    solve_ndp,
    worst_case_length,
)
from trialsearch.stopping import StoppingConfig, gamma

C0 = Context((0,))
EXACT0 = StoppingConfig(0.0, 0.0)


def test_example1_cdp(example1):
    model = example1.model
    policy = solve_cdp(model, EXACT0)
    assert policy.expected_search_length() == pytest.approx(1.4, abs=1e-12)
    assert expected_search_length(policy, model, C0) == pytest.approx(1.4, abs=1e-12)
    assert policy.decide(History(C0)) == 1
    assert worst_case_length(policy, model, C0) == 2


def test_example1_greedy(example1):
    model = example1.model
    policy = GreedyPolicy(model, EXACT0)
    assert policy.decide(History(C0)) == 2
    assert expected_search_length(policy, model, C0) == pytest.approx(1.5, abs=1e-12)
    assert worst_case_length(policy, model, C0) == 3
    h = extend(History(C0), 2, 0)
    assert greedy_score(model, h, 0) == pytest.approx(4 / 7)
    assert greedy_score(model, h, 1) == pytest.approx(3 / 7)
    with pytest.raises(RepeatedAction):
        greedy_score(model, h, 2)


def test_greedy_table_matches_single_history(example1, a6):
    for toy in (example1, a6):
        for delta in (0.0, 0.3):
            cfg = StoppingConfig(0.0, delta)
            policy = GreedyPolicy(toy.model, cfg)
            for h in reachable_histories(policy, toy.model, C0):
                assert policy.decide(h) == decide_greedy(toy.model, cfg, h)


def test_a6_cdp_picks_b(a6):
    policy = solve_cdp(a6.model, StoppingConfig(0.0, 0.5))
    assert policy.decide(History(C0)) == 1
    assert policy.expected_search_length() == pytest.approx(1.0)


@pytest.mark.parametrize("lam", [0.05, 0.3, 1.0, 2.0])
def test_a6_ndp_q_values(a6, lam):
    policy = solve_ndp(a6.model, lam)
    q_a = 0.5 * (1 - lam) + 0.5 * max(0.5 - lam, 0.6 - 2 * lam)
    q_b = max(0.6 - lam, 0.8 - 2 * lam)
    root = History(C0)
    assert policy.q(root, 0) == pytest.approx(q_a)
    assert policy.q(root, 1) == pytest.approx(q_b)
    assert policy.q(root, STOP) == -np.inf
    assert policy.decide(root) == 0


def test_ndp_never_stops_at_root():
    model = random_latent_model(np.random.default_rng(1), 3, 2, 2)
    policy = solve_ndp(model, 5.0)
    for ctx in model.contexts():
        assert policy.decide(History(ctx)) != STOP
    with pytest.raises(ValueError):
        solve_ndp(model, 0.0)


def test_cdp_stops_only_where_permitted():
    model = random_latent_model(np.random.default_rng(4), 3, 3, 2)
    cfg = StoppingConfig(0.0, 0.2, bound_mode="upper")
    policy = solve_cdp(model, cfg)
    for ctx in model.contexts():
        for h in reachable_histories(policy, model, ctx):
            if policy.decide(h) == STOP:
                assert gamma(model, h, cfg)


def test_cdp_tie_break_prefers_stop_then_lowest_action():
    # two identical deterministic actions
    spec = ProblemSpec(2, (0, 1))
    out = np.zeros((1, 2, 2))
    out[0, :, 1] = 1.0
    model = LatentOutcomeModel(spec, {C0: np.array([1.0])}, {C0: out})
    policy = solve_cdp(model, EXACT0)
    assert policy.decide(History(C0)) == 0
    assert policy.decide(extend(History(C0), 0, 1)) == STOP


def test_brute_force_example1(example1):
    best, firsts = brute_force_optimal(example1.model, EXACT0)
    assert best == pytest.approx(1.4)
    assert firsts == [1]
    assert count_policies(example1.model, EXACT0, C0) > 1


def test_brute_force_rejects_large():
    model = random_latent_model(np.random.default_rng(0), 5, 2, 1)
    with pytest.raises(InstanceTooLarge):
        brute_force_optimal(model, EXACT0)


@pytest.mark.parametrize("kind", ["cdp", "ndp", "greedy"])
def test_policy_roundtrip(example1, kind):
    model = example1.model
    if kind == "cdp":
        policy = solve_cdp(model, StoppingConfig(0.1, 0.2))
        back = CdpPolicy.from_dict(model.spec, policy.to_dict())
        assert back.expected_search_length() == pytest.approx(policy.expected_search_length())
    elif kind == "ndp":
        policy = solve_ndp(model, 0.3)
        back = NdpPolicy.from_dict(model.spec, policy.to_dict())
    else:
        policy = GreedyPolicy(model, StoppingConfig(0.0, 0.1))
        back = GreedyPolicy.from_dict(model.spec, policy.to_dict())
    for h in reachable_histories(policy, model, C0):
        assert back.decide(h) == policy.decide(h)
