import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from trialsearch.core import Context, History, ProblemSpec, TrialRecord, history_index, index_to_history
from trialsearch.dgp import random_latent_model
from trialsearch.solvers import brute_force_optimal, solve_cdp
from trialsearch.stopping import StoppingConfig, rho

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def histories(draw, k=4, n_y=3):
    actions = draw(st.lists(st.integers(0, k - 1), unique=True, max_size=k))
    ys = draw(st.lists(st.integers(0, n_y - 1), min_size=len(actions), max_size=len(actions)))
    return History(Context((0,)), frozenset(TrialRecord(a, y) for a, y in zip(actions, ys)))


@SETTINGS
@given(histories())
def test_index_bijection(h):
    spec = ProblemSpec(4, (0, 1, 2))
    i = history_index(h, spec)
    assert 0 <= i < spec.n_histories
    assert index_to_history(i, h.context, spec) == h


@SETTINGS
@given(seed=st.integers(0, 10_000), h=histories(3, 2), eps=st.sampled_from([0.0, 0.5]))
def test_rho_sandwich(seed, h, eps):
    model = random_latent_model(np.random.default_rng(seed), 3, 2, 1)
    lo, ex, up = (rho(model, h, eps, m) for m in ("lower", "exact", "upper"))
    assert 0.0 <= lo <= ex + 1e-12
    assert ex <= up + 1e-12 and up <= 1.0


@SETTINGS
@given(seed=st.integers(0, 10_000), delta=st.sampled_from([0.0, 0.2, 0.5]),
       k=st.integers(1, 3), det=st.booleans())
def test_cdp_matches_oracle(seed, delta, k, det):
    model = random_latent_model(np.random.default_rng(seed), k, 2, 1, deterministic=det)
    cfg = StoppingConfig(0.0, delta)
    best, firsts = brute_force_optimal(model, cfg)
    policy = solve_cdp(model, cfg)
    assert abs(policy.expected_search_length() - best) <= 1e-9
    assert policy.decide(History(Context((0,)))) in firsts


@SETTINGS
@given(seed=st.integers(0, 10_000), d1=st.floats(0, 1), d2=st.floats(0, 1))
def test_cdp_value_monotone_in_delta(seed, d1, d2):
    model = random_latent_model(np.random.default_rng(seed), 3, 2, 2)
    lo, hi = sorted((d1, d2))
    a = solve_cdp(model, StoppingConfig(0.0, lo)).expected_search_length()
    b = solve_cdp(model, StoppingConfig(0.0, hi)).expected_search_length()
    assert b <= a + 1e-12
