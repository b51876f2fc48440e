"""Compiled and numpy kernels must agree, and table routes must match the recursive ones."""

import numpy as np
import pytest

from trialsearch import kernels
from trialsearch.core import Context, ProblemSpec, history_grid, iter_histories
from trialsearch.dgp import random_latent_model
from trialsearch.model import PriorKind, SmoothingConfig, fit_tabular
from trialsearch.stopping import BoundMode, rho, rho_table

try:
    cy = kernels.get_backend("cython")
except ImportError:
    cy = None
py = kernels.get_backend("python")

needs_cython = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def _random_inputs(seed, k=4, ny=3):
    rng = np.random.default_rng(seed)
    spec = ProblemSpec(k, tuple(range(ny)))
    grid = history_grid(spec)
    P = rng.dirichlet(np.ones(ny), size=(grid.n, k))
    values = np.asarray(spec.outcome_values, dtype=np.float64)
    return rng, grid, P, values


@needs_cython
@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("avg", [False, True])
def test_rho_exact_equivalent(seed, avg):
    _, grid, P, values = _random_inputs(seed)
    a = py.rho_exact_table(P, values, grid.slot, grid.best, grid.stride, 0.5, avg)
    b = cy.rho_exact_table(P, values, grid.slot, grid.best, grid.stride, 0.5, avg)
    np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


@needs_cython
@pytest.mark.parametrize("upper", [False, True])
def test_rho_bound_equivalent(upper):
    _, grid, P, values = _random_inputs(7)
    a = py.rho_bound_table(P, values, grid.slot, grid.best, 0.0, upper)
    b = cy.rho_bound_table(P, values, grid.slot, grid.best, 0.0, upper)
    np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


@needs_cython
def test_backward_induction_equivalent():
    rng, grid, P, _ = _random_inputs(3)
    stop_ok = (rng.random(grid.n) < 0.4).astype(np.uint8)
    stop_ok[grid.size == grid.slot.shape[1]] = 1
    stop_reward = rng.normal(size=grid.n)
    for step in (-1.0, 0.0):
        Va, ca, Qa = py.backward_induction(P, step, stop_reward, stop_ok, grid.slot, grid.stride)
        Vb, cb, Qb = cy.backward_induction(P, step, stop_reward, stop_ok, grid.slot, grid.stride)
        np.testing.assert_array_equal(np.asarray(Va), np.asarray(Vb))
        np.testing.assert_array_equal(np.asarray(ca), np.asarray(cb))
        np.testing.assert_array_equal(np.asarray(Qa), np.asarray(Qb))


@needs_cython
@pytest.mark.parametrize("historical", [False, True])
def test_smooth_equivalent(historical):
    rng, grid, _, _ = _random_inputs(5)
    counts = rng.poisson(0.7, size=(grid.n, 4, 3)).astype(np.float64)
    a = py.smooth_table(counts, 0.1, historical, grid.slot, grid.size, grid.stride)
    b = cy.smooth_table(counts, 0.1, historical, grid.slot, grid.size, grid.stride)
    np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


@pytest.mark.parametrize("mode", list(BoundMode))
def test_rho_table_matches_recursion(mode):
    model = random_latent_model(np.random.default_rng(2), k=3, n_y=3, n_contexts=1)
    ctx = Context((0,))
    table = rho_table(model, ctx, 0.5, mode)
    for i, h in enumerate(iter_histories(ctx, model.spec)):
        assert table[i] == pytest.approx(rho(model, h, 0.5, mode), abs=1e-12)


def test_averaged_rho_table_matches_recursion():
    model = random_latent_model(np.random.default_rng(8), k=3, n_y=2, n_contexts=1)
    ctx = Context((0,))
    table = rho_table(model, ctx, 0.0, BoundMode.EXACT, average_orders=True)
    for i, h in enumerate(iter_histories(ctx, model.spec)):
        assert table[i] == pytest.approx(rho(model, h, 0.0, "exact", average_orders=True), abs=1e-12)


@pytest.mark.parametrize("kind", list(PriorKind))
def test_smooth_table_matches_recursion(small_data, kind):
    model = fit_tabular(small_data, SmoothingConfig(kind, 0.1))
    for ctx in small_data.spec.contexts():
        table = model.table(ctx)
        for i, h in enumerate(iter_histories(ctx, model.spec)):
            for a in range(model.spec.k):
                if a in h:
                    continue
                np.testing.assert_allclose(table[i, a], model.predict(h, a), atol=1e-13)


def test_pure_python_fallback_selected():
    import os
    import subprocess
    import sys

    code = ("from trialsearch import kernels; from trialsearch.dgp import build_toy;"
            "from trialsearch.solvers import solve_cdp; from trialsearch.stopping import StoppingConfig;"
            "p = solve_cdp(build_toy('example1').model, StoppingConfig());"
            "print(kernels.BACKEND, p.expected_search_length())")
    env = dict(os.environ, TRIALSEARCH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, value = out.stdout.split()
    assert backend == "python"
    assert abs(float(value) - 1.4) < 1e-12
