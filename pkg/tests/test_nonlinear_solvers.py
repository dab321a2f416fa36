import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import banachrm.nonlinear_solvers as ns
from banachrm.banach_core import DiscreteNorm, MixedProblem, NormSpec, assemble_mixed_residual
from banachrm.errors import ConfigError, InvalidInputError
from banachrm.mesh_fe import FESpace, QuadratureRule, make_uniform_mesh
from banachrm.nonlinear_solvers import (SolverConfig, default_p_path, estimate_rate, invert_duality_map,
                                        solve_constrained_descent, solve_mixed)
from banachrm.suites import direct_residual_minimizer, random_mixed_problem


def lp_problem(rho, n_elem=6, n=2, deg=1, seed=0, kind="Lp-values"):
    rng = np.random.default_rng(seed)
    mesh = make_uniform_mesh(0.0, 1.0, n_elem)
    V = FESpace(mesh, "continuous-Pk", deg, "zero-both" if kind == "Lp-derivative" else "none")
    nrm = DiscreteNorm(NormSpec(kind, rho), V, QuadratureRule.gauss(mesh, order=8))
    return MixedProblem(rng.standard_normal((V.ndof, n)), rng.standard_normal(V.ndof), nrm)


# ----------------------------------------------------------------- config

def test_config_validation():
    for bad in (dict(newton_tol=0), dict(max_iter=0), dict(shrink=1.0), dict(delta_start=1e-12),
                dict(delta_factor=2.0), dict(p_path=[1.0, 2.0]), dict(p_path=[2.0, 1.5, 1.8])):
        with pytest.raises(ConfigError):
            SolverConfig(**bad)


def test_delta_schedule():
    d = SolverConfig(delta_start=1e-2, delta_end=1e-6, delta_factor=0.1).deltas()
    np.testing.assert_allclose(d, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])


@given(st.floats(1.001, 50.0))
def test_default_p_path_properties(p):
    path = default_p_path(p)
    assert path[0] == 2.0 and path[-1] == p
    x = np.array(path) - 1.0
    d = np.diff(path)
    assert np.all(d <= 0) or np.all(d >= 0)
    ratios = np.maximum(x[1:] / x[:-1], x[:-1] / x[1:])
    assert np.all(ratios <= 1.3 + 1e-12)


# ------------------------------------------------------------ rate fit

@given(st.floats(-3.0, 5.0), st.floats(1e-3, 1e3))
def test_estimate_rate_exact_power_law(rate, const):
    h = 2.0 ** -np.arange(1, 8)
    r, r2 = estimate_rate(h, const * h ** rate)
    assert r == pytest.approx(rate, abs=1e-9)
    assert r2 == pytest.approx(1.0) or rate == pytest.approx(0.0, abs=1e-9)


def test_estimate_rate_validation():
    with pytest.raises(InvalidInputError):
        estimate_rate([1, 0.5], [1, 0.5])
    with pytest.raises(InvalidInputError):
        estimate_rate([1, 0.5, 0.25], [1, 0, 0.5])


# ----------------------------------------------------- duality inversion

@settings(deadline=None, max_examples=30)
@given(st.sampled_from(["Lp-values", "Lp-derivative"]), st.sampled_from([1.1, 1.5, 3.0, 5.0]),
       st.integers(0, 2 ** 31), st.floats(-3, 3))
def test_invert_duality_map_roundtrip(kind, rho, seed, logscale):
    prob = lp_problem(rho, n_elem=4, deg=2, kind=kind)
    c = np.random.default_rng(seed).standard_normal(prob.m) * 10.0 ** logscale
    g = prob.vnorm.dmap(c)
    r = invert_duality_map(prob.vnorm, g)
    assert prob.vnorm.norm(r) == pytest.approx(prob.vnorm.norm(c), rel=1e-8)
    np.testing.assert_allclose(prob.vnorm.dmap(r), g, rtol=1e-7, atol=1e-7 * np.abs(g).max())


# ------------------------------------------------------------ mixed solve

def test_hilbert_case_is_linear_saddle_point():
    prob = lp_problem(2.0, n=3, seed=1)
    G = prob.vnorm.gram()
    B = prob.B
    K = np.block([[G, B], [B.T, np.zeros((3, 3))]])
    x = np.linalg.solve(K, np.concatenate([prob.f, np.zeros(3)]))
    sol = solve_mixed(prob)
    np.testing.assert_allclose(sol.r, x[:prob.m], atol=1e-10)
    np.testing.assert_allclose(sol.u, x[prob.m:], atol=1e-10)


@pytest.mark.parametrize("rho", [1.2, 1.5, 3.0, 6.0])
def test_mixed_solution_satisfies_system(rho):
    prob = lp_problem(rho, n=2, seed=2)
    sol = solve_mixed(prob)
    F = assemble_mixed_residual(prob, sol.r, sol.u)
    assert np.linalg.norm(F) <= 1e-7 * np.linalg.norm(prob.f)
    assert sol.diagnostics["residual"] == pytest.approx(np.linalg.norm(F), abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_mixed_matches_direct_minimizer(seed):
    rng = np.random.default_rng(100 + seed)
    prob = random_mixed_problem(rng, (1.5, 3.0)[seed % 2])
    u_dir = direct_residual_minimizer(prob)
    np.testing.assert_allclose(solve_mixed(prob).u, u_dir, atol=1e-6)


def test_u_minimizes_dual_residual():
    prob = lp_problem(1.4, n=2, seed=3)
    sol = solve_mixed(prob)
    base = ns.invert_duality_map(prob.vnorm, prob.f - prob.B @ sol.u)
    val = prob.vnorm.norm(base)
    rng = np.random.default_rng(0)
    for _ in range(10):
        w = sol.u + 1e-3 * rng.standard_normal(prob.n)
        other = prob.vnorm.norm(ns.invert_duality_map(prob.vnorm, prob.f - prob.B @ w))
        assert other >= val * (1 - 1e-12)
    assert sol.residual_norm == pytest.approx(val, rel=1e-7)


def test_square_problem_shortcut_and_zero_rhs():
    prob = lp_problem(1.5, n_elem=2, n=3, seed=4)
    sol = solve_mixed(prob)
    assert sol.diagnostics["method"] == "petrov-galerkin"
    np.testing.assert_allclose(prob.B @ sol.u, prob.f, atol=1e-12)
    zero = prob.with_rhs(np.zeros(prob.m))
    assert np.all(solve_mixed(zero, SolverConfig(square_shortcut=False)).u == 0)


def test_descent_agrees_with_newton():
    prob = lp_problem(1.3, n=2, seed=5)
    a = solve_mixed(prob)
    b = solve_constrained_descent(prob)
    assert b.diagnostics["method"] == "descent"
    np.testing.assert_allclose(b.u, a.u, atol=1e-6)


def test_sparse_path_matches_dense(monkeypatch):
    prob = lp_problem(1.4, n_elem=40, n=3, deg=2, seed=6)
    dense = solve_mixed(prob)
    monkeypatch.setattr(ns, "SPARSE_MIN", 1)
    sp = solve_mixed(prob)
    np.testing.assert_allclose(sp.u, dense.u, atol=1e-8)
    np.testing.assert_allclose(sp.r, dense.r, atol=1e-8)


def test_explicit_p_path_is_followed():
    # rho = 3 means trial exponent p = 3/2
    prob = lp_problem(3.0, n=2, seed=7)
    sol = solve_mixed(prob, SolverConfig(p_path=[2.0, 1.75, 1.5]))
    ps = [rec[0] for rec in sol.diagnostics["path"]]
    assert ps[:3] == [2.0, 1.75, 1.5] and set(ps[3:]) <= {1.5}
    ref = solve_mixed(prob, SolverConfig(continuation=False))
    np.testing.assert_allclose(sol.u, ref.u, atol=1e-8)


def test_p_path_away_from_target_rejected():
    prob = lp_problem(3.0, n=2, seed=7)
    with pytest.raises(ConfigError):
        solve_mixed(prob, SolverConfig(p_path=[2.0, 2.5, 3.0]))
