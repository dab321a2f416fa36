import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg, optimize, sparse

from banachrm.banach_core import (DiscreteNorm, MixedProblem, MixedSolution, NormSpec, aposteriori_bound,
                                  assemble_mixed_jacobian, assemble_mixed_residual, bordered_jacobian,
                                  discrete_dual_norm, discrete_infsup, duality_pairing)
from banachrm.errors import ConfigError, InvalidInputError, SolverFailure
from banachrm.mesh_fe import DiscreteFunction, FESpace, QuadratureRule, lp_norm, make_uniform_mesh


def beta(x):
    return 1.0 + 0.5 * np.sin(3.0 * x)


def dbeta(x):
    return 1.5 * np.cos(3.0 * x)


def make_norm(kind, rho, n_elem=3, deg=2):
    mesh = make_uniform_mesh(0.0, 1.0, n_elem)
    bc = "zero-both" if kind == "Lp-derivative" else "none"
    V = FESpace(mesh, "continuous-Pk", deg, bc)
    spec = NormSpec(kind, rho, beta=beta, dbeta=dbeta) if kind == "graph" else NormSpec(kind, rho)
    return DiscreteNorm(spec, V, QuadratureRule.gauss(mesh, order=8))


KINDS = ["Lp-values", "Lp-derivative", "graph"]


def test_normspec_validation():
    with pytest.raises(ConfigError):
        NormSpec("sobolev", 2.0)
    with pytest.raises(ConfigError):
        NormSpec("Lp-values", 1.0)
    with pytest.raises(ConfigError):
        NormSpec("graph", 2.0)
    s = NormSpec("graph", 1.5, beta=beta, rho_div=3.0).with_rho(2.0)
    assert s.rho == 2.0 and s.rho_div == 2.0


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("rho", [1.3, 2.0, 4.0])
def test_norm_against_direct_quadrature(kind, rho):
    nrm = make_norm(kind, rho)
    c = np.random.default_rng(0).standard_normal(nrm.dim)
    u = DiscreteFunction(nrm.space, c)
    mesh = nrm.space.mesh
    q = QuadratureRule.gauss(mesh, order=8)
    if kind == "Lp-values":
        ref = lp_norm(u, mesh, rho, q)
    elif kind == "Lp-derivative":
        ref = lp_norm(lambda x: u.deriv(x), mesh, rho, q)
    else:
        a = lp_norm(u, mesh, rho, q)
        b = lp_norm(lambda x: dbeta(x) * u(x) + beta(x) * u.deriv(x), mesh, rho, q)
        ref = np.hypot(a, b)
    assert nrm.norm(c) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("rho", [1.5, 3.0])
def test_dmap_and_hessian_are_derivatives(kind, rho):
    nrm = make_norm(kind, rho)
    c = np.random.default_rng(1).standard_normal(nrm.dim)
    fd = optimize.approx_fprime(c, nrm.energy, 1e-7)
    np.testing.assert_allclose(nrm.dmap(c), fd, rtol=1e-5, atol=1e-6)
    H = nrm.hessian(c)
    Hfd = np.column_stack([(nrm.dmap(c + 1e-6 * e) - nrm.dmap(c - 1e-6 * e)) / 2e-6 for e in np.eye(nrm.dim)])
    np.testing.assert_allclose(H, Hfd, rtol=1e-4, atol=1e-4 * np.abs(H).max())
    A, low = nrm.hessian_parts(c)
    full = A.toarray() + sum(c2 * np.outer(s, s) for c2, s in low)
    np.testing.assert_allclose(full, H, atol=1e-12 * np.abs(H).max())


@settings(deadline=None, max_examples=40)
@given(st.sampled_from(KINDS), st.sampled_from([1.1, 1.5, 2.0, 3.0, 5.0]), st.integers(0, 2 ** 31),
       st.floats(-3, 3))
def test_duality_identities_discrete(kind, rho, seed, logscale):
    nrm = make_norm(kind, rho)
    c = np.random.default_rng(seed).standard_normal(nrm.dim) * 10.0 ** logscale
    n = nrm.norm(c)
    assert float(nrm.dmap(c) @ c) == pytest.approx(n * n, rel=1e-12)


def test_gram_is_hilbert_inner_product():
    nrm = make_norm("graph", 1.7)
    c = np.random.default_rng(2).standard_normal(nrm.dim)
    assert c @ nrm.gram() @ c == pytest.approx(nrm.with_rho(2.0).norm(c) ** 2, rel=1e-12)
    np.testing.assert_allclose(nrm.gram_sparse().toarray(), nrm.gram(), atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
def test_duality_pairing_matches_dmap(kind):
    nrm = make_norm(kind, 1.6)
    rng = np.random.default_rng(3)
    c, v = rng.standard_normal(nrm.dim), rng.standard_normal(nrm.dim)
    r_fn, v_fn = DiscreteFunction(nrm.space, c), DiscreteFunction(nrm.space, v)
    val = duality_pairing(nrm.spec, r_fn, v_fn, nrm.quad)
    assert val == pytest.approx(float(nrm.dmap(c) @ v), rel=1e-12)
    assert duality_pairing(nrm.spec, DiscreteFunction(nrm.space, 0 * c), v_fn, nrm.quad) == 0.0


def small_problem(rho, m_elem=4, n=2, seed=0):
    rng = np.random.default_rng(seed)
    nrm = make_norm("Lp-values", rho, m_elem, 1)
    B = rng.standard_normal((nrm.dim, n))
    f = rng.standard_normal(nrm.dim)
    return MixedProblem(B, f, nrm)


def test_mixed_problem_validation():
    nrm = make_norm("Lp-values", 1.5, 2, 1)
    with pytest.raises(ConfigError):
        MixedProblem(np.ones((3, 4)), np.ones(3), nrm)
    with pytest.raises(ConfigError):
        MixedProblem(np.ones((3, 1)), np.ones(2), nrm)
    with pytest.raises(InvalidInputError):
        MixedProblem(np.full((3, 1), np.nan), np.ones(3), nrm)
    with pytest.raises(ConfigError):
        MixedProblem(np.ones((4, 1)), np.ones(4), nrm)


def test_jacobian_matches_finite_differences():
    prob = small_problem(1.5)
    rng = np.random.default_rng(4)
    r, u = rng.standard_normal(prob.m), rng.standard_normal(prob.n)
    delta = [1e-2]
    K = assemble_mixed_jacobian(prob, r, u, delta)
    x = np.concatenate([r, u])
    F = lambda z: assemble_mixed_residual(prob, z[:prob.m], z[prob.m:], delta)
    Kfd = np.column_stack([(F(x + 1e-6 * e) - F(x - 1e-6 * e)) / 2e-6 for e in np.eye(x.size)])
    np.testing.assert_allclose(K, Kfd, rtol=1e-5, atol=1e-6)


def test_bordered_jacobian_gives_same_step():
    prob = small_problem(1.4, m_elem=6, n=3, seed=5)
    rng = np.random.default_rng(5)
    r = rng.standard_normal(prob.m)
    delta = [1e-3]
    K = assemble_mixed_jacobian(prob, r, np.zeros(prob.n), delta)
    Kb, k = bordered_jacobian(prob, r, delta)
    rhs = rng.standard_normal(prob.m + prob.n)
    step = np.linalg.solve(K, rhs)
    ext = sparse.linalg.spsolve(Kb, np.concatenate([rhs, np.zeros(k)]))
    np.testing.assert_allclose(ext[:prob.m + prob.n], step, rtol=1e-9, atol=1e-10)


def test_singular_jacobian_check():
    nrm = make_norm("Lp-values", 2.0, 2, 1)
    B = np.zeros((3, 1))
    prob = MixedProblem(B, np.ones(3), nrm)
    with pytest.raises(SolverFailure):
        assemble_mixed_jacobian(prob, np.ones(3), np.zeros(1), check=True)


@pytest.mark.parametrize("rho", [1.3, 2.0, 3.5])
def test_discrete_dual_norm_against_direct_maximization(rho):
    prob = small_problem(rho, m_elem=3)
    g = np.random.default_rng(6).standard_normal(prob.m)
    val = discrete_dual_norm(prob, g)
    # linear objective over the (convex) unit ball of V_m
    ball = {"type": "ineq", "fun": lambda v: 1.0 - prob.vnorm.norm(v)}
    res = optimize.minimize(lambda v: -(g @ v), g / prob.vnorm.norm(g), method="SLSQP",
                            constraints=[ball], options={"ftol": 1e-14, "maxiter": 1000})
    ref = -res.fun
    assert val == pytest.approx(ref, rel=1e-8)
    assert val >= ref * (1 - 1e-12)
    assert discrete_dual_norm(prob, np.zeros(prob.m)) == 0.0


def test_infsup_hilbert_generalized_eigenvalue():
    mesh = make_uniform_mesh(0.0, 1.0, 5)
    V = FESpace(mesh, "continuous-Pk", 1)
    U = FESpace(mesh, "discontinuous-P0")
    q = QuadratureRule.gauss(mesh)
    vn = DiscreteNorm(NormSpec("Lp-values", 2.0), V, q)
    un = DiscreteNorm(NormSpec("Lp-values", 2.0), U, q)
    B = (q.weights[:, None] * V.tabulate(q.points, q.elem).toarray()).T @ U.tabulate(q.points, q.elem).toarray()
    prob = MixedProblem(B, np.ones(V.ndof), vn, U, V, un)
    G_V, G_U = vn.gram(), un.gram()
    lam = linalg.eigh(B.T @ np.linalg.solve(G_V, B), G_U, eigvals_only=True)[0]
    est = discrete_infsup(prob, samples=50)
    assert est >= np.sqrt(lam) * (1 - 1e-10)
    assert est == pytest.approx(np.sqrt(lam), rel=1e-4)


def test_infsup_needs_trial_norm():
    with pytest.raises(ConfigError):
        discrete_infsup(small_problem(1.5))


def test_aposteriori_bound_formula():
    prob = small_problem(1.5)
    r = np.random.default_rng(7).standard_normal(prob.m)
    sol = MixedSolution(r, np.zeros(prob.n), {}, prob)
    val = aposteriori_bound(prob, sol, gamma_B=0.5, c_pi=2.0, osc=0.1)
    assert val == pytest.approx(0.1 / 0.5 + 4.0 * prob.vnorm.norm(r))
    with pytest.raises(InvalidInputError):
        aposteriori_bound(prob, sol, 0.0, 1.0)
