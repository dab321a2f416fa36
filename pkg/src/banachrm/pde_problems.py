"""Advection-reaction and Laplace problems in 1-D L^p / W^{1,p}_0 settings."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .banach_core import (DiscreteNorm, MixedProblem, NormSpec, discrete_infsup)
from .errors import ConfigError, SolverFailure
from .lp_geometry import LpVector, best_approx_lp, conjugate, lp_norm_vec
from .mesh_fe import (DiscreteFunction, FESpace, QuadratureRule, BasisFunction,
                      build_graded_basis, build_ideal_advection_test_space,
                      make_uniform_mesh, merge_meshes)
from .nonlinear_solvers import SolverConfig, estimate_rate, solve_mixed


# ---------------------------------------------------------------- advection

@dataclass
class AdvectionData:
    """beta u' + mu u = f on (a, b) with inflow data g.

    ``source`` is the smooth part of f, ``diracs`` a sequence of
    (location, weight) point masses, ``inflow`` the boundary value g used at
    every inflow end.
    """

    a: float
    b: float
    beta: Callable
    mu: Callable
    dbeta: Optional[Callable] = None
    source: Optional[Callable] = None
    diracs: Sequence = ()
    inflow: float = 0.0
    exact_u: Optional[Callable] = None

    def dbeta_at(self, x):
        if self.dbeta is not None:
            return self.dbeta(x)
        return (self.beta(x + 1e-7) - self.beta(x - 1e-7)) / 2e-7

    def inflow_points(self):
        pts = []
        if self.beta(np.array([self.a]))[0] > 0:
            pts.append(self.a)
        if self.beta(np.array([self.b]))[0] < 0:
            pts.append(self.b)
        return pts

    def outflow_points(self):
        pts = []
        if self.beta(np.array([self.a]))[0] < 0:
            pts.append(self.a)
        if self.beta(np.array([self.b]))[0] > 0:
            pts.append(self.b)
        return pts


def _const(c):
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


def sign_jump_data(xi=np.sqrt(2.0) / 2.0):
    """u' = 2 delta_xi on (0, 1), u(0) = -1; exact u = sign(x - xi)."""
    return AdvectionData(0.0, 1.0, _const(1.0), _const(0.0), dbeta=_const(0.0),
                         diracs=((xi, 2.0),), inflow=-1.0,
                         exact_u=lambda x: np.where(x < xi, -1.0, 1.0))


def gibbs_data():
    """(1/2) u' = delta_0 on (-1, 1), u(-1) = -1; exact u = sign(x)."""
    return AdvectionData(-1.0, 1.0, _const(0.5), _const(0.0), dbeta=_const(0.0),
                         diracs=((0.0, 1.0),), inflow=-1.0,
                         exact_u=lambda x: np.where(x < 0, -1.0, 1.0))


def smooth_advection_data():
    """u' + u = 1 on (0, 1), u(0) = 0; exact u = 1 - exp(-x)."""
    return AdvectionData(0.0, 1.0, _const(1.0), _const(1.0), dbeta=_const(0.0),
                         source=_const(1.0), inflow=0.0,
                         exact_u=lambda x: 1.0 - np.exp(-x))


def advection_weak_problem(data, trial, test, p, vnorm="graph", order=10):
    """Mixed problem for b(w, v) = int w (mu v - (beta v)'), <f, v> = int f v + sum g v |beta|.

    ``vnorm`` selects the test norm: "graph" (||v||_q^2 + ||(beta v)'||_q^2)
    or "derivative" (||v'||_q).
    """
    q = conjugate(p)
    if test.family == "discontinuous-P0":
        raise ConfigError("test functions must be continuous for this weak form")
    for xo in data.outflow_points():
        e = np.array([test.mesh.n_elem - 1 if xo == test.mesh.b else 0])
        vals = test.tabulate(np.array([xo]), e, 0).toarray()
        if np.max(np.abs(vals)) > 1e-10 * max(1.0, np.max(np.abs(test.tabulate(test.mesh.nodes).toarray()))):
            raise ConfigError(f"test space does not vanish on the outflow boundary x={xo}")
    disc = set(test.discontinuities)
    for x0, _ in data.diracs:
        if any(abs(x0 - d) < 1e-14 for d in disc):
            raise ConfigError(f"point source at x={x0} needs test functions continuous there")
    mesh = merge_meshes(trial.mesh, test.mesh)
    brk = [x0 for x0, _ in data.diracs] + list(disc)
    quad = QuadratureRule.gauss(mesh, order=order, breakpoints=brk)
    x = quad.points
    Phi = trial.tabulate(x, trial.mesh.locate(x) if trial.mesh is not mesh else quad.elem, 0)
    te = test.mesh.locate(x)
    Psi = test.tabulate(x, te, 0)
    dPsi = test.tabulate(x, te, 1)
    beta = data.beta(x)
    coef = data.mu(x) - data.dbeta_at(x)
    from scipy import sparse
    A = sparse.diags(coef) @ Psi - sparse.diags(beta) @ dPsi
    B = (A.T @ sparse.diags(quad.weights) @ Phi).tocsr()
    f = np.zeros(test.ndof)
    if data.source is not None:
        f += Psi.T @ (quad.weights * data.source(x))
    for x0, wgt in data.diracs:
        f += wgt * test.tabulate(np.array([x0])).toarray().ravel()
    for xi in data.inflow_points():
        e = np.array([test.mesh.n_elem - 1 if xi == test.mesh.b else 0])
        v = test.tabulate(np.array([xi]), e, 0).toarray().ravel()
        f += data.inflow * v * abs(data.beta(np.array([xi]))[0])
    if vnorm == "graph":
        spec = NormSpec("graph", q, beta=data.beta, dbeta=data.dbeta_at)
    elif vnorm == "derivative":
        spec = NormSpec("Lp-derivative", q)
    else:
        raise ConfigError(f"unknown test norm {vnorm!r}")
    if B.shape[0] <= 600:
        B = B.toarray()
    vn = DiscreteNorm(spec, test, quad)
    un = DiscreteNorm(NormSpec("Lp-values", p), trial, _trial_quad(trial, quad, mesh))
    return MixedProblem(B, f, vn, trial, test, un, {"p": p, "quad": quad})


def _trial_quad(trial, quad, mesh):
    if trial.mesh is mesh:
        return quad
    return QuadratureRule(quad.points, quad.weights, trial.mesh.locate(quad.points), trial.mesh, quad.order)


def cell_average_solve(data, mesh, p, local=True, cfg=None):
    """P0 trial space against the ideal test space S(T_n).

    The pair is square and compatible, so the discrete solution is the
    vector of element averages of the exact solution.
    """
    trial = FESpace(mesh, "discontinuous-P0")
    test = build_ideal_advection_test_space(mesh, data.beta, data.dbeta, local=local)
    prob = advection_weak_problem(data, trial, test, p)
    sol = solve_mixed(prob, cfg)
    return DiscreteFunction(trial, sol.u)


def exact_cell_averages(u, mesh, breakpoints=()):
    quad = QuadratureRule.gauss(mesh, breakpoints=breakpoints)
    return np.bincount(quad.elem, quad.weights * u(quad.points), minlength=mesh.n_elem) / mesh.h


def lp_error(u, uh, mesh, p, breakpoints=()):
    """||u - u_h||_p with quadrature split at the given breakpoints."""
    quad = QuadratureRule.gauss(mesh, breakpoints=breakpoints)
    diff = u(quad.points) - uh(quad.points, quad.elem)
    return lp_norm_vec(diff, p, quad.weights)


def advection_mesh_run(data, n, p, trial="p0", test_degree=0, vnorm="graph", cfg=None):
    """One mesh of the advection rate study; returns a result row."""
    brk = [x0 for x0, _ in data.diracs]
    mesh = make_uniform_mesh(data.a, data.b, n)
    if trial == "p0" and test_degree == 0:
        uh = cell_average_solve(data, mesh, p, cfg=cfg)
        res, its = 0.0, 0
    else:
        U = FESpace(mesh, "discontinuous-P0") if trial == "p0" else FESpace(mesh, "continuous-Pk", 1)
        k = max(int(test_degree), 1)
        bc = "zero-right" if data.beta(np.array([data.b]))[0] > 0 else "zero-left"
        V = FESpace(mesh, "continuous-Pk", k, bc)
        prob = advection_weak_problem(data, U, V, p, vnorm=vnorm)
        sol = solve_mixed(prob, cfg)
        uh = DiscreteFunction(U, sol.u)
        res, its = prob.vnorm.norm(sol.r), sol.diagnostics["iterations"]
    err = lp_error(data.exact_u, uh, mesh, p, brk)
    return {"n_elem": n, "h": (data.b - data.a) / n, "err_lp": err, "res_norm": res, "iterations": its}


def advection_rate_study(p, n_list, data=None, trial="p0", test_degree=0, vnorm="graph", cfg=None):
    """L^p errors of u_n over a sequence of uniform meshes.

    ``trial="p0"`` with ``test_degree=0`` uses the ideal pair; otherwise the
    trial space is P0 or continuous P1 and the test space continuous P^k
    vanishing at the outflow end.
    """
    data = data or sign_jump_data()
    return [advection_mesh_run(data, n, p, trial, test_degree, vnorm, cfg) for n in n_list]


# -------------------------------------------------------------------- Gibbs

def gibbs_scenario(p, n_elem, k_test, refine=1, vnorm="derivative"):
    """Continuous P1 trial space for u = sign(x) on (-1, 1).

    The test space is continuous P^k on the trial mesh refined ``refine``
    times, vanishing at the outflow end x = 1.  Large ``k_test`` and
    ``refine`` approach the ideal (infinite-dimensional) test space.
    """
    if k_test < 2:
        raise ConfigError("the continuous P1 trial space needs test degree >= 2")
    data = gibbs_data()
    mesh = make_uniform_mesh(-1.0, 1.0, n_elem)
    U = FESpace(mesh, "continuous-Pk", 1)
    V = FESpace(mesh.refine(refine), "continuous-Pk", k_test, "zero-right")
    return advection_weak_problem(data, U, V, p, vnorm=vnorm)


def overshoot(uh, per_elem=1000, plateau=1.0):
    """max of u_h over ``per_elem`` samples per element, minus the plateau value."""
    _, vals = uh.sample(per_elem)
    return float(np.max(vals) - plateau)


def best_lp_fit(u, space, p, refine=64, breakpoints=(), tol=1e-7):
    """Coefficients of the best L^p approximation of u from ``space``."""
    mesh = space.mesh.refine(refine)
    quad = QuadratureRule.gauss(mesh, breakpoints=breakpoints)
    e = space.mesh.locate(quad.points)
    Phi = space.tabulate(quad.points, e, 0).toarray()
    y = LpVector(u(quad.points), p)
    try:
        _, c = best_approx_lp(y, list(Phi.T), tol=tol, weights=quad.weights)
        return c
    except SolverFailure as err:
        # near p = 1 the first-order residual has a floor; certify by energy instead
        c0 = np.asarray(err.iterate, dtype=float)
    yv = y.entries
    energy = lambda c: float(np.sum(quad.weights * np.abs(yv - Phi @ c) ** p))
    res = optimize.minimize(energy, c0, method="Powell",
                            options={"xtol": 1e-12, "ftol": 1e-15, "maxfev": 200000})
    c = res.x if res.fun < energy(c0) else c0
    if energy(c0) - energy(c) > 1e-10 * energy(c):
        raise SolverFailure("best L^p fit: Newton iterate is not energy-optimal",
                            iterate=c, residual=energy(c0) - energy(c), info={"p": p})
    return c


def gibbs_ideal_solution(p, n_elem):
    """Best L^p approximation of sign(x) by continuous P1 on a uniform mesh."""
    mesh = make_uniform_mesh(-1.0, 1.0, n_elem)
    U = FESpace(mesh, "continuous-Pk", 1)
    c = best_lp_fit(gibbs_data().exact_u, U, p, breakpoints=(0.0,))
    return DiscreteFunction(U, c)


def gibbs_sweep(p_list, n_elem=6, k_list=(4,), refine=16, cfg=None, oracle=False):
    rows = []
    for p in p_list:
        for k in k_list:
            prob = gibbs_scenario(p, n_elem, k, refine)
            sol = solve_mixed(prob, cfg)
            uh = DiscreteFunction(prob.trial, sol.u)
            row = {"p": p, "k": k, "refine": refine, "overshoot": overshoot(uh),
                   "res_norm": prob.vnorm.norm(sol.r), "iterations": sol.diagnostics["iterations"],
                   "u_n": uh}
            if oracle:
                row["oracle_overshoot"] = overshoot(gibbs_ideal_solution(p, n_elem))
            rows.append(row)
    return rows


# ------------------------------------------------------------------ Laplace

@dataclass
class LaplaceData:
    """-u'' = f on (0, 1) with u(0) = u(1) = 0.

    ``mode`` is "smooth" (``f`` given) or "manufactured" (the right-hand side
    is <f, v> = int u' v' from ``exact_du``).  ``singular_exponent`` is the
    power of x governing u' near 0, if any.
    """

    p: float
    mode: str = "smooth"
    f: Optional[Callable] = None
    exact_u: Optional[Callable] = None
    exact_du: Optional[Callable] = None
    singular_exponent: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("smooth", "manufactured"):
            raise ConfigError(f"unknown Laplace mode {self.mode!r}")
        if self.mode == "smooth" and self.f is None:
            raise ConfigError("smooth mode needs a source term")
        if self.mode == "manufactured" and self.exact_du is None:
            raise ConfigError("manufactured mode needs the derivative of u")

    @property
    def q(self):
        return conjugate(self.p)


def smooth_laplace_data(p):
    """f = e^x, u = 1 + (e - 1) x - e^x."""
    e = np.e
    return LaplaceData(p, "smooth", f=np.exp,
                       exact_u=lambda x: 1.0 + (e - 1.0) * x - np.exp(x),
                       exact_du=lambda x: (e - 1.0) - np.exp(x))


def rough_laplace_data(p, alpha):
    """u = x^alpha - x, with <f, v> = int u' v'."""
    a = float(alpha)
    return LaplaceData(p, "manufactured",
                       exact_u=lambda x: np.abs(x) ** a - x,
                       exact_du=lambda x: a * np.abs(x) ** (a - 1.0) - 1.0,
                       singular_exponent=a - 1.0)


def _laplace_quads(data, mesh, order=10):
    if data.singular_exponent is None:
        g = QuadratureRule.gauss(mesh, order=order)
        return g, g, g
    s = data.singular_exponent
    lin = QuadratureRule.graded(mesh, order=order, singular=[0.0], exponent=s)
    energy = QuadratureRule.graded(mesh, order=order, singular=[0.0], exponent=s * data.p)
    plain = QuadratureRule.graded(mesh, order=order, singular=[0.0])
    return lin, energy, plain


def laplace_problem(data, trial, test, order=10):
    """b(w, v) = int w' v'; V carries ||v'||_q and U carries ||w'||_p."""
    if data.mode == "manufactured" and data.exact_du is None:
        raise ConfigError("manufactured right-hand side needs the derivative of u")
    mesh = merge_meshes(trial.mesh, test.mesh)
    quad = QuadratureRule.gauss(mesh, order=order)
    te, ue = test.mesh.locate(quad.points), trial.mesh.locate(quad.points)
    dPsi = test.tabulate(quad.points, te, 1)
    dPhi = trial.tabulate(quad.points, ue, 1)
    from scipy import sparse
    B = (dPsi.T @ sparse.diags(quad.weights) @ dPhi).toarray()
    if data.mode == "smooth":
        Psi = test.tabulate(quad.points, te, 0)
        f = Psi.T @ (quad.weights * data.f(quad.points))
    else:
        lin, _, _ = _laplace_quads(data, mesh, order)
        dPsi_l = test.tabulate(lin.points, test.mesh.locate(lin.points), 1)
        f = dPsi_l.T @ (lin.weights * data.exact_du(lin.points))
    vn = DiscreteNorm(NormSpec("Lp-derivative", data.q), test, quad)
    un = DiscreteNorm(NormSpec("Lp-derivative", data.p), trial,
                      QuadratureRule(quad.points, quad.weights, ue, trial.mesh, order))
    return MixedProblem(B, np.asarray(f).ravel(), vn, trial, test, un, {"p": data.p})


def laplace_errors(data, sol, prob):
    """Energy and L^p errors of u_n and the q-norms of r_m and r_m'."""
    mesh = prob.trial.mesh
    _, eq, pq = _laplace_quads(data, mesh)
    uh = DiscreteFunction(prob.trial, sol.u)
    rm = DiscreteFunction(prob.test, sol.r)
    de = data.exact_du(eq.points) - uh.deriv(eq.points, eq.elem)
    err_energy = lp_norm_vec(de, data.p, eq.weights)
    ev = data.exact_u(pq.points) - uh(pq.points, pq.elem)
    err_lp = lp_norm_vec(ev, data.p, pq.weights)
    g = QuadratureRule.gauss(prob.test.mesh)
    res_dual = lp_norm_vec(rm.deriv(g.points, g.elem), data.q, g.weights)
    res_lq = lp_norm_vec(rm(g.points, g.elem), data.q, g.weights)
    return err_energy, err_lp, res_dual, res_lq


def laplace_mesh_run(data, degrees, n, cfg=None):
    """One mesh of the Laplace study; returns a result row."""
    k_trial, k_test = degrees
    mesh = make_uniform_mesh(0.0, 1.0, n)
    U = FESpace(mesh, "continuous-Pk", k_trial, "zero-both")
    V = FESpace(mesh, "continuous-Pk", k_test, "zero-both")
    prob = laplace_problem(data, U, V)
    sol = solve_mixed(prob, cfg)
    ee, el, rd, rl = laplace_errors(data, sol, prob)
    return {"n_elem": n, "h": 1.0 / n, "err_energy": ee, "res_dual": rd,
            "err_lp": el, "res_lq": rl, "iterations": sol.diagnostics["iterations"]}


LAPLACE_COLUMNS = ("err_energy", "res_dual", "err_lp", "res_lq")


def fitted_rates(rows, columns):
    """Least-squares rates of the given columns against h (needs three rows)."""
    rates = {}
    if len(rows) >= 3:
        h = [r["h"] for r in rows]
        for key in columns:
            vals = [r[key] for r in rows]
            if all(v > 0 for v in vals):
                rates[key] = estimate_rate(h, vals)[0]
    return rates


def laplace_convergence_study(data, degrees, p, n_list, cfg=None):
    """Errors and fitted rates over uniform meshes with ``n_list`` elements.

    Returns a dict with ``rows`` (per mesh: h, err_energy, res_dual, err_lp,
    res_lq, iterations) and ``rates`` (fitted slopes of each column).
    """
    k_trial, k_test = degrees
    if k_test != k_trial + 1:
        raise ConfigError("this study uses test degree = trial degree + 1")
    if abs(data.p - p) > 1e-14:
        data = LaplaceData(p, data.mode, data.f, data.exact_u, data.exact_du, data.singular_exponent)
    if len(n_list) == 0:
        raise ConfigError("mesh list is empty")
    rows = [laplace_mesh_run(data, degrees, n, cfg) for n in n_list]
    return {"rows": rows, "rates": fitted_rates(rows, LAPLACE_COLUMNS)}


# ------------------------------------------------------------------ graded

def graded_eps_sweep(n=16):
    """0.5, 0.05, 0.005, ... (``n`` values)."""
    return [0.5 * 10.0 ** (-k) for k in range(n)]


def _psi_basis():
    return BasisFunction(lambda x, e: x * (1.0 - x), lambda x, e: 1.0 - 2.0 * x)


def graded_scenario(eps, p=1.25, u_exponent=0.25, exact_du=None, norm_refine=64):
    """Spaces, quadratures and data of the one-function graded scenario.

    The exact solution is u = x^a - x with a = ``u_exponent`` unless
    ``exact_du`` supplies another derivative (the quadratures stay graded
    for x^(a - 1)).
    """
    q = conjugate(p)
    U = build_graded_basis(eps)
    mesh = U.mesh
    s = u_exponent - 1.0
    du = exact_du or (lambda x: u_exponent * np.abs(x) ** s - 1.0)
    lin = QuadratureRule.graded(mesh, singular=[0.0], exponent=s)
    # |.|^p has kinks where residual derivatives change sign; a finer rule
    # keeps them from polluting the norms (phi_eps' itself vanishes at (2/3)^3)
    nrm = QuadratureRule.graded(mesh.refine(norm_refine), singular=[0.0], exponent=s * p,
                                breakpoints=[(2.0 / 3.0) ** 3])
    V = FESpace(mesh, "custom", 1, custom_basis=[U.custom_basis[0], _psi_basis()])
    return {"U": U, "V": V, "mesh": mesh, "du": du, "lin": lin, "nrm": nrm, "p": p, "q": q}


def _mixed_graded(sc, test):
    lin, nrm = sc["lin"], sc["nrm"]
    dU = sc["U"].tabulate(lin.points, lin.elem, 1).toarray()
    dV = test.tabulate(lin.points, lin.elem, 1).toarray()
    B = dV.T @ (lin.weights[:, None] * dU)
    f = dV.T @ (lin.weights * sc["du"](lin.points))
    vn = DiscreteNorm(NormSpec("Lp-derivative", sc["q"]), test, nrm)
    un = DiscreteNorm(NormSpec("Lp-derivative", sc["p"]), sc["U"], nrm)
    return MixedProblem(B, f, vn, sc["U"], test, un)


def graded_instability_study(epsilons, p=1.25, cfg=None, infsup=True, u_exponent=0.25, exact_du=None):
    """Galerkin, ideal and inexact residual-minimization columns over eps.

    For each eps the trial space is span{phi_eps}.  Columns:

    galerkin   ||(P u)'||_p with P the H^1_0 projection onto span{phi_eps}
    ideal      |c| ||phi_eps'||_p, c = argmin ||u' - c phi_eps'||_p
    inexact    |c| ||phi_eps'||_p from the mixed method with
               V_m = span{phi_eps, x(1-x)}
    ideal_dual |c| ||phi_eps'||_p, c = argmin_c min_d ||u' - c phi_eps' - d||_p
               (residual minimization in the full dual norm of W^{1,q}_0)

    With ``infsup`` the discrete inf-sup values of the pairs
    (U_eps, U_eps) and (U_eps, V_eps) are added.
    """
    rows = []
    for eps in epsilons:
        sc = graded_scenario(eps, p, u_exponent, exact_du)
        lin, nrm = sc["lin"], sc["nrm"]
        dphi_l = sc["U"].tabulate(lin.points, lin.elem, 1).toarray().ravel()
        c_gal = np.sum(lin.weights * sc["du"](lin.points) * dphi_l) / np.sum(lin.weights * dphi_l**2)
        dphi = sc["U"].tabulate(nrm.points, nrm.elem, 1).toarray().ravel()
        nphi = lp_norm_vec(dphi, p, nrm.weights)
        y = LpVector(sc["du"](nrm.points), p)
        _, c_id = best_approx_lp(y, [dphi], tol=1e-8, weights=nrm.weights)
        _, c_dual = best_approx_lp(y, [dphi, np.ones_like(dphi)], tol=1e-8, weights=nrm.weights)
        prob = _mixed_graded(sc, sc["V"])
        sol = solve_mixed(prob, cfg)
        row = {"eps": eps, "galerkin": abs(c_gal) * nphi, "ideal": abs(c_id[0]) * nphi,
               "inexact": abs(sol.u[0]) * nphi, "ideal_dual": abs(c_dual[0]) * nphi,
               "c_galerkin": c_gal, "c_ideal": c_id[0], "c_inexact": sol.u[0]}
        if infsup:
            row["infsup_uu"] = discrete_infsup(_mixed_graded(sc, sc["U"]), samples=1)
            row["infsup_uv"] = discrete_infsup(prob, samples=1)
        rows.append(row)
    return rows
