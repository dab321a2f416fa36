"""Discrete Banach norms, duality maps and the monotone mixed system.

The norm of a test function v with coefficient vector c is evaluated from
one or more linear samplings s_k = S_k c at quadrature points:

    ||v||^2 = sum_k ( sum_i w_i |s_k,i|^rho_k )^(2/rho_k)

which covers L^rho norms of values, of derivatives, and the graph norm
||v||^2 + ||(beta v)'||^2.  The duality map is the gradient of 1/2 ||v||^2.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .errors import ConfigError, InvalidInputError, SolverFailure
from .lp_geometry import conjugate, smoothed_lp_terms
from .mesh_fe import DiscreteFunction, FESpace, QuadratureRule

NORM_KINDS = ("Lp-values", "Lp-derivative", "graph")


@dataclass(frozen=True)
class NormSpec:
    """Which Banach norm a space carries.

    kind : "Lp-values", "Lp-derivative" or "graph"
    rho : exponent of the (value) term
    beta, dbeta : advection coefficient and its derivative (graph kind)
    rho_div : exponent of the (beta v)' term of the graph norm (defaults to rho)
    """

    kind: str
    rho: float
    beta: Optional[Callable] = None
    dbeta: Optional[Callable] = None
    rho_div: Optional[float] = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ConfigError(f"unknown norm kind {self.kind!r}")
        if not 1.0 < self.rho < np.inf:
            raise ConfigError("norm exponent must lie in (1, inf)")
        if self.kind == "graph" and self.beta is None:
            raise ConfigError("graph norm needs an advection coefficient")

    def with_rho(self, rho):
        """Same norm with every exponent replaced by ``rho``."""
        return replace(self, rho=rho, rho_div=None if self.rho_div is None else rho)


DENSE_MAX = 24


class DiscreteNorm:
    """A NormSpec realized on a space with a quadrature rule."""

    def __init__(self, spec, space, quad):
        self.spec = spec
        self.space = space
        self.quad = quad
        x, e = quad.points, quad.elem
        if spec.kind == "Lp-values":
            comps = [(space.tabulate(x, e, 0), spec.rho)]
        elif spec.kind == "Lp-derivative":
            comps = [(space.tabulate(x, e, 1), spec.rho)]
        else:
            phi = space.tabulate(x, e, 0)
            dphi = space.tabulate(x, e, 1)
            b = spec.beta(x)
            db = spec.dbeta(x) if spec.dbeta is not None else _fd(spec.beta, x)
            div = sparse.diags(db) @ phi + sparse.diags(b) @ dphi
            comps = [(phi.tocsr(), spec.rho), (div.tocsr(), spec.rho_div or spec.rho)]
        self.components = [(sparse.csr_matrix(S), float(r)) for S, r in comps]
        self.weights = quad.weights
        self._set_dense()

    def _set_dense(self):
        # small spaces: dense sample matrices are much faster than sparse products
        small = self.space.ndof <= DENSE_MAX
        self._mats = [(S.toarray() if small else S, r) for S, r in self.components]

    @property
    def dim(self):
        return self.space.ndof

    def with_rho(self, rho):
        out = object.__new__(DiscreteNorm)
        out.spec = self.spec.with_rho(rho)
        out.space, out.quad, out.weights = self.space, self.quad, self.weights
        out.components = [(S, float(rho)) for S, _ in self.components]
        out._mats = [(S, float(rho)) for S, _ in self._mats]
        return out

    def samples(self, c):
        return [S @ c for S, _ in self._mats]

    def scales(self, c):
        """Typical sample size ||s_k|| / (sum w)^(1/rho) of each component."""
        wsum = float(np.sum(self.weights))
        out = []
        for (S, rho) in self._mats:
            n, *_ = smoothed_lp_terms(S @ c, rho, self.weights)
            out.append(n / wsum ** (1.0 / rho))
        return out

    def norm(self, c, delta=None):
        total = 0.0
        for k, (S, rho) in enumerate(self._mats):
            dk = 0.0 if delta is None else delta[k]
            n, *_ = smoothed_lp_terms(S @ c, rho, self.weights, dk)
            total += n * n
        return float(np.sqrt(total))

    def energy(self, c, delta=None):
        n = self.norm(c, delta)
        return 0.5 * n * n

    def dmap(self, c, delta=None):
        """Duality map (gradient of 1/2 ||.||^2) as a coefficient-space vector."""
        out = np.zeros(self.dim)
        for k, (S, rho) in enumerate(self._mats):
            dk = 0.0 if delta is None else delta[k]
            _, grad, _, _, _ = smoothed_lp_terms(S @ c, rho, self.weights, dk)
            out += S.T @ grad
        return out

    def hessian(self, c, delta=None):
        """Dense Hessian of 1/2 ||.||^2 (smoothed when ``delta`` is given)."""
        H = np.zeros((self.dim, self.dim))
        for k, (S, rho) in enumerate(self._mats):
            dk = 0.0 if delta is None else delta[k]
            _, _, d, g, c2 = smoothed_lp_terms(S @ c, rho, self.weights, dk)
            if sparse.issparse(S):
                H += (S.T @ sparse.diags(d) @ S).toarray()
            else:
                H += (S.T * d) @ S
            if c2 != 0.0:
                sg = S.T @ g
                H += c2 * np.outer(sg, sg)
        return H

    def hessian_parts(self, c, delta=None):
        """Hessian as a sparse matrix plus rank-one terms [(c2, s), ...]."""
        A = sparse.csr_matrix((self.dim, self.dim))
        low = []
        for k, (S, rho) in enumerate(self.components):
            dk = 0.0 if delta is None else delta[k]
            _, _, d, g, c2 = smoothed_lp_terms(S @ c, rho, self.weights, dk)
            A = A + S.T @ sparse.diags(d) @ S
            if c2 != 0.0:
                low.append((c2, S.T @ g))
        return A.tocsr(), low

    def gram_sparse(self):
        return sum(S.T @ sparse.diags(self.weights) @ S for S, _ in self.components).tocsr()

    def gram(self):
        """Hilbert Gram matrix (all exponents 2)."""
        return sum((S.T @ sparse.diags(self.weights) @ S).toarray() for S, _ in self.components)


def _fd(fun, x, h=1e-7):
    return (fun(x + h) - fun(x - h)) / (2.0 * h)


def _coeffs(x):
    return x.coeffs if isinstance(x, DiscreteFunction) else np.asarray(x, dtype=float)


@dataclass
class MixedProblem:
    """Assembled data of the discrete mixed system.

    B[i, j] = b(w_j, v_i) for trial basis w_j and test basis v_i, and
    f[i] = <f, v_i>.  ``vnorm`` realizes the test norm; ``unorm`` (optional)
    the trial norm, used by inf-sup diagnostics and error reporting.
    """

    B: object
    f: np.ndarray
    vnorm: DiscreteNorm
    trial: Optional[FESpace] = None
    test: Optional[FESpace] = None
    unorm: Optional[DiscreteNorm] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.B.shape
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != (m,):
            raise ConfigError("right-hand side length must equal dim V_m")
        if m < n:
            raise ConfigError(f"dim V_m = {m} must be at least dim U_n = {n}")
        if self.vnorm.dim != m:
            raise ConfigError("test norm dimension does not match B")
        if sparse.issparse(self.B):
            ok = np.all(np.isfinite(self.B.data))
        else:
            self.B = np.asarray(self.B, dtype=float)
            ok = np.all(np.isfinite(self.B))
        if not ok or not np.all(np.isfinite(self.f)):
            raise InvalidInputError("bilinear form or right-hand side is not finite")

    @property
    def m(self):
        return self.B.shape[0]

    @property
    def n(self):
        return self.B.shape[1]

    @property
    def rho(self):
        return self.vnorm.components[0][1]

    def dense_B(self):
        return self.B.toarray() if sparse.issparse(self.B) else self.B

    def bform(self, w, v):
        """b(w, v) for trial and test functions (or coefficient vectors)."""
        return float(_coeffs(v) @ (self.B @ _coeffs(w)))

    def rhs(self, v):
        return float(self.f @ _coeffs(v))

    def with_rho(self, rho):
        return replace(self, vnorm=self.vnorm.with_rho(rho))

    def with_rhs(self, f):
        return replace(self, f=np.asarray(f, dtype=float))


@dataclass
class MixedSolution:
    """Solution (r_m, u_n) of the mixed system plus solver diagnostics."""

    r: np.ndarray
    u: np.ndarray
    diagnostics: dict
    problem: Optional[MixedProblem] = None

    @property
    def r_m(self):
        if self.problem is not None and self.problem.test is not None:
            return DiscreteFunction(self.problem.test, self.r)
        return self.r

    @property
    def u_n(self):
        if self.problem is not None and self.problem.trial is not None:
            return DiscreteFunction(self.problem.trial, self.u)
        return self.u

    @property
    def residual_norm(self):
        return float(self.problem.vnorm.norm(self.r)) if self.problem is not None else float("nan")


def duality_pairing(vnorm, r, v, quad):
    """<J_V(r), v> for the norm ``vnorm`` evaluated with ``quad``.

    ``r`` and ``v`` are DiscreteFunctions (possibly over different spaces on
    the same interval).  Returns 0 when r = 0.
    """
    x, e = quad.points, quad.elem

    def parts(fn):
        if vnorm.kind == "Lp-values":
            return [(fn(x, e), vnorm.rho)]
        if vnorm.kind == "Lp-derivative":
            return [(fn.deriv(x, e), vnorm.rho)]
        b = vnorm.beta(x)
        db = vnorm.dbeta(x) if vnorm.dbeta is not None else _fd(vnorm.beta, x)
        val = fn(x, e)
        return [(val, vnorm.rho), (db * val + b * fn.deriv(x, e), vnorm.rho_div or vnorm.rho)]

    total = 0.0
    for (sr, rho), (sv, _) in zip(parts(r), parts(v)):
        _, grad, _, _, _ = smoothed_lp_terms(sr, rho, quad.weights)
        total += float(grad @ sv)
    return total


def assemble_mixed_residual(prob, r_m, u_n, delta=None):
    """Block residual [J_V(r) + B u - f ; B^T r] of the mixed system."""
    r = _coeffs(r_m)
    u = _coeffs(u_n)
    top = prob.vnorm.dmap(r, delta) + prob.B @ u - prob.f
    bot = prob.B.T @ r
    return np.concatenate([top, np.asarray(bot).ravel()])


def assemble_mixed_jacobian(prob, r_m, u_n, delta=None, check=False):
    """Jacobian of the (smoothed) mixed residual.

    ``delta`` is a per-norm-component list of absolute smoothing levels
    (None for no smoothing).  With ``check=True`` a matrix that is
    singular to working precision raises SolverFailure carrying the
    condition estimate.
    """
    r = _coeffs(r_m)
    H = prob.vnorm.hessian(r, delta)
    B = prob.dense_B()
    n = prob.n
    K = np.block([[H, B], [B.T, np.zeros((n, n))]])
    if check:
        cond = np.linalg.cond(K)
        if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
            raise SolverFailure(f"Jacobian is singular to working precision (cond ~ {cond:.3e})",
                                residual=float("nan"), info={"cond": cond})
    return K


def bordered_jacobian(prob, r_m, delta=None):
    """Sparse form of the Jacobian for large problems.

    Each rank-one Hessian term c2 s s^T is carried by an extra unknown
    t = s^T x, which keeps the matrix sparse.  Solving the bordered system
    and dropping the trailing entries gives the Newton step.
    """
    r = _coeffs(r_m)
    A, low = prob.vnorm.hessian_parts(r, delta)
    m, n, k = prob.m, prob.n, len(low)
    B = sparse.csr_matrix(prob.B)
    if k:
        Sl = sparse.csr_matrix(np.column_stack([s for _, s in low]))
        C = sparse.diags([c2 for c2, _ in low])
        top = sparse.hstack([A, B, Sl @ C])
        bottom = sparse.hstack([Sl.T, sparse.csr_matrix((k, n)), -sparse.identity(k)])
    else:
        top = sparse.hstack([A, B])
    mid = sparse.hstack([B.T, sparse.csr_matrix((n, n + k))])
    rows = [top, mid] + ([bottom] if k else [])
    return sparse.vstack(rows).tocsc(), k


def discrete_dual_norm(prob, g, cfg=None):
    """sup over V_m of <g, v> / ||v||_V, computed by inverting the duality map.

    ``g`` is the vector of actions on the test basis.  The maximizer r with
    J_V(r) = g has ||r||_V equal to the dual norm.
    """
    from .nonlinear_solvers import invert_duality_map
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        return 0.0
    r = invert_duality_map(prob.vnorm, g, cfg)
    return float(prob.vnorm.norm(r))


def aposteriori_bound(prob, sol, gamma_B, c_pi, osc=0.0):
    """Reliable error bound osc / gamma_B + (c_pi / gamma_B) ||r_m||_V."""
    if gamma_B <= 0 or c_pi <= 0 or osc < 0:
        raise InvalidInputError("need gamma_B > 0, c_pi > 0 and osc >= 0")
    rnorm = float(prob.vnorm.norm(_coeffs(sol.r)))
    return osc / gamma_B + (c_pi / gamma_B) * rnorm


def discrete_infsup(prob, samples=200, seed=0, cfg=None):
    """Estimate inf over trial w of ||B w||_(V_m)* / ||w||_U.

    The inner supremum is the discrete dual norm; the outer infimum is taken
    over random trial directions followed by a Nelder-Mead descent from the
    best sample.  The returned value is a minimum over evaluated points,
    hence an upper bound for the discrete inf-sup constant.
    """
    if prob.unorm is None:
        raise ConfigError("inf-sup diagnostic needs a trial norm")
    if samples < 1:
        raise InvalidInputError("samples must be positive")
    n = prob.n

    def quotient(w):
        nw = prob.unorm.norm(w)
        if nw == 0.0:
            return np.inf
        return discrete_dual_norm(prob, prob.B @ w, cfg) / nw

    if n == 1:
        return float(quotient(np.ones(1)))
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((int(samples), n))
    vals = np.array([quotient(d) for d in dirs])
    best = int(np.argmin(vals))
    from scipy.optimize import minimize
    res = minimize(quotient, dirs[best], method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 200 * n})
    return float(min(vals[best], res.fun))
