"""One-dimensional meshes, quadrature, finite element spaces and norms."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse
from scipy.special import roots_jacobi, roots_legendre

from .errors import (ConfigError, DegenerateSubspaceError, InvalidInputError,
                     SingularCoefficientError)


class Mesh1D:
    """Partition a = x_0 < x_1 < ... < x_N = b of an interval."""

    def __init__(self, nodes):
        x = np.asarray(nodes, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise InvalidInputError("a mesh needs at least two nodes")
        if not np.all(np.isfinite(x)) or np.any(np.diff(x) <= 0):
            raise InvalidInputError("mesh nodes must be finite and strictly increasing")
        self.nodes = x
        self.nodes.setflags(write=False)

    @property
    def a(self):
        return float(self.nodes[0])

    @property
    def b(self):
        return float(self.nodes[-1])

    @property
    def n_elem(self):
        return self.nodes.size - 1

    @property
    def h(self):
        return np.diff(self.nodes)

    def locate(self, x):
        """Element index of each point; points on a node go to the right element."""
        x = np.asarray(x, dtype=float)
        e = np.searchsorted(self.nodes, x, side="right") - 1
        return np.clip(e, 0, self.n_elem - 1)

    def refine(self, factor):
        """Split every element into ``factor`` equal sub-elements."""
        factor = int(factor)
        if factor < 1:
            raise InvalidInputError("refinement factor must be positive")
        t = np.linspace(0.0, 1.0, factor + 1)[:-1]
        x = (self.nodes[:-1, None] + self.h[:, None] * t[None, :]).ravel()
        return Mesh1D(np.append(x, self.b))

    def __repr__(self):
        return f"Mesh1D(n_elem={self.n_elem}, a={self.a}, b={self.b})"


def make_uniform_mesh(a, b, n_elem):
    """Uniform mesh of [a, b] with ``n_elem`` elements."""
    if not b > a or int(n_elem) < 1:
        raise InvalidInputError("need b > a and n_elem >= 1")
    return Mesh1D(np.linspace(a, b, int(n_elem) + 1))


def merge_meshes(*meshes, extra=()):
    """Common refinement of several meshes of the same interval."""
    pts = np.concatenate([m.nodes for m in meshes] + [np.asarray(extra, dtype=float)])
    pts = np.unique(pts)
    lo, hi = meshes[0].a, meshes[0].b
    pts = pts[(pts >= lo) & (pts <= hi)]
    keep = np.concatenate([[True], np.diff(pts) > 1e-14 * max(1.0, hi - lo)])
    return Mesh1D(pts[keep])


def _gauss_on(lo, hi, t, w):
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def _jacobi_on(lo, hi, order, gamma, singular_left):
    """Rule on [lo, hi] exact for polynomials times |x - s|^gamma, s the singular end."""
    t, jw = roots_jacobi(order, 0.0, gamma)
    half = 0.5 * (hi - lo)
    dist = half * (1.0 + t)
    ew = jw * half / (1.0 + t) ** gamma
    x = lo + dist if singular_left else hi - dist
    return x, ew


@dataclass
class QuadratureRule:
    """Composite quadrature on a mesh.

    Attributes
    ----------
    points, weights : ndarray
        Global quadrature points and weights.
    elem : ndarray
        Mesh element containing each point.
    mesh : Mesh1D
    order : int
        Gauss points per (sub)interval.
    """

    points: np.ndarray
    weights: np.ndarray
    elem: np.ndarray
    mesh: Mesh1D
    order: int = 10

    @classmethod
    def gauss(cls, mesh, order=10, breakpoints=()):
        """Gauss-Legendre rule with ``order`` points per element.

        Elements containing a point of ``breakpoints`` in their interior are
        split there so piecewise-smooth integrands stay exact.
        """
        return cls.graded(mesh, order=order, breakpoints=breakpoints, singular=())

    @classmethod
    def graded(cls, mesh, order=10, singular=(), levels=40, exponent=None, breakpoints=()):
        """Composite Gauss rule with dyadic grading toward singular points.

        Parameters
        ----------
        singular : sequence of float
            Points where the integrand may be singular.  Each adjacent
            (sub)interval is split into ``levels`` dyadic layers toward the
            point.
        exponent : float, optional
            If given, the innermost layer uses a Gauss-Jacobi rule exact for
            polynomials times |x - s|^exponent.  Otherwise it uses Gauss
            points mapped by x = s + d t^8, which resolves integrable power
            singularities.
        breakpoints : sequence of float
            Additional points where elements are split.
        """
        t, w = roots_legendre(int(order))
        sing = np.asarray(sorted(set(float(s) for s in singular)), dtype=float)
        cuts = np.unique(np.concatenate([sing, np.asarray(breakpoints, dtype=float)]))
        X, W, E = [], [], []
        for e in range(mesh.n_elem):
            lo, hi = mesh.nodes[e], mesh.nodes[e + 1]
            inner = cuts[(cuts > lo) & (cuts < hi)]
            edges = np.concatenate([[lo], inner, [hi]])
            for a, b in zip(edges[:-1], edges[1:]):
                tol = 1e-14 * max(1.0, abs(a), abs(b))
                left = sing.size and np.any(np.abs(sing - a) <= tol)
                right = sing.size and np.any(np.abs(sing - b) <= tol)
                if left and right:
                    mid = 0.5 * (a + b)
                    pieces = [(a, mid, True), (mid, b, False)]
                elif left:
                    pieces = [(a, b, True)]
                elif right:
                    pieces = [(a, b, False)]
                else:
                    x, ww = _gauss_on(a, b, t, w)
                    X.append(x), W.append(ww), E.append(np.full(x.size, e))
                    continue
                for (pa, pb, toward_left) in pieces:
                    x, ww = _graded_piece(pa, pb, toward_left, t, w, int(order), levels, exponent)
                    X.append(x), W.append(ww), E.append(np.full(x.size, e))
        points = np.concatenate(X)
        weights = np.concatenate(W)
        elem = np.concatenate(E)
        idx = np.argsort(points, kind="stable")
        return cls(points[idx], weights[idx], elem[idx], mesh, int(order))

    def integrate(self, values):
        return float(np.sum(self.weights * values))

    @property
    def size(self):
        return self.points.size


def _graded_piece(a, b, toward_left, t, w, order, levels, exponent):
    length = b - a
    X, W = [], []
    for k in range(levels):
        d_hi = length * 2.0**-k
        d_lo = length * 2.0 ** -(k + 1)
        lo, hi = (a + d_lo, a + d_hi) if toward_left else (b - d_hi, b - d_lo)
        x, ww = _gauss_on(lo, hi, t, w)
        X.append(x), W.append(ww)
    d = length * 2.0**-levels
    if exponent is not None:
        lo, hi = (a, a + d) if toward_left else (b - d, b)
        x, ww = _jacobi_on(lo, hi, order, float(exponent), toward_left)
    else:
        m = 8.0
        s = 0.5 * (t + 1.0)
        dist = d * s**m
        ww = 0.5 * w * d * m * s ** (m - 1.0)
        x = a + dist if toward_left else b - dist
    X.append(x), W.append(ww)
    x, ww = np.concatenate(X), np.concatenate(W)
    # near an interior singular point the innermost layers fall below the
    # spacing of floats and round onto the point itself
    keep = x != (a if toward_left else b)
    return x[keep], ww[keep]


def _gll_nodes(k):
    if k == 1:
        return np.array([-1.0, 1.0])
    inner = legendre.Legendre.basis(k).deriv().roots()
    return np.concatenate([[-1.0], np.sort(inner.real), [1.0]])


class _LagrangeRef:
    """Lagrange basis on [-1, 1] through Gauss-Lobatto nodes.

    Local ordering: left vertex, right vertex, then interior nodes.
    """

    def __init__(self, k):
        self.k = k
        nodes = _gll_nodes(k)
        order = [0, k] + list(range(1, k))
        self.nodes = nodes[order]
        V = legendre.legvander(self.nodes, k)
        self.coef = np.linalg.inv(V).T  # columns: basis functions in Legendre coefficients
        self.dcoef = legendre.legder(self.coef.T, axis=0) if k > 0 else np.zeros((1, k + 1))

    def values(self, xi):
        return legendre.legvander(xi, self.k) @ self.coef.T

    def derivs(self, xi):
        if self.k == 0:
            return np.zeros((np.size(xi), 1))
        return legendre.legvander(xi, self.k - 1) @ self.dcoef


@dataclass
class BasisFunction:
    """Closed-form basis function for custom spaces.

    ``value(x, elem)`` and ``deriv(x, elem)`` take point and element-index
    arrays so that functions discontinuous at mesh nodes can be
    represented.  ``support`` restricts evaluation to a closed interval.
    """

    value: Callable
    deriv: Callable
    support: Optional[tuple] = None
    discontinuities: tuple = ()


BC_CHOICES = ("none", "zero-left", "zero-right", "zero-both")


class FESpace:
    """Finite element space over a mesh.

    Families are ``continuous-Pk`` (nodal Lagrange, degree k >= 1),
    ``discontinuous-P0`` (element indicators) and ``custom`` (explicit
    closed-form basis functions).  Global numbering for continuous-Pk lists
    the mesh vertices left to right followed by the interior nodes of each
    element; constrained vertices are removed.
    """

    def __init__(self, mesh, family="continuous-Pk", degree=1, bc="none",
                 custom_basis=None, check_independence=True):
        if bc not in BC_CHOICES:
            raise ConfigError(f"unknown boundary condition {bc!r}")
        self.mesh = mesh
        self.family = family
        self.degree = int(degree)
        self.bc = bc
        self.custom_basis = list(custom_basis) if custom_basis is not None else None
        if family == "continuous-Pk":
            if self.degree < 1:
                raise ConfigError("continuous-Pk needs degree >= 1")
            self._ref = _LagrangeRef(self.degree)
            self._build_dofmap()
        elif family == "discontinuous-P0":
            self.degree = 0
            self.ndof = mesh.n_elem
        elif family == "custom":
            if not self.custom_basis:
                raise ConfigError("custom family needs a non-empty basis")
            self.ndof = len(self.custom_basis)
            if check_independence:
                self._check_independence()
        else:
            raise ConfigError(f"unknown family {family!r}")

    def _build_dofmap(self):
        n, k = self.mesh.n_elem, self.degree
        nv = n + 1
        l2g = np.empty((n, k + 1), dtype=int)
        l2g[:, 0] = np.arange(n)
        l2g[:, 1] = np.arange(1, n + 1)
        if k > 1:
            l2g[:, 2:] = nv + np.arange(n * (k - 1)).reshape(n, k - 1)
        total = nv + n * (k - 1)
        drop = []
        if self.bc in ("zero-left", "zero-both"):
            drop.append(0)
        if self.bc in ("zero-right", "zero-both"):
            drop.append(n)
        renum = np.full(total, -1, dtype=int)
        keep = np.setdiff1d(np.arange(total), drop)
        renum[keep] = np.arange(keep.size)
        self.l2g = renum[l2g]
        self.ndof = keep.size

    def _check_independence(self):
        q = QuadratureRule.gauss(self.mesh, order=10, breakpoints=self._discontinuities())
        Phi = self.tabulate(q.points, q.elem, 0).toarray()
        dPhi = self.tabulate(q.points, q.elem, 1).toarray()
        G = Phi.T @ (q.weights[:, None] * Phi) + dPhi.T @ (q.weights[:, None] * dPhi)
        d = np.sqrt(np.diag(G))
        if np.any(d == 0) or not np.all(np.isfinite(G)):
            raise DegenerateSubspaceError("custom basis contains a zero or non-finite function")
        if np.linalg.cond(G / np.outer(d, d)) > 1e12:
            raise DegenerateSubspaceError("custom basis functions are linearly dependent")

    def _discontinuities(self):
        if self.family != "custom":
            return ()
        pts = []
        for bf in self.custom_basis:
            pts.extend(bf.discontinuities)
        return tuple(sorted(set(pts)))

    @property
    def discontinuities(self):
        """Points where some basis function jumps."""
        if self.family == "discontinuous-P0":
            return tuple(self.mesh.nodes[1:-1])
        return self._discontinuities()

    def tabulate(self, x, elem=None, deriv=0):
        """Sparse matrix of basis values (deriv=0) or derivatives (deriv=1) at x."""
        x = np.asarray(x, dtype=float)
        if elem is None:
            elem = self.mesh.locate(x)
        npts = x.size
        if self.family == "discontinuous-P0":
            data = np.ones(npts) if deriv == 0 else np.zeros(npts)
            return sparse.csr_matrix((data, (np.arange(npts), elem)), shape=(npts, self.ndof))
        if self.family == "continuous-Pk":
            lo = self.mesh.nodes[elem]
            h = self.mesh.h[elem]
            xi = 2.0 * (x - lo) / h - 1.0
            if deriv == 0:
                vals = self._ref.values(xi)
            else:
                vals = self._ref.derivs(xi) * (2.0 / h)[:, None]
            cols = self.l2g[elem]
            rows = np.repeat(np.arange(npts)[:, None], self.degree + 1, axis=1)
            mask = cols >= 0
            return sparse.csr_matrix((vals[mask], (rows[mask], cols[mask])), shape=(npts, self.ndof))
        rows, cols, vals = [], [], []
        is_sorted = bool(np.all(np.diff(x) >= 0))
        for j, bf in enumerate(self.custom_basis):
            if bf.support is None:
                idx = np.arange(npts)
            else:
                lo, hi = bf.support
                if is_sorted:
                    idx = np.arange(np.searchsorted(x, lo, side="left"),
                                    np.searchsorted(x, hi, side="right"))
                else:
                    idx = np.nonzero((x >= lo) & (x <= hi))[0]
            if idx.size == 0:
                continue
            f = bf.value if deriv == 0 else bf.deriv
            v = np.asarray(f(x[idx], elem[idx]), dtype=float)
            rows.append(idx), cols.append(np.full(idx.size, j)), vals.append(np.broadcast_to(v, idx.shape))
        if not rows:
            return sparse.csr_matrix((npts, self.ndof))
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(npts, self.ndof))

    def interpolate(self, f):
        """Nodal interpolant of f (continuous-Pk) or element averages (P0)."""
        if self.family == "continuous-Pk":
            n, k = self.mesh.n_elem, self.degree
            c = np.zeros(self.ndof)
            lo = self.mesh.nodes[:-1]
            h = self.mesh.h
            xs = lo[:, None] + 0.5 * h[:, None] * (self._ref.nodes[None, :] + 1.0)
            vals = f(xs.ravel()).reshape(n, k + 1)
            mask = self.l2g >= 0
            c[self.l2g[mask]] = vals[mask]
            return DiscreteFunction(self, c)
        if self.family == "discontinuous-P0":
            q = QuadratureRule.gauss(self.mesh)
            avg = np.bincount(q.elem, q.weights * f(q.points), minlength=self.mesh.n_elem) / self.mesh.h
            return DiscreteFunction(self, avg)
        raise ConfigError("interpolation is not defined for custom spaces")

    def __repr__(self):
        return f"FESpace({self.family}, degree={self.degree}, bc={self.bc}, ndof={self.ndof})"


class DiscreteFunction:
    """Coefficient vector over an FESpace, evaluable pointwise."""

    def __init__(self, space, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (space.ndof,):
            raise InvalidInputError(f"expected {space.ndof} coefficients, got {c.shape}")
        self.space = space
        self.coeffs = c

    def __call__(self, x, elem=None):
        return self.space.tabulate(np.atleast_1d(x), elem, 0) @ self.coeffs

    def deriv(self, x, elem=None):
        return self.space.tabulate(np.atleast_1d(x), elem, 1) @ self.coeffs

    def sample(self, per_elem=1000):
        """Values on ``per_elem`` equispaced points inside each element."""
        m = self.space.mesh
        t = (np.arange(per_elem) + 0.5) / per_elem
        x = (m.nodes[:-1, None] + m.h[:, None] * t[None, :]).ravel()
        e = np.repeat(np.arange(m.n_elem), per_elem)
        return x, self(x, e)


def lp_norm(f, mesh, p, quad=None):
    """L^p norm of an integrand handle over a mesh by quadrature.

    ``f`` is called as ``f(x)``; DiscreteFunction instances are evaluated with
    the element indices of the quadrature rule.
    """
    if p < 1:
        raise InvalidInputError("p must be >= 1")
    if quad is None:
        quad = QuadratureRule.gauss(mesh)
    if isinstance(f, DiscreteFunction):
        vals = f(quad.points, quad.elem)
    else:
        vals = np.asarray(f(quad.points), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        e = int(quad.elem[np.argmax(bad)])
        raise InvalidInputError(f"non-finite integrand sample in element {e} "
                                f"[{mesh.nodes[e]:.6g}, {mesh.nodes[e + 1]:.6g}]")
    from .lp_geometry import lp_norm_vec
    if np.isinf(p):
        return float(np.max(np.abs(vals)))
    return lp_norm_vec(vals, p, quad.weights)


def _fd(fun, x, h=1e-7):
    return (fun(x + h) - fun(x - h)) / (2.0 * h)


def build_ideal_advection_test_space(mesh, beta, dbeta=None, local=False):
    """Test space S(T_n) whose basis solves -(beta v_j)' = indicator of T_j.

    For beta of one sign the functions are zero on the outflow side of T_j
    and equal h_j / beta upstream.  For beta decreasing through a zero x~
    (two inflow boundaries) beta v_j vanishes at x~; basis functions are
    flagged discontinuous at x~ when x~ is a mesh node.

    With ``local=True`` (one-signed beta only) the equivalent basis
    hat_i / beta, i ranging over the non-outflow nodes, is returned; it
    spans the same space and has local support.
    """
    if dbeta is None:
        dbeta = lambda x: _fd(beta, x)
    nodes = mesh.nodes
    q = QuadratureRule.gauss(mesh)
    bq = beta(np.concatenate([q.points, nodes]))
    if not np.all(np.isfinite(bq)):
        raise SingularCoefficientError("beta is not finite on the mesh")
    pos, neg = np.all(bq > 0), np.all(bq < 0)
    if pos or neg:
        return _ideal_one_signed(mesh, beta, dbeta, pos, local)
    if local:
        raise ConfigError("the local basis requires a one-signed beta")
    # two-inflow structure: beta decreasing, single sign change
    from scipy.optimize import brentq
    if not (beta(mesh.a) > 0 > beta(mesh.b)):
        raise SingularCoefficientError("beta vanishes without the two-inflow structure")
    xt = brentq(beta, mesh.a, mesh.b, xtol=1e-15)
    slope = float(dbeta(np.array([xt]))[0])
    if not slope < 0:
        raise SingularCoefficientError("beta must decrease through its zero")
    if np.any(dbeta(q.points) >= 0):
        raise SingularCoefficientError("beta must be strictly decreasing")
    return _ideal_two_inflow(mesh, beta, dbeta, xt, slope)


def _ideal_one_signed(mesh, beta, dbeta, positive, local):
    nodes = mesh.nodes
    n = mesh.n_elem
    basis = []
    if local:
        # hat functions for all nodes except the outflow node
        idx = range(0, n) if positive else range(1, n + 1)
        for i in idx:
            lo = nodes[max(i - 1, 0)]
            hi = nodes[min(i + 1, n)]
            basis.append(_hat_over_beta(nodes, i, beta, dbeta, (lo, hi)))
        return FESpace(mesh, "custom", 1, custom_basis=basis, check_independence=n <= 400)
    for j in range(n):
        xl, xr = nodes[j], nodes[j + 1]
        hj = xr - xl
        if positive:
            def w(x, xl=xl, xr=xr, hj=hj):
                return np.where(x <= xl, hj, np.where(x < xr, xr - x, 0.0))

            def dw(x, xl=xl, xr=xr):
                return np.where((x >= xl) & (x < xr), -1.0, 0.0)
            support = (mesh.a, xr)
        else:
            def w(x, xl=xl, xr=xr, hj=hj):
                return np.where(x >= xr, -hj, np.where(x > xl, -(x - xl), 0.0))

            def dw(x, xl=xl, xr=xr):
                return np.where((x >= xl) & (x < xr), -1.0, 0.0)
            support = (xl, mesh.b)
        basis.append(_over_beta(w, dw, beta, dbeta, support))
    return FESpace(mesh, "custom", 1, custom_basis=basis, check_independence=n <= 400)


def _over_beta(w, dw, beta, dbeta, support, discontinuities=()):
    def value(x, elem):
        return w(x) / beta(x)

    def deriv(x, elem):
        b = beta(x)
        return (dw(x) * b - w(x) * dbeta(x)) / (b * b)
    return BasisFunction(value, deriv, support, tuple(discontinuities))


def _hat_over_beta(nodes, i, beta, dbeta, support):
    n = nodes.size - 1

    def hat(x):
        y = np.zeros_like(x)
        if i > 0:
            xl, xc = nodes[i - 1], nodes[i]
            m = (x >= xl) & (x <= xc)
            y[m] = (x[m] - xl) / (xc - xl)
        if i < n:
            xc, xr = nodes[i], nodes[i + 1]
            m = (x >= xc) & (x <= xr)
            y[m] = (xr - x[m]) / (xr - xc)
        return y

    def dhat(x, elem):
        y = np.zeros_like(x)
        if i > 0:
            m = elem == i - 1
            y[m] = 1.0 / (nodes[i] - nodes[i - 1])
        if i < n:
            m = elem == i
            y[m] = -1.0 / (nodes[i + 1] - nodes[i])
        return y

    def value(x, elem):
        return hat(x) / beta(x)

    def deriv(x, elem):
        b = beta(x)
        return (dhat(x, elem) * b - hat(x) * dbeta(x)) / (b * b)
    return BasisFunction(value, deriv, support)


def _ideal_two_inflow(mesh, beta, dbeta, xt, slope):
    nodes = mesh.nodes
    tol = 1e-12 * max(1.0, mesh.b - mesh.a)
    at_node = np.any(np.abs(nodes - xt) <= tol)
    basis = []
    for j in range(mesh.n_elem):
        xl, xr = nodes[j], nodes[j + 1]
        hj = xr - xl
        if xr <= xt + tol:
            w = lambda x, xl=xl, xr=xr, hj=hj: np.where(x <= xl, hj, np.where(x < xr, xr - x, 0.0))
            dw = lambda x, xl=xl, xr=xr: np.where((x >= xl) & (x < xr), -1.0, 0.0)
            disc = (xt,) if at_node and abs(xr - xt) <= tol else ()
            support = (mesh.a, xr)
        elif xl >= xt - tol:
            w = lambda x, xl=xl, xr=xr, hj=hj: np.where(x >= xr, -hj, np.where(x > xl, -(x - xl), 0.0))
            dw = lambda x, xl=xl, xr=xr: np.where((x >= xl) & (x < xr), -1.0, 0.0)
            disc = (xt,) if at_node and abs(xl - xt) <= tol else ()
            support = (xl, mesh.b)
        else:
            w = lambda x, xl=xl, xr=xr: np.where(x <= xl, xt - xl, np.where(x < xr, xt - x, xt - xr))
            dw = lambda x, xl=xl, xr=xr: np.where((x >= xl) & (x < xr), -1.0, 0.0)
            disc = ()
            support = None
        basis.append(_over_beta_regular(w, dw, beta, dbeta, support, disc, xt, slope, j, mesh))
    return FESpace(mesh, "custom", 1, custom_basis=basis)


def _over_beta_regular(w, dw, beta, dbeta, support, disc, xt, slope, j, mesh):
    """w / beta with the removable singularity at the zero xt of beta."""
    eps = 1e-7 * max(1.0, mesh.b - mesh.a)

    def value(x, elem):
        b = beta(x)
        near = np.abs(x - xt) < eps
        out = np.empty_like(x)
        far = ~near
        out[far] = w(x[far]) / b[far]
        if np.any(near):
            # w and beta both vanish at xt on the side where w is nonzero near xt
            out[near] = dw(x[near]) / slope * (elem[near] == j)
        return out

    def deriv(x, elem):
        b = beta(x)
        near = np.abs(x - xt) < eps
        out = np.zeros_like(x)
        far = ~near
        out[far] = (dw(x[far]) * b[far] - w(x[far]) * dbeta(x[far])) / (b[far] ** 2)
        return out
    return BasisFunction(value, deriv, support, disc)


def build_graded_basis(epsilon, mesh=None):
    """One-function space spanned by phi_eps on (0, 1).

    phi_eps(x) = x^(2/3) - x for x > eps and (eps^(-1/3) - 1) x for x <= eps,
    which is continuous at eps and vanishes at 0 and 1.  The default mesh
    has nodes 0, eps, 2 eps, 4 eps, ..., 1.
    """
    eps = float(epsilon)
    if not 0.0 < eps < 1.0:
        raise InvalidInputError("epsilon must lie in (0, 1)")
    if mesh is None:
        mesh = graded_mesh(eps)
    slope = eps ** (-1.0 / 3.0) - 1.0

    def value(x, elem):
        xs = np.maximum(x, eps)
        return np.where(x <= eps, slope * x, xs ** (2.0 / 3.0) - xs)

    def deriv(x, elem):
        xs = np.maximum(x, eps)
        return np.where(x <= eps, slope, (2.0 / 3.0) * xs ** (-1.0 / 3.0) - 1.0)
    return FESpace(mesh, "custom", 1, custom_basis=[BasisFunction(value, deriv)])


def graded_mesh(eps):
    """Nodes 0, eps, 2 eps, 4 eps, ... , 1 (geometric to the right of eps)."""
    pts = [0.0]
    x = eps
    while x < 1.0 - 1e-12:
        pts.append(x)
        x *= 2.0
    if 1.0 - pts[-1] < 0.25 * (pts[-1] - pts[-2] if len(pts) > 2 else 1.0):
        pts[-1] = 1.0
    else:
        pts.append(1.0)
    return Mesh1D(pts)


def custom_space(mesh, functions, derivatives, supports=None, check_independence=True):
    """Custom space from plain callables f(x) and f'(x)."""
    basis = []
    for i, (f, df) in enumerate(zip(functions, derivatives)):
        sup = None if supports is None else supports[i]
        basis.append(BasisFunction(lambda x, e, f=f: f(x), lambda x, e, df=df: df(x), sup))
    return FESpace(mesh, "custom", 1, custom_basis=basis, check_independence=check_independence)
