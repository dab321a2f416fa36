"""Finite-dimensional l_p machinery.

Duality maps on coefficient vectors, best l_p approximation onto a
subspace, and the three geometric constants (Banach-Mazur,
asymmetric-orthogonality and best-approximation projection constants)
of the two-dimensional spaces l_p(R^2).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg, optimize

from .errors import DegenerateSubspaceError, InvalidInputError, SolverFailure


def conjugate(p):
    """Return the conjugate exponent q with 1/p + 1/q = 1."""
    if np.isinf(p):
        return 1.0
    if p == 1:
        return np.inf
    return p / (p - 1.0)


@dataclass(frozen=True)
class LpVector:
    """A vector of reals measured in the l_p norm."""

    entries: np.ndarray
    p: float

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.entries, dtype=float))
        if e.ndim != 1 or e.size == 0:
            raise InvalidInputError("entries must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(e)):
            raise InvalidInputError("entries must be finite")
        if not (1.0 < self.p < np.inf):
            raise InvalidInputError(f"exponent must satisfy 1 < p < inf, got {self.p}")
        object.__setattr__(self, "entries", e)

    def norm(self):
        return lp_norm_vec(self.entries, self.p)


def lp_norm_vec(x, p, w=None):
    """Weighted l_p norm (sum w |x|^p)^(1/p), evaluated with rescaling."""
    x = np.asarray(x, dtype=float)
    m = np.max(np.abs(x)) if x.size else 0.0
    if m == 0.0:
        return 0.0
    t = np.abs(x) / m
    if w is None:
        return m * np.sum(t**p) ** (1.0 / p)
    return m * np.sum(w * t**p) ** (1.0 / p)


def smoothed_lp_terms(s, rho, w=None, delta=0.0):
    """Derivatives of E(s) = 1/2 N(s)^2 for the (smoothed) weighted l_rho norm.

    The smoothed norm replaces |s| by sqrt(s^2 + delta^2).  The Hessian of E
    is ``diag(d) + c2 * outer(g, g)``.

    Returns
    -------
    norm : float
        N(s).
    grad : ndarray
        Gradient of E, i.e. the (smoothed) duality map.
    d : ndarray
        Diagonal part of the Hessian.
    g : ndarray
        Vector of the rank-one Hessian part (scale free).
    c2 : float
        Coefficient of the rank-one part.
    """
    s = np.asarray(s, dtype=float)
    if w is None:
        w = np.ones_like(s)
    m = max(float(np.max(np.abs(s))) if s.size else 0.0, float(delta))
    if m == 0.0:
        z = np.zeros_like(s)
        # the Hessian at the origin exists only in the Hilbert case
        d0 = np.array(w, dtype=float) if rho == 2.0 else z.copy()
        return 0.0, z, d0, z.copy(), 0.0
    t = s / m
    dl = delta / m
    a = t * t + dl * dl
    with np.errstate(divide="ignore", invalid="ignore", under="ignore", over="ignore"):
        ah = a ** (0.5 * rho)
        nt = np.sum(w * ah) ** (1.0 / rho)
        am = np.where(a > 0, a ** (0.5 * rho - 1.0), 0.0)
        g = w * am * t
        dd = np.where(a > 0, a ** (0.5 * rho - 2.0) * ((rho - 1.0) * t * t + dl * dl), 0.0)
    d = nt ** (2.0 - rho) * w * dd
    grad = m * nt ** (2.0 - rho) * g
    c2 = (2.0 - rho) * nt ** (2.0 - 2.0 * rho)
    return m * nt, grad, d, g, c2


def duality_map_lp(v):
    """Duality map of l_p: J(v)_i = ||v||^(2-p) |v_i|^(p-1) sign(v_i).

    The image lives in l_q with q the conjugate exponent.  The zero vector
    is mapped to zero.
    """
    if not isinstance(v, LpVector):
        raise InvalidInputError("expected an LpVector")
    _, grad, _, _, _ = smoothed_lp_terms(v.entries, v.p)
    return LpVector(grad, conjugate(v.p))


def _as_matrix(basis, n):
    cols = []
    for b in basis:
        e = b.entries if isinstance(b, LpVector) else np.asarray(b, dtype=float)
        if e.shape != (n,):
            raise InvalidInputError("basis vectors must match the length of y")
        if not np.all(np.isfinite(e)):
            raise InvalidInputError("basis entries must be finite")
        cols.append(e)
    if not cols:
        raise DegenerateSubspaceError("empty basis")
    return np.column_stack(cols)


def _bracket_root(phi, c0):
    span = max(abs(c0), 1.0)
    lo, hi = c0 - span, c0 + span
    while phi(lo) < 0.0:
        lo -= 2.0 * (hi - lo)
    while phi(hi) > 0.0:
        hi += 2.0 * (hi - lo)
    if phi(lo) == 0.0:
        return lo
    if phi(hi) == 0.0:
        return hi
    return optimize.brentq(phi, lo, hi, xtol=np.finfo(float).tiny, rtol=4 * np.finfo(float).eps, maxiter=1000)


def _nested_best_coeff(y, B, p, w, c0):
    # the derivative of the reduced energy in the last coefficient is
    # -<J(e), b_last> at the inner optimum, and it is monotone
    ww = np.ones_like(y) if w is None else w
    b = B[:, -1]
    if B.shape[1] == 1:
        inner = lambda t: np.empty(0)
    else:
        inner = lambda t: _nested_best_coeff(y - t * b, B[:, :-1], p, w, c0[:-1])

    def phi(t):
        e = y - t * b - B[:, :-1] @ inner(t)
        return float(np.sum(ww * b * np.abs(e) ** (p - 1.0) * np.sign(e)))

    t = _bracket_root(phi, float(c0[-1]))
    return np.append(inner(t), t)


def _roundoff_floor(y, B, c, p, w, ny, nb):
    # size of <J(e), b_j> produced by perturbing e at the level of its own rounding error
    ww = np.ones_like(y) if w is None else w
    mag = np.abs(y) + np.abs(B) @ np.abs(c)
    e = y - B @ c
    n = lp_norm_vec(e, p, w)
    if n == 0.0:
        return 0.0
    de = 8.0 * np.finfo(float).eps * mag
    pert = np.abs(np.abs(e) + de) ** (p - 1.0) - np.abs(e) ** (p - 1.0)
    pert = np.maximum(pert, np.abs(np.abs(e) - de) ** (p - 1.0) - np.abs(e) ** (p - 1.0))
    pert = np.maximum(pert, np.where(np.abs(e) <= de, (np.abs(e) + de) ** (p - 1.0), 0.0))
    return float(np.max(n ** (2.0 - p) * (np.abs(B).T @ (ww * pert)) / (ny * nb)))


def best_approx_lp(y, basis, tol=1e-9, weights=None, max_iter=200):
    """Best approximation of ``y`` from span(basis) in the (weighted) l_p norm.

    Damped Newton on 1/2 ||y - sum c_j b_j||^2.  For p < 2 the objective is
    smoothed and the smoothing parameter is driven from 1e-3 to 1e-12 times
    the typical entry size ||y|| / (sum w)^(1/p).

    Parameters
    ----------
    y : LpVector
    basis : sequence of LpVector or arrays
        Linearly independent spanning vectors.
    tol : float
        Bound on the relative first-order residual
        max_j |<J(y - y0), b_j>| / (||y|| ||b_j||).
    weights : ndarray, optional
        Positive weights w for the norm (sum w |x|^p)^(1/p).

    Returns
    -------
    y0 : LpVector
    coeffs : ndarray
    """
    if not isinstance(y, LpVector):
        raise InvalidInputError("expected an LpVector")
    p = y.p
    yv = y.entries
    B = _as_matrix(basis, yv.size)
    w = None if weights is None else np.asarray(weights, dtype=float)
    sv = linalg.svdvals(B if w is None else B * w[:, None] ** (1.0 / p))
    if sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateSubspaceError("basis is rank deficient")
    scale = np.max(np.abs(yv))
    k = B.shape[1]
    if scale == 0.0:
        return LpVector(np.zeros_like(yv), p), np.zeros(k)
    bscale = np.max(np.abs(B), axis=0)
    Bn = B / bscale
    yt = yv / scale
    if w is None:
        c = np.linalg.lstsq(Bn, yt, rcond=None)[0]
    else:
        sw = np.sqrt(w)
        c = np.linalg.lstsq(Bn * sw[:, None], yt * sw, rcond=None)[0]
    if k == 1:
        # one direction: the first-order condition is monotone in c, no smoothing needed
        c = _nested_best_coeff(yt, Bn, p, w, c)
        deltas = []
    elif p < 2:
        # smoothing measured against the typical (not the largest) entry
        wsum = float(yt.size if w is None else np.sum(w))
        typ = lp_norm_vec(yt, p, w) / wsum ** (1.0 / p)
        deltas = typ * np.geomspace(1e-3, 1e-12, 10)
    else:
        deltas = [0.0]

    def energy(cc, delta):
        n, *_ = smoothed_lp_terms(yt - Bn @ cc, p, w, delta)
        return 0.5 * n * n

    for delta in deltas:
        for _ in range(max_iter):
            e = yt - Bn @ c
            n, grad, d, g, c2 = smoothed_lp_terms(e, p, w, delta)
            G = -Bn.T @ grad
            Bg = Bn.T @ g
            H = Bn.T @ (d[:, None] * Bn) + c2 * np.outer(Bg, Bg)
            H += 1e-14 * np.trace(H) / k * np.eye(k)
            try:
                dc = linalg.solve(H, -G, assume_a="sym")
            except linalg.LinAlgError:
                dc = np.linalg.lstsq(H, -G, rcond=None)[0]
            dec = -G @ dc
            if not np.isfinite(dec) or dec <= 1e-28 * max(1.0, n * n):
                break
            e0 = 0.5 * n * n
            step = 1.0
            while step >= 1e-12:
                e1 = energy(c + step * dc, delta)
                if e1 <= e0 - 1e-4 * step * dec:
                    break
                if step == 1.0 and e1 <= e0 * (1.0 + 1e-13) and dec <= 1e-12 * e0:
                    # decrease below roundoff: accept if the gradient shrinks
                    _, g1, *_ = smoothed_lp_terms(yt - Bn @ (c + dc), p, w, delta)
                    if np.linalg.norm(Bn.T @ g1) < np.linalg.norm(G):
                        break
                step *= 0.5
            if step < 1e-12:
                break
            c = c + step * dc
    ny = lp_norm_vec(yt, p, w)
    nb = np.array([lp_norm_vec(Bn[:, j], p, w) for j in range(k)])

    def residual(cc):
        _, jv, _, _, _ = smoothed_lp_terms(yt - Bn @ cc, p, w, 0.0)
        return float(np.max(np.abs(Bn.T @ jv) / (ny * nb)))

    resid = residual(c)
    if 1 < k <= 3 and not resid <= tol:
        # small bases: nested monotone root finding, exact up to roundoff
        c = _nested_best_coeff(yt, Bn, p, w, c)
        resid = residual(c)
    coeffs = c * scale / bscale
    if not (resid <= max(tol, _roundoff_floor(yt, Bn, c, p, w, ny, nb))):
        raise SolverFailure(
            f"best approximation did not reach tolerance {tol:g} (residual {resid:.3e})",
            iterate=coeffs, residual=resid, info={"p": p})
    return LpVector(B @ coeffs, p), coeffs


def c_bm(p):
    """Banach-Mazur constant of l_p, 2^|2/p - 1|."""
    return 2.0 ** abs(2.0 / p - 1.0)


def _c_ao_objective(theta, p):
    q = conjugate(p)
    c = np.cos(theta)
    s = np.sin(theta)
    a, b = p / q, q / p
    num = np.abs(c**a * s**b - s**a * c**b)
    np_ = (c**p + s**p) ** (1.0 / p)
    nq = (c**q + s**q) ** (1.0 / q)
    return num / (np_**a * nq**b)


@lru_cache(maxsize=256)
def compute_c_ao(p, grid=10000):
    """Asymmetric-orthogonality constant of l_p(R^2).

    Maximizes the reduced one-dimensional quotient over a uniform theta grid
    on [0, pi/2] and polishes the best grid point by golden-section search.
    The endpoint cases p = 1 and p = inf return the limit value 1.
    """
    p = float(p)
    if grid < 100:
        raise InvalidInputError("grid must be at least 100")
    if p < 1:
        raise InvalidInputError("exponent must be >= 1")
    if p == 1.0 or np.isinf(p):
        return 1.0
    theta = np.linspace(0.0, 0.5 * np.pi, int(grid))
    vals = _c_ao_objective(theta, p)
    i = int(np.argmax(vals))
    best = float(vals[i])
    if 0 < i < theta.size - 1 and best > 0:
        res = optimize.minimize_scalar(
            lambda t: -_c_ao_objective(t, p),
            bracket=(theta[i - 1], theta[i], theta[i + 1]),
            method="golden", tol=1e-12)
        best = max(best, float(-res.fun))
    return best


def _best_coeff_2d(y1, y2, b1, b2, p, iters=26):
    """Vectorized bisection for argmin_c ||y - c b||_p on l_p(R^2)."""
    ny = (np.abs(y1) ** p + np.abs(y2) ** p) ** (1.0 / p)
    nb = (np.abs(b1) ** p + np.abs(b2) ** p) ** (1.0 / p)
    hi = 2.5 * ny / nb
    lo = -hi

    def slope(c):
        e1 = y1 - c * b1
        e2 = y2 - c * b2
        return b1 * np.abs(e1) ** (p - 1) * np.sign(e1) + b2 * np.abs(e2) ** (p - 1) * np.sign(e2)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = slope(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    c = 0.5 * (lo + hi)
    return np.abs(c) * nb / ny


def _best_ratio(phi, t, p):
    b = np.array([np.cos(phi), np.sin(phi)])
    y = np.array([np.cos(t), np.sin(t)])
    y0, _ = best_approx_lp(LpVector(y, p), [b], tol=1e-8)
    return y0.norm() / lp_norm_vec(y, p)


@lru_cache(maxsize=256)
def compute_c_best(p, grid=721):
    """Best-approximation projection constant of l_p(R^2).

    Maximum of ||y0|| / ||y|| over unit y and one-dimensional subspaces,
    where y0 is the best approximation of y from the subspace.  Subspace
    and y directions are sampled on a ``grid x grid`` angle grid and the
    best sample is refined locally.
    """
    p = float(p)
    if grid < 3:
        raise InvalidInputError("grid must be at least 3")
    if p == 1.0 or np.isinf(p):
        return 2.0
    if p == 2.0:
        return 1.0
    phi = np.linspace(0.0, 0.5 * np.pi, int(grid))
    t = np.linspace(0.0, np.pi, int(grid))
    P, T = np.meshgrid(phi, t, indexing="ij")
    ratio = _best_coeff_2d(np.cos(T), np.sin(T), np.cos(P), np.sin(P), p)
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    best = float(ratio[i, j])
    try:
        res = optimize.minimize(
            lambda z: -_best_ratio(z[0], z[1], p), x0=[phi[i], t[j]],
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 200,
                     "initial_simplex": [[phi[i], t[j]],
                                         [phi[i] + 0.5 * (phi[1] - phi[0]), t[j]],
                                         [phi[i], t[j] + 0.5 * (t[1] - t[0])]]})
        best = max(best, float(-res.fun))
    except SolverFailure:
        pass
    return best


def check_apriori_bounds(y, y0, tol=1e-6, strict=False):
    """Compare ||y0|| / ||y|| with the C_BM and 1 + C_AO a-priori bounds.

    Returns
    -------
    ratio, bound_bm, bound_ao : float
        The norm ratio and the two bounds.  With ``strict=True`` an
        AssertionError is raised when the ratio exceeds the smaller bound
        by more than ``tol``.
    """
    p = y.p
    ny = y.norm()
    n0 = y0.norm()
    if ny == 0.0:
        if n0 != 0.0:
            raise InvalidInputError("y = 0 requires y0 = 0")
        ratio = 0.0
    else:
        ratio = n0 / ny
    bound_bm = c_bm(p)
    bound_ao = 1.0 + compute_c_ao(p)
    if strict and ratio > min(bound_bm, bound_ao) + tol:
        raise AssertionError(
            f"ratio {ratio:.12g} exceeds min(C_BM, 1 + C_AO) = {min(bound_bm, bound_ao):.12g}")
    return ratio, bound_bm, bound_ao
