"""Solvers for the nonlinear mixed systems.

Newton's method with Armijo backtracking on the merit 1/2 ||F||^2,
continuation in the trial exponent p (the test norm uses q = p/(p-1)) and
in a smoothing parameter delta that replaces |s| by sqrt(s^2 + delta^2).
A damped Newton descent on the constrained-energy formulation serves as a
cross-check and as fallback when the saddle-point iteration stagnates.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import warnings

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import MatrixRankWarning, lsqr, spsolve

from .banach_core import (MixedSolution, assemble_mixed_jacobian, bordered_jacobian,
                          assemble_mixed_residual)
from .errors import ConfigError, InvalidInputError, SolverFailure
from .lp_geometry import conjugate


@dataclass
class SolverConfig:
    newton_tol: float = 1e-9
    max_iter: int = 60
    shrink: float = 0.5
    min_step: float = 1e-12
    armijo: float = 1e-4
    delta_start: float = 1e-2
    delta_end: float = 1e-10
    delta_factor: float = 0.1
    p_path: Optional[Sequence[float]] = None
    continuation: bool = True
    stage_ratio: float = 1.3
    tail_ratio: float = 1.15
    square_shortcut: bool = True
    fallback: bool = True

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ConfigError("newton_tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")
        if not 0 < self.shrink < 1:
            raise ConfigError("shrink factor must lie in (0, 1)")
        if not (self.delta_start > self.delta_end > 0) or not 0 < self.delta_factor < 1:
            raise ConfigError("delta schedule must be strictly decreasing and positive")
        if self.p_path is not None:
            path = [float(p) for p in self.p_path]
            if any(p <= 1 for p in path):
                raise ConfigError("p_path entries must exceed 1")
            d = np.diff(path)
            if path and not (np.all(d <= 0) or np.all(d >= 0)):
                raise ConfigError("p_path must be monotone")

    def deltas(self):
        n = int(round(np.log(self.delta_end / self.delta_start) / np.log(self.delta_factor))) + 1
        return list(np.geomspace(self.delta_start, self.delta_end, max(n, 1)))


def default_p_path(p_target, ratio=1.3, tail_ratio=1.15, tail_below=1.1):
    """Exponents from 2 to ``p_target``, geometric in p - 1.

    Consecutive values of p - 1 differ by at most ``ratio``; below
    ``tail_below`` the tighter ``tail_ratio`` is used.
    """
    p_target = float(p_target)
    path = [2.0]
    if p_target == 2.0:
        return path
    x, target = 1.0, p_target - 1.0
    while True:
        if target < 1.0:
            r = tail_ratio if 1.0 + x / ratio < tail_below else ratio
            x /= r
            if x <= target:
                break
        else:
            x *= ratio
            if x >= target:
                break
        path.append(1.0 + x)
    path.append(p_target)
    return path


def _trial_exponent(rho):
    return conjugate(rho)


def _path_for(prob, cfg):
    p_target = _trial_exponent(prob.rho)
    if not cfg.continuation:
        return [p_target]
    if cfg.p_path is not None:
        path = [float(p) for p in cfg.p_path]
        if not path or abs(path[-1] - p_target) > 1e-12 * p_target:
            path = path + [p_target]
        d = np.diff(path)
        if not (np.all(d <= 0) or np.all(d >= 0)):
            raise ConfigError(f"p_path {cfg.p_path} does not run monotonically toward p = {p_target:g}")
        return path
    return default_p_path(p_target, cfg.stage_ratio, cfg.tail_ratio)


def _lin_solve(K, rhs):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            lu = linalg.lu_factor(K, check_finite=True)
        x = linalg.lu_solve(lu, rhs)
        if np.all(np.isfinite(x)):
            return x
    except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError):
        pass
    return np.linalg.lstsq(K, rhs, rcond=None)[0]


SPARSE_MIN = 300


def _sparse_solve(K, rhs):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            x = spsolve(K, rhs)
        if np.all(np.isfinite(x)):
            return np.asarray(x, dtype=float)
    except RuntimeError:
        pass
    return lsqr(K, rhs, atol=1e-14, btol=1e-14)[0]


def _newton_step(prob, x, delta, F):
    m = prob.m
    if m + prob.n < SPARSE_MIN:
        return _lin_solve(assemble_mixed_jacobian(prob, x[:m], x[m:], delta), -F)
    K, k = bordered_jacobian(prob, x[:m], delta)
    return _sparse_solve(K, np.concatenate([-F, np.zeros(k)]))[:m + prob.n]


def _hilbert_start(prob):
    """Solution of the rho = 2 (linear) mixed system."""
    n = prob.n
    if prob.m + n >= SPARSE_MIN:
        B = sparse.csr_matrix(prob.B)
        K = sparse.bmat([[prob.vnorm.gram_sparse(), B], [B.T, None]], format="csc")
        x = _sparse_solve(K, np.concatenate([prob.f, np.zeros(n)]))
        return x[:prob.m], x[prob.m:]
    H = prob.vnorm.gram()
    B = prob.dense_B()
    n = prob.n
    K = np.block([[H, B], [B.T, np.zeros((n, n))]])
    x = _lin_solve(K, np.concatenate([prob.f, np.zeros(n)]))
    return x[:prob.m], x[prob.m:]


def _petrov_galerkin(prob):
    if sparse.issparse(prob.B):
        u = spsolve(sparse.csc_matrix(prob.B), prob.f)
    else:
        u = linalg.solve(prob.B, prob.f)
    return np.asarray(u, dtype=float)


def _fscale(prob):
    return 1.0 + float(np.linalg.norm(prob.f))


def _newton_stage(prob, x, delta_abs, tol, cfg, stats):
    m = prob.m
    F = assemble_mixed_residual(prob, x[:m], x[m:], delta_abs)
    phi = 0.5 * float(F @ F)
    it = 0
    while it < cfg.max_iter:
        if np.sqrt(2 * phi) <= tol:
            return x, np.sqrt(2 * phi), it, True
        dx = _newton_step(prob, x, delta_abs, F)
        step = 1.0
        accepted = False
        while step >= cfg.min_step:
            xt = x + step * dx
            Ft = assemble_mixed_residual(prob, xt[:m], xt[m:], delta_abs)
            phit = 0.5 * float(Ft @ Ft)
            if np.isfinite(phit) and phit <= (1.0 - 2.0 * cfg.armijo * step) * phi:
                accepted = True
                break
            step *= cfg.shrink
        it += 1
        if not accepted:
            return x, np.sqrt(2 * phi), it, False
        x, F, phi = xt, Ft, phit
    return x, np.sqrt(2 * phi), it, np.sqrt(2 * phi) <= tol


def _delta_levels(prob, r, rel, fallback_scale):
    sc = prob.vnorm.scales(r)
    return [rel * (s if s > 0 else f) for s, f in zip(sc, fallback_scale)]


def solve_mixed(prob, cfg=None):
    """Solve J_V(r) + B u = f, B^T r = 0 for (r, u).

    Square problems (dim V_m = dim U_n) are handled by the linear
    Petrov-Galerkin solve B u = f, r = 0 unless ``cfg.square_shortcut`` is
    off.  Otherwise Newton with p- and delta-continuation is used; on
    stagnation the constrained descent solver takes over from the current
    iterate.

    Returns
    -------
    MixedSolution
        ``diagnostics`` holds the total iteration count, the unsmoothed final
        residual and the continuation path as (p, delta, iterations,
        residual) records.
    """
    cfg = cfg or SolverConfig()
    m, n = prob.m, prob.n
    if m == n and cfg.square_shortcut:
        u = _petrov_galerkin(prob)
        r = np.zeros(m)
        res = float(np.linalg.norm(assemble_mixed_residual(prob, r, u)))
        return MixedSolution(r, u, {"iterations": 0, "residual": res, "path": [],
                                    "method": "petrov-galerkin"}, prob)
    tol = cfg.newton_tol * _fscale(prob)
    if not np.any(prob.f):
        return MixedSolution(np.zeros(m), np.zeros(n),
                             {"iterations": 0, "residual": 0.0, "path": [], "method": "zero"}, prob)
    r0, u0 = _hilbert_start(prob)
    base_scale = prob.vnorm.scales(r0)
    path = _path_for(prob, cfg)
    x = np.concatenate([r0, u0])
    records = []
    total = 0
    method = "newton"
    for si, p in enumerate(path):
        rho = conjugate(p)
        stage = prob.with_rho(rho)
        final = si == len(path) - 1
        if abs(rho - 2.0) < 1e-14:
            deltas = [None]
        elif final:
            deltas = cfg.deltas()
        else:
            deltas = [cfg.delta_start]
        for rel in deltas:
            delta_abs = None if rel is None else _delta_levels(stage, x[:m], rel, base_scale)
            stol = tol if (final and (rel is None or rel == deltas[-1])) else max(tol, 1e-6 * _fscale(prob))
            x, res, its, ok = _newton_stage(stage, x, delta_abs, stol, cfg, records)
            total += its
            if not ok and cfg.fallback:
                sub = solve_constrained_descent(stage, cfg, x0=x[:m], deltas=[rel], p_path=[p])
                x = np.concatenate([sub.r, sub.u])
                res = sub.diagnostics["residual"]
                total += sub.diagnostics["iterations"]
                method = "newton+descent"
                ok = res <= max(stol, tol)
            records.append((p, rel, its, float(res)))
            if not ok and final and rel == deltas[-1]:
                raise SolverFailure(
                    f"mixed solve stagnated at p={p:.6g}, delta={rel}", iterate=(x[:m].copy(), x[m:].copy()),
                    residual=float(res), info={"p": p, "delta": rel, "path": records})
    r, u = x[:m], x[m:]
    res = float(np.linalg.norm(assemble_mixed_residual(prob, r, u)))
    if not res <= tol:
        # final polish without smoothing
        x2, res2, its, ok = _newton_stage(prob, x, None, tol, cfg, records)
        total += its
        if np.isfinite(res2) and res2 < res:
            r, u, res = x2[:m], x2[m:], float(np.linalg.norm(assemble_mixed_residual(prob, x2[:m], x2[m:])))
    if not res <= tol:
        raise SolverFailure(f"unsmoothed residual {res:.3e} above tolerance {tol:.3e}",
                            iterate=(r, u), residual=res, info={"path": records})
    return MixedSolution(r, u, {"iterations": total, "residual": res, "path": records,
                                "method": method}, prob)


def _null_basis(B):
    return linalg.null_space(B.T) if B.shape[0] > B.shape[1] else np.zeros((B.shape[0], 0))


def solve_constrained_descent(prob, cfg=None, x0=None, deltas=None, p_path=None):
    """Minimize 1/2 ||v||_V^2 - <f, v> over V_m intersected with ker B^T.

    Damped Newton descent on the reduced energy in an orthonormal basis of
    ker B^T, with the same continuation strategy as ``solve_mixed``.  The
    trial solution is recovered as the least-squares multiplier
    u = argmin ||B u - (f - J_V(r))||.
    """
    cfg = cfg or SolverConfig()
    m, n = prob.m, prob.n
    B = prob.dense_B()
    Z = _null_basis(B)
    k = Z.shape[1]
    tol = cfg.newton_tol * _fscale(prob)
    if p_path is None:
        p_path = _path_for(prob, cfg)
    z = np.zeros(k) if x0 is None else Z.T @ np.asarray(x0, dtype=float)
    base_scale = None
    total = 0
    records = []
    if k > 0 and np.any(prob.f):
        r0, _ = _hilbert_start(prob)
        base_scale = prob.vnorm.scales(r0)
        for si, p in enumerate(p_path):
            rho = conjugate(p)
            stage = prob.with_rho(rho)
            final = si == len(p_path) - 1
            if deltas is not None:
                levels = list(deltas)
            elif abs(rho - 2.0) < 1e-14:
                levels = [None]
            elif final:
                levels = cfg.deltas()
            else:
                levels = [cfg.delta_start]
            for rel in levels:
                d_abs = None if rel is None else _delta_levels(stage, Z @ z, rel, base_scale)
                z, its = _descent_stage(stage, Z, z, d_abs, cfg)
                total += its
                records.append((p, rel, its))
    r = Z @ z
    Jr = prob.vnorm.dmap(r)
    u = np.linalg.lstsq(B, prob.f - Jr, rcond=None)[0] if n else np.zeros(0)
    res = float(np.linalg.norm(assemble_mixed_residual(prob, r, u)))
    return MixedSolution(r, u, {"iterations": total, "residual": res, "path": records,
                                "method": "descent"}, prob)


def _newton_minimize(energy, derivs, x, cfg):
    """Damped Newton for a smooth convex energy.

    ``derivs(x)`` returns (gradient, Hessian).  Once the predicted decrease
    drops below the resolution of the energy values, full steps are taken
    as long as the gradient keeps shrinking.
    """
    e0 = energy(x)
    it = 0
    while it < cfg.max_iter:
        g, H = derivs(x)
        k = len(x)
        H = H + 1e-14 * max(np.trace(H), 1e-300) / max(k, 1) * np.eye(k)
        dx = _lin_solve(H, -g)
        dec = -g @ dx
        it += 1
        if not np.isfinite(dec) or dec <= 0.0:
            break
        if dec <= 1e-13 * max(abs(e0), 1e-300):
            gn = np.linalg.norm(g)
            x1 = x + dx
            g1, _ = derivs(x1)
            if not np.linalg.norm(g1) < gn:
                break
            x, e0 = x1, energy(x1)
            continue
        step = 1.0
        while step >= cfg.min_step:
            e1 = energy(x + step * dx)
            if e1 <= e0 - cfg.armijo * step * dec:
                break
            step *= cfg.shrink
        if step < cfg.min_step:
            break
        x = x + step * dx
        e0 = e1
    return x, it


def _descent_stage(prob, Z, z, delta, cfg):
    vn = prob.vnorm
    fz = Z.T @ prob.f

    def energy(zz):
        return vn.energy(Z @ zz, delta) - fz @ zz

    def derivs(zz):
        v = Z @ zz
        return Z.T @ vn.dmap(v, delta) - fz, Z.T @ vn.hessian(v, delta) @ Z

    return _newton_minimize(energy, derivs, z, cfg)


def invert_duality_map(vnorm, g, cfg=None, r0=None):
    """Return r with J_V(r) = g (the Riesz-type representer of g).

    With a warm start ``r0`` close to the answer, unsmoothed Newton is
    tried first; the continuation path is used if that does not converge.
    """
    cfg = cfg or SolverConfig()
    g = np.asarray(g, dtype=float)
    if r0 is not None:
        r, _ = _descent_stage_plain(vnorm, np.asarray(r0, dtype=float), g, None, cfg)
        if np.linalg.norm(vnorm.dmap(r) - g) <= cfg.newton_tol * (1.0 + np.linalg.norm(g)):
            return r
    G = vnorm.gram()
    r = _lin_solve(G, g)
    rho = vnorm.components[0][1]
    if abs(rho - 2.0) < 1e-14 and all(abs(c[1] - 2.0) < 1e-14 for c in vnorm.components):
        return r
    base = vnorm.scales(r)
    p_t = conjugate(rho)
    path = default_p_path(p_t, cfg.stage_ratio, cfg.tail_ratio) if cfg.continuation else [p_t]
    for si, p in enumerate(path):
        stage = vnorm.with_rho(conjugate(p))
        levels = cfg.deltas() if si == len(path) - 1 else [cfg.delta_start]
        if abs(conjugate(p) - 2.0) < 1e-14:
            continue
        for rel in levels:
            sc = stage.scales(r)
            d_abs = [rel * (s if s > 0 else b) for s, b in zip(sc, base)]
            r, _ = _descent_stage_plain(stage, r, g, d_abs, cfg)
    return r


def _descent_stage_plain(vn, r, g, delta, cfg):
    def energy(rr):
        return vn.energy(rr, delta) - g @ rr

    def derivs(rr):
        return vn.dmap(rr, delta) - g, vn.hessian(rr, delta)

    return _newton_minimize(energy, derivs, r, cfg)


def estimate_rate(h_values, errors):
    """Least-squares slope of log(error) against log(h).

    Returns
    -------
    rate : float
    r2 : float
        Coefficient of determination of the fit (1 for a constant series
        fitted exactly).
    """
    h = np.asarray(h_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size < 3 or h.size != e.size:
        raise InvalidInputError("need at least three (h, error) pairs")
    if np.any(h <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise InvalidInputError("h and errors must be positive and finite")
    lx, ly = np.log(h), np.log(e)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    fit = A @ np.array([slope, icpt])
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-24 else 0.0)
    return float(slope), float(r2)
