"""Acceptance criteria, one test each.

Every test runs the matching verification suite and re-checks the raw
numbers against tolerances pinned here, so a change of suite defaults
cannot silently loosen a criterion.  One PASS/FAIL line per criterion is
printed and repeated in the terminal summary.
"""
import numpy as np
import pytest

from banachrm.suites import run_suite
from conftest import record


def _value(rep, name):
    for c in rep.checks:
        if c.name == name:
            return c.value
    raise KeyError(name)


def _conclude(criterion, results, rep):
    ok = all(flag for _, flag in results)
    summary = "; ".join(f"{text} [{'ok' if flag else 'FAIL'}]" for text, flag in results)
    record(criterion, ok, f"{rep.suite}: {summary}")
    assert ok, summary


@pytest.mark.acceptance
def test_criterion_01_duality_identities():
    rep = run_suite("duality", seed=0)
    pair, dual = _value(rep, "pairing_rel_err"), _value(rep, "dual_norm_rel_err")
    res = [
        (f"count={rep.data['count']}", rep.data["count"] == 1000),
        (f"pairing rel err {pair:.2e} <= 1e-10", pair <= 1e-10),
        (f"dual norm rel err {dual:.2e} <= 1e-10", dual <= 1e-10),
        (f"runtime {rep.wall:.1f}s < 10s", rep.wall < 10.0),
    ]
    _conclude(1, res, rep)


@pytest.mark.acceptance
def test_criterion_02_formulation_equivalence():
    rep = run_suite("equivalence", seed=0)
    d = _value(rep, "coefficient_max_diff")
    res = [
        (f"count={rep.data['count']}", rep.data["count"] == 20),
        (f"max coefficient diff {d:.2e} <= 1e-6", d <= 1e-6),
        (f"runtime {rep.wall:.1f}s < 60s", rep.wall < 60.0),
    ]
    _conclude(2, res, rep)


@pytest.mark.acceptance
def test_criterion_03_petrov_galerkin_collapse():
    rep = run_suite("collapse", seed=0)
    cases = rep.data["cases"]
    rn = max(c[1] for c in cases)
    du = max(c[2] for c in cases)
    res = [
        (f"{len(cases)} square pairs", len(cases) >= 4),
        (f"max ||r_m|| {rn:.2e} <= 1e-9", rn <= 1e-9),
        (f"max |u_n - u_PG| {du:.2e} <= 1e-9", du <= 1e-9),
    ]
    _conclude(3, res, rep)


@pytest.mark.acceptance
def test_criterion_04_cell_average():
    rep = run_suite("cell-average", seed=0)
    ident = _value(rep, "average_identity_max_err")
    res = [(f"average identity err {ident:.2e} <= 1e-9", ident <= 1e-9)]
    ns = [n for n, _ in rep.data["p=2"]]
    res.append((f"meshes n={ns[0]}..{ns[-1]}", ns[0] == 2 and ns[-1] == 8192))
    for p in (1.001, 1.5, 2.0):
        rate = _value(rep, f"rate_p={p:g}")
        res.append((f"rate(p={p:g}) {rate:.4f} vs {1 / p:.4f} within 0.07", abs(rate - 1.0 / p) <= 0.07))
    res.append((f"runtime {rep.wall:.1f}s < 300s", rep.wall < 300.0))
    _conclude(4, res, rep)


@pytest.mark.acceptance
def test_criterion_05_gibbs_suppression():
    rep = run_suite("gibbs", seed=0)
    rows = rep.data["rows"]
    ps = [r["p"] for r in rows]
    ov = [r["overshoot"] for r in rows]
    assert ps == [2.0, 1.5, 1.25, 1.125, 1.01]
    gap = max(abs(r["overshoot"] - r["oracle_overshoot"]) for r in rows)
    res = [
        ("overshoot " + ", ".join(f"{o:.4f}" for o in ov[:4]) + " strictly decreasing",
         all(a > b for a, b in zip(ov[:3], ov[1:4]))),
        (f"overshoot(1.01)={ov[4]:.4f} < 0.1*{ov[0]:.4f}", ov[4] < 0.1 * ov[0]),
        (f"max gap to direct L^p-fit oracle {gap:.1e} <= 5e-3", gap <= 5e-3),
        (f"runtime {rep.wall:.1f}s < 300s", rep.wall < 300.0),
    ]
    _conclude(5, res, rep)


@pytest.mark.acceptance
def test_criterion_06_laplace_smooth():
    rep = run_suite("laplace-smooth", seed=0)
    res = []
    for k in (1, 2, 3):
        study = rep.data[f"k={k}"]
        rate = study["rates"]["err_energy"]
        ratios = [max(r["res_dual"] / r["err_energy"], r["err_energy"] / r["res_dual"]) for r in study["rows"]]
        hs = [r["h"] for r in study["rows"]]
        res.append((f"k={k} h=1/2..1/64", np.isclose(hs[0], 0.5) and np.isclose(hs[-1], 1 / 64)))
        res.append((f"k={k} energy rate {rate:.4f} within 0.1", abs(rate - k) <= 0.1))
        res.append((f"k={k} residual/error factor {max(ratios):.3f} <= 3", max(ratios) <= 3.0))
    res.append((f"runtime {rep.wall:.1f}s < 600s", rep.wall < 600.0))
    _conclude(6, res, rep)


@pytest.mark.acceptance
def test_criterion_07_laplace_rough():
    rep = run_suite("laplace-rough", seed=0)
    res = []
    for a, target in ((0.25, 0.05), (0.375, 0.175), (0.5, 0.30)):
        rate = rep.data[f"alpha={a:g}"]["rates"]["err_energy"]
        res.append((f"alpha={a:g} energy rate {rate:.4f} vs {target}", abs(rate - target) <= 0.05))
    rate = rep.data["alpha=0.4"]["rates"]["err_lp"]
    res.append((f"alpha=0.4 L^p rate {rate:.4f} vs 1.2", abs(rate - 1.2) <= 0.15))
    res.append((f"runtime {rep.wall:.1f}s < 600s", rep.wall < 600.0))
    _conclude(7, res, rep)


@pytest.mark.acceptance
def test_criterion_08_graded_mesh_study():
    rep = run_suite("graded", seed=0)
    rows = rep.data["rows"]
    gal = np.array([r["galerkin"] for r in rows])
    res = [
        (f"{len(rows)} epsilon values", len(rows) == 16),
        ("Galerkin column strictly increasing", bool(np.all(np.diff(gal) > 0))),
        (f"Galerkin final/initial {gal[-1] / gal[0]:.1f} > 5", gal[-1] / gal[0] > 5.0),
    ]
    for col, oracle in (("ideal", "oracle_ideal"), ("inexact", "oracle_inexact")):
        tail = np.array([r[col] for r in rows[-4:]])
        var = (tail.max() - tail.min()) / tail.min()
        dev = max(abs(r[col] - r[oracle]) / r[oracle] for r in rows)
        res.append((f"{col} tail variation {var:.2%} < 10%", var < 0.10))
        res.append((f"{col} vs golden oracle {dev:.1e} <= 1%", dev <= 0.01))
    res.append((f"runtime {rep.wall:.1f}s < 120s", rep.wall < 120.0))
    _conclude(8, res, rep)


@pytest.mark.acceptance
def test_criterion_09_best_approximation_bounds():
    rep = run_suite("bestapprox", seed=0)
    res = []
    for p in (1.05, 1.5, 3.0, 20.0):
        gap = _value(rep, f"apriori_bound_p={p:g}")
        res.append((f"p={p:g} worst excess {gap:.1e} <= 1e-6", gap <= 1e-6))
    c2 = _value(rep, "C_AO(2)")
    d = _value(rep, "|C_AO(3)-C_AO(1.5)|")
    c101 = _value(rep, "C_AO(1.01)")
    res += [
        (f"C_AO(2)={c2!r}", c2 == 0.0),
        (f"|C_AO(3)-C_AO(1.5)|={d:.1e} <= 1e-6", d <= 1e-6),
        (f"C_AO(1.01)={c101:.5f} > 0.9", c101 > 0.9),
        (f"runtime {rep.wall:.1f}s < 60s", rep.wall < 60.0),
    ]
    _conclude(9, res, rep)


@pytest.mark.acceptance
def test_criterion_10_infsup_diagnostic():
    rep = run_suite("infsup", seed=0)
    rows = rep.data["rows"]
    uu = np.array([r["infsup_uu"] for r in rows])
    uv = np.array([r["infsup_uv"] for r in rows])
    spread = max(np.max(uv / uv[0]), np.max(uv[0] / uv))
    res = [
        (f"(U,U) initial/final {uu[0] / uu[-1]:.1f} > 10", uu[0] / uu[-1] > 10.0),
        (f"(U,V) max factor {spread:.3f} < 2", spread < 2.0),
        (f"runtime {rep.wall:.1f}s < 120s", rep.wall < 120.0),
    ]
    _conclude(10, res, rep)
