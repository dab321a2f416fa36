"""Command line entry point: ``banachrm <subcommand> [options]``.

Every subcommand writes one table (CSV or JSON) whose ``#`` header lines
carry the fully resolved configuration.  Exit codes: 0 success, 1 bad
configuration, 2 solver failure (rows computed so far are still written),
3 a verify suite found a failing property.
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import pde_problems as pp
from .errors import ConfigError, SolverFailure
from .lp_geometry import LpVector, best_approx_lp, c_bm, compute_c_ao, compute_c_best
from .nonlinear_solvers import SolverConfig

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ----------------------------------------------------------------- parsing

def _float_list(text):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}")
    return vals


def _int_list(text):
    try:
        vals = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}")
    return vals


def _globals(parser, suppress):
    # suppressed defaults keep unset flags out of the namespace so config values survive
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="flat key=value file; flags override it", **kw)
    parser.add_argument("--output", help="directory for the result file (default: stdout)", **kw)
    parser.add_argument("--seed", type=int, help="seed for randomized suites", **kw)
    parser.add_argument("--jobs", type=int, help="worker processes for sweep points", **kw)
    parser.add_argument("--format", choices=("csv", "json"), **kw)


def build_parser():
    ap = _Parser(prog="banachrm", description="Residual minimization experiments in L^p settings.")
    ap.add_argument("--version", action="version", version=f"banachrm {__version__}")
    _globals(ap, suppress=True)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        _globals(p, suppress=True)
        return p

    p = cmd("constants", "C_BM, C_AO and C_best of l_p over a range of p")
    p.add_argument("--p-min", type=float)
    p.add_argument("--p-max", type=float)
    p.add_argument("--p-steps", type=int)
    p.add_argument("--no-best", action="store_true", dest="no_best")

    p = cmd("bestapprox", "best l_p approximation from a subspace of R^d")
    p.add_argument("--p", type=float)
    p.add_argument("--y", help="target vector, comma separated")
    p.add_argument("--basis", help="basis vectors separated by ';'")
    p.add_argument("--count", type=int, help="random instances in l_p(R^2) when --y is absent")

    p = cmd("advect", "advection-reaction with a Dirac or smooth right-hand side")
    p.add_argument("--p", type=float)
    p.add_argument("--n-elem", type=int)
    p.add_argument("--trial", choices=("p0", "p1"))
    p.add_argument("--test-degree", type=int)
    p.add_argument("--rhs", choices=("dirac", "smooth"))
    p.add_argument("--vnorm", choices=("graph", "derivative"))
    p.add_argument("--sweep", action="store_true", help="all n = 2, 4, ..., n-elem")

    p = cmd("gibbs", "overshoot of residual minimizers for u = sign(x)")
    p.add_argument("--p-list")
    p.add_argument("--n-elem", type=int)
    p.add_argument("--k-list")
    p.add_argument("--refine", type=int)
    p.add_argument("--oracle", action="store_true", help="add the best L^p fit overshoot")

    p = cmd("laplace", "-u'' = f with W^{1,p}_0 trial and W^{1,q}_0 test norms")
    p.add_argument("--p", type=float)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, help="u = x^alpha - x")
    g.add_argument("--smooth", action="store_true", help="f = e^x")
    p.add_argument("--k", type=int)
    p.add_argument("--mesh-list")

    p = cmd("graded", "one-function graded-mesh scenario over eps")
    p.add_argument("--p", type=float)
    p.add_argument("--eps-list")
    p.add_argument("--no-infsup", action="store_true", dest="no_infsup")

    p = cmd("rates", "fit convergence rates from a CSV produced by another subcommand")
    p.add_argument("--input")
    p.add_argument("--x", help="abscissa column (default h)")
    p.add_argument("--columns", help="comma-separated columns (default: all but the abscissa)")

    from .suites import SUITES
    p = cmd("verify", "property suites with pass/fail output")
    p.add_argument("suite", choices=sorted(SUITES) + ["all"])
    return ap


DEFAULTS = {
    "constants": {"p_min": 1.02, "p_max": 50.0, "p_steps": 60, "no_best": False},
    "bestapprox": {"p": 1.5, "y": None, "basis": None, "count": 1000},
    "advect": {"p": 1.5, "n_elem": 64, "trial": "p0", "test_degree": 0, "rhs": "dirac",
               "vnorm": "graph", "sweep": False},
    "gibbs": {"p_list": "2,1.5,1.25,1.125,1.01", "n_elem": 6, "k_list": "4", "refine": 16, "oracle": False},
    "laplace": {"p": 1.5, "alpha": None, "smooth": False, "k": 1, "mesh_list": "2,4,8,16,32,64"},
    "graded": {"p": 1.25, "eps_list": None, "no_infsup": False},
    "rates": {"input": None, "x": "h", "columns": None},
    "verify": {"suite": None},
}


# config-file keys forwarded to the nonlinear solver
SOLVER_KEYS = {
    "solver.tol": ("newton_tol", float),
    "solver.max_newton": ("max_iter", int),
    "solver.delta_start": ("delta_start", float),
    "solver.delta_end": ("delta_end", float),
    "solver.continuation_p": ("p_path", lambda text: _float_list(text)),
}
SOLVER_COMMANDS = ("advect", "gibbs", "laplace", "graded")


def solver_config(cfg):
    """SolverConfig from the ``solver.*`` keys, or None when none are set."""
    kw = {}
    for key, (field, conv) in SOLVER_KEYS.items():
        if cfg.get(key) is not None:
            try:
                kw[field] = conv(cfg[key])
            except ValueError:
                raise ConfigError(f"{key}: cannot parse {cfg[key]!r}")
    return SolverConfig(**kw) if kw else None


def read_config(path):
    """Flat key=value file; '#' starts a comment.  Keys may use '-' or '_'."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}")
    for i, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected key=value")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _coerce(value, default, key):
    if isinstance(value, str):
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{key}: expected a boolean, got {value!r}")
            return low in ("true", "1", "yes")
        try:
            if isinstance(default, int):
                return int(value)
            if isinstance(default, float):
                return float(value)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r}")
    return value


def resolve(argv):
    """Parse flags, merge the config file and fill defaults."""
    ns = build_parser().parse_args(argv)
    cmd = ns.command
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    cfg = dict(DEFAULTS[cmd])
    cfg.update({"seed": 0, "jobs": 1, "format": "csv", "output": None})
    if flags.get("config"):
        for k, v in read_config(flags["config"]).items():
            if k in SOLVER_KEYS and cmd in SOLVER_COMMANDS:
                cfg[k] = v
                continue
            if k not in cfg or k == "config":
                raise ConfigError(f"unknown config key {k!r} for {cmd}")
            cfg[k] = _coerce(v, DEFAULTS[cmd].get(k, {"seed": 0, "jobs": 1}.get(k, "")), k)
    for k, v in flags.items():
        if k == "config":
            continue
        cfg[k] = v
    cfg["config"] = flags.get("config")
    if cfg["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    solver_config(cfg)
    return cmd, cfg


# ----------------------------------------------------------------- running

def _pool_map(fun, items, jobs):
    """Ordered map; stops at the first SolverFailure and returns (rows, failure)."""
    rows = []
    if jobs <= 1 or len(items) <= 1:
        for it in items:
            try:
                rows.append(fun(it))
            except SolverFailure as e:
                return rows, e
        return rows, None
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(fun, it) for it in items]
        for f in futs:
            try:
                rows.append(f.result())
            except SolverFailure as e:
                for g in futs:
                    g.cancel()
                return rows, e
    return rows, None


def _constants_row(args):
    p, best = args
    return {"p": p, "p_minus_1": p - 1.0, "c_bm": c_bm(p), "c_ao": compute_c_ao(p),
            "c_best": compute_c_best(p) if best else float("nan")}


def run_constants(cfg):
    lo, hi, n = cfg["p_min"], cfg["p_max"], cfg["p_steps"]
    if not (1.0 < lo < hi) or n < 2:
        raise ConfigError("need 1 < p-min < p-max and p-steps >= 2")
    ps = 1.0 + np.geomspace(lo - 1.0, hi - 1.0, n)
    rows, fail = _pool_map(_constants_row, [(float(p), not cfg["no_best"]) for p in ps], cfg["jobs"])
    return rows, {}, fail


def run_bestapprox(cfg):
    p = float(cfg["p"])
    if cfg["y"] is not None:
        if cfg["basis"] is None:
            raise ConfigError("--y needs --basis")
        y = np.array(_float_list(cfg["y"]))
        basis = [np.array(_float_list(b)) for b in str(cfg["basis"]).split(";")]
        if any(b.size != y.size for b in basis):
            raise ConfigError("basis vectors must have the length of y")
        instances = [(y, basis)]
    else:
        rng = np.random.default_rng(cfg["seed"])
        instances = [(rng.standard_normal(2), [rng.standard_normal(2)]) for _ in range(int(cfg["count"]))]
    bound = min(c_bm(p), 1.0 + compute_c_ao(p))
    rows = []
    for i, (y, basis) in enumerate(instances):
        yv = LpVector(y, p)
        y0, c = best_approx_lp(yv, basis)
        rows.append({"index": i, "norm_y": yv.norm(), "norm_y0": y0.norm(), "ratio": y0.norm() / yv.norm(),
                     "bound": bound, "coeffs": " ".join(f"{v:.11e}" for v in c)})
    worst = max(r["ratio"] for r in rows)
    return rows, {"c_bm": c_bm(p), "1+c_ao": 1.0 + compute_c_ao(p), "max_ratio": worst}, None


def _advect_data(rhs):
    return pp.sign_jump_data() if rhs == "dirac" else pp.smooth_advection_data()


def _advect_row(args):
    rhs, n, p, trial, k, vnorm, scfg = args
    return pp.advection_mesh_run(_advect_data(rhs), n, p, trial, k, vnorm, scfg)


def run_advect(cfg):
    n_max = int(cfg["n_elem"])
    if n_max < 1:
        raise ConfigError("n-elem must be positive")
    if cfg["p"] <= 1.0:
        raise ConfigError("p must exceed 1")
    ns = [2 ** k for k in range(1, int(np.log2(n_max)) + 1)] if cfg["sweep"] else [n_max]
    if cfg["sweep"] and ns[-1] != n_max:
        ns.append(n_max)
    scfg = solver_config(cfg)
    items = [(cfg["rhs"], n, float(cfg["p"]), cfg["trial"], int(cfg["test_degree"]), cfg["vnorm"], scfg)
             for n in ns]
    rows, fail = _pool_map(_advect_row, items, cfg["jobs"])
    return rows, _rate_summary(rows, ("err_lp",)), fail


def _rate_summary(rows, columns):
    return {f"rate_{k}": v for k, v in pp.fitted_rates(rows, columns).items()}


def _gibbs_row(args):
    p, n, k, refine, oracle, scfg = args
    row = pp.gibbs_sweep([p], n, (k,), refine, cfg=scfg, oracle=oracle)[0]
    row.pop("u_n")
    return row


def run_gibbs(cfg):
    ps, ks = _float_list(cfg["p_list"]), _int_list(cfg["k_list"])
    if not ps or not ks:
        raise ConfigError("p-list and k-list must be non-empty")
    scfg = solver_config(cfg)
    items = [(p, int(cfg["n_elem"]), k, int(cfg["refine"]), bool(cfg["oracle"]), scfg) for p in ps for k in ks]
    rows, fail = _pool_map(_gibbs_row, items, cfg["jobs"])
    return rows, {}, fail


def _laplace_data(p, alpha):
    return pp.smooth_laplace_data(p) if alpha is None else pp.rough_laplace_data(p, alpha)


def _laplace_row(args):
    p, alpha, k, n, scfg = args
    return pp.laplace_mesh_run(_laplace_data(p, alpha), (k, k + 1), n, scfg)


def run_laplace(cfg):
    ns = _int_list(cfg["mesh_list"]) if cfg["mesh_list"] is not None else []
    if not ns:
        raise ConfigError("mesh list is empty")
    if any(n < 1 for n in ns):
        raise ConfigError("mesh sizes must be positive")
    if cfg["alpha"] is None and not cfg["smooth"]:
        cfg["smooth"] = True
    alpha = None if cfg["alpha"] is None else float(cfg["alpha"])
    if alpha is not None and not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    scfg = solver_config(cfg)
    items = [(float(cfg["p"]), alpha, int(cfg["k"]), n, scfg) for n in ns]
    rows, fail = _pool_map(_laplace_row, items, cfg["jobs"])
    return rows, _rate_summary(rows, pp.LAPLACE_COLUMNS), fail


def _graded_row(args):
    eps, p, infsup, scfg = args
    return pp.graded_instability_study([eps], p, cfg=scfg, infsup=infsup)[0]


def run_graded(cfg):
    eps = _float_list(cfg["eps_list"]) if cfg["eps_list"] else pp.graded_eps_sweep(16)
    if not eps or any(not 0.0 < e < 1.0 for e in eps):
        raise ConfigError("eps values must lie in (0, 1)")
    scfg = solver_config(cfg)
    items = [(e, float(cfg["p"]), not cfg["no_infsup"], scfg) for e in eps]
    rows, fail = _pool_map(_graded_row, items, cfg["jobs"])
    return rows, {}, fail


def read_csv_table(path):
    try:
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}")
    return list(csv.DictReader(lines))


def run_rates(cfg):
    if not cfg["input"]:
        raise ConfigError("rates needs --input")
    table = read_csv_table(cfg["input"])
    if len(table) < 3:
        raise ConfigError("need at least three data rows")
    x = cfg["x"]
    if x not in table[0]:
        raise ConfigError(f"column {x!r} not found")
    cols = _split_names(cfg["columns"]) if cfg["columns"] else [c for c in table[0] if c != x]
    from .nonlinear_solvers import estimate_rate
    rows = []
    for c in cols:
        if c not in table[0]:
            raise ConfigError(f"column {c!r} not found")
        try:
            xs = [float(r[x]) for r in table]
            ys = [float(r[c]) for r in table]
        except ValueError:
            continue
        if all(v > 0 for v in ys) and all(v > 0 for v in xs) and len(set(xs)) > 1:
            rate, r2 = estimate_rate(xs, ys)
            rows.append({"column": c, "rate": rate, "r2": r2, "points": len(xs)})
    return rows, {}, None


def _split_names(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def run_verify(cfg):
    from .suites import SUITES, run_suite
    names = sorted(SUITES) if cfg["suite"] == "all" else [cfg["suite"]]
    rows = []
    for name in names:
        rep = run_suite(name, seed=int(cfg["seed"]))
        for c in rep.checks:
            rows.append({"suite": name, "check": c.name, "passed": c.passed, "value": c.value,
                         "threshold": c.threshold, "detail": c.detail})
    return rows, {}, None


RUNNERS = {"constants": run_constants, "bestapprox": run_bestapprox, "advect": run_advect,
           "gibbs": run_gibbs, "laplace": run_laplace, "graded": run_graded, "rates": run_rates,
           "verify": run_verify}


# ----------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.11e}"
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return float(f"{f:.11e}") if np.isfinite(f) else None
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _flatten(row):
    out = {}
    for k, v in row.items():
        if isinstance(v, (list, tuple)):
            continue
        out[k] = v
    return out


def render(cmd, cfg, rows, summary, status):
    rows = [_flatten(r) for r in rows]
    keys = sorted(k for k in cfg if cfg[k] is not None)
    if cfg["format"] == "json":
        doc = {"scenario": cmd, "version": __version__, "config": {k: _jsonable(cfg[k]) for k in keys},
               "status": status, "summary": {k: _jsonable(v) for k, v in summary.items()},
               "rows": [{k: _jsonable(v) for k, v in r.items()} for r in rows]}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# banachrm {__version__}\n# scenario: {cmd}\n")
    for k in keys:
        buf.write(f"# config {k}={_fmt(cfg[k])}\n")
    for k, v in summary.items():
        buf.write(f"# summary {k}={_fmt(v)}\n")
    buf.write(f"# status: {status}\n")
    if rows:
        header = list(rows[0].keys())
        for r in rows[1:]:
            header += [k for k in r if k not in header]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in header])
    return buf.getvalue()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd, cfg = resolve(argv)
        t0 = time.perf_counter()
        rows, summary, fail = RUNNERS[cmd](cfg)
    except ConfigError as e:
        print(f"banachrm: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as e:
        rows, summary, fail = [], {}, e
        t0 = time.perf_counter()
    status = "ok" if fail is None else f"solver failure: {fail}"
    text = render(cmd, cfg, rows, summary, status)
    if cfg.get("output"):
        os.makedirs(cfg["output"], exist_ok=True)
        path = os.path.join(cfg["output"], f"{cmd}.{cfg['format']}")
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)
    print(f"banachrm: {cmd} finished in {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    if fail is not None:
        print(f"banachrm: {status}", file=sys.stderr)
        return EXIT_SOLVER
    if cmd == "verify":
        bad = [r for r in rows if not r["passed"]]
        for r in rows:
            tag = "PASS" if r["passed"] else "FAIL"
            print(f"{tag} {r['suite']}:{r['check']} value={r['value']:.6g} threshold={r['threshold']:.6g}"
                  + (f" counterexample: {r['detail']}" if not r["passed"] and r["detail"] else ""),
                  file=sys.stderr)
        if bad:
            return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
