"""Command-line front end.

Every command reads an optional flat ``key = value`` config file (``--config``)
and accepts the same keys as flags; a flag beats the file, the file beats the
built-in default. Unknown keys and unknown flags are errors.

Exit codes: 0 ok, 1 usage error or failed self-test, 2 solver failure,
3 bracket failure, 4 hypothesis failure, 5 I/O error.
"""
from __future__ import annotations

import argparse
import configparser
import contextlib
import math
import sys
import warnings

import numpy as np

from .errors import BracketError, FoldkitError, HypothesisFailed, SolverError
from .fold import (FOLD_CSV_HEADER, LOWER_FOLD, UPPER_FOLD, curve_second_difference,
                   fhn_seed, fold_curve, write_fold_csv)
from .integrate import integrate, stability_probe
from .mmo import AnalysisConfig, SimConfig, classify_attractor, simulate, sweep_c1, write_sweep_csv
from .reduced import NU_MAX, ReducedSystem, find_folded_singularity, find_ordinary_equilibrium, ybar2
from .system import Params, fd_check, fhn_system
from .transcritical import detect_fsn2, verify_fhn_hypotheses

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_BRACKET, EXIT_HYPOTHESIS, EXIT_IO = 0, 1, 2, 3, 4, 5

# key -> (type, default, help)
PARAM_KEYS = {
    "epsilon": (float, 0.1, "timescale ratio"),
    "alpha1": (float, 0.01, "fast coupling into oscillator 1"),
    "alpha2": (float, 0.01, "fast coupling into oscillator 2"),
    "beta1": (float, 0.01, "slow coupling into oscillator 1"),
    "beta2": (float, 0.01, "slow coupling into oscillator 2"),
    "c1": (float, -0.99, "nullcline position, oscillator 1"),
    "c2": (float, -1.5, "nullcline position, oscillator 2"),
}
RUN_KEYS = {
    "dt": (float, 0.001, "RK4 step"),
    "t_end": (float, 500.0, "final time"),
    "record_every": (int, 10, "keep every n-th step"),
    "x1_0": (float, -0.9, "initial x1"),
    "x2_0": (float, -1.5, "initial x2"),
    "y1_0": (float, -2.0, "initial y1"),
    "y2_0": (float, -1.125, "initial y2"),
    "transient_fraction": (float, 0.5, "fraction of the run discarded before analysis"),
    "noise_floor": (float, 1e-4, "minimum peak prominence"),
    "large_threshold": (float, 1.5, "prominence of a large (L) oscillation"),
    "small_threshold": (float, 0.01, "prominence of a small (s) oscillation"),
    "eq_tol": (float, 1e-4, "x1 range below which the run is at equilibrium"),
    "decay_ratio": (float, 0.5, "late/early amplitude ratio below which small oscillations count as decaying"),
    "newton_tol": (float, 1e-12, "fold Newton tolerance"),
    "nu_max": (float, NU_MAX, "upper bound on coupling strength for reduced analyses"),
}
ALL_KEYS = {**PARAM_KEYS, **RUN_KEYS}
POSITIVE = {"epsilon", "dt", "record_every", "noise_floor", "large_threshold", "small_threshold",
            "eq_tol", "decay_ratio", "newton_tol", "nu_max"}


class UsageError(FoldkitError):
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file (``#`` comments allowed)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}") from None
    if len(cp.sections()) != 1:
        raise UsageError(f"config {path} must be flat (no [sections])")
    out = {}
    for key, raw in cp["run"].items():
        if key not in ALL_KEYS:
            raise UsageError(f"unknown config key {key!r} in {path}")
        typ = ALL_KEYS[key][0]
        try:
            out[key] = typ(raw)
        except ValueError:
            raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None
    return out


def resolve(args) -> dict:
    """Merge defaults, config file and flags (flag > file > default)."""
    values = {k: v[1] for k, v in ALL_KEYS.items()}
    if args.config:
        values.update(read_config(args.config))
    for k in ALL_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    for k in POSITIVE:
        if not values[k] > 0:
            raise UsageError(f"{k} must be positive")
    for k, v in values.items():
        if not math.isfinite(v):
            raise UsageError(f"{k} must be finite")
    return values


def params_of(values) -> Params:
    return Params(**{k: values[k] for k in PARAM_KEYS})


def sim_of(values) -> SimConfig:
    return SimConfig(params_of(values), dt=values["dt"], t_end=values["t_end"],
                     record_every=values["record_every"],
                     initial_state=tuple(values[k] for k in ("x1_0", "x2_0", "y1_0", "y2_0")))


def analysis_of(values) -> AnalysisConfig:
    return AnalysisConfig(transient_fraction=values["transient_fraction"],
                          noise_floor=values["noise_floor"],
                          large_threshold=values["large_threshold"],
                          small_threshold=values["small_threshold"],
                          eq_tol=values["eq_tol"], decay_ratio=values["decay_ratio"])


def check_nu(p: Params, values):
    if not p.nu < values["nu_max"]:
        raise UsageError(f"coupling nu={p.nu} must be below nu_max={values['nu_max']}")


@contextlib.contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    with open(path, "w", newline="") as fh:
        yield fh


def _emit(path, write):
    with _output(path) as fh:
        write(fh)


# -- commands ----------------------------------------------------------------
def cmd_fold_curve(args, values) -> int:
    p = params_of(values)
    system = fhn_system()
    branch = UPPER_FOLD if args.branch == "upper" else LOWER_FOLD
    seed = np.array(args.seed) if args.seed else fhn_seed(args.y2_min, upper=args.branch == "upper")
    try:
        pts = fold_curve(system, args.y2_min, args.y2_max, args.n, seed, p, branch=branch,
                         newton_tol=values["newton_tol"])
    except SolverError as exc:
        y2 = getattr(exc, "y2", None)
        if y2 is not None and "y2=" not in str(exc):
            raise type(exc)(f"{exc} (y2={y2!r})") from None
        raise
    _emit(args.out, lambda fh: write_fold_csv(pts, fh))
    if args.out not in (None, "-"):
        print(f"{len(pts)} fold points, max residual {max(fp.residual for fp in pts):.3e}, "
              f"max second difference {curve_second_difference(pts):.3e}")
    return EXIT_OK


def cmd_singularity(args, values) -> int:
    p = params_of(values)
    check_nu(p, values)
    rs = ReducedSystem(p)
    lines = [f"c1: {p.c1!r}"]
    try:
        yb = ybar2(rs)
    except BracketError:
        yb = None
    fs = find_folded_singularity(rs, near=yb)
    lines += [f"folded_y2: {fs.y2_fold!r}", f"folded_kind: {fs.kind.value}",
              f"folded_det: {fs.det!r}", f"folded_trace: {float(np.trace(fs.jacobian))!r}",
              f"folded_eigenvalues: {' '.join(repr(complex(e)) for e in fs.eigenvalues)}",
              f"dg1_dy2: {fs.dg1_dy2!r}", f"K: {fs.K!r}", f"g2: {fs.g2!r}"]
    try:
        oe = find_ordinary_equilibrium(rs, seed=(0.0, yb if yb is not None else fs.y2_fold))
        lines += [f"ordinary_x1: {oe.x1_e!r}", f"ordinary_y2: {oe.y2_e!r}",
                  f"ordinary_kind: {oe.kind.value}", f"ordinary_det: {oe.det!r}",
                  f"ordinary_trace: {float(np.trace(oe.jacobian))!r}",
                  f"ordinary_full_residual: {oe.full_residual!r}"]
    except SolverError as exc:
        lines.append(f"ordinary: none ({exc})")
    text = "\n".join(lines) + "\n"
    _emit(args.out, lambda fh: fh.write(text))
    return EXIT_OK


def cmd_fsn2(args, values) -> int:
    p = params_of(values)
    check_nu(p, values)
    rs = ReducedSystem(p)
    pre = verify_fhn_hypotheses(p, rs=rs)
    try:
        report = detect_fsn2(p, (args.c1_lo, args.c1_hi), rs=rs, nu_max=values["nu_max"])
    except BracketError:
        if pre.failed():
            raise HypothesisFailed(f"hypothesis failed: {', '.join(pre.failed())}\n"
                                   + pre.to_text()) from None
        raise
    verify_fhn_hypotheses(p, report, rs=rs)
    _emit(args.out, lambda fh: fh.write(report.to_text()))
    if args.csv:
        _emit(args.csv, lambda fh: fh.write(report.to_csv()))
    if not report.confirmed:
        raise HypothesisFailed(f"hypothesis failed: {', '.join(report.failed())}")
    if args.out not in (None, "-"):
        print(f"transcritical confirmed at c1_star={report.c1_star!r}")
    return EXIT_OK


def cmd_simulate(args, values) -> int:
    cfg = sim_of(values)
    traj = simulate(cfg)
    _emit(args.out, traj.write_csv)
    if traj.blowup:
        raise SolverError(f"blow-up at t={traj.blowup_time!r}")
    if args.classify:
        cls = classify_attractor(traj, analysis_of(values))
        print(f"class: {cls.kind.value}\nsignature: {cls.signature}\nrange_x1: {cls.range!r}",
              file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def _c1_list(args):
    if args.c1_list:
        try:
            return [float(c) for c in args.c1_list.split(",") if c.strip()]
        except ValueError:
            raise UsageError(f"bad --c1-list {args.c1_list!r}") from None
    lo, hi, n = args.c1_range
    return list(np.linspace(float(lo), float(hi), int(n)))


def cmd_sweep(args, values) -> int:
    c1s = _c1_list(args)
    if not c1s:
        raise UsageError("empty c1 list")
    rows = sweep_c1(c1s, sim_of(values), analysis_of(values), jobs=args.jobs)
    _emit(args.out, lambda fh: write_sweep_csv(rows, fh))
    for r in rows:
        if r.error:
            print(f"c1={r.c1!r}: {r.error}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args, values) -> int:
    """Self-test: derivative audit, RK4 order, uncoupled fold oracle."""
    from .fold import solve_fold_point
    results = []
    p = params_of(values)
    system = fhn_system()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        s = rng.uniform(-2, 2, 4)
        rep = fd_check(system, s, p)
        worst = max(worst, rep.max_rel_error)
    results.append(("fd_check", worst < 1e-6, worst))

    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        tr = integrate(lambda t, x: -x, [1.0], 0.0, 1.0, dt, record_every=1)
        errs.append(abs(tr.final_state[0] - math.exp(-1.0)))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    results.append(("rk4_order", all(abs(r / 16 - 1) < 0.2 for r in ratios), min(ratios)))

    q = p.uncoupled()
    fp = solve_fold_point(system, -1.125, fhn_seed(-1.125), q)
    err = max(abs(fp.x1_star + 1), abs(fp.x2_star + 1.5), abs(fp.y1_star + 2),
              abs(fp.lam + 3.75), abs(fp.K - 6))
    results.append(("uncoupled_fold", err < 1e-10, err))

    rs = ReducedSystem(q.replace(c2=-1.5))
    g = rs.g(0.0, -1.125)
    err = max(abs(g[0] - (-1 - q.c1)), abs(g[1]))
    results.append(("uncoupled_slow_flow", err < 1e-12, err))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lam = stability_probe(lambda s: np.linalg.eigvals(system.fast_jacobian(s, p)) / p.epsilon,
                              [np.array([x, -1.5, 0, 0]) for x in (-2, -1, 0, 1, 2)], values["dt"])
    results.append(("rk4_stability", lam <= 2.5, lam))

    ok = True
    with _output(args.out) as fh:
        for name, passed, val in results:
            fh.write(f"{name}: {'pass' if passed else 'FAIL'} value={float(val)!r}\n")
            ok &= passed
    return EXIT_OK if ok else EXIT_USAGE


# -- parser --------------------------------------------------------------------
def _add_keys(sp, keys):
    g = sp.add_argument_group("parameters (override --config)")
    for k, (typ, default, help_) in keys.items():
        g.add_argument(f"--{k.replace('_', '-')}", dest=k, type=typ, default=None,
                       help=f"{help_} (default {default})")


EPILOG = ("config file: flat 'key = value' lines ('#' comments); keys are the flag "
          "names with '_' for '-', e.g. 'c1 = -0.9883' or 't_end = 500'. "
          "Precedence: flag > file > default. "
          "Exit codes: 0 ok, 1 usage error or failed self-test, 2 solver failure, "
          "3 bracket failure, 4 hypothesis failure, 5 I/O error.")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="foldkit", description="Fold curves, folded singularities, FSN II "
                 "detection and coupled FitzHugh-Nagumo experiments.", epilog=EPILOG)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_, run_keys=()):
        sp = sub.add_parser(name, help=help_, description=help_, epilog=EPILOG)
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        _add_keys(sp, PARAM_KEYS)
        _add_keys(sp, {k: RUN_KEYS[k] for k in run_keys})
        sp.set_defaults(func=func, run_keys=run_keys)
        return sp

    sp = command("fold-curve", cmd_fold_curve, "continue the fold curve over a y2 range; "
                 f"CSV columns {FOLD_CSV_HEADER}", ("newton_tol",))
    sp.add_argument("--y2-min", type=float, default=-1.3)
    sp.add_argument("--y2-max", type=float, default=-0.9)
    sp.add_argument("--n", type=int, default=41, help="number of points (>= 2)")
    sp.add_argument("--branch", choices=("lower", "upper"), default="lower")
    sp.add_argument("--seed", type=float, nargs=3, metavar=("X1", "X2", "Y1"),
                    help="Newton seed at y2-min (default: uncoupled fold)")

    command("singularity", cmd_singularity, "folded singularity and ordinary equilibrium "
            "of the desingularized system at the given parameters", ("nu_max",))

    sp = command("fsn2", cmd_fsn2, "locate the FSN II point in a c1 bracket and check the "
                 "transcritical conditions; key: value report", ("nu_max",))
    sp.add_argument("--c1-lo", type=float, default=-1.0)
    sp.add_argument("--c1-hi", type=float, default=-0.98)
    sp.add_argument("--csv", default=None, help="also write the report as a CSV row")

    sim_keys = ("dt", "t_end", "record_every", "x1_0", "x2_0", "y1_0", "y2_0")
    ana_keys = ("transient_fraction", "noise_floor", "large_threshold", "small_threshold",
                "eq_tol", "decay_ratio")
    sp = command("simulate", cmd_simulate, "RK4 run of the full system; CSV t,x1,x2,y1,y2",
                 sim_keys + ana_keys)
    sp.add_argument("--classify", action="store_true", help="print attractor class and signature")

    sp = command("sweep", cmd_sweep, "simulate and classify a list of c1 values; CSV "
                 "c1,class,signature,final_x1,final_x2,final_y1,final_y2", sim_keys + ana_keys)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--c1-list", help="comma-separated c1 values")
    grp.add_argument("--c1-range", nargs=3, metavar=("LO", "HI", "N"), help="uniform grid")
    sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPUs)")

    command("verify", cmd_verify, "self-test: derivative audit, RK4 order, uncoupled oracles",
            ("dt",))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        values = resolve(args)
        if args.command == "fold-curve" and args.n < 2:
            raise UsageError("--n must be >= 2")
        if args.command == "sweep" and args.jobs is not None and args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args, values)
    except OSError as exc:
        print(f"foldkit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"foldkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FoldkitError as exc:
        print(f"foldkit: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
