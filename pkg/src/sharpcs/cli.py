"""Command-line interface.

Subcommands::

    sharpcs quantile  --shape canonical:g1=0,g2=0.25 --alpha 0.05,0.01
    sharpcs monitor   data.csv --m 100 --mu0 0 --side right
    sharpcs simulate  coverage --m 100 --reps 50 --horizon 10
    sharpcs selftest

Exit codes: 0 success, 1 failed check, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import quantiles as q
from . import simulate as sim
from .boundary import BoundaryShape, ShapeError, parse_shape
from .estimators import BartlettLongRun, IidSample, StreamState, resolve_l_m
from .sequence import Direction, _sigma_and_half_width

log = logging.getLogger("sharpcs")

DEFAULT_CACHE = Path(".cs-cache") / "quantiles.tsv"


class UsageError(Exception):
    pass


# --- argument helpers ---------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def _shape(text: str) -> BoundaryShape:
    try:
        return parse_shape(text)
    except ShapeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _cache(args) -> q.QuantileCache | None:
    if args.no_cache:
        return None
    path = args.cache or os.environ.get("CS_CACHE") or DEFAULT_CACHE
    return q.QuantileCache(path)


def _num(v: float, full: bool) -> str:
    """JSON number with 6 significant digits (or shortest round-trip)."""
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    if math.isnan(v):
        return '"nan"'
    return repr(float(v)) if full else f"{v:.6g}"


def _mc_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--paths", type=int, default=q.DEFAULT_PATHS, help="Monte Carlo paths for critical values")
    p.add_argument("--grid-n", type=int, default=q.DEFAULT_GRID_N, help="uniform grid size of the path sampler")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache", type=Path, default=None, help="quantile cache file (env CS_CACHE)")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--threads", type=int, default=1, help="worker processes")


# --- quantile ------------------------------------------------------------------------


def cmd_quantile(args, out) -> int:
    cache = _cache(args)
    sides = ["two", "one"] if args.sided == "both" else [args.sided]
    out.write("alpha\tsided\tc\tstd_error\n")
    for alpha in args.alpha:
        for sided in sides:
            cv = q.critical_value(args.shape, alpha, sided, args.paths, args.grid_n, args.seed, cache, args.threads)
            full = args.full_precision
            out.write(f"{alpha:g}\t{sided}\t{_num(cv.value, full)}\t{_num(cv.std_error, full)}\n")
    return 0


# --- monitor -------------------------------------------------------------------------


def _parse_obs(line: str) -> float | None:
    field = line.split(",", 1)[0].strip()
    try:
        v = float(field)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def cmd_monitor(args, out) -> int:
    direction = Direction(args.side)
    cache = _cache(args)

    def crit(sided, given):
        if given is not None:
            return given
        return q.critical_value(args.shape, args.alpha, sided, args.paths, args.grid_n, args.seed, cache,
                                args.threads).value

    c_two = crit("two", args.c)
    c_test = c_two if direction is Direction.TWO_SIDED else crit("one", args.c_one)
    method = IidSample() if args.variance == "iid" else BartlettLongRun()
    state = StreamState(m=args.m, l_m=resolve_l_m(args.l_m, args.m), var_method=method)
    mu0s = args.mu0 or []
    full = args.full_precision
    fh = sys.stdin if args.input in (None, "-") else open(args.input)
    try:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            x = _parse_obs(line)
            if x is None:
                if args.strict:
                    log.error("line %d: cannot parse %r", lineno, line.rstrip("\n"))
                    return 2
                log.warning("line %d: skipping unparseable %r", lineno, line.rstrip("\n"))
                continue
            state.update(x)
            sigma, hw = _sigma_and_half_width(state, args.shape, c_two)
            mean = state.mean
            lower, upper = (-math.inf, math.inf) if math.isinf(hw) else (mean - hw, mean + hw)
            if mu0s:
                if c_test != c_two:
                    hw_t = _sigma_and_half_width(state, args.shape, c_test)[1]
                    lo_t, up_t = (-math.inf, math.inf) if math.isinf(hw_t) else (mean - hw_t, mean + hw_t)
                else:
                    lo_t, up_t = lower, upper
                if direction is Direction.RIGHT:
                    rej = [mu <= lo_t for mu in mu0s]
                elif direction is Direction.LEFT:
                    rej = [mu >= up_t for mu in mu0s]
                else:
                    rej = [not (lo_t < mu < up_t) for mu in mu0s]
                rejects = ",".join("true" if r else "false" for r in rej)
            else:
                rejects = ""
            out.write(
                f'{{"t":{state.t},"mean":{_num(mean, full)},"sigma":{_num(sigma, full)},'
                f'"lower":{_num(lower, full)},"upper":{_num(upper, full)},"rejects":[{rejects}]}}\n'
            )
    finally:
        if fh is not sys.stdin:
            fh.close()
    return 0


# --- simulate ------------------------------------------------------------------------

EXPERIMENTS = ("coverage", "rejection", "fwer", "supstat", "hajekrenyi", "prop43")


def _dgp(args):
    if args.dgp == "normal":
        return sim.IidNormal(args.mu, args.sigma)
    if args.dgp == "exp":
        return sim.IidCenteredExponential(1.0 / args.sigma, args.mu)
    return sim.AR1(args.phi, args.sigma, args.mu)


def _run_experiment(args):
    name = args.experiment
    method = IidSample() if args.variance == "iid" else BartlettLongRun()
    w = args.threads
    if name == "prop43":
        return sim.check_prop43(args.g1, args.g2, args.paths, args.grid_n, args.seed, args.seed + 1, workers=w)
    if name == "hajekrenyi":
        return sim.check_hajek_renyi(args.gamma, args.m, args.C, args.reps, args.seed, args.side,
                                     _dgp(args), workers=w)
    shape = args.shape
    if name == "supstat":
        return sim.check_sup_statistic(_dgp(args), args.m_list or [args.m], shape, args.reps, args.seed, method,
                                       args.horizon, args.l_m, args.paths, args.seed + 7, args.grid_n, w)
    cache = _cache(args)
    horizon = args.horizon * args.m
    if name == "fwer":
        mode = args.mode
        sided = "two" if mode == "both" else "one"
        c = q.critical_value(shape, args.alpha, sided, args.paths, args.grid_n, args.seed, cache, w)
        mus = args.mus if args.mus is not None else [args.mu + 0.05 * k for k in range(10)]
        return sim.simulate_fwer(_dgp(args), mus, mode, args.m, horizon, shape, args.alpha, c, args.reps,
                                 args.seed, args.l_m, method, w)
    c = q.critical_value(shape, args.alpha, "two", args.paths, args.grid_n, args.seed, cache, w)
    if name == "coverage":
        return sim.simulate_coverage(_dgp(args), args.m, horizon, shape, args.alpha, c, args.reps, args.seed,
                                     args.l_m, method, w)
    return sim.simulate_rejection(_dgp(args), args.mu0, args.m, horizon, shape, args.alpha, c, args.reps,
                                  args.seed, args.l_m, method, w)


def cmd_simulate(args, out) -> int:
    report = _run_experiment(args)
    out.write((report.to_json() if args.format == "json" else report.to_text()) + "\n")
    out.write(f"{'PASS' if report.passed else 'FAIL'} {report.experiment}\n")
    if args.check and not report.passed:
        return 1
    return 0


# --- selftest ------------------------------------------------------------------------


def cmd_selftest(args, out) -> int:
    """Quick built-in checks; exit status 1 if any fails."""
    results = []
    grid = q.PathGrid.default(args.grid_n)
    for sided in ("two", "one"):
        s = q.sample_bridge_sup(0.0, 0.0, grid, args.paths, args.seed, sided, args.threads)
        value, se = s.quantile(0.05)
        oracle = q.kolmogorov_series_quantile(0.05, sided)
        # discretization lowers the sup by about 0.58 * sqrt(1 / grid_n)
        tol = 4 * se + 0.6 * math.sqrt(1.0 / args.grid_n)
        results.append((f"oracle-{sided}", abs(value - oracle) <= tol, f"mc={value:.5f} oracle={oracle:.5f}"))

    shape = BoundaryShape.canonical(0.0, 0.25)
    c2 = q.CriticalValue.fixed(1.7, "two")
    gen = np.random.default_rng(args.seed)
    bad = 0
    from .sequence import interval, test_two_sided

    for _ in range(200):
        st = StreamState(m=int(gen.integers(1, 200)))
        st.extend(gen.standard_normal(int(gen.integers(1, 60))))
        rec = interval(st, shape, c2)
        mu0 = float(gen.normal(0, 1))
        bad += test_two_sided(st, shape, c2, mu0).reject == rec.contains(mu0)
    results.append(("duality", bad == 0, f"exceptions={bad}"))

    hr = sim.check_hajek_renyi([0.25], 100, [2.0, 4.0], 500, args.seed, "prem")
    results.append(("hajek-renyi", hr.passed, f"rows={len(hr.rows)}"))

    ok = True
    for name, passed, info in results:
        ok &= bool(passed)
        out.write(f"{'PASS' if passed else 'FAIL'}\t{name}\t{info}\n")
    return 0 if ok else 1


# --- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sharpcs", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantile", help="print critical values")
    p.add_argument("--shape", type=_shape, default=BoundaryShape.canonical(0, 0))
    p.add_argument("--alpha", type=_floats, default=[0.05])
    p.add_argument("--sided", choices=("two", "one", "both"), default="two")
    p.add_argument("--full-precision", action="store_true")
    _mc_options(p)
    p.set_defaults(func=cmd_quantile)

    p = sub.add_parser("monitor", help="stream intervals and test verdicts")
    p.add_argument("input", nargs="?", default="-", help="file with one observation per line, '-' for stdin")
    p.add_argument("--shape", type=_shape, default=BoundaryShape.canonical(0, 0.25))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--l-m", default="1", help="integer, 'log' or 'sqrt'")
    p.add_argument("--variance", choices=("iid", "bartlett"), default="iid")
    p.add_argument("--mu0", type=float, action="append", help="null value to test (repeatable)")
    p.add_argument("--side", choices=("two", "right", "left"), default="two")
    p.add_argument("--c", type=float, default=None, help="two-sided critical value (skips Monte Carlo)")
    p.add_argument("--c-one", type=float, default=None, help="one-sided critical value (skips Monte Carlo)")
    p.add_argument("--strict", action="store_true", help="abort on unparseable lines")
    p.add_argument("--full-precision", action="store_true")
    _mc_options(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("simulate", help="run a named Monte Carlo experiment")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--shape", type=_shape, default=BoundaryShape.canonical(0, 0.25))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--m-list", type=_ints, default=None)
    p.add_argument("--horizon", type=int, default=100, help="horizon as a multiple of m")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--l-m", default="1")
    p.add_argument("--variance", choices=("iid", "bartlett"), default="iid")
    p.add_argument("--dgp", choices=("normal", "exp", "ar1"), default="normal")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--phi", type=float, default=0.5)
    p.add_argument("--mu0", type=float, default=0.0)
    p.add_argument("--mus", type=_floats, default=None)
    p.add_argument("--mode", choices=("right", "left", "both"), default="right")
    p.add_argument("--gamma", type=_floats, default=[0.25])
    p.add_argument("--C", type=_floats, default=[2.0, 4.0, 8.0])
    p.add_argument("--side", choices=("prem", "postmv"), default="prem")
    p.add_argument("--g1", type=float, default=0.0)
    p.add_argument("--g2", type=float, default=0.0)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--check", action="store_true", help="exit 1 when the built-in assertion fails")
    _mc_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("selftest", help="quick built-in checks")
    p.add_argument("--paths", type=int, default=20_000)
    p.add_argument("--grid-n", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None, out=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="sharpcs: %(levelname)s: %(message)s")
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (ShapeError, ValueError, UsageError) as exc:
        sys.stderr.write(f"sharpcs: error: {exc}\n")
        return 2
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
