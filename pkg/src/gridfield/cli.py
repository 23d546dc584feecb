"""Command-line interface: ``gridfield simulate|loglik|estimate|fisher|validate|bench``.

Every command prints one JSON report to stdout, or writes it to ``--out``.
``simulate`` writes a field file instead. Files are written to a temporary
sibling first and renamed into place. Invalid input exits with status 2 and
a one-line diagnostic on stderr. ``validate`` exits with status 1 when any
check fails.
"""

import argparse
import json
import math
import os
import sys
import tempfile
import time
import timeit
import warnings
from contextlib import contextmanager
from unittest import mock

import numpy as np

from . import asymptotics, estimation, likelihood, oracle, sampling
from . import structured_linalg as sl
from .kernel import GridSpec, ModelParams, ScalarContext, corr_matrix

FIELD_MAGIC = "# gridfield-field v1"
ORDERING = "lexicographic-ascending"
REPORT_VERSION = 1

# validate defaults; each can be replaced with --tol-override key=val
DEFAULT_TOLS = {
    "logdet": 1e-9,
    "inverse_entry": 1e-7,
    "inverse_floor": 1e-6,
    "inverse_residual": 1e-7,
    "cofactor": 1e-9,
    "leading_const": 10.0,
    "inverse_approx": 1e-9,
    "trace_ratio_lo": 3.0,
    "trace_ratio_hi": 5.0,
    "fisher_rel": 0.15,
    "loglik": 1e-8,
    "continuity": 1e-9,
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- file I/O

def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gridfield-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_field(field):
    """Field file text: header lines, then one ``repr`` value per line."""
    meta = field.meta
    head = [FIELD_MAGIC,
            f"# d: {field.grid.d}",
            f"# n: {field.grid.n}",
            f"# phi: {meta.get('phi', '')!r}",
            "# theta: " + " ".join(repr(float(t)) for t in meta.get("theta", [])),
            f"# seed: {meta.get('seed', '')}",
            f"# stream: {meta.get('stream', '')}",
            f"# ordering: {ORDERING}"]
    body = [repr(float(v)) for v in field.values]
    return "\n".join(head + body) + "\n"


def parse_field(text):
    """Inverse of :func:`format_field`. Raises ``UsageError`` on malformed input."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != FIELD_MAGIC:
        raise UsageError("not a gridfield field file (missing version line)")
    header, values = {}, []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s[1:].partition(":")
            if not sep:
                raise UsageError(f"line {lineno}: malformed header")
            header[key.strip()] = val.strip()
            continue
        try:
            values.append(float(s))
        except ValueError:
            raise UsageError(f"line {lineno}: not a number: {s!r}") from None
    try:
        d, n = int(header["d"]), int(header["n"])
    except (KeyError, ValueError):
        raise UsageError("header must declare integer d and n") from None
    if header.get("ordering", ORDERING) != ORDERING:
        raise UsageError(f"unsupported ordering {header['ordering']!r}")
    if not all(math.isfinite(v) for v in values):
        raise UsageError("field contains non-finite values")
    meta = {"ordering": ORDERING}
    try:
        if header.get("phi"):
            meta["phi"] = float(header["phi"])
        if header.get("theta"):
            meta["theta"] = [float(t) for t in header["theta"].split()]
        for key in ("seed", "stream"):
            if header.get(key):
                meta[key] = int(header[key])
    except ValueError as exc:
        raise UsageError(f"malformed header value: {exc}") from None
    try:
        grid = GridSpec(n, d)
        return likelihood.LatticeField(np.array(values), grid, meta)
    except (ValueError, MemoryError) as exc:
        raise UsageError(str(exc)) from None


def _read_field(path):
    try:
        with open(path) as fh:
            return parse_field(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _emit(report, out):
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


# ---------------------------------------------------------------- arguments

def _params(args, d, meta=None):
    meta = meta or {}
    phi = args.phi if args.phi is not None else meta.get("phi")
    thetas = args.theta if args.theta else meta.get("theta")
    if phi is None or not thetas:
        raise UsageError("need --phi and --theta (or a field header that declares them)")
    if len(thetas) == 1 and d > 1:
        thetas = list(thetas) * d
    if len(thetas) != d:
        raise UsageError(f"need 1 or {d} values of --theta, got {len(thetas)}")
    try:
        return ModelParams(phi, thetas)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(args):
    if args.n is None:
        raise UsageError("--n is required")
    try:
        return GridSpec(args.n, args.d)
    except (ValueError, MemoryError) as exc:
        raise UsageError(str(exc)) from None


def _parse_bounds(specs, d):
    bounds = {}
    for spec in specs or []:
        parts = spec.split(":")
        try:
            t, lo, hi = int(parts[0]), float(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            raise UsageError(f"--bounds expects t:lo:hi, got {spec!r}") from None
        if len(parts) != 3 or not 0 <= t <= d:
            raise UsageError(f"--bounds {spec!r}: t must be in 0..{d}")
        bounds[t] = (lo, hi)
    missing = [t for t in range(d + 1) if t not in bounds]
    if missing:
        raise UsageError(f"--bounds missing for parameter index {missing}")
    return [bounds[t] for t in range(d + 1)]


def _parse_tols(specs):
    tols = dict(DEFAULT_TOLS)
    for spec in specs or []:
        key, sep, val = spec.partition("=")
        if not sep or key not in DEFAULT_TOLS:
            raise UsageError(f"unknown tolerance override {spec!r}; keys: {sorted(DEFAULT_TOLS)}")
        try:
            tols[key] = float(val)
        except ValueError:
            raise UsageError(f"tolerance {key} needs a number") from None
    return tols


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    grid = _grid(args)
    params = _params(args, grid.d)
    if args.seed is None:
        raise UsageError("--seed is required")
    try:
        stream = sampling.SeededStream(args.seed, args.stream)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    field = sampling.sample_field(params, grid, stream)
    text = format_field(field)
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_loglik(args):
    field = _read_field(args.field)
    params = _params(args, field.grid.d, field.meta)
    parts = likelihood.loglik_parts(field, params)
    _emit({"command": "loglik", "version": REPORT_VERSION, "d": field.grid.d, "n": field.grid.n,
           "phi": params.phi, "theta": list(params.thetas), **parts}, args.out)
    return 0


def cmd_estimate(args):
    field = _read_field(args.field)
    d = field.grid.d
    report = {"command": "estimate", "version": REPORT_VERSION, "mode": args.mode,
              "d": d, "n": field.grid.n}
    t0 = time.perf_counter()
    if args.mode == "phi-only":
        tt = args.theta_tilde
        if not tt:
            raise UsageError("phi-only mode needs --theta-tilde")
        if len(tt) == 1 and d > 1:
            tt = list(tt) * d
        try:
            phi_hat = estimation.estimate_phi(field, tt)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        report.update(phi_hat=phi_hat, theta_tilde=list(tt))
    else:
        bounds = _parse_bounds(args.bounds, d)
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                sieve = estimation.build_sieve(bounds, field.grid.n, args.nu)
            result = estimation.sieve_mle(field, sieve, mode=args.search)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        for w in caught:
            print(f"gridfield: warning: {w.message}", file=sys.stderr)
        report.update(phi_hat=result.phi_hat, theta_hats=list(result.theta_hats),
                      loglik_at_max=result.loglik_at_max, search=args.search,
                      stats={"evaluations": result.evaluations, "sieve_size": sieve.size,
                             "ties": result.ties, "nu": sieve.nu, "mesh": sieve.mesh,
                             "consistent_regime": sieve.consistent})
    report["seconds"] = time.perf_counter() - t0
    _emit(report, args.out)
    return 0


def cmd_fisher(args):
    grid = _grid(args)
    params = _params(args, grid.d)
    report = {"command": "fisher", "version": REPORT_VERSION, "d": grid.d, "n": grid.n,
              "phi": params.phi, "theta": list(params.thetas),
              "order": ["phi"] + [f"theta_{t + 1}" for t in range(grid.d)],
              "asymptotic": likelihood.fisher_asymptotic(params, grid.n)}
    if grid.n <= likelihood.MAX_FISHER_N:
        report["exact"] = likelihood.fisher_trace_exact(params, grid.n)
    _emit(report, args.out)
    return 0


# ---------------------------------------------------------------- validate

def _rel(a, b, floor=1.0):
    return abs(a - b) / max(floor, abs(b))


def _suite_determinant(tols, quick):
    worst_dense = worst_rec = 0.0
    ns = range(2, 17 if quick else 65)
    for th in (0.5, 1.0, 2.0, 5.0):
        for n in ns:
            ctx = ScalarContext(th, n)
            c = float(sl.logdet_closed(ctx).log_mag)
            dense = float(oracle.dense_logdet(corr_matrix(ctx)).log_mag)
            rec = float(sl.logdet_recurrence(ctx).log_mag)
            worst_dense = max(worst_dense, _rel(c, dense))
            worst_rec = max(worst_rec, _rel(c, rec))
    return [("closed vs dense LU log-determinant", worst_dense, tols["logdet"]),
            ("closed vs recurrence log-determinant", worst_rec, tols["logdet"])]


def _suite_cofactor(tols, quick):
    worst = 0.0
    for th in (0.5, 2.0):
        for n in range(2, 9 if quick else 13):
            ctx = ScalarContext(th, n)
            M = oracle.dense_corr_matrix(ctx, wide=True)
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    c = sl.cofactor_closed(ctx, i, j)
                    ref = oracle.dense_minor_det(M, i, j)
                    if c.sign != ref.sign:
                        worst = math.inf
                    else:
                        worst = max(worst, abs(float(c.log_mag) - float(ref.log_mag)))
    return [("closed minors vs wide dense minors (log error, sign)", worst, tols["cofactor"])]


def _suite_inverse(tols, quick):
    floor = tols["inverse_floor"]
    worst_entry = worst_res = 0.0
    for th in (0.5, 1.0, 2.0, 5.0):
        for n in range(5, 11 if quick else 17):
            ctx = ScalarContext(th, n)
            ref = oracle.dense_inverse(oracle.dense_corr_matrix(ctx, wide=True))
            big = np.abs(ref) > floor
            for i, j in zip(*np.nonzero(big)):
                v = sl.inverse_entry(ctx, i + 1, j + 1)
                worst_entry = max(worst_entry, abs(v - ref[i, j]) / abs(ref[i, j]))
        for n in (16, 32) if quick else range(2, 65):
            ctx = ScalarContext(th, n)
            res = np.abs(sl.inverse_matrix(ctx) @ corr_matrix(ctx) - np.eye(n)).max()
            worst_res = max(worst_res, res)
    return [("inverse entries vs wide dense inverse (relative)", worst_entry, tols["inverse_entry"]),
            ("max |R^-1 R - I|", worst_res, tols["inverse_residual"])]


def _suite_asymptotic(tols, quick):
    r = asymptotics.ROOT_RATIO_LIMIT
    worst_c = 0.0
    for n in range(8, 31):
        ctx = ScalarContext(1.0, n)
        approx = asymptotics.logdet_approx(ctx, "leading")
        exact = sl.logdet_closed(ctx)
        ratio_m1 = abs(math.expm1(float(approx.log_mag - exact.log_mag)))
        worst_c = max(worst_c, ratio_m1 / r**n)
    n = 30
    ctx = ScalarContext(1.0, n)
    worst_e = 0.0
    for i, j in [(n, n), (1, n), (2, n), (2, n - 1), (n - 1, n - 1), (n - 1, n),
                 (10, 21), (12, 19), (15, 16), (15, 15), (20, 20), (20, 21), (12, 24)]:
        a = asymptotics.inverse_entry_approx(ctx, i, j)
        e = sl.inverse_entry(ctx, i, j)
        worst_e = max(worst_e, abs(a - e) / abs(e))
    return [("leading determinant error / ((2-sqrt3)/(2+sqrt3))^n, n in 8..30", worst_c,
             tols["leading_const"]),
            ("approximate inverse entries at n=30 (relative)", worst_e, tols["inverse_approx"])]


def _suite_traces(tols, quick):
    lo, hi = tols["trace_ratio_lo"], tols["trace_ratio_hi"]
    ratios = []
    for th in (0.5, 1.0, 2.0):
        for tt in (0.5, 1.0, 2.0):
            if th == tt:
                continue
            e16, e32 = (abs(asymptotics.trace_rinv_r(th, tt, n)
                            - asymptotics.trace_rinv_r_exact(th, tt, n)) for n in (16, 32))
            ratios.append(e16 / e32)
        d16, d32 = (np.abs(np.subtract(asymptotics.trace_derivatives(th, n),
                                       asymptotics.trace_derivatives_exact(th, n)))
                    for n in (16, 32))
        ratios.extend(d16 / d32)
    # report the distance outside [lo, hi]; 0 means every ratio is inside
    excess = max(max(lo - q, q - hi, 0.0) for q in ratios)
    return [(f"trace expansion error ratio n=16/n=32 outside [{lo}, {hi}]", excess, 0.0)]


def _suite_fisher(tols, quick):
    p1 = ModelParams(1.7, (0.8,))
    F1 = likelihood.fisher_trace_exact(p1, 20)
    phiphi = abs(F1[0, 0] - 20 / (2 * 1.7**2)) / F1[0, 0]
    n = 16 if quick else 32
    F3 = likelihood.fisher_trace_exact(ModelParams(1.0, (1.0, 1.0, 1.0)), n)
    gap = abs(F3[1, 1] / (7 * n**2) - 1)
    return [("d=1 (phi, phi) entry vs n/(2 phi^2)", phiphi, 1e-12),
            (f"d=3 n={n} (theta, theta) entry vs 7 n^2 (relative)", gap, tols["fisher_rel"])]


def _suite_likelihood(tols, quick):
    worst = 0.0
    rng = np.random.default_rng(0)
    for d, n in ((1, 6), (2, 4)):
        params = ModelParams(1.3, (0.7, 2.0)[:d])
        field = likelihood.LatticeField(rng.standard_normal(n**d), GridSpec(n, d))
        worst = max(worst, _rel(likelihood.loglik(field, params),
                                oracle.dense_mvn_logdensity(field, params)))
    return [("structured vs dense log-likelihood", worst, tols["loglik"])]


def _suite_continuity(tols, quick):
    worst = 0.0
    for th in (0.5, 1.0, 2.0, 5.0):
        ctx = ScalarContext(th, int(round(th / sl.CROSSOVER_W)))
        for fam in sl.FAMILIES:
            for k in (-2, -1, 0, 1, 2, 5):
                a = sl.tau_values(ctx, k, fam, "wide")
                if a != 0:
                    worst = max(worst, _rel(sl.tau_values(ctx, k, fam, "double"), a, floor=0.0))
        ra, rb = sl.roots(ctx, "wide"), sl.roots(ctx, "double")
        for name in ("a", "b", "a_tilde", "b_tilde", "alpha1", "alpha2", "disc"):
            worst = max(worst, _rel(float(getattr(rb, name)), float(getattr(ra, name)), floor=0.0))
    return [("wide vs double scalar paths at the crossover", worst, tols["continuity"])]


SUITES = {
    "determinant": ("exact determinant", _suite_determinant),
    "cofactor": ("closed-form minors", _suite_cofactor),
    "inverse": ("exact inverse", _suite_inverse),
    "asymptotic": ("large-n determinant and inverse approximations", _suite_asymptotic),
    "traces": ("trace expansions", _suite_traces),
    "fisher": ("Fisher information", _suite_fisher),
    "likelihood": ("Kronecker log-likelihood", _suite_likelihood),
    "continuity": ("numerical path continuity", _suite_continuity),
}


@contextmanager
def _injected(mutation):
    if mutation is None:
        yield
        return
    if mutation != "sign-flip":
        raise UsageError(f"unknown mutation {mutation!r}")
    original = sl.cofactor_closed

    def flipped(ctx, i, j, precision="wide"):
        value = original(ctx, i, j, precision)
        ci, cj = sl.canonical_index(i, j, ctx.n)
        return -value if sl.cofactor_family(ci, cj, ctx.n) == "diag" else value

    with mock.patch.object(sl, "cofactor_closed", flipped), \
            mock.patch.object(sl, "inverse_matrix", _entrywise_inverse):
        yield


def _entrywise_inverse(ctx, precision="wide"):
    n = ctx.n
    return np.array([[sl.inverse_entry(ctx, i, j, precision) for j in range(1, n + 1)]
                     for i in range(1, n + 1)])


def cmd_validate(args):
    tols = _parse_tols(args.tol_override)
    names = args.suite or list(SUITES)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    results, all_ok = [], True
    with _injected(args.inject):
        for name in names:
            title, fn = SUITES[name]
            t0 = time.perf_counter()
            checks = []
            for label, value, tol in fn(tols, args.quick):
                ok = bool(value <= tol)
                all_ok &= ok
                checks.append({"check": label, "value": value, "tolerance": tol, "passed": ok})
                print(f"[{'PASS' if ok else 'FAIL'}] {name}: {label}: {value:.3g} (tol {tol:g})",
                      file=sys.stderr)
            results.append({"suite": name, "covers": title, "checks": checks,
                            "passed": all(c["passed"] for c in checks),
                            "seconds": time.perf_counter() - t0})
    _emit({"command": "validate", "version": REPORT_VERSION, "passed": all_ok,
           "inject": args.inject, "quick": args.quick, "tolerances": tols, "suites": results},
          args.out)
    return 0 if all_ok else 1


# ---------------------------------------------------------------- bench

def _time(fn, repeat, min_sample=0.05):
    # per-call seconds; each sample loops until it spans min_sample to damp timer noise
    timer = timeit.Timer(fn)
    number = 1
    while timer.timeit(number) < min_sample:
        number *= 2
    return min(timer.repeat(repeat=repeat, number=number)) / number


def cmd_bench(args):
    grid = _grid(args)
    params = _params(args, grid.d) if (args.phi is not None or args.theta) else \
        ModelParams(1.0, (1.0,) * grid.d)
    field = sampling.sample_field(params, grid, sampling.SeededStream(args.seed or 0))
    likelihood._cache.clear()
    t0 = time.perf_counter()
    value = likelihood.loglik(field, params)
    cold = time.perf_counter() - t0
    warm = _time(lambda: likelihood.loglik(field, params), args.repeat)
    report = {"command": "bench", "version": REPORT_VERSION, "d": grid.d, "n": grid.n,
              "sites": grid.size, "loglik": value,
              "structured_seconds": {"cold": cold, "warm": warm}}
    if grid.size <= oracle.DENSE_MAX_SITES:
        dense = _time(lambda: oracle.dense_mvn_logdensity(field, params), args.repeat)
        report["dense_seconds"] = dense
        report["speedup_warm"] = dense / warm
        report["speedup_cold"] = dense / cold
        report["dense_feasible"] = True
    else:
        report["dense_seconds"] = None
        report["dense_feasible"] = False
        report["dense_reason"] = f"{grid.size} sites exceed the dense limit {oracle.DENSE_MAX_SITES}"
    _emit(report, args.out)
    return 0


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="gridfield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=True, model=True):
        if grid:
            sp.add_argument("--n", type=int, help="points per axis")
            sp.add_argument("--d", type=int, default=1, help="dimension")
        if model:
            sp.add_argument("--phi", type=float)
            sp.add_argument("--theta", type=float, action="append",
                            help="decay rate; repeat once per axis or give one for all")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--tol-override", action="append", metavar="KEY=VAL")

    sp = sub.add_parser("simulate", help="draw a field")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--stream", type=int, default=0)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("loglik", help="exact log-likelihood of a field file")
    common(sp, grid=False)
    sp.add_argument("field")
    sp.set_defaults(func=cmd_loglik)

    sp = sub.add_parser("estimate", help="scale estimate or sieve MLE")
    common(sp, grid=False, model=False)
    sp.add_argument("field")
    sp.add_argument("--mode", choices=("phi-only", "sieve"), default="sieve")
    sp.add_argument("--theta-tilde", type=float, action="append")
    sp.add_argument("--bounds", action="append", metavar="T:LO:HI",
                    help="interval for parameter T (0 is phi)")
    sp.add_argument("--nu", type=float)
    sp.add_argument("--search", choices=("exhaustive", "coarse-to-fine"), default="exhaustive")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("fisher", help="asymptotic and exact Fisher information")
    common(sp)
    sp.set_defaults(func=cmd_fisher)

    sp = sub.add_parser("validate", help="oracle-equivalence suites")
    common(sp, grid=False, model=False)
    sp.add_argument("--suite", action="append", help=f"one of {list(SUITES)}; repeatable")
    sp.add_argument("--quick", action="store_true", help="smaller sizes")
    sp.add_argument("--inject", choices=("sign-flip",),
                    help="mutation smoke test: negate the interior diagonal minors")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("bench", help="structured vs dense log-likelihood timings")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--repeat", type=int, default=3)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gridfield: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, MemoryError, OverflowError, OSError) as exc:
        print(f"gridfield: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
