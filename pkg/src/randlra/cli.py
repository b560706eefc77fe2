"""Command-line front end: ``randlra {genmat,approx,experiment}``.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments, krylov, normal, oneview, subspace
from .errors import ArgumentError, RandLRAError
from .linalg import CountingOperator, DiagonalOperator, EvdPair, gaussian_matrix, make_rng
from .mmio import read_matrix, read_spectrum, write_matrix, write_spectrum
from .streams import CountingRowStream, DenseRowStream
from .testbed import (
    KINDS,
    TestMatrix,
    TestMatrixSpec,
    approx_errors,
    approx_residual,
    canonical_kind,
    gen_test_matrix,
    normal_errors,
    normal_residual,
)

VIEW_METHODS = ("subspace", "subspace-v2", "krylov", "nystrom", "pinched")
ONEVIEW_METHODS = ("oneview-tropp", "oneview-woolfe", "oneview-extended")
METHODS = VIEW_METHODS + ONEVIEW_METHODS + ("rowstream",)
PLANS = ("flat", "decay", "rapid", "balanced", "minvar", "extended")


class UsageError(Exception):
    """Bad flag combination; reported with exit code 2."""


def _parser():
    ap = argparse.ArgumentParser(prog="randlra", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("genmat", help="write a test matrix or its spectrum")
    g.add_argument("--kind", required=True, help=f"one of {', '.join(KINDS)} (case-insensitive)")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--R", type=int, default=10)
    g.add_argument("--param", type=float, default=None, help="eta, rho or theta")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--spectrum-file", default=None, help="DiagSurrogate spectrum (default: shipped)")
    g.add_argument("--format", choices=("auto", "mtx", "spectrum"), default="auto",
                   help="auto: spectrum for diagonal kinds, Matrix Market for noise kinds")
    g.add_argument("--out", required=True)

    a = sub.add_parser("approx", help="run one approximation method")
    a.add_argument("--method", required=True, choices=METHODS + ("oneview",))
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="Matrix Market file; a .spec/.txt file is read as a diagonal spectrum")
    src.add_argument("--kind", help="generate a test matrix instead of reading one")
    a.add_argument("--n", type=int, default=1000, help="size for --kind")
    a.add_argument("--p", type=int, required=True)
    a.add_argument("--l", type=int, default=None)
    a.add_argument("--l1", type=int, default=None)
    a.add_argument("--l2", type=int, default=None)
    a.add_argument("--lc", type=int, default=None)
    a.add_argument("--alpha", type=float, default=None)
    a.add_argument("--plan", choices=PLANS, default=None)
    a.add_argument("--T", type=int, default=None, help="1-view budget for a named plan")
    a.add_argument("--variant", choices=("bwz", "bwz2"), default=None)
    a.add_argument("--v", type=int, default=None)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("experiment", help="reproduce an experiment table as CSV")
    which = e.add_mutually_exclusive_group(required=True)
    which.add_argument("--figure", type=int, choices=sorted(experiments.FIGURES))
    which.add_argument("--name", choices=sorted(experiments.NAMED))
    e.add_argument("--trials", type=int, default=None, help="default: 500 for figure 3, 50 otherwise")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--n", type=int, default=1000, help="test-matrix dimension")
    e.add_argument("--threads", type=int, default=None, help="trial threads (default RANDLRA_THREADS or 1)")
    e.add_argument("--out-dir", default=".")
    return ap


# ---------------------------------------------------------------------------
# genmat
# ---------------------------------------------------------------------------

def cmd_genmat(args) -> None:
    kind = canonical_kind(args.kind)
    spec = TestMatrixSpec(kind, args.n, args.R, args.param, args.seed, args.spectrum_file)
    tm = gen_test_matrix(spec)
    fmt = args.format
    if fmt == "auto":
        fmt = "spectrum" if isinstance(tm.op, DiagonalOperator) else "mtx"
    if fmt == "spectrum":
        write_spectrum(args.out, tm.sigma)
    else:
        r = spec.resolved()
        write_matrix(args.out, tm.dense(), comment=f"kind={kind} n={r.n} R={r.R} param={r.param!r} seed={r.seed}")


# ---------------------------------------------------------------------------
# approx
# ---------------------------------------------------------------------------

def _load_input(args) -> TestMatrix:
    if args.kind is not None:
        return gen_test_matrix(TestMatrixSpec(args.kind, n=args.n))
    path = Path(args.input)
    if path.suffix in (".spec", ".txt"):
        s = read_spectrum(path)
        return TestMatrix(path.name, DiagonalOperator(s), s)
    return TestMatrix.from_dense(read_matrix(path), path.name)


def _check_flags(args):
    m = args.method
    given = {f for f in ("l", "l1", "l2", "lc", "alpha", "plan", "T", "variant", "v")
             if getattr(args, f) is not None}
    if m in VIEW_METHODS:
        allowed = {"l", "v"}
    elif m == "rowstream":
        allowed = {"l"}
    else:
        allowed = {"l1", "l2", "lc", "alpha", "plan", "T", "variant"}
    bad = sorted(given - allowed)
    if bad:
        raise UsageError(f"--method {m} does not accept " + ", ".join(f"--{b}" for b in bad))
    if m in VIEW_METHODS and args.v is None:
        raise UsageError(f"--method {m} needs --v")
    if args.variant is not None and m != "oneview-extended":
        raise UsageError("--variant only applies to oneview-extended")


def _oneview_plan(args, shape):
    explicit = [f for f in ("l1", "l2", "lc") if getattr(args, f) is not None]
    p = args.p
    if args.plan is None:
        if args.alpha is not None or args.T is not None:
            raise UsageError("--alpha and --T need --plan")
        if len(explicit) < 2 or args.l1 is None or args.l2 is None:
            raise UsageError("give --l1 and --l2 (and optionally --lc), or --plan with --T")
        lc = args.l1 if args.lc is None else args.lc
        if args.method == "oneview-extended":
            T = 2 * p + args.l1 + args.l2
            raise UsageError(f"oneview-extended needs --plan extended --T (e.g. --T {T + 4})")
        return oneview.OversamplingPlan(p, args.l1, args.l2, lc, 2 * p + args.l1 + args.l2)
    if explicit:
        raise UsageError(f"--plan {args.plan} conflicts with " + ", ".join(f"--{f}" for f in explicit))
    if args.T is None:
        raise UsageError(f"--plan {args.plan} needs --T")
    if (args.plan == "balanced") != (args.alpha is not None):
        raise UsageError("--alpha is required with --plan balanced and only valid there")
    if (args.plan == "extended") != (args.method == "oneview-extended"):
        raise UsageError("--plan extended goes with --method oneview-extended")
    if args.plan == "minvar" and args.method != "oneview-tropp":
        raise UsageError("--plan minvar goes with --method oneview-tropp")
    make = {"flat": oneview.plan_flat, "decay": oneview.plan_decay, "rapid": oneview.plan_rapid}
    if args.plan in make:
        return make[args.plan](p, args.T)
    if args.plan == "balanced":
        return oneview.plan_balanced(p, args.T, args.alpha)
    if args.plan == "minvar":
        return oneview.plan_balanced(p, args.T, 0.0)
    return oneview.plan_extended(p, args.T, *shape)


def _run_approx(args, tm):
    m = args.method
    rng = make_rng(args.seed)
    op = CountingOperator(tm.op)
    meta = {"method": m, "p": args.p, "seed": args.seed, "shape": list(tm.shape)}
    if m in VIEW_METHODS:
        l = 0 if args.l is None else args.l
        meta.update(l=l, v=args.v)
        fn = {"subspace": subspace.generalized_subspace_iter,
              "subspace-v2": subspace.generalized_subspace_iter_v2,
              "krylov": krylov.block_krylov_svd, "nystrom": normal.nystrom_normal,
              "pinched": normal.pinched_normal}[m]
        res = fn(op, args.p, l, args.v, rng)
        meta.update(views=op.views, products=op.products)
    elif m == "rowstream":
        l = 0 if args.l is None else args.l
        stream = CountingRowStream(DenseRowStream(tm.dense()))
        omega = gaussian_matrix(rng, tm.shape[1], args.p + l)
        res = oneview.row_stream_qb(stream, omega, args.p)
        meta.update(l=l, passes=stream.passes, views=stream.passes)
    else:
        plan = _oneview_plan(args, tm.shape)
        meta["plan"] = {"l1": plan.l1, "l2": plan.l2, "lc": plan.lc, "T": plan.T, "s": plan.s,
                        "name": args.plan or "explicit"}
        bundle = oneview.sketch(op, plan, rng)
        if args.plan == "minvar":
            res = oneview.one_view_minvar(bundle, plan)
            meta["plan"]["lc"] = res.flags["lc"]
        elif m == "oneview-tropp":
            res = oneview.one_view_tropp(bundle, plan)
        elif m == "oneview-woolfe":
            res = oneview.one_view_woolfe(bundle, plan)
        else:
            res = oneview.extended_sketch_approx(bundle, plan, args.variant or "bwz2")
        meta.update(views=op.views, products=op.products)
    return res, meta


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    return x


def cmd_approx(args) -> None:
    if args.method == "oneview":
        args.method = "oneview-tropp"
    _check_flags(args)
    tm = _load_input(args)
    t0 = time.perf_counter()
    res, meta = _run_approx(args, tm)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(res, EvdPair):
        errs = normal_errors(tm, res, args.p)
        resid = normal_residual(tm, res, ("frob",))["frob"]
        total = float(np.sqrt(np.sum(tm.sigma ** 4)))
        write_matrix(out / "V.mtx", res.V)
        write_matrix(out / "lambda.mtx", res.lambda_sq.reshape(-1, 1))
    else:
        errs = approx_errors(tm, res, args.p)
        resid = approx_residual(tm, res, ("frob",))["frob"]
        total = float(np.sqrt(np.sum(tm.sigma ** 2)))
        write_matrix(out / "U.mtx", res.U)
        write_matrix(out / "lambda.mtx", res.s.reshape(-1, 1))
        write_matrix(out / "V.mtx", res.V)
    # residual / |A|_F stays meaningful when the optimal error is zero
    meta["errors"] = {"relFrob": errs["frob"], "relSpec": errs["spec"], "absolute": errs["absolute"],
                      "residualFrobOverNorm": resid / total if total > 0 else resid}
    meta["flags"] = {k: v for k, v in res.flags.items() if k != "variances"}
    meta["timings"] = {"seconds": elapsed}
    with open(out / "run.jsonl", "w") as fh:
        fh.write(json.dumps(_jsonable(meta), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([experiments.format_value(r.get(c)) for c in columns])


def cmd_experiment(args) -> None:
    fn, columns = experiments.resolve(args.figure, args.name)
    trials = experiments.DEFAULT_TRIALS[fn] if args.trials is None else args.trials
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    kw = {"trials": trials, "seed": args.seed}
    if fn is not experiments.lm_table:
        kw.update(n=args.n, threads=args.threads)
    t0 = time.perf_counter()
    rows = fn(**kw)
    elapsed = time.perf_counter() - t0
    stem = f"figure{args.figure}" if args.figure is not None else args.name
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{stem}.csv", columns, rows)
    meta = {"experiment": stem, "trials": trials, "seed": args.seed, "rows": len(rows),
            "timings": {"seconds": elapsed}}
    if fn is not experiments.lm_table:
        meta["n"] = args.n
    with open(out / f"{stem}.jsonl", "w") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")


COMMANDS = {"genmat": cmd_genmat, "approx": cmd_approx, "experiment": cmd_experiment}


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (UsageError, ArgumentError) as exc:
        ap.print_usage(sys.stderr)
        print(f"randlra {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (RandLRAError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"randlra {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
