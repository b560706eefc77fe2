"""Synthetic test matrices, relative error metrics and the trial runner.

Errors are always measured in the singular basis of the test matrix: for
``A = W diag(sigma) Z^T`` the residual ``A - U diag(s) V^T`` has the same
norms as ``diag(sigma) - (W^T U s)(Z^T V)^T``, a diagonal-minus-low-rank
operator that is cheap to apply.  Decay kinds are diagonal, so W = Z = I.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ArgumentError, BudgetError
from .linalg import (
    DenseOperator,
    DiagonalOperator,
    EvdPair,
    LowRankResidual,
    RANK_TOL,
    SvdTriple,
    make_rng,
    spectral_norm,
)
from .mmio import read_spectrum

KINDS = ("LowRankMedNoise", "LowRankHiNoise", "PolySlow", "PolyFast", "ExpFast", "ExpSlow",
         "DiagSurrogate")
SYNTHETIC = KINDS[:6]
DEFAULT_PARAM = {"LowRankMedNoise": 1e-2, "LowRankHiNoise": 1.0, "PolySlow": 1.0,
                 "PolyFast": 2.0, "ExpFast": 1.0, "ExpSlow": 0.25}
_ALIASES = {k.lower(): k for k in KINDS}
_ALIASES.update({"lowrankmed": "LowRankMedNoise", "lowrankhi": "LowRankHiNoise",
                 "diagsurrogate": "DiagSurrogate", "surrogate": "DiagSurrogate"})
SURROGATE_FILE = "synthetic_geothermal_like_spectrum.txt"


def canonical_kind(kind: str) -> str:
    try:
        return _ALIASES[kind.lower()]
    except (KeyError, AttributeError):
        raise ArgumentError(f"unknown matrix kind {kind!r}; choose from {', '.join(KINDS)}") from None


@dataclass(frozen=True)
class TestMatrixSpec:
    __test__ = False  # not a pytest class

    kind: str
    n: int = 1000
    R: int = 10
    param: float | None = None
    seed: int = 0
    spectrum_file: str | None = None

    def resolved(self) -> "TestMatrixSpec":
        kind = canonical_kind(self.kind)
        param = self.param if self.param is not None else DEFAULT_PARAM.get(kind)
        return TestMatrixSpec(kind, self.n, self.R, param, self.seed, self.spectrum_file)


@dataclass
class TestMatrix:
    """Operator plus its singular value decomposition for exact metrics.

    ``W``/``Z`` are None for diagonal matrices (identity bases).
    """

    __test__ = False

    name: str
    op: object
    sigma: np.ndarray
    W: np.ndarray | None = None
    Z: np.ndarray | None = None

    @property
    def shape(self):
        return self.op.shape

    @classmethod
    def from_dense(cls, A, name="dense"):
        A = np.asarray(A, dtype=float)
        W, s, Zt = np.linalg.svd(A, full_matrices=True)
        return cls(name, DenseOperator(A), s, W, Zt.T)

    def dense(self) -> np.ndarray:
        return self.op.to_dense()

    def diag_operator(self, values=None):
        vals = self.sigma if values is None else values
        return DiagonalOperator(vals, self.shape if values is None else (vals.size, vals.size))


def _noise_matrix(n, R, eta, seed):
    G = make_rng(seed, 1).standard_normal((n, n))
    A = math.sqrt(eta * R / (2.0 * n * n)) * (G + G.T)
    A[np.arange(R), np.arange(R)] += 1.0
    return A


def decay_spectrum(kind: str, n: int = 1000, R: int = 10, param: float | None = None) -> np.ndarray:
    kind = canonical_kind(kind)
    param = DEFAULT_PARAM[kind] if param is None else param
    if kind not in ("PolySlow", "PolyFast", "ExpFast", "ExpSlow"):
        raise ArgumentError(f"{kind} has no closed-form spectrum")
    if not 0 <= R <= n:
        raise ArgumentError("need 0 <= R <= n")
    k = np.arange(1, n - R + 1, dtype=float)
    tail = (k + 1) ** (-param) if kind.startswith("Poly") else 10.0 ** (-k * param)
    return np.concatenate([np.ones(R), tail])


def surrogate_spectrum(path=None, n=None) -> np.ndarray:
    if path is None:
        with resources.as_file(resources.files("randlra") / "data" / SURROGATE_FILE) as f:
            s = read_spectrum(f)
    else:
        s = read_spectrum(path)
    if n is not None:
        if n > s.size:
            raise ArgumentError(f"spectrum file has {s.size} values, need n = {n}")
        s = s[:n]
    return s


@lru_cache(maxsize=16)
def _build(spec: TestMatrixSpec) -> TestMatrix:
    kind = spec.kind
    if spec.n < 1:
        raise ArgumentError("n must be >= 1")
    if kind in ("LowRankMedNoise", "LowRankHiNoise"):
        if not 0 <= spec.R <= spec.n:
            raise ArgumentError("need 0 <= R <= n")
        tm = TestMatrix.from_dense(_noise_matrix(spec.n, spec.R, spec.param, spec.seed), kind)
        tm.op.matrix.setflags(write=False)
        return tm
    if kind == "DiagSurrogate":
        s = surrogate_spectrum(spec.spectrum_file, spec.n)
        return TestMatrix(kind, DiagonalOperator(s), s)
    s = decay_spectrum(kind, spec.n, spec.R, spec.param)
    return TestMatrix(kind, DiagonalOperator(s), s)


def gen_test_matrix(spec: TestMatrixSpec | str, **kw) -> TestMatrix:
    """Build (and cache) a test matrix.  Accepts a spec or a kind name."""
    if isinstance(spec, str):
        spec = TestMatrixSpec(spec, **kw)
    return _build(spec.resolved())


def as_test_matrix(A) -> TestMatrix:
    if isinstance(A, TestMatrix):
        return A
    if isinstance(A, (TestMatrixSpec, str)):
        return gen_test_matrix(A)
    if isinstance(A, DiagonalOperator) and A.shape[0] == A.shape[1] and np.all(np.diff(A.diag) <= 0):
        return TestMatrix("diagonal", A, A.diag)
    if isinstance(A, np.ndarray):
        return TestMatrix.from_dense(A)
    return TestMatrix.from_dense(A.to_dense())


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _residual_norms(sigma, L, R, metrics):
    """Norms of ``diag(sigma) - L R^T`` (possibly rectangular diagonal)."""
    out = {}
    n_r, n_c = L.shape[0], R.shape[0]
    k = sigma.size
    if "frob" in metrics:
        cross = math.fsum(sigma * np.sum(L[:k] * R[:k], axis=1))
        gram = float(np.sum((L.T @ L) * (R.T @ R)))
        total = math.fsum(sigma ** 2)
        sq = total - 2 * cross + gram
        if sq < 1e-8 * max(total, 1e-300):
            # cancellation: form the residual explicitly
            D = -L @ R.T
            D[np.arange(k), np.arange(k)] += sigma
            sq = float(np.sum(D * D))
        out["frob"] = math.sqrt(max(sq, 0.0))
    if "spec" in metrics:
        D = DiagonalOperator(sigma, (n_r, n_c))
        out["spec"] = spectral_norm(LowRankResidual(D, L, R))
    return out


def _relative(norms, sigma, p):
    tail = sigma[p:]
    opt = {"frob": math.sqrt(math.fsum(tail ** 2)), "spec": float(tail[0]) if tail.size else 0.0}
    # an optimum at roundoff level (exact rank <= p) counts as zero
    floor = {"frob": RANK_TOL * math.sqrt(math.fsum(sigma ** 2)),
             "spec": RANK_TOL * (float(sigma[0]) if sigma.size else 0.0)}
    rel, absolute = {}, False
    for k, v in norms.items():
        if opt[k] <= floor[k]:
            rel[k], absolute = v, True
        else:
            rel[k] = v / opt[k] - 1.0
    rel["absolute"] = absolute
    return rel


def approx_errors(A, approx: SvdTriple, p: int, metrics=("frob", "spec")) -> dict:
    """Relative Frobenius and spectral errors of a rank-p approximation.

    ``|A - A_hat| / |A - [A]_p| - 1``; when the optimum is zero the absolute
    error is returned and ``absolute`` is True.
    """
    tm = as_test_matrix(A)
    return _relative(approx_residual(tm, approx, metrics), tm.sigma, p)


def approx_residual(A, approx: SvdTriple, metrics=("frob", "spec")) -> dict:
    """Absolute norms of ``A - U diag(s) V^T``."""
    tm = as_test_matrix(A)
    L = approx.U * approx.s
    R = approx.V
    if tm.W is not None:
        L, R = tm.W.T @ L, tm.Z.T @ R
    return _residual_norms(tm.sigma, L, R, metrics)


def normal_errors(A, approx: EvdPair, p: int, metrics=("frob", "spec")) -> dict:
    """Relative errors of ``V diag(lambda^2) V^T`` against ``[A^T A]_p``."""
    tm = as_test_matrix(A)
    return _relative(normal_residual(tm, approx, metrics), _normal_spectrum(tm), p)


def _normal_spectrum(tm):
    lam = np.zeros(tm.shape[1])
    lam[:tm.sigma.size] = tm.sigma ** 2
    return lam


def normal_residual(A, approx: EvdPair, metrics=("frob", "spec")) -> dict:
    """Absolute norms of ``A^T A - V diag(lambda^2) V^T``."""
    tm = as_test_matrix(A)
    V = approx.V
    if tm.Z is not None:
        V = tm.Z.T @ V
    return _residual_norms(_normal_spectrum(tm), V * approx.lambda_sq, V, metrics)


def rel_frobenius_error(A, approx: SvdTriple, p: int) -> float:
    return approx_errors(A, approx, p, ("frob",))["frob"]


def rel_spectral_error(A, approx: SvdTriple, p: int) -> float:
    return approx_errors(A, approx, p, ("spec",))["spec"]


# ---------------------------------------------------------------------------
# methods and trials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodConfig:
    """One method with fixed parameters.

    ``name`` is one of METHODS.  ``plan`` is an OversamplingPlan for the
    1-view methods; ``l`` and ``v`` are used by the multi-view methods.
    """

    name: str
    p: int
    l: int = 0
    v: int = 2
    plan: object = None
    variant: str | None = None

    def label(self) -> str:
        return self.name if self.variant is None else f"{self.name}-{self.variant}"


def _methods():
    from . import krylov, normal, oneview, subspace
    from .streams import DenseRowStream
    from .linalg import gaussian_matrix

    def sub(tm, c, rng):
        return subspace.generalized_subspace_iter(tm.op, c.p, c.l, c.v, rng)

    def sub2(tm, c, rng):
        return subspace.generalized_subspace_iter_v2(tm.op, c.p, c.l, c.v, rng)

    def kry(tm, c, rng):
        return krylov.block_krylov_svd(tm.op, c.p, c.l, c.v, rng)

    def nys(tm, c, rng):
        return normal.nystrom_normal(tm.op, c.p, c.l, c.v, rng)

    def pin(tm, c, rng):
        return normal.pinched_normal(tm.op, c.p, c.l, c.v, rng)

    def sub_normal(transpose):
        def run(tm, c, rng):
            op = tm.op.T if transpose else tm.op
            t = subspace.generalized_subspace_iter(op, c.p, c.l, c.v, rng)
            return EvdPair(t.U if transpose else t.V, t.s ** 2)
        return run

    def tropp(tm, c, rng):
        return oneview.one_view_tropp(oneview.sketch(tm.op, c.plan, rng), c.plan)

    def woolfe(tm, c, rng):
        return oneview.one_view_woolfe(oneview.sketch(tm.op, c.plan, rng), c.plan)

    def minvar(tm, c, rng):
        return oneview.one_view_minvar(oneview.sketch(tm.op, c.plan, rng), c.plan)

    def extended(tm, c, rng):
        return oneview.extended_sketch_approx(oneview.sketch(tm.op, c.plan, rng), c.plan,
                                              c.variant or "bwz2")

    def rowstream(tm, c, rng):
        omega = gaussian_matrix(rng, tm.shape[1], c.p + c.l)
        return oneview.row_stream_qb(DenseRowStream(tm.dense()), omega, c.p)

    return {"subspace": sub, "subspace-v2": sub2, "krylov": kry, "nystrom": nys,
            "pinched": pin, "subspace-normal-J": sub_normal(False),
            "subspace-normal-Jt": sub_normal(True), "oneview-tropp": tropp,
            "oneview-woolfe": woolfe, "oneview-minvar": minvar, "oneview-extended": extended,
            "rowstream": rowstream}


METHODS = ("subspace", "subspace-v2", "krylov", "nystrom", "pinched", "subspace-normal-J",
           "subspace-normal-Jt", "oneview-tropp", "oneview-woolfe", "oneview-minvar",
           "oneview-extended", "rowstream")


def run_method(A, config: MethodConfig, rng):
    tm = as_test_matrix(A)
    table = _methods()
    if config.name not in table:
        raise ArgumentError(f"unknown method {config.name!r}")
    return table[config.name](tm, config, rng)


def evaluate(A, result, p: int, metrics=("frob", "spec")) -> dict:
    if isinstance(result, EvdPair):
        return normal_errors(A, result, p, metrics)
    return approx_errors(A, result, p, metrics)


@dataclass
class TrialReport:
    method: str
    config: dict
    frob: list = field(default_factory=list)
    spec: list = field(default_factory=list)
    absolute: bool = False

    @property
    def trials(self) -> int:
        return max(len(self.frob), len(self.spec))

    @staticmethod
    def _mean_se(xs):
        if not xs:
            return math.nan, math.nan
        n = len(xs)
        mean = math.fsum(xs) / n
        if n == 1:
            return mean, 0.0
        var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
        return mean, math.sqrt(var / n)

    @property
    def mean_frob(self):
        return self._mean_se(self.frob)[0]

    @property
    def se_frob(self):
        return self._mean_se(self.frob)[1]

    @property
    def mean_spec(self):
        return self._mean_se(self.spec)[0]

    @property
    def se_spec(self):
        return self._mean_se(self.spec)[1]

    def mean(self, metric):
        return self._mean_se(getattr(self, metric))[0]

    def se(self, metric):
        return self._mean_se(getattr(self, metric))[1]


def default_threads() -> int:
    cap = os.environ.get("RANDLRA_THREADS")
    if cap is None:
        return 1
    try:
        return max(1, int(cap))
    except ValueError:
        raise ArgumentError(f"RANDLRA_THREADS must be an integer, got {cap!r}") from None


def map_trials(fn, trials: int, seed_base: int, threads: int | None = None) -> list:
    """``[fn(t, make_rng(seed_base + t)) for t in range(trials)]``, possibly
    in parallel.  Output order is always trial order."""
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    threads = default_threads() if threads is None else threads
    jobs = range(trials)
    if threads <= 1:
        return [fn(t, make_rng(seed_base + t)) for t in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: fn(t, make_rng(seed_base + t)), jobs))


def _fill(report, errs):
    for e in errs:
        if "frob" in e:
            report.frob.append(e["frob"])
        if "spec" in e:
            report.spec.append(e["spec"])
        report.absolute |= e["absolute"]
    return report


def run_trials(A, config: MethodConfig, trials: int, seed_base: int = 0,
               metrics=("frob", "spec"), threads=None) -> TrialReport:
    """Run one method ``trials`` times; trial t is seeded with seed_base + t."""
    tm = as_test_matrix(A)

    def one(t, rng):
        return evaluate(tm, run_method(tm, config, rng), config.p, metrics)

    errs = map_trials(one, trials, seed_base, threads)
    return _fill(TrialReport(config.label(), _config_dict(config)), errs)


def run_trials_shared(A, trial_fn, trials: int, seed_base: int = 0, metrics=("frob",),
                      threads=None) -> dict:
    """Several methods evaluated on shared randomness.

    ``trial_fn(tm, rng)`` returns ``{key: (result, p)}``; every key gets a
    TrialReport.  Used to evaluate many post-processing choices on one sketch.
    """
    tm = as_test_matrix(A)

    def one(t, rng):
        return {k: evaluate(tm, res, p, metrics) for k, (res, p) in trial_fn(tm, rng).items()}

    per_trial = map_trials(one, trials, seed_base, threads)
    reports = {}
    for errs in per_trial:
        for k, e in errs.items():
            rep = reports.setdefault(k, TrialReport(str(k), {}))
            _fill(rep, [e])
    return reports


def _config_dict(c: MethodConfig) -> dict:
    d = {"p": c.p, "l": c.l, "v": c.v, "variant": c.variant}
    if c.plan is not None:
        pl = c.plan
        d.update(l1=pl.l1, l2=pl.l2, lc=pl.lc, T=pl.T, s=pl.s)
    return d


# ---------------------------------------------------------------------------
# best-performance sweep over fixed plans
# ---------------------------------------------------------------------------

FAMILIES = ("tropp-balanced", "tropp", "baseline", "bwz", "bwz2")


def feasible_plans(family: str, p: int, T: int, shape=None) -> list:
    """All fixed plans of a family that fit the budget T.

    ``tropp-balanced``: l1 = floor(T/2) - p, every lc in [0, l1].
    ``tropp``: every l1 <= l2 with l1 + l2 = T - 2p and every lc in [0, l1].
    ``baseline``: as ``tropp`` with lc = l1.
    ``bwz``/``bwz2``: l1 = l2, widest SRFT sketch within the memory budget.
    """
    from .oneview import OversamplingPlan, largest_srft_width

    if family not in FAMILIES:
        raise ArgumentError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    room = T - 2 * p
    plans = []
    if family == "tropp-balanced":
        l1 = T // 2 - p
        if l1 >= 0:
            plans = [OversamplingPlan(p, l1, room - l1, lc, T) for lc in range(l1 + 1)]
    elif family in ("tropp", "baseline"):
        for l1 in range(0, room // 2 + 1):
            lcs = [l1] if family == "baseline" else range(l1 + 1)
            plans += [OversamplingPlan(p, l1, room - l1, lc, T) for lc in lcs]
    else:
        if shape is None:
            raise ArgumentError("extended families need the matrix shape")
        n_r, n_c = shape
        for l1 in range(0, room // 2 + 1):
            s = largest_srft_width(p, l1, l1, T, n_r, n_c)
            if s >= p + l1:
                plans.append(OversamplingPlan(p, l1, l1, l1, T, s=s))
    if shape is not None:
        plans = [pl for pl in plans if pl.p + pl.l2 <= min(shape)]
    return plans


def _sweep_trial(family, plans):
    from . import oneview

    groups = {}
    for pl in plans:
        groups.setdefault((pl.l1, pl.l2, pl.s), []).append(pl)

    def trial(tm, rng):
        out = {}
        # each sketch group draws from its own child stream so groups are
        # independent of how many groups exist
        seed_seq = rng.bit_generator.seed_seq
        for key in sorted(groups):
            g_rng = np.random.default_rng(np.random.SeedSequence(
                seed_seq.entropy, spawn_key=seed_seq.spawn_key + key))
            b = oneview.sketch(tm.op, groups[key][0], g_rng)
            for pl in groups[key]:
                if family in ("bwz", "bwz2"):
                    res = oneview.extended_sketch_approx(b, pl, family)
                else:
                    res = oneview.one_view_tropp(b, pl)
                out[pl] = (res, pl.p)
        return out

    return trial


def best_performance_sweep(A, family: str, p: int, T: int, trials: int, seed_base: int = 0,
                           metric: str = "frob", threads=None):
    """Best fixed plan of a family: the plan with minimum mean error.

    Plans sharing (l1, l2, s) share one sketch per trial, so candidate
    post-processing choices are compared on identical data.  Returns
    ``(best_plan, best_report, all_reports)``.
    """
    tm = as_test_matrix(A)
    plans = feasible_plans(family, p, T, tm.shape)
    if not plans:
        raise BudgetError(f"no feasible {family} plan for p = {p}, T = {T}")
    reports = run_trials_shared(tm, _sweep_trial(family, plans), trials, seed_base, (metric,), threads)
    best = min(plans, key=lambda pl: (reports[pl].mean(metric), plans.index(pl)))
    return best, reports[best], reports


def sketch_group_rng(rng: np.random.Generator, plan) -> np.random.Generator:
    """The generator :func:`best_performance_sweep` uses for a plan's sketch."""
    seed_seq = rng.bit_generator.seed_seq
    return np.random.default_rng(np.random.SeedSequence(
        seed_seq.entropy, spawn_key=seed_seq.spawn_key + (plan.l1, plan.l2, plan.s)))
