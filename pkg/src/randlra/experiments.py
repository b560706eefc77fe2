"""Experiment drivers producing one table row per (matrix, method, budget) cell.

Every driver returns a list of dicts keyed by :data:`COLUMNS` (the ``lm``
driver uses :data:`LM_COLUMNS`).  All cells of one run share the trial seeds
``seed_base + t`` so methods are compared on common random numbers.
"""
from __future__ import annotations

import math

import numpy as np

from . import oneview
from .errors import ArgumentError
from .linalg import make_rng
from .lm import LmState, update_diagnostics
from .testbed import (
    MethodConfig,
    SYNTHETIC,
    TestMatrixSpec,
    best_performance_sweep,
    gen_test_matrix,
    run_trials,
    run_trials_shared,
)

COLUMNS = ("matrix", "method", "p", "l1", "l2", "lc", "v", "T", "trials",
           "meanFrob", "seFrob", "meanSpec", "seSpec")
LM_COLUMNS = ("instance", "p", "norm1", "norm2", "norm3", "err1", "err2", "err3",
              "bound2", "bound3")

FIG2_MATRICES = ("LowRankMedNoise", "LowRankHiNoise", "PolySlow", "PolyFast", "DiagSurrogate")
FIG4_MATRICES = ("LowRankMedNoise", "LowRankHiNoise", "PolySlow", "DiagSurrogate")
T_GRID = (16, 24, 32, 48, 64, 96, 128)
ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)
SEED_STRIDE = 100_000


def _matrix(kind, n):
    return gen_test_matrix(TestMatrixSpec(kind, n=n))


def _row(matrix, method, report, p, l1=None, l2=None, lc=None, v=None, T=None):
    def stat(metric):
        xs = getattr(report, metric)
        return (report.mean(metric), report.se(metric)) if xs else (None, None)

    mf, sf = stat("frob")
    ms, ss = stat("spec")
    return {"matrix": matrix, "method": method, "p": p, "l1": l1, "l2": l2, "lc": lc, "v": v,
            "T": T, "trials": report.trials, "meanFrob": mf, "seFrob": sf, "meanSpec": ms,
            "seSpec": ss}


def _plan_row(matrix, method, report, plan, adaptive_lc=False):
    return _row(matrix, method, report, plan.p, plan.l1, plan.l2, None if adaptive_lc else plan.lc,
                T=plan.T)


# ---------------------------------------------------------------------------
# multi-view experiments
# ---------------------------------------------------------------------------

def figure2(trials=50, seed=0, n=1000, matrices=FIG2_MATRICES, views=range(2, 9), p=10, l=10,
            metrics=("frob", "spec"), threads=None):
    """Generalized subspace iteration against the view budget v."""
    rows = []
    for kind in matrices:
        tm = _matrix(kind, n)
        for v in views:
            rep = run_trials(tm, MethodConfig("subspace", p, l, v), trials, seed * SEED_STRIDE,
                             metrics, threads)
            rows.append(_row(kind, "subspace", rep, p, l1=l, v=v))
    return rows


def figure3(trials=500, seed=0, n=1000, matrices=FIG2_MATRICES, views=range(2, 7), p=10, l=10,
            metrics=("frob", "spec"), threads=None):
    """Normal-matrix approximations: prolonged, pinched and plain subspace."""
    rows = []
    methods = ("nystrom", "pinched", "subspace-normal-J", "subspace-normal-Jt")
    for kind in matrices:
        tm = _matrix(kind, n)
        for v in views:
            for name in methods:
                rep = run_trials(tm, MethodConfig(name, p, l, v), trials, seed * SEED_STRIDE,
                                 metrics, threads)
                rows.append(_row(kind, name, rep, p, l1=l, v=v))
    return rows


def figure4(trials=50, seed=0, n=1000, matrices=FIG4_MATRICES, views=range(2, 9), p=10, l=10,
            wide_l=20, metrics=("frob", "spec"), threads=None):
    """Block Krylov against subspace iteration at equal views.

    With ``wide_l`` a subspace run with that larger oversampling is added.
    """
    rows = []
    for kind in matrices:
        tm = _matrix(kind, n)
        for v in views:
            cells = [("krylov", "krylov", l), ("subspace", "subspace", l)]
            if wide_l:
                cells.append(("subspace", f"subspace-l{wide_l}", wide_l))
            for name, label, ll in cells:
                rep = run_trials(tm, MethodConfig(name, p, ll, v), trials, seed * SEED_STRIDE,
                                 metrics, threads)
                rows.append(_row(kind, label, rep, p, l1=ll, v=v))
    return rows


# ---------------------------------------------------------------------------
# 1-view experiments
# ---------------------------------------------------------------------------

def _balanced_trial(p, T, alphas, minvar=True):
    base = oneview.plan_balanced(p, T, 0.0)

    def trial(tm, rng):
        b = oneview.sketch(tm.op, base, rng)
        out = {}
        for a in alphas:
            plan = oneview.plan_balanced(p, T, a)
            out[("balanced", a)] = (oneview.one_view_tropp(b, plan), p)
        if minvar:
            out[("minvar", None)] = (oneview.one_view_minvar(b, base), p)
        return out

    return base, trial


def figure5(trials=50, seed=0, n=1000, matrices=SYNTHETIC, budgets=T_GRID, p=5, alphas=ALPHAS,
            metrics=("frob",), threads=None):
    """Balanced plans with fixed lc = floor(alpha l1) and the min-variance lc,
    all evaluated on one shared sketch per trial."""
    rows = []
    for kind in matrices:
        tm = _matrix(kind, n)
        for T in budgets:
            base, trial = _balanced_trial(p, T, alphas)
            reps = run_trials_shared(tm, trial, trials, seed * SEED_STRIDE, metrics, threads)
            for a in alphas:
                plan = oneview.plan_balanced(p, T, a)
                rows.append(_plan_row(kind, f"balanced-a{a:g}", reps[("balanced", a)], plan))
            rows.append(_plan_row(kind, "minvar", reps[("minvar", None)], base, adaptive_lc=True))
    return rows


def figure6(trials=50, seed=0, n=1000, matrices=SYNTHETIC, budgets=T_GRID, p=5,
            metrics=("frob",), threads=None):
    """Fixed baseline plans against the balanced plan and the min-variance lc."""
    rows = []
    for kind in matrices:
        tm = _matrix(kind, n)
        for T in budgets:
            for make in (oneview.plan_flat, oneview.plan_decay, oneview.plan_rapid):
                try:
                    plan = make(p, T)
                except ArgumentError:
                    continue
                rep = run_trials(tm, MethodConfig("oneview-tropp", p, plan=plan), trials,
                                 seed * SEED_STRIDE, metrics, threads)
                rows.append(_plan_row(kind, f"baseline-{plan.name}", rep, plan))
            base, trial = _balanced_trial(p, T, (0.5,))
            reps = run_trials_shared(tm, trial, trials, seed * SEED_STRIDE, metrics, threads)
            rows.append(_plan_row(kind, "balanced-a0.5", reps[("balanced", 0.5)],
                                  oneview.plan_balanced(p, T, 0.5)))
            rows.append(_plan_row(kind, "minvar", reps[("minvar", None)], base, adaptive_lc=True))
    return rows


def figure7(trials=50, seed=0, n=1000, matrices=SYNTHETIC, budgets=T_GRID, p=5,
            families=("tropp-balanced", "baseline", "bwz", "bwz2"), threads=None):
    """Best performance (oracle choice of fixed plan) of each family."""
    rows = []
    for kind in matrices:
        tm = _matrix(kind, n)
        for T in budgets:
            for fam in families:
                plan, rep, _ = best_performance_sweep(tm, fam, p, T, trials, seed * SEED_STRIDE,
                                                      threads=threads)
                rows.append(_plan_row(kind, f"best-{fam}", rep, plan))
    return rows


def figure8(trials=50, seed=0, n=1000, matrices=SYNTHETIC, budgets=T_GRID, p=5, threads=None):
    """Adaptive choices against the best fixed plans."""
    rows = []
    for kind in matrices:
        tm = _matrix(kind, n)
        for T in budgets:
            for fam in ("tropp-balanced", "bwz2"):
                plan, rep, _ = best_performance_sweep(tm, fam, p, T, trials, seed * SEED_STRIDE,
                                                      threads=threads)
                rows.append(_plan_row(kind, f"best-{fam}", rep, plan))
            base, trial = _balanced_trial(p, T, ())
            reps = run_trials_shared(tm, trial, trials, seed * SEED_STRIDE, ("frob",), threads)
            rows.append(_plan_row(kind, "minvar", reps[("minvar", None)], base, adaptive_lc=True))
            plan = oneview.plan_extended(p, T, *tm.shape)
            rep = run_trials(tm, MethodConfig("oneview-extended", p, plan=plan, variant="bwz2"),
                             trials, seed * SEED_STRIDE, ("frob",), threads)
            rows.append(_plan_row(kind, "extended-bwz2", rep, plan))
    return rows


# ---------------------------------------------------------------------------
# LM diagnostics
# ---------------------------------------------------------------------------

def lm_table(trials=20, seed=0, n_r=10, n_c=8, mu=0.0, gamma=1.0):
    """Norms and errors of the three truncated updates on random instances."""
    rows = []
    for i in range(trials):
        rng = make_rng(seed * SEED_STRIDE + i)
        J = rng.standard_normal((n_r, n_c))
        state = LmState(np.zeros(n_c), rng.standard_normal(n_r), mu, gamma)
        for r in update_diagnostics(J, state):
            rows.append({"instance": i, **r})
    return rows


FIGURES = {2: figure2, 3: figure3, 4: figure4, 5: figure5, 6: figure6, 7: figure7, 8: figure8}
NAMED = {"normal": figure3, "oneview": figure6, "krylov": figure4, "lm": lm_table}
DEFAULT_TRIALS = {figure2: 50, figure3: 500, figure4: 50, figure5: 50, figure6: 50, figure7: 50,
                  figure8: 50, lm_table: 20}


def resolve(figure=None, name=None):
    """Driver and column set for ``--figure`` or ``--name``."""
    if (figure is None) == (name is None):
        raise ArgumentError("give exactly one of figure or name")
    if figure is not None:
        if figure not in FIGURES:
            raise ArgumentError(f"unknown figure {figure}; choose from {sorted(FIGURES)}")
        fn = FIGURES[figure]
    else:
        if name not in NAMED:
            raise ArgumentError(f"unknown experiment {name!r}; choose from {sorted(NAMED)}")
        fn = NAMED[name]
    return fn, (LM_COLUMNS if fn is lm_table else COLUMNS)


def format_value(x) -> str:
    """CSV cell text: empty for missing, repr for floats."""
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)
