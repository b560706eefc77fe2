"""Single-view low-rank approximation.

A range sketch ``Y_c = A @ Omega_r`` and a co-range sketch
``Y_r = A.T @ Omega_c`` are taken in one pass; everything afterwards works on
the sketches only.  The extra parameter ``lc`` truncates the range basis to
``p + lc`` leading left singular vectors of ``Y_c``, which keeps the small
least-squares problem well posed even when ``l1 == l2``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .errors import ArgumentError, BudgetError
from .linalg import (
    RANK_TOL,
    SRFT,
    SvdTriple,
    as_rng,
    aslinearoperator,
    gaussian_matrix,
    lstsq_via_qr,
    pinv,
    qr_thin,
    srft_matrix,
    svd_dense,
)
from .streams import checked_pass


# ---------------------------------------------------------------------------
# oversampling plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OversamplingPlan:
    """Sketch sizes for a 1-view method.

    For plain plans ``T == 2p + l1 + l2``.  Extended plans (``s > 0``) also
    store an SRFT width and ``T`` is then the memory budget in units of
    ``n_r + n_c``, so only ``2p + l1 + l2 <= T`` is required.
    """

    p: int
    l1: int
    l2: int
    lc: int
    T: int
    s: int = 0
    name: str = ""

    def __post_init__(self):
        if self.p < 1:
            raise ArgumentError("p must be >= 1")
        if not 0 <= self.lc <= self.l1 <= self.l2:
            raise ArgumentError(f"need 0 <= lc <= l1 <= l2, got lc={self.lc}, l1={self.l1}, l2={self.l2}")
        width = 2 * self.p + self.l1 + self.l2
        if self.s == 0 and width != self.T:
            raise ArgumentError(f"T = {self.T} does not equal 2p + l1 + l2 = {width}")
        if self.s > 0 and (width > self.T or self.s < self.p + self.l1):
            raise ArgumentError("extended plan needs 2p + l1 + l2 <= T and s >= p + l1")

    def with_lc(self, lc: int) -> "OversamplingPlan":
        return replace(self, lc=lc)


def _check_budget(p, T):
    if p < 1:
        raise ArgumentError("p must be >= 1")
    if T < 2 * p + 6:
        raise ArgumentError(f"budget T = {T} is below 2p + 6 = {2 * p + 6}")


def _fixed(p, T, l1, name):
    return OversamplingPlan(p, l1, T - 2 * p - l1, l1, T, name=name)


def plan_flat(p: int, T: int) -> OversamplingPlan:
    """Oversampling for a flat spectrum (range sketch kept small)."""
    _check_budget(p, T)
    root = math.sqrt(p * (T - p - 2) * (1 - 2 / (T - 1)))
    l1 = max(2, math.floor((T - 1) * (root - (p - 1)) / (T - 2 * p - 1)) - p)
    return _fixed(p, T, l1, "flat")


def plan_decay(p: int, T: int) -> OversamplingPlan:
    """Oversampling for a moderately decaying spectrum."""
    _check_budget(p, T)
    return _fixed(p, T, max(2, (T - 1) // 3 - p), "decay")


def plan_rapid(p: int, T: int) -> OversamplingPlan:
    """Oversampling for a rapidly decaying spectrum (l1 close to l2)."""
    _check_budget(p, T)
    return _fixed(p, T, (T - 2) // 2 - p, "rapid")


def plan_balanced(p: int, T: int, alpha: float) -> OversamplingPlan:
    """``l1 = floor(T/2) - p`` (so l1 is l2 or l2 - 1) and ``lc = floor(alpha l1)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError("alpha must lie in [0, 1]")
    if p < 1 or T < 2 * p:
        raise ArgumentError(f"budget T = {T} is below 2p = {2 * p}")
    l1 = T // 2 - p
    return OversamplingPlan(p, l1, T - 2 * p - l1, math.floor(alpha * l1), T, name="balanced")


def extended_memory(p, l1, l2, s, n_r, n_c) -> int:
    """Stored numbers for the extended sketch."""
    return (2 * p + l1 + l2 + 1) * (n_r + n_c) + s * (s + 2)


def largest_srft_width(p, l1, l2, T, n_r, n_c) -> int:
    """Largest s with extended_memory(...) <= T (n_r + n_c); -1 if none."""
    spare = T * (n_r + n_c) - (2 * p + l1 + l2 + 1) * (n_r + n_c)
    if spare < 0:
        return -1
    s = math.isqrt(spare + 1) - 1
    return min(s, n_r, n_c)


def plan_extended(p: int, T: int, n_r: int, n_c: int) -> OversamplingPlan:
    """``l1 = l2 = floor(0.8 (floor(T/2) - p))`` and the widest SRFT sketch that
    fits the memory of a plain plan with budget T."""
    _check_budget(p, T)
    l1 = (4 * (T // 2 - p)) // 5
    s = largest_srft_width(p, l1, l1, T, n_r, n_c)
    if s < p + l1:
        raise BudgetError(f"SRFT width {s} below p + l1 = {p + l1} for T = {T}")
    return OversamplingPlan(p, l1, l1, l1, T, s=s, name="extended")


# ---------------------------------------------------------------------------
# sketching
# ---------------------------------------------------------------------------

@dataclass
class SketchBundle:
    Omega_r: np.ndarray
    Omega_c: np.ndarray
    Y_c: np.ndarray
    Y_r: np.ndarray
    Phi_r: SRFT | None = None
    Phi_c: SRFT | None = None
    Z: np.ndarray | None = None
    flags: dict = field(default_factory=dict)


def sketch(A, plan: OversamplingPlan, rng, orthonormalize_omega: bool = False) -> SketchBundle:
    """Range, co-range and (if ``plan.s > 0``) core sketches in one pass.

    A is applied once and A.T once; when the operator is concurrent-safe the
    two products run in parallel.  Draw order: Omega_r, Omega_c, Phi_r, Phi_c.
    """
    A = aslinearoperator(A)
    n_r, n_c = A.shape
    p, l1, l2, s = plan.p, plan.l1, plan.l2, plan.s
    if p + l2 > min(n_r, n_c) or s > min(n_r, n_c):
        raise ArgumentError(f"plan {plan} too large for a {n_r} x {n_c} matrix")
    rng = as_rng(rng)
    Om_r = gaussian_matrix(rng, n_c, p + l1)
    Om_c = gaussian_matrix(rng, n_r, p + l2)
    if orthonormalize_omega:
        Om_r, _ = qr_thin(Om_r)
        Om_c, _ = qr_thin(Om_c)
    Phi_r = Phi_c = None
    right = Om_r
    if s > 0:
        Phi_r = srft_matrix(rng, n_r, s)
        Phi_c = srft_matrix(rng, n_c, s)
        right = np.hstack([Om_r, Phi_c.materialize()])
    if A.concurrent_safe:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fa = pool.submit(A.apply, right)
            fb = pool.submit(A.apply_adjoint, Om_c)
            AR, Y_r = fa.result(), fb.result()
    else:
        AR = A.apply(right)
        Y_r = A.apply_adjoint(Om_c)
    Y_c = AR[:, :p + l1]
    Z = Phi_r.adjoint_apply(AR[:, p + l1:]) if s > 0 else None
    return SketchBundle(Om_r, Om_c, Y_c, Y_r, Phi_r, Phi_c, Z)


# ---------------------------------------------------------------------------
# reconstruction from sketches
# ---------------------------------------------------------------------------

def _range_basis(Y):
    """QR factor of Y and the left singular vectors of Y built from it."""
    Q, R = qr_thin(Y)
    return Q, Q @ svd_dense(R).U


def one_view_tropp(bundle: SketchBundle, plan: OversamplingPlan, lc: int | None = None) -> SvdTriple:
    """Range basis of width ``p + lc``, then ``X = argmin |Omega_c^T Q_c X - Y_r^T|``."""
    p, l1 = plan.p, plan.l1
    lc = plan.lc if lc is None else lc
    if not 0 <= lc <= l1:
        raise ArgumentError(f"lc = {lc} outside [0, l1 = {l1}]")
    if lc < l1:
        _, Qc = _range_basis(bundle.Y_c)
        Qc = Qc[:, :p + lc]
    else:
        Qc, _ = qr_thin(bundle.Y_c)
    X, degraded = lstsq_via_qr(bundle.Omega_c.T @ Qc, bundle.Y_r.T)
    t = svd_dense(X).truncate(p)
    return SvdTriple(Qc @ t.U, t.s, t.V, {"degraded": degraded, "lc": lc})


def one_view_woolfe(bundle: SketchBundle, plan: OversamplingPlan, lc: int | None = None) -> SvdTriple:
    """Both bases truncated to ``p + lc``; small square core solved by least squares."""
    p = plan.p
    lc = plan.lc if lc is None else lc
    if not 0 <= lc <= plan.l1:
        raise ArgumentError(f"lc = {lc} outside [0, l1 = {plan.l1}]")
    k = p + lc
    _, Qc = _range_basis(bundle.Y_c)
    _, Qr = _range_basis(bundle.Y_r)
    Qc, Qr = Qc[:, :k], Qr[:, :k]
    Xh, degraded = lstsq_via_qr(bundle.Omega_c.T @ Qc, bundle.Y_r.T @ Qr)
    t = svd_dense(Xh).truncate(p)
    return SvdTriple(Qc @ t.U, t.s, Qr @ t.V, {"degraded": degraded, "lc": lc})


def _normalized_spread(lam_prev, lam, lam_next):
    with np.errstate(divide="ignore", invalid="ignore"):
        parts = [] if lam_prev is None else [lam_prev / lam]
        parts += [np.ones_like(lam), lam_next / lam]
        s = np.concatenate(parts)
    if not np.all(np.isfinite(s)):
        return math.inf
    return float(np.var(s, ddof=1))


def min_variance_lc(bundle: SketchBundle, plan: OversamplingPlan, pad_small_rank: bool = False):
    """Pick lc in ``[0, l1)`` minimising the variance of locally normalised
    singular values of X(lc).

    Returns ``(lc, info)`` where info holds the per-candidate spectra,
    variances and least-squares solutions.  Ties go to the smallest lc.
    With ``pad_small_rank`` and ``p == 1`` the spectra use a working rank of
    3 (basis width 3 + lc) and the returned lc is expressed for the real p.
    """
    p, l1 = plan.p, plan.l1
    pw = p
    if pad_small_rank and p == 1:
        pw = min(3, p + l1)
    shift = pw - p
    n_cand = l1 - shift
    Qc_full, Uc = _range_basis(bundle.Y_c)
    if n_cand <= 0:
        return 0, {"lc_candidates": [0], "variances": [0.0], "spectra": {}, "solutions": {}, "basis": Uc}
    W = bundle.Omega_c.T @ Uc
    rhs = bundle.Y_r.T
    spectra, solutions = {}, {}
    for c in range(n_cand + 1):              # c = n_cand is neighbour data only
        X, degraded = lstsq_via_qr(W[:, :pw + c], rhs)
        solutions[c] = (X, degraded)
        spectra[c] = sla.svdvals(X)[:pw]
    variances = []
    for c in range(n_cand):
        prev = spectra[c - 1] if c > 0 else None
        variances.append(_normalized_spread(prev, spectra[c], spectra[c + 1]))
    best = int(np.argmin(np.asarray(variances)))
    return best + shift, {"lc_candidates": [c + shift for c in range(n_cand)],
                          "variances": variances,
                          "spectra": {c + shift: v for c, v in spectra.items()},
                          "solutions": {c + shift: v for c, v in solutions.items()},
                          "basis": Uc}


def one_view_minvar(bundle: SketchBundle, plan: OversamplingPlan, pad_small_rank: bool = False) -> SvdTriple:
    """Tropp-style reconstruction with lc chosen by :func:`min_variance_lc`."""
    p = plan.p
    lc, info = min_variance_lc(bundle, plan, pad_small_rank)
    if plan.l1 == 0 or lc not in info["solutions"]:
        return one_view_tropp(bundle, plan, lc=0)
    X, degraded = info["solutions"][lc]
    t = svd_dense(X).truncate(p)
    Qc = info["basis"][:, :p + lc]
    return SvdTriple(Qc @ t.U, t.s, t.V, {"degraded": degraded, "lc": lc,
                                          "variances": info["variances"]})


def extended_sketch_approx(bundle: SketchBundle, plan: OversamplingPlan, variant: str = "bwz2") -> SvdTriple:
    """Reconstruction from the core sketch ``Z = Phi_r^T A Phi_c``.

    ``bwz`` truncates the middle factor before applying the pseudo-inverses,
    ``bwz2`` truncates after, which is the more accurate choice.
    """
    if variant not in ("bwz", "bwz2"):
        raise ArgumentError(f"unknown extended variant {variant!r}")
    if bundle.Z is None:
        raise ArgumentError("extended reconstruction needs a bundle sketched with s > 0")
    if plan.l1 != plan.l2:
        raise ArgumentError("extended reconstruction assumes l1 == l2")
    p = plan.p
    Qc, _ = qr_thin(bundle.Y_c)
    Qr, _ = qr_thin(bundle.Y_r)
    Uc, Tc = qr_thin(bundle.Phi_r.adjoint_apply(Qc))
    Ur, Tr = qr_thin(bundle.Phi_c.adjoint_apply(Qr))
    degraded = False
    for T_ in (Tc, Tr):
        sv = sla.svdvals(T_)
        degraded |= bool(sv[0] == 0 or sv[-1] < RANK_TOL * sv[0])
    Tc_pinv, TrT_pinv = pinv(Tc), pinv(Tr.T)
    core = Uc.T @ bundle.Z @ Ur
    if variant == "bwz":
        M = Tc_pinv @ svd_dense(core).truncate(p).to_dense() @ TrT_pinv
    else:
        M = Tc_pinv @ core @ TrT_pinv
    t = svd_dense(M).truncate(p)
    return SvdTriple(Qc @ t.U, t.s, Qr @ t.V, {"degraded": degraded, "variant": variant})


# ---------------------------------------------------------------------------
# one pass over the rows
# ---------------------------------------------------------------------------

def row_stream_sketch(stream, Omega_r):
    """One pass: ``Y_c = A Omega_r`` row by row and ``Yh_r = A.T Y_c``."""
    n_r, n_c = stream.shape
    Omega_r = np.asarray(Omega_r, dtype=float)
    if Omega_r.shape[0] != n_c:
        raise ArgumentError("Omega_r must have n_c rows")
    Y_c = np.empty((n_r, Omega_r.shape[1]))
    Yh_r = np.zeros((n_c, Omega_r.shape[1]))
    for rows, block in checked_pass(stream, n_c):
        y = block @ Omega_r
        Y_c[rows.start:rows.stop] = y
        Yh_r += block.T @ y
    return Y_c, Yh_r


def row_stream_qb(stream, Omega_r, p: int) -> SvdTriple:
    """2-view quality approximation from a single pass over row blocks.

    Solves ``B.T R_c = Yh_r`` for the QB factorisation ``A ~ Q_c B``; an
    ill-conditioned R_c is handled through its truncated pseudo-inverse.
    """
    if p < 1 or p > np.shape(Omega_r)[1]:
        raise ArgumentError("need 1 <= p <= number of sketch columns")
    Y_c, Yh_r = row_stream_sketch(stream, Omega_r)
    Qc, Rc = qr_thin(Y_c)
    d = np.abs(np.diag(Rc))
    sv = sla.svdvals(Rc)
    degraded = bool(sv[0] == 0 or d.min() < RANK_TOL * sv[0])
    if degraded:
        Bt = Yh_r @ pinv(Rc)
    else:
        Bt = sla.solve_triangular(Rc, Yh_r.T, trans="T", lower=False).T
    t = svd_dense(Bt.T).truncate(p)
    return SvdTriple(Qc @ t.U, t.s, t.V, {"degraded": degraded})
