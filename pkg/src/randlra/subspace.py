"""Randomized subspace iteration for an arbitrary number of matrix views.

A "view" is one application of A or A.T to a block of vectors.  An even
budget gives classical subspace iteration; an odd budget stops after a half
iteration and post-processes from the other side.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, DegenerateSpectrumError
from .linalg import (
    LowRankResidual,
    SvdTriple,
    as_rng,
    aslinearoperator,
    gaussian_matrix,
    qr_thin,
    spectral_norm,
    svd_dense,
    tevd,
)


def check_sizes(shape, p, l, v=None, v_min=2):
    if p < 1:
        raise ArgumentError(f"target rank p must be >= 1, got {p}")
    if l < 0:
        raise ArgumentError(f"oversampling l must be >= 0, got {l}")
    if p + l > min(shape):
        raise ArgumentError(f"p + l = {p + l} exceeds min(n_r, n_c) = {min(shape)}")
    if v is not None and v < v_min:
        raise ArgumentError(f"view budget must be >= {v_min}, got {v}")


def subspace_iter_standard(A, p: int, l: int, q: int, rng) -> SvdTriple:
    """Classical randomized SVD with q power iterations (2(q+1) views)."""
    A = aslinearoperator(A)
    check_sizes(A.shape, p, l)
    if q < 0:
        raise ArgumentError("q must be >= 0")
    rng = as_rng(rng)
    omega = gaussian_matrix(rng, A.shape[1], p + l)
    Qc, _ = qr_thin(A.apply(omega))
    for _ in range(q):
        Qr, _ = qr_thin(A.apply_adjoint(Qc))
        Qc, _ = qr_thin(A.apply(Qr))
    Qr, Rr = qr_thin(A.apply_adjoint(Qc))
    # Rr = Vhat diag(s) Uhat^T
    t = svd_dense(Rr).truncate(p)
    return SvdTriple(Qc @ t.V, t.s, Qr @ t.U)


def _alternate(A, p, l, v, rng, trace=None):
    """Shared loop: returns the last Q_c, R_c, Q_r, R_r (R's may be None)."""
    Qr = gaussian_matrix(rng, A.shape[1], p + l)
    Qc = Rc = Rr = None
    for j in range(1, v + 1):
        if j % 2:
            Qc, Rc = qr_thin(A.apply(Qr))
            R = Rc
        else:
            Qr, Rr = qr_thin(A.apply_adjoint(Qc))
            R = Rr
        if trace is not None:
            trace.append(np.linalg.svd(R, compute_uv=False))
    return Qc, Rc, Qr, Rr


def qr_qc(A, p: int, l: int, v: int, rng) -> np.ndarray:
    """Orthonormal basis after v alternating views.

    Odd v returns a range basis (n_r x (p+l)), even v a co-range basis
    (n_c x (p+l)).
    """
    A = aslinearoperator(A)
    check_sizes(A.shape, p, l, v, v_min=1)
    Qc, _, Qr, _ = _alternate(A, p, l, v, as_rng(rng))
    return Qr if v % 2 == 0 else Qc


def generalized_subspace_iter(A, p: int, l: int, v: int, rng, trace=None) -> SvdTriple:
    """Rank-p SVD estimate using exactly v views.

    ``trace``, when a list, receives the singular values of each R factor,
    which is what a convergence test would monitor.
    """
    A = aslinearoperator(A)
    check_sizes(A.shape, p, l, v)
    Qc, Rc, Qr, Rr = _alternate(A, p, l, v, as_rng(rng), trace)
    if v % 2 == 0:
        t = svd_dense(Rr).truncate(p)
        return SvdTriple(Qc @ t.V, t.s, Qr @ t.U)
    t = svd_dense(Rc).truncate(p)
    return SvdTriple(Qc @ t.U, t.s, Qr @ t.V)


def generalized_subspace_iter_v2(A, p: int, l: int, v: int, rng, rtol: float = 1e-14) -> SvdTriple:
    """Same views as :func:`generalized_subspace_iter`, finished through the
    eigendecomposition of the small normal matrix ``B.T @ B``.

    Raises DegenerateSpectrumError if an estimated squared singular value
    falls below ``rtol`` times the largest (the division by it would blow up).
    """
    A = aslinearoperator(A)
    check_sizes(A.shape, p, l, v)
    Q = qr_qc(A, p, l, v - 1, rng)
    B = A.apply_adjoint(Q) if v % 2 == 0 else A.apply(Q)
    lam_sq, W = tevd(B.T @ B, p)
    if lam_sq[0] <= 0 or lam_sq.min() < rtol * lam_sq[0]:
        raise DegenerateSpectrumError(
            f"estimated spectrum degenerate: lambda^2 = {lam_sq.min():.3e} vs max {lam_sq[0]:.3e}")
    s = np.sqrt(lam_sq)
    other = (B @ W) / s
    if v % 2 == 0:
        return SvdTriple(Q @ W, s, other)
    return SvdTriple(other, s, Q @ W)


def recommend_orientation(goal: str, v: int) -> str:
    """Which input to hand the iteration: ``"A"`` or ``"A.T"``.

    Even budgets sharpen the right vectors of the input, odd budgets the left.
    goal is one of ``left``, ``right`` or ``normal`` (right vectors of A, for
    approximating A.T @ A).
    """
    if goal not in ("left", "right", "normal"):
        raise ArgumentError(f"unknown goal {goal!r}")
    want_right = goal in ("right", "normal")
    even = v % 2 == 0
    return "A" if want_right == even else "A.T"


# ---------------------------------------------------------------------------
# numerical checks of the average-error bounds
# ---------------------------------------------------------------------------

def _bound(s, p, l, e):
    s = np.asarray(s, dtype=float)
    if p < 2 or l < 2 or p + l > s.size:
        raise ArgumentError("bounds need p >= 2, l >= 2 and p + l <= len(spectrum)")
    tail = s[p:]
    val = ((1 + math.sqrt(p / (l - 1))) * s[p] ** e
           + math.e * math.sqrt(p + l) / l * math.sqrt(math.fsum(tail ** (2 * e))))
    return val ** (1.0 / e)


def power_scheme_bound(s, p: int, l: int, q: int) -> float:
    """Average spectral error bound for a range basis of (AA*)^q A Omega."""
    return _bound(s, p, l, 2 * q + 1)


def half_power_bound(s, p: int, l: int, q: int) -> float:
    """Average spectral error bound for a co-range basis of (A*A)^q Omega."""
    if q < 1:
        raise ArgumentError("half-power bound needs q >= 1")
    return _bound(s, p, l, 2 * q)


def projection_error(A, Q) -> float:
    """Spectral norm of A (I - Q Q*) for a co-range basis Q."""
    A = aslinearoperator(A)
    return spectral_norm(LowRankResidual(A, A.apply(Q), Q))


def check_half_power_bound(A, p: int, l: int, q: int, trials: int, seed: int = 0, spectrum=None):
    """Monte-Carlo mean of |A - A Q_r Q_r*| against the closed-form bound.

    Q_r comes from 2q alternating views.  The spectrum is computed densely
    unless given.
    """
    A = aslinearoperator(A)
    if spectrum is None:
        spectrum = np.linalg.svd(A.to_dense(), compute_uv=False)
    bound = half_power_bound(spectrum, p, l, q)
    errs = [projection_error(A, qr_qc(A, p, l, 2 * q, (seed, t))) for t in range(trials)]
    mean = math.fsum(errs) / trials
    # roundoff allowance matters only when the bound is exactly zero
    slack = 1e-12 * float(np.max(spectrum))
    return {"empiricalMeanError": mean, "theoreticalBound": bound, "pass": mean <= bound + slack,
            "errors": errs}


def check_half_power_inequality(A, Q, q: int, rtol: float = 1e-12):
    """Deterministic check of |A(I-QQ*)|^(2q) <= |(A*A)^q (I-QQ*)|."""
    if q < 1:
        raise ArgumentError("q must be >= 1")
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    P = np.eye(A.shape[1]) - Q @ Q.T
    lhs = np.linalg.norm(A @ P, 2) ** (2 * q)
    rhs = np.linalg.norm(np.linalg.matrix_power(A.T @ A, q) @ P, 2)
    return {"lhs": lhs, "rhs": rhs, "pass": bool(lhs <= rhs + rtol * rhs)}
