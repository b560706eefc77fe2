"""Rank-p eigendecompositions of the normal matrix J.T @ J.

Two ways of compressing J.T J through a basis Q: the prolonged (Nystrom)
form multiplies through J twice, the pinched form projects both sides.  At
the same view budget the prolonged form is expected to be more accurate.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .errors import DefinitenessError
from .linalg import (
    EvdPair,
    as_rng,
    aslinearoperator,
    chol_lower,
    gaussian_matrix,
    qr_thin,
    svd_dense,
    symmetric_spectral_norm,
    tevd,
)
from .subspace import check_sizes, qr_qc

NU_FACTOR = 2.2e-16


def nystrom_normal(J, p: int, l: int, v: int, rng) -> EvdPair:
    """Prolonged-sketch TEVD of J.T J using v views of J."""
    J = aslinearoperator(J)
    check_sizes(J.shape, p, l, v)
    rng = as_rng(rng)
    if v == 2:
        Qr, _ = qr_thin(gaussian_matrix(rng, J.shape[1], p + l))
    elif v % 2 == 0:
        Qr = qr_qc(J, p, l, v - 2, rng)
    else:
        Qr = qr_qc(J.T, p, l, v - 2, rng)
    Yr = J.apply_adjoint(J.apply(Qr))
    nu = NU_FACTOR * float(sla.svdvals(Yr)[0])
    Yr = Yr + nu * Qr
    B = Qr.T @ Yr
    try:
        C = chol_lower((B + B.T) / 2)
    except DefinitenessError as exc:
        d = np.linalg.eigvalsh((B + B.T) / 2)
        raise DefinitenessError(
            f"shifted core not positive definite (nu = {nu:.3e}, smallest eigenvalue {d[0]:.3e})"
        ) from exc
    F = sla.solve_triangular(C, Yr.T, lower=True)
    t = svd_dense(F).truncate(p)
    lam_sq = np.maximum(t.s ** 2 - nu, 0.0)
    return EvdPair(t.V, lam_sq, {"nu": nu})


def pinched_normal(J, p: int, l: int, v: int, rng) -> EvdPair:
    """Pinched-sketch TEVD of J.T J using v views of J."""
    J = aslinearoperator(J)
    check_sizes(J.shape, p, l, v)
    rng = as_rng(rng)
    if v % 2 == 0:
        Qr = qr_qc(J.T, p, l, v - 1, rng)
    else:
        Qr = qr_qc(J, p, l, v - 1, rng)
    Bc = J.apply(Qr)
    lam_sq, W = tevd(Bc.T @ Bc, p)
    return EvdPair(Qr @ W, np.maximum(lam_sq, 0.0))


def normal_matrix_errors(J, approx: EvdPair, p: int, spectrum=None) -> dict:
    """Relative Frobenius and spectral errors of approx against the best
    rank-p approximation of N = J.T J.

    ``spectrum`` is the singular values of J; computed densely if omitted.
    When N has rank <= p the absolute errors are reported with ``absolute``
    set.
    """
    J = aslinearoperator(J)
    if spectrum is None:
        spectrum = np.linalg.svd(J.to_dense(), compute_uv=False)
    ev = np.sort(np.asarray(spectrum, dtype=float) ** 2)[::-1]
    V, lam = approx.V, approx.lambda_sq

    def matvec(X):
        return J.apply_adjoint(J.apply(X)) - V @ (lam[:, None] * (V.T @ X))

    n = J.shape[1]
    spec = symmetric_spectral_norm(matvec, n)
    NV = J.apply_adjoint(J.apply(V))
    frob_sq = math.fsum(ev ** 2) - 2 * math.fsum(lam * np.sum(V * NV, axis=0)) + math.fsum(lam ** 2)
    # uses V.T V = I, which holds for both constructions above
    frob = math.sqrt(max(frob_sq, 0.0))
    opt_spec = ev[p] if ev.size > p else 0.0
    opt_frob = math.sqrt(math.fsum(ev[p:] ** 2))
    if opt_spec == 0.0:
        return {"frob": frob, "spec": spec, "absolute": True}
    return {"frob": frob / opt_frob - 1, "spec": spec / opt_spec - 1, "absolute": False}


def normal_matrix_error(J, approx: EvdPair, p: int, spectrum=None) -> float:
    """Relative spectral error of approx as an approximation of J.T J."""
    return normal_matrix_errors(J, approx, p, spectrum)["spec"]
