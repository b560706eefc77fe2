"""Randomized block Krylov SVD for any view budget, in operator and
row-streamed form."""
from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .linalg import (
    SvdTriple,
    as_rng,
    aslinearoperator,
    gaussian_matrix,
    orthonormalize,
    qr_thin,
    svd_dense,
)
from .streams import checked_pass
from .subspace import check_sizes


def krylov_width(p: int, l: int, v: int) -> int:
    """Columns of the concatenated Krylov basis."""
    return (v // 2) * (p + l) if v % 2 == 0 else ((v - 1) // 2) * (p + l)


def _check(shape, p, l, v):
    check_sizes(shape, p, l, v)
    w = krylov_width(p, l, v)
    if w > min(shape):
        raise ArgumentError(f"Krylov basis width {w} exceeds min(n_r, n_c) = {min(shape)}")


def _finish(A, Q, even):
    if even:
        Qr, Rr = qr_thin(A.apply_adjoint(Q))
        t = svd_dense(Rr)
        Qc, Uh, Vh = Q, t.V, t.U
    else:
        Qc, Rc = qr_thin(A.apply(Q))
        t = svd_dense(Rc)
        Qr, Uh, Vh = Q, t.U, t.V
    return t.s, Qc @ Uh, Qr @ Vh


def block_krylov_svd(A, p: int, l: int, v: int, rng) -> SvdTriple:
    """Rank-p SVD from a block Krylov space built with exactly v views.

    Intermediate blocks are re-orthonormalized except the last one; the
    blocks of the final side are concatenated and orthonormalized together.
    For v < 4 this coincides with generalized subspace iteration.
    """
    A = aslinearoperator(A)
    _check(A.shape, p, l, v)
    rng = as_rng(rng)
    Q = gaussian_matrix(rng, A.shape[1], p + l)
    blocks_c, blocks_r = [], []
    for j in range(1, v):
        last = j == v - 1
        if j % 2:
            Y = A.apply(Q)
            Q = Y if last else qr_thin(Y)[0]
            blocks_c.append(Q)
        else:
            Y = A.apply_adjoint(Q)
            Q = Y if last else qr_thin(Y)[0]
            blocks_r.append(Q)
    even = v % 2 == 0
    K = np.hstack(blocks_c if even else blocks_r)
    Qk = orthonormalize(K)
    flags = {"rank_deficient": Qk.shape[1] < K.shape[1], "basis_width": Qk.shape[1]}
    s, U, V = _finish(A, Qk, even)
    k = min(p, s.size)
    return SvdTriple(U[:, :k], s[:k], V[:, :k], flags)


def block_krylov_row_stream(stream, p: int, l: int, v: int, rng) -> SvdTriple:
    """Block Krylov SVD of a row-streamed matrix.

    Each pass applies A.T A (row by row) so a Krylov step costs one pass
    instead of two.  Total passes: ceil((v - 1) / 2) + 1.  The result spans
    the same subspaces as :func:`block_krylov_svd` with the same seed.
    """
    n_r, n_c = stream.shape
    _check((n_r, n_c), p, l, v)
    rng = as_rng(rng)
    X = gaussian_matrix(rng, n_c, p + l)
    even = v % 2 == 0
    blocks = []
    if even:
        m = v // 2
        for j in range(1, m + 1):
            last = j == m
            C = np.empty((n_r, X.shape[1]))
            W = None if last else np.zeros_like(X)
            for rows, blk in checked_pass(stream, n_c):
                y = blk @ X
                C[rows.start:rows.stop] = y
                if W is not None:
                    W += blk.T @ y
            blocks.append(C if last else qr_thin(C)[0])
            if not last:
                X = qr_thin(W)[0]
    else:
        m = (v - 1) // 2
        for j in range(1, m + 1):
            W = np.zeros_like(X)
            for rows, blk in checked_pass(stream, n_c):
                W += blk.T @ (blk @ X)
            X = W if j == m else qr_thin(W)[0]
            blocks.append(X)
    K = np.hstack(blocks)
    Q = orthonormalize(K)
    flags = {"rank_deficient": Q.shape[1] < K.shape[1], "basis_width": Q.shape[1]}
    if even:
        B = np.zeros((n_c, Q.shape[1]))
        for rows, blk in checked_pass(stream, n_c):
            B += blk.T @ Q[rows.start:rows.stop]
        Qr, Rr = qr_thin(B)
        t = svd_dense(Rr)
        U, V = Q @ t.V, Qr @ t.U
    else:
        B = np.empty((n_r, Q.shape[1]))
        for rows, blk in checked_pass(stream, n_c):
            B[rows.start:rows.stop] = blk @ Q
        Qc, Rc = qr_thin(B)
        t = svd_dense(Rc)
        U, V = Qc @ t.U, Q @ t.V
    k = min(p, t.s.size)
    return SvdTriple(U[:, :k], t.s[:k], V[:, :k], flags)
