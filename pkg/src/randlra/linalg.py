"""Dense kernels, the matrix-free operator abstraction and random test matrices.

Every algorithm in the package touches its input only through
:class:`LinearOperator` (``apply`` for A @ X, ``apply_adjoint`` for A.T @ Y),
which is what makes view counting possible.  Dense factorizations are thin
wrappers over LAPACK with a fixed sign convention so results are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator as _ScipyOperator
from scipy.sparse.linalg import eigsh

from .errors import ArgumentError, DefinitenessError, NumericError

# relative cutoff used for every numerical-rank decision
RANK_TOL = 1e-12

_DENSE_NORM_LIMIT = 400


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Seeded generator; independent streams are derived as (seed, stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator, an integer seed or a ``(seed, stream)`` pair."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, tuple):
        return make_rng(*rng)
    return make_rng(rng)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

class LinearOperator:
    """Matrix-free access to an ``n_r x n_c`` real matrix.

    Subclasses implement ``_apply`` and ``_apply_adjoint`` on 2-D blocks.
    ``concurrent_safe`` tells callers the two products may run in parallel.
    """

    concurrent_safe = False

    def __init__(self, shape):
        n_r, n_c = (int(d) for d in shape)
        if n_r < 1 or n_c < 1:
            raise ArgumentError(f"operator dimensions must be positive, got {shape}")
        self.shape = (n_r, n_c)

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.shape[1]:
            raise ArgumentError(f"apply: expected {self.shape[1]} rows, got {X.shape[0]}")
        return self._apply(X)

    def apply_adjoint(self, Y):
        Y = np.asarray(Y, dtype=float)
        if Y.shape[0] != self.shape[0]:
            raise ArgumentError(f"apply_adjoint: expected {self.shape[0]} rows, got {Y.shape[0]}")
        return self._apply_adjoint(Y)

    def _apply(self, X):
        raise NotImplementedError

    def _apply_adjoint(self, Y):
        raise NotImplementedError

    @property
    def T(self) -> "LinearOperator":
        return _AdjointOperator(self)

    def to_dense(self) -> np.ndarray:
        return self.apply(np.eye(self.shape[1]))

    def __matmul__(self, X):
        return self.apply(X)


class _AdjointOperator(LinearOperator):
    def __init__(self, parent: LinearOperator):
        super().__init__(parent.shape[::-1])
        self.parent = parent
        self.concurrent_safe = parent.concurrent_safe

    def apply(self, X):
        return self.parent.apply_adjoint(X)

    def apply_adjoint(self, Y):
        return self.parent.apply(Y)

    @property
    def T(self):
        return self.parent

    def to_dense(self):
        return self.parent.to_dense().T


class DenseOperator(LinearOperator):
    concurrent_safe = True

    def __init__(self, M):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2:
            raise ArgumentError("DenseOperator needs a 2-D array")
        if not np.all(np.isfinite(M)):
            raise ArgumentError("matrix entries must be finite")
        super().__init__(M.shape)
        self.matrix = M

    def _apply(self, X):
        return self.matrix @ X

    def _apply_adjoint(self, Y):
        return self.matrix.T @ Y

    def to_dense(self):
        return self.matrix


class DiagonalOperator(LinearOperator):
    """Rectangular diagonal matrix; never materialized by the algorithms."""

    concurrent_safe = True

    def __init__(self, diag, shape=None):
        diag = np.asarray(diag, dtype=float).ravel()
        if shape is None:
            shape = (diag.size, diag.size)
        if diag.size != min(shape):
            raise ArgumentError("diagonal length must equal min(shape)")
        super().__init__(shape)
        self.diag = diag

    def _apply(self, X):
        out = np.zeros((self.shape[0],) + X.shape[1:])
        m = self.diag.size
        out[:m] = self.diag.reshape((m,) + (1,) * (X.ndim - 1)) * X[:m]
        return out

    def _apply_adjoint(self, Y):
        out = np.zeros((self.shape[1],) + Y.shape[1:])
        m = self.diag.size
        out[:m] = self.diag.reshape((m,) + (1,) * (Y.ndim - 1)) * Y[:m]
        return out

    def to_dense(self):
        M = np.zeros(self.shape)
        idx = np.arange(self.diag.size)
        M[idx, idx] = self.diag
        return M


class CountingOperator(LinearOperator):
    """Wraps an operator and counts views and operator-vector products.

    The adjoint returned by ``.T`` shares the counters, so algorithms that
    flip the input (e.g. pass ``J.T``) are accounted correctly.
    """

    def __init__(self, op):
        op = aslinearoperator(op)
        super().__init__(op.shape)
        self.inner = op
        self.concurrent_safe = op.concurrent_safe
        self.reset()

    def reset(self):
        self.apply_calls = 0
        self.adjoint_calls = 0
        self.apply_vectors = 0
        self.adjoint_vectors = 0

    @property
    def views(self) -> int:
        return self.apply_calls + self.adjoint_calls

    @property
    def products(self) -> int:
        return self.apply_vectors + self.adjoint_vectors

    def _apply(self, X):
        self.apply_calls += 1
        self.apply_vectors += X.shape[1] if X.ndim == 2 else 1
        return self.inner.apply(X)

    def _apply_adjoint(self, Y):
        self.adjoint_calls += 1
        self.adjoint_vectors += Y.shape[1] if Y.ndim == 2 else 1
        return self.inner.apply_adjoint(Y)

    def to_dense(self):
        return self.inner.to_dense()


class LowRankResidual(LinearOperator):
    """``A - L @ R.T`` applied without forming it."""

    def __init__(self, A, L, R):
        A = aslinearoperator(A)
        super().__init__(A.shape)
        self.A, self.L, self.R = A, np.asarray(L, float), np.asarray(R, float)

    @classmethod
    def from_triple(cls, A, t: "SvdTriple"):
        return cls(A, t.U * t.s, t.V)

    def _apply(self, X):
        return self.A.apply(X) - self.L @ (self.R.T @ X)

    def _apply_adjoint(self, Y):
        return self.A.apply_adjoint(Y) - self.R @ (self.L.T @ Y)


def aslinearoperator(A) -> LinearOperator:
    if isinstance(A, LinearOperator):
        return A
    return DenseOperator(A)


def adjoint_discrepancy(op: LinearOperator, rng: np.random.Generator, k: int = 3) -> float:
    """|<AX, Y> - <X, A*Y>| / (|X| |Y|) on random probes."""
    X = rng.standard_normal((op.shape[1], k))
    Y = rng.standard_normal((op.shape[0], k))
    lhs = np.sum(op.apply(X) * Y)
    rhs = np.sum(X * op.apply_adjoint(Y))
    return abs(lhs - rhs) / (np.linalg.norm(X) * np.linalg.norm(Y))


# ---------------------------------------------------------------------------
# factorization results
# ---------------------------------------------------------------------------

@dataclass
class SvdTriple:
    """Approximate TSVD ``U @ diag(s) @ V.T``.

    ``flags`` carries diagnostics such as degraded least-squares conditioning
    or a detected rank deficiency; it never affects the numbers.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.s.size

    def to_dense(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T

    def truncate(self, p: int) -> "SvdTriple":
        return SvdTriple(self.U[:, :p], self.s[:p], self.V[:, :p], dict(self.flags))


@dataclass
class EvdPair:
    """Approximate rank-p eigendecomposition ``V @ diag(lambda_sq) @ V.T``."""

    V: np.ndarray
    lambda_sq: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.lambda_sq.size

    def to_dense(self) -> np.ndarray:
        return (self.V * self.lambda_sq) @ self.V.T


# ---------------------------------------------------------------------------
# dense kernels
# ---------------------------------------------------------------------------

def qr_thin(M):
    """Economic Householder QR with a nonnegative diagonal in R."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise ArgumentError(f"qr_thin needs a tall matrix, got shape {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs, R * signs[:, None]


def svd_dense(M) -> SvdTriple:
    """Full thin SVD; singular values nonincreasing."""
    M = np.asarray(M, dtype=float)
    try:
        U, s, Vt = sla.svd(M, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = sla.svd(M, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"SVD did not converge for a {M.shape} matrix: {exc}") from exc
    return SvdTriple(U, s, Vt.T)


def tsvd(M, p: int) -> SvdTriple:
    """Rank-p truncated SVD of a small dense matrix."""
    return svd_dense(M).truncate(p)


def tevd(S, p: int):
    """Leading p eigenpairs of a symmetric matrix, eigenvalues nonincreasing."""
    S = np.asarray(S, dtype=float)
    w, W = np.linalg.eigh((S + S.T) / 2)
    order = np.argsort(w)[::-1][:p]
    return w[order], W[:, order]


def chol_lower(S):
    """Lower Cholesky factor C with C @ C.T = S."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ArgumentError("chol_lower needs a square matrix")
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise ArgumentError("chol_lower needs a symmetric matrix")
    try:
        return sla.cholesky(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError(f"matrix is not positive definite: {exc}") from exc


def lstsq_via_qr(C, RHS):
    """Least-squares solve ``min |C X - RHS|_F`` through a thin QR of C.

    Returns ``(X, degraded)``.  When R is numerically rank deficient the
    solution falls back to an SVD pseudo-inverse and ``degraded`` is True.
    """
    C = np.asarray(C, dtype=float)
    RHS = np.asarray(RHS, dtype=float)
    if C.shape[0] < C.shape[1]:
        raise ArgumentError(f"lstsq_via_qr needs m >= k, got {C.shape}")
    if RHS.shape[0] != C.shape[0]:
        raise ArgumentError("right-hand side row count does not match C")
    Q, R = qr_thin(C)
    d = np.abs(np.diag(R))
    norm_c = sla.svdvals(R)[0] if R.size else 0.0
    if norm_c > 0 and d.min() >= RANK_TOL * norm_c:
        return sla.solve_triangular(R, Q.T @ RHS, lower=False), False
    return pinv(C) @ RHS, True


def pinv(M, rtol: float = RANK_TOL):
    """Pseudo-inverse via SVD, discarding singular values below rtol * s_max."""
    t = svd_dense(M)
    if t.s.size == 0 or t.s[0] == 0:
        return np.zeros(M.shape[::-1])
    keep = t.s > rtol * t.s[0]
    return (t.V[:, keep] / t.s[keep]) @ t.U[:, keep].T


def orthonormalize(M):
    """Orthonormal basis for range(M).

    Full column rank returns a ``k``-column basis (same as the Q of
    :func:`qr_thin`).  A numerically rank-deficient M returns fewer columns,
    equal to the detected rank, so ``Q.shape[1] < M.shape[1]`` is the flag.
    """
    M = np.asarray(M, dtype=float)
    if M.shape[0] < M.shape[1]:
        raise ArgumentError(f"orthonormalize needs m >= k, got {M.shape}")
    Q, R = qr_thin(M)
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() > RANK_TOL * max(d.max(), np.finfo(float).tiny):
        return Q
    Qp, Rp, _ = sla.qr(M, mode="economic", pivoting=True)
    dp = np.abs(np.diag(Rp))
    rank = int(np.sum(dp > RANK_TOL * dp[0])) if dp[0] > 0 else 0
    return Qp[:, :rank]


# ---------------------------------------------------------------------------
# random sampling matrices
# ---------------------------------------------------------------------------

def gaussian_matrix(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    if m < 1 or n < 1:
        raise ArgumentError(f"gaussian_matrix needs positive dimensions, got ({m}, {n})")
    return rng.standard_normal((m, n))


class SRFT:
    """Subsampled randomized cosine transform ``Phi = D @ F @ P`` (n x s).

    D holds Rademacher signs, F is the orthonormal DCT-II matrix and P keeps
    ``s`` distinct columns.  Products use the fast transform along the long
    dimension.
    """

    def __init__(self, signs, cols, n: int):
        self.n = int(n)
        self.signs = np.asarray(signs, dtype=float)
        self.cols = np.asarray(cols, dtype=int)
        if self.signs.shape != (self.n,):
            raise ArgumentError("SRFT signs must have length n")
        if np.unique(self.cols).size != self.cols.size or self.cols.size > self.n:
            raise ArgumentError("SRFT columns must be distinct and at most n")

    @property
    def s(self) -> int:
        return self.cols.size

    @property
    def shape(self):
        return (self.n, self.s)

    def adjoint_apply(self, M):
        """Phi.T @ M for an (n x k) block."""
        M = np.asarray(M, dtype=float)
        out = scipy.fft.idct(self.signs[:, None] * M, type=2, norm="ortho", axis=0)
        return out[self.cols]

    def right_apply(self, M):
        """M @ Phi for a (k x n) block."""
        M = np.asarray(M, dtype=float)
        out = scipy.fft.idct(M * self.signs[None, :], type=2, norm="ortho", axis=1)
        return out[:, self.cols]

    def materialize(self) -> np.ndarray:
        return self.right_apply(np.eye(self.n))


def srft_matrix(rng: np.random.Generator, n: int, s: int) -> SRFT:
    if not 1 <= s <= n:
        raise ArgumentError(f"SRFT width must satisfy 1 <= s <= n, got s={s}, n={n}")
    signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
    cols = rng.choice(n, size=s, replace=False)
    return SRFT(signs, cols, n)


def dct_matrix(n: int) -> np.ndarray:
    """Explicit orthonormal DCT-II matrix, rows are frequencies."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    C = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * j + 1) / (2 * n))
    C[0] /= np.sqrt(2.0)
    return C


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _probe(n: int) -> np.ndarray:
    return np.random.default_rng(20170901).standard_normal(n)


def spectral_norm(A) -> float:
    """Largest singular value of a dense array or a LinearOperator.

    Small problems use a dense SVD; larger ones a deterministic Lanczos
    iteration on the smaller Gram matrix.
    """
    if isinstance(A, np.ndarray):
        if min(A.shape) <= _DENSE_NORM_LIMIT:
            return float(sla.svdvals(A)[0]) if A.size else 0.0
        op = DenseOperator(A)
    else:
        op = A
    n_r, n_c = op.shape
    if min(n_r, n_c) <= _DENSE_NORM_LIMIT // 4:
        return float(sla.svdvals(op.to_dense())[0])
    if n_c <= n_r:
        n, mv = n_c, (lambda x: op.apply_adjoint(op.apply(x)))
    else:
        n, mv = n_r, (lambda y: op.apply(op.apply_adjoint(y)))
    gram = _ScipyOperator((n, n), matvec=lambda x: mv(x.reshape(-1, 1)).ravel(), dtype=float)
    try:
        w = eigsh(gram, k=1, which="LA", v0=_probe(n), tol=1e-12,
                  return_eigenvectors=False, maxiter=20 * n)
    except Exception as exc:  # ArpackNoConvergence and friends
        raise NumericError(f"spectral norm iteration failed: {exc}") from exc
    return float(np.sqrt(max(w[0], 0.0)))


def symmetric_spectral_norm(matvec, n: int) -> float:
    """max |eigenvalue| of a symmetric operator given by ``matvec``."""
    op = _ScipyOperator((n, n), matvec=lambda x: matvec(x.reshape(-1, 1)).ravel(), dtype=float)
    if n <= _DENSE_NORM_LIMIT // 4:
        M = op.matmat(np.eye(n))
        return float(np.abs(np.linalg.eigvalsh((M + M.T) / 2)).max())
    try:
        w = eigsh(op, k=1, which="LM", v0=_probe(n), tol=1e-12,
                  return_eigenvectors=False, maxiter=20 * n)
    except Exception as exc:
        raise NumericError(f"spectral norm iteration failed: {exc}") from exc
    return float(abs(w[0]))
