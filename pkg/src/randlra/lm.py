"""Levenberg-Marquardt model updates from a truncated SVD of the Jacobian.

The damped normal equations ``(J^T J + (mu + gamma) I) dx = -(J^T d + mu x)``
are solved approximately using only the leading p singular triplets.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ArgumentError
from .linalg import EvdPair, SvdTriple, aslinearoperator, svd_dense


@dataclass
class LmState:
    """Parameters x, residual d, optional gradient g_obs = J^T d, weights."""

    x: np.ndarray
    d: np.ndarray
    mu: float
    gamma: float
    g_obs: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        self.d = np.asarray(self.d, dtype=float).ravel()
        if self.g_obs is not None:
            self.g_obs = np.asarray(self.g_obs, dtype=float).ravel()
        if self.mu < 0:
            raise ArgumentError("mu must be >= 0")
        if self.gamma <= 0:
            raise ArgumentError("gamma must be > 0")

    @property
    def c(self) -> float:
        return self.mu + self.gamma

    def with_gradient(self, J) -> "LmState":
        """Copy with g_obs = J^T d filled in."""
        J = aslinearoperator(J)
        return replace(self, g_obs=J.apply_adjoint(self.d[:, None]).ravel())


def _right_pairs(pairs):
    if isinstance(pairs, SvdTriple):
        return pairs.V, pairs.s ** 2
    if isinstance(pairs, EvdPair):
        return pairs.V, pairs.lambda_sq
    raise ArgumentError("expected an SvdTriple or EvdPair")


def _need_gradient(state):
    if state.g_obs is None:
        raise ArgumentError("this update needs g_obs; use state.with_gradient(J)")
    return state.g_obs


def lm_update_dx1(t: SvdTriple, state: LmState) -> np.ndarray:
    """Update using both singular vector sets: sum_i alpha_i v_i."""
    c = state.c
    alpha = -(t.s * (t.U.T @ state.d) + state.mu * (t.V.T @ state.x)) / (c + t.s ** 2)
    return t.V @ alpha


def lm_update_dx2(pairs, state: LmState) -> np.ndarray:
    """Update using right vectors and the gradient: sum_i beta_i v_i."""
    V, lam_sq = _right_pairs(pairs)
    g = _need_gradient(state)
    beta = -(V.T @ g + state.mu * (V.T @ state.x)) / (state.c + lam_sq)
    return V @ beta


def lm_update_dx3(pairs, state: LmState) -> np.ndarray:
    """Update from the low-rank-plus-identity approximation of the inverse.

    Keeps the full gradient outside the retained subspace.
    """
    V, lam_sq = _right_pairs(pairs)
    g = _need_gradient(state)
    c = state.c
    beta = -(V.T @ g + state.mu * (V.T @ state.x)) / (c + lam_sq)
    return -((g + state.mu * state.x) + V @ (lam_sq * beta)) / c


def posterior_inverse_apply(pairs, mu_gamma: float, rhs) -> np.ndarray:
    """Apply ``(1/c) [I - V D V^T]`` with ``D_ii = lambda_i^2 / (c + lambda_i^2)``,
    the approximation of ``(J^T J + c I)^{-1}``."""
    if mu_gamma <= 0:
        raise ArgumentError("mu + gamma must be > 0")
    V, lam_sq = _right_pairs(pairs)
    rhs = np.asarray(rhs, dtype=float)
    D = lam_sq / (mu_gamma + lam_sq)
    coef = V.T @ rhs
    coef = D[:, None] * coef if coef.ndim == 2 else D * coef
    return (rhs - V @ coef) / mu_gamma


def dense_lm_update(J, state: LmState) -> np.ndarray:
    """Reference solution of the damped normal equations."""
    J = np.asarray(J, dtype=float)
    H = J.T @ J + state.c * np.eye(J.shape[1])
    return -np.linalg.solve(H, J.T @ state.d + state.mu * state.x)


def update_diagnostics(J, state: LmState, p_range=None) -> list[dict]:
    """Norms of the three updates and their distance to the dense update for
    each truncation p, using the exact SVD of J.

    For x = 0 the rows also carry the closed-form error bounds
    ``bound2 = max_{i>p} l_i/(c + l_i^2) |d|`` and
    ``bound3 = l_{p+1}^3 / (c (c + l_{p+1}^2)) |d|``.
    """
    J = np.asarray(J, dtype=float)
    full = svd_dense(J)
    st = state if state.g_obs is not None else state.with_gradient(J)
    ref = dense_lm_update(J, st)
    c = st.c
    lam = full.s
    if p_range is None:
        p_range = range(1, lam.size + 1)
    nd = np.linalg.norm(st.d)
    x_zero = not np.any(st.x)
    rows = []
    for p in p_range:
        t = full.truncate(p)
        dx = [lm_update_dx1(t, st), lm_update_dx2(t, st), lm_update_dx3(t, st)]
        row = {"p": p}
        for k, v in enumerate(dx, 1):
            row[f"norm{k}"] = float(np.linalg.norm(v))
            row[f"err{k}"] = float(np.linalg.norm(v - ref))
        if x_zero:
            tail = lam[p:]
            row["bound2"] = float(np.max(tail / (c + tail ** 2)) * nd) if tail.size else 0.0
            lp = tail[0] if tail.size else 0.0
            row["bound3"] = float(lp ** 3 / (c * (c + lp ** 2)) * nd)
        rows.append(row)
    return rows
