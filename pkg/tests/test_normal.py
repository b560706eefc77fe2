import numpy as np
import pytest

from randlra.errors import DefinitenessError
from randlra.linalg import CountingOperator, EvdPair, LinearOperator, make_rng, qr_thin, tevd
from randlra.normal import normal_matrix_error, normal_matrix_errors, nystrom_normal, pinched_normal
from randlra.subspace import generalized_subspace_iter


def test_full_space_examples():
    e = nystrom_normal(np.diag([2.0, 1.0]), 1, 1, 2, make_rng(0))
    assert e.lambda_sq == pytest.approx([4.0], abs=1e-8)
    e = pinched_normal(np.diag([3.0, 1.0]), 2, 0, 2, make_rng(0))
    assert np.allclose(e.lambda_sq, [9.0, 1.0], atol=1e-8)


@pytest.mark.parametrize("v", [2, 3, 4, 5])
def test_exact_rank(v):
    rng = make_rng(v)
    U, _ = qr_thin(rng.standard_normal((25, 3)))
    V, _ = qr_thin(rng.standard_normal((20, 3)))
    J = (U * [3.0, 2.0, 0.5]) @ V.T
    for fn in (nystrom_normal, pinched_normal):
        e = fn(J, 3, 2, v, rng)
        assert np.allclose(e.lambda_sq, [9.0, 4.0, 0.25], atol=1e-8)
        assert np.all(e.lambda_sq >= 0) and np.all(np.diff(e.lambda_sq) <= 0)


@pytest.mark.parametrize("v", range(2, 8))
def test_view_accounting(v):
    for fn in (nystrom_normal, pinched_normal):
        op = CountingOperator(make_rng(1).standard_normal((20, 15)))
        fn(op, 3, 2, v, make_rng(0))
        assert op.views == v


@pytest.mark.parametrize("v", [2, 4, 6])
def test_nystrom_matches_squared_subspace_iteration(v):
    J = make_rng(2).standard_normal((40, 30))
    e = nystrom_normal(J, 5, 5, v, make_rng(3))
    t = generalized_subspace_iter(J, 5, 5, v, make_rng(3))
    assert np.allclose(e.lambda_sq, t.s ** 2, rtol=1e-6)


def test_error_metric_against_dense():
    J = make_rng(4).standard_normal((30, 20))
    N = J.T @ J
    lam, W = tevd(N, 5)
    assert normal_matrix_error(J, EvdPair(W, lam), 5) == pytest.approx(0.0, abs=1e-10)
    zero = EvdPair(np.zeros((20, 5)), np.zeros(5))
    ev = np.linalg.eigvalsh(N)[::-1]
    assert normal_matrix_error(J, zero, 5) == pytest.approx(ev[0] / ev[5] - 1, rel=1e-10)
    e = nystrom_normal(J, 5, 3, 4, make_rng(5))
    got = normal_matrix_errors(J, e, 5)
    R = N - e.to_dense()
    assert got["spec"] == pytest.approx(np.linalg.norm(R, 2) / ev[5] - 1, rel=1e-8)
    assert got["frob"] == pytest.approx(np.linalg.norm(R) / np.sqrt(np.sum(ev[5:] ** 2)) - 1, rel=1e-8)


def test_definiteness_error_carries_shift():
    J = make_rng(6).standard_normal((10, 8))

    class Skew(LinearOperator):
        """Adjoint is minus the transpose, so the core is negative definite."""

        def __init__(self):
            super().__init__((10, 8))

        def _apply(self, X):
            return J @ X

        def _apply_adjoint(self, Y):
            return -(J.T @ Y)

    with pytest.raises(DefinitenessError, match="nu ="):
        nystrom_normal(Skew(), 2, 1, 2, make_rng(0))
