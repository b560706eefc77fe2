import numpy as np
import pytest

from randlra.errors import ArgumentError
from randlra.krylov import block_krylov_row_stream, block_krylov_svd, krylov_width
from randlra.linalg import CountingOperator, make_rng, qr_thin
from randlra.streams import CountingRowStream, DenseRowStream
from randlra.subspace import generalized_subspace_iter


def low_rank(rng, m, n, s):
    U, _ = qr_thin(rng.standard_normal((m, len(s))))
    V, _ = qr_thin(rng.standard_normal((n, len(s))))
    return (U * s) @ V.T


@pytest.mark.parametrize("v", [2, 3])
def test_small_v_matches_subspace_iteration(v):
    A = make_rng(0).standard_normal((40, 30))
    a = block_krylov_svd(A, 4, 3, v, make_rng(5))
    b = generalized_subspace_iter(A, 4, 3, v, make_rng(5))
    assert np.allclose(a.s, b.s, rtol=1e-12)
    assert np.allclose(a.to_dense(), b.to_dense(), atol=1e-12)


@pytest.mark.parametrize("v", range(2, 8))
def test_view_and_product_accounting(v):
    p, l = 3, 2
    op = CountingOperator(make_rng(1).standard_normal((40, 35)))
    block_krylov_svd(op, p, l, v, make_rng(0))
    assert op.views == v
    assert op.apply_calls == (v + 1) // 2 and op.adjoint_calls == v // 2
    assert op.products == (v + v // 2 - 1) * (p + l)


@pytest.mark.parametrize("v", [2, 3, 4, 5, 6])
def test_exact_rank_recovery(v):
    A = low_rank(make_rng(v), 60, 50, [4.0, 3.0, 2.0, 1.0])
    t = block_krylov_svd(A, 4, 2, v, make_rng(1))
    assert np.linalg.norm(A - t.to_dense()) / np.linalg.norm(A) < 1e-8


@pytest.mark.parametrize("v", [2, 3, 4, 5, 6, 7])
def test_row_stream_matches_operator(v):
    A = make_rng(2).standard_normal((70, 50)) @ np.diag(0.8 ** np.arange(50))
    a = block_krylov_svd(A, 4, 3, v, make_rng(3))
    s = CountingRowStream(DenseRowStream(A, block_rows=9))
    b = block_krylov_row_stream(s, 4, 3, v, make_rng(3))
    assert np.allclose(a.s, b.s, rtol=1e-8)
    assert np.linalg.norm(a.to_dense() - b.to_dense()) <= 1e-8 * np.linalg.norm(a.to_dense())
    assert s.passes == -(-(v - 1) // 2) + 1


def test_row_stream_exact_rank_single_restart():
    A = low_rank(make_rng(4), 30, 25, [2.0, 1.0])
    t = block_krylov_row_stream(DenseRowStream(A, block_rows=7), 2, 2, 3, make_rng(0))
    assert np.linalg.norm(A - t.to_dense()) / np.linalg.norm(A) < 1e-8


def test_width_check():
    assert krylov_width(3, 2, 6) == 15 and krylov_width(3, 2, 7) == 15
    with pytest.raises(ArgumentError):
        block_krylov_svd(np.ones((20, 12)), 3, 2, 6, make_rng(0))
    with pytest.raises(ArgumentError):
        block_krylov_row_stream(DenseRowStream(np.ones((20, 12))), 3, 2, 6, make_rng(0))


def test_rank_deficient_basis_is_flagged():
    A = low_rank(make_rng(5), 30, 30, [1.0, 1.0])
    t = block_krylov_svd(A, 2, 2, 6, make_rng(0))
    assert t.flags["rank_deficient"] and t.flags["basis_width"] < 12
    assert np.linalg.norm(A - t.to_dense()) < 1e-8


def test_krylov_beats_subspace_on_slow_decay():
    A = np.diag(np.r_[np.ones(5), (np.arange(2, 96) / 1.0) ** -0.5])
    ek, es = [], []
    for t in range(10):
        k = block_krylov_svd(A, 5, 2, 6, make_rng(t))
        s = generalized_subspace_iter(A, 5, 2, 6, make_rng(t))
        ek.append(np.linalg.norm(A - k.to_dense(), 2))
        es.append(np.linalg.norm(A - s.to_dense(), 2))
    assert np.mean(ek) <= np.mean(es)
