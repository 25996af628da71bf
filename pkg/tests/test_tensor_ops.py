"""Tensor algebra primitives against brute-force index-arithmetic oracles."""

import itertools

import numpy as np
import pytest

from concpd.tensor_ops import (
    factors_khatri_rao,
    hadamard_gram,
    khatri_rao,
    matricize,
    refold,
    spectral_norm,
    unvectorize,
    vectorize,
)

# ---------------------------------------------------------------------------
# oracles: independent element-by-element implementations
# ---------------------------------------------------------------------------


def vec_offset(idx, dims):
    """Linear offset of a multi-index with the first index varying fastest."""
    off, stride = 0, 1
    for i, d in zip(idx, dims):
        off += i * stride
        stride *= d
    return off


def matricize_oracle(t, mode):
    """Element-wise mode-n unfolding: row i_n, column from the remaining
    indices in ascending mode order, earliest fastest."""
    dims = t.shape
    rest = [d for m, d in enumerate(dims) if m != mode]
    out = np.zeros((dims[mode], int(np.prod(rest))))
    for idx in itertools.product(*(range(d) for d in dims)):
        ridx = tuple(i for m, i in enumerate(idx) if m != mode)
        out[idx[mode], vec_offset(ridx, rest)] = t[idx]
    return out


def khatri_rao_oracle(a, b):
    """Column-wise Kronecker, first argument's index slowest."""
    cols = [np.kron(a[:, r], b[:, r]) for r in range(a.shape[1])]
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# vectorize / unvectorize
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dims", [(3,), (2, 3), (2, 3, 4), (3, 2, 4, 2)])
def test_vectorize_offsets(dims):
    rng = np.random.default_rng(0)
    t = rng.standard_normal(dims)
    v = vectorize(t)
    assert v.shape == (t.size,)
    for idx in itertools.product(*(range(d) for d in dims)):
        assert v[vec_offset(idx, dims)] == t[idx]


def test_vectorize_spec_order():
    # 2 x 2: offsets (0,0)->0, (1,0)->1, (0,1)->2, (1,1)->3
    t = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert vectorize(t).tolist() == [1.0, 2.0, 3.0, 4.0]


@pytest.mark.parametrize("dims", [(4,), (3, 5), (2, 3, 4), (2, 2, 3, 2)])
def test_unvectorize_round_trip(dims):
    rng = np.random.default_rng(1)
    t = rng.standard_normal(dims)
    assert np.array_equal(unvectorize(vectorize(t), dims), t)


# ---------------------------------------------------------------------------
# matricize / refold
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dims", [(2, 3), (2, 3, 4), (3, 2, 4, 2)])
def test_matricize_matches_oracle(dims):
    rng = np.random.default_rng(2)
    t = rng.standard_normal(dims)
    for mode in range(len(dims)):
        got = matricize(t, mode)
        want = matricize_oracle(t, mode)
        assert got.shape == want.shape
        assert np.array_equal(got, want)


def test_matricize_mode_out_of_range():
    t = np.zeros((2, 3, 4))
    with pytest.raises(ValueError):
        matricize(t, 3)
    with pytest.raises(ValueError):
        matricize(t, -1)


@pytest.mark.parametrize("dims", [(5,), (4, 3), (2, 5, 3), (3, 2, 2, 4)])
def test_refold_round_trip(dims):
    rng = np.random.default_rng(3)
    t = rng.standard_normal(dims)
    for mode in range(len(dims)):
        assert np.array_equal(refold(matricize(t, mode), mode, dims), t)


def test_vectorize_is_mode0_matricize_stacked():
    # columns of the mode-0 unfolding laid end to end give the vectorization
    rng = np.random.default_rng(4)
    t = rng.standard_normal((3, 4, 2))
    m = matricize(t, 0)
    assert np.array_equal(m.reshape(-1, order="F"), vectorize(t))


# ---------------------------------------------------------------------------
# Khatri-Rao
# ---------------------------------------------------------------------------


def test_khatri_rao_worked_example():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    want = np.array([[0.0, 2.0], [1.0, 0.0], [0.0, 4.0], [3.0, 0.0]])
    assert np.array_equal(khatri_rao([a, b]), want)


@pytest.mark.parametrize("rows", [(2, 3), (4, 2, 3), (2, 2, 2, 3)])
def test_khatri_rao_matches_kron_columns(rows):
    rng = np.random.default_rng(5)
    r = 4
    mats = [rng.standard_normal((m, r)) for m in rows]
    got = khatri_rao(mats)
    want = mats[0]
    for m in mats[1:]:
        want = khatri_rao_oracle(want, m)
    assert np.allclose(got, want, rtol=0.0, atol=0.0)
    assert got.shape == (int(np.prod(rows)), r)


def test_khatri_rao_column_mismatch():
    with pytest.raises(ValueError):
        khatri_rao([np.zeros((2, 3)), np.zeros((4, 2))])


def test_factors_khatri_rao_order_and_skip():
    rng = np.random.default_rng(6)
    factors = [rng.standard_normal((d, 3)) for d in (2, 3, 4)]
    # descending mode order: U3 (x) U2 (x) U1
    assert np.array_equal(
        factors_khatri_rao(factors), khatri_rao([factors[2], factors[1], factors[0]])
    )
    assert np.array_equal(
        factors_khatri_rao(factors, skip=1), khatri_rao([factors[2], factors[0]])
    )


def test_factors_khatri_rao_vectorize_consistency():
    # U_kr @ lam reproduces the vectorized rank-1 sum
    rng = np.random.default_rng(7)
    dims, r = (3, 4, 2), 3
    factors = [rng.random((d, r)) for d in dims]
    lam = rng.random(r)
    dense = np.zeros(dims)
    for j in range(r):
        dense += lam[j] * np.einsum(
            "i,j,k->ijk", factors[0][:, j], factors[1][:, j], factors[2][:, j]
        )
    assert np.allclose(factors_khatri_rao(factors) @ lam, vectorize(dense), atol=1e-12)


def test_khatri_rao_transpose_product_identity():
    # kr(A, B).T @ kr(C, D) == (A.T @ C) * (B.T @ D)
    rng = np.random.default_rng(8)
    a, c = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    b, d = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    lhs = khatri_rao([a, b]).T @ khatri_rao([c, d])
    rhs = (a.T @ c) * (b.T @ d)
    assert np.allclose(lhs, rhs, atol=1e-12)


# ---------------------------------------------------------------------------
# Hadamard products of Gram matrices
# ---------------------------------------------------------------------------


def test_hadamard_gram_full_and_skip():
    rng = np.random.default_rng(9)
    mats = [rng.standard_normal((d, 3)) for d in (4, 5, 6)]
    want = (mats[0].T @ mats[0]) * (mats[1].T @ mats[1]) * (mats[2].T @ mats[2])
    assert np.allclose(hadamard_gram(mats), want, atol=1e-12)
    want_skip = (mats[0].T @ mats[0]) * (mats[2].T @ mats[2])
    assert np.allclose(hadamard_gram(mats, skip=1), want_skip, atol=1e-12)


def test_hadamard_gram_cross():
    rng = np.random.default_rng(10)
    mats = [rng.standard_normal((d, 3)) for d in (4, 5)]
    others = [rng.standard_normal((d, 2)) for d in (4, 5)]
    want = (mats[0].T @ others[0]) * (mats[1].T @ others[1])
    assert np.allclose(hadamard_gram(mats, mats2=others), want, atol=1e-12)


def test_hadamard_gram_is_khatri_rao_gram():
    rng = np.random.default_rng(11)
    mats = [rng.standard_normal((d, 4)) for d in (3, 4, 2)]
    kr = khatri_rao(list(reversed(mats)))
    assert np.allclose(hadamard_gram(mats), kr.T @ kr, atol=1e-12)


# ---------------------------------------------------------------------------
# spectral norm vs. independent references
# ---------------------------------------------------------------------------


def test_spectral_norm_psd_sweep():
    rng = np.random.default_rng(12)
    for _ in range(20):
        r = rng.integers(1, 9)
        a = rng.standard_normal((r + 2, r))
        g = a.T @ a
        want = float(np.linalg.norm(g, 2))
        assert spectral_norm(g) == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_spectral_norm_diagonal():
    g = np.diag([3.0, 7.0, 1.0])
    assert spectral_norm(g) == pytest.approx(7.0, rel=1e-12)


def test_spectral_norm_zero_matrix():
    assert spectral_norm(np.zeros((4, 4))) == 0.0


def test_spectral_norm_skewed_eigenbasis():
    # leading eigenvector orthogonal to the all-ones direction
    q = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    g = q @ np.diag([1.0, 5.0]) @ q.T
    assert spectral_norm(g) == pytest.approx(5.0, rel=1e-12)


def test_spectral_norm_rank_one():
    v = np.array([1.0, 2.0, 2.0])
    g = np.outer(v, v)
    assert spectral_norm(g) == pytest.approx(9.0, rel=1e-12)


def test_spectral_norm_rejects_nonsquare():
    with pytest.raises(ValueError, match="square"):
        spectral_norm(np.ones((2, 3)))
