import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from netctl.errors import DimensionError, InvalidWeightError, NumericalError
from netctl.linalg import (
    absolute_tol,
    compress_factor,
    kernel_basis,
    numerical_rank,
    pinv,
    pinv_eps,
    pinv_relative_to,
    psd_sqrt,
    stacked_sqrt_factor,
    svd,
)

# entries are zero or of moderate magnitude; subnormals only probe overflow of the checks
finite = st.one_of(st.just(0.0), st.floats(1e-3, 10), st.floats(-10, -1e-3))
matrices = st.tuples(st.integers(1, 6), st.integers(1, 6)).flatmap(lambda s: arrays(float, s, elements=finite))


def penrose(M, X):
    scale = max(np.linalg.norm(M), 1.0) * max(np.linalg.norm(X), 1.0)
    MX, XM = M @ X, X @ M
    residuals = [
        np.linalg.norm(MX @ M - M) / max(np.linalg.norm(M), 1.0),
        np.linalg.norm(XM @ X - X) / max(np.linalg.norm(X), 1.0),
        np.linalg.norm(MX - MX.T) / scale,
        np.linalg.norm(XM - XM.T) / scale,
    ]
    return np.max(residuals)  # propagates NaN, unlike the builtin


def test_pinv_zero_matrix():
    np.testing.assert_array_equal(pinv(np.zeros((2, 3))), np.zeros((3, 2)))


def test_pinv_diagonal():
    np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pinv_random_penrose(rng):
    M = rng.standard_normal((3, 5))
    assert penrose(M, pinv(M)) <= 1e-8


@given(matrices)
def test_pinv_penrose_property(M):
    assert penrose(M, pinv(M)) <= 1e-8


def test_pinv_involution_full_rank(rng):
    M = rng.standard_normal((4, 6))
    assert np.linalg.norm(pinv(pinv(M)) - M) <= 1e-8 * np.linalg.norm(M)


def test_pinv_relative_truncation():
    M = np.diag([1.0, 1e-9])
    np.testing.assert_allclose(pinv(M), np.diag([1.0, 0.0]))
    np.testing.assert_allclose(pinv(M, tol=0.0), np.diag([1.0, 1e9]))


def test_pinv_rejects_nonfinite_and_negative_tol():
    with pytest.raises(NumericalError):
        pinv(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        pinv(np.eye(2), tol=-1.0)


def test_pinv_eps_examples(rng):
    np.testing.assert_allclose(pinv_eps(np.diag([3.0, 1e-9]), 1e-6), np.diag([1 / 3, 0.0]))
    np.testing.assert_allclose(pinv_eps(np.eye(4), 1e-6), np.eye(4))
    M = rng.standard_normal((5, 5))
    np.testing.assert_allclose(pinv_eps(M, 1e-14), pinv(M, 0.0), rtol=1e-8, atol=1e-10)
    with pytest.raises(ValueError):
        pinv_eps(M, 0.0)


def test_absolute_tol_emulates_absolute_cutoff():
    M = np.diag([1e4, 1e-5, 1e-9])
    np.testing.assert_allclose(pinv(M, absolute_tol(M, 1e-8)), pinv_eps(M, 1e-8))


def test_pinv_relative_to_ignores_roundoff_products(rng):
    U = rng.standard_normal((4, 6))
    noise = 1e-17 * rng.standard_normal((4, 2))
    np.testing.assert_array_equal(pinv_relative_to(noise, U), np.zeros((2, 4)))
    np.testing.assert_allclose(pinv_relative_to(U, U), pinv(U))


def test_kernel_basis_examples(rng):
    K = kernel_basis(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert K.shape == (2, 1)
    np.testing.assert_allclose(np.abs(K[:, 0]), [0.0, 1.0])
    M = rng.standard_normal((3, 7))
    K = kernel_basis(M)
    assert K.shape == (7, 4)
    assert np.linalg.norm(M @ K) <= 1e-8
    assert kernel_basis(rng.standard_normal((4, 4))).shape == (4, 0)


@given(matrices)
def test_kernel_basis_orthonormal_and_annihilating(M):
    K = kernel_basis(M)
    assert np.linalg.norm(K.T @ K - np.eye(K.shape[1])) <= 1e-10
    assert np.linalg.norm(M @ K) <= 1e-8 * max(1.0, np.linalg.norm(M))
    assert K.shape[1] == M.shape[1] - numerical_rank(M)


def test_svd_reconstruction_and_order(rng):
    M = rng.standard_normal((5, 3))
    f = svd(M)
    assert np.all(np.diff(f.s) <= 0)
    assert np.linalg.norm(f.reconstruct() - M) <= 1e-10 * np.linalg.norm(M)
    assert svd(np.zeros((0, 3))).s.size == 0


def test_stacked_sqrt_factor_examples(rng):
    U = rng.standard_normal((3, 4))
    Y = rng.standard_normal((2, 4))
    L = stacked_sqrt_factor(0.0, 1.0, Y, U)
    np.testing.assert_allclose(L[:2], 0.0)
    np.testing.assert_allclose(L.T @ L, U.T @ U)
    L = stacked_sqrt_factor(np.eye(2), np.eye(2), np.eye(2), np.eye(2))
    np.testing.assert_allclose(L, np.vstack([np.eye(2), np.eye(2)]))


def test_stacked_sqrt_factor_gram_identity(rng):
    Y, U = rng.standard_normal((4, 6)), rng.standard_normal((3, 6))
    G = rng.standard_normal((4, 2))
    Q = G @ G.T  # singular PSD
    H = rng.standard_normal((3, 3))
    R = H @ H.T + np.eye(3)
    L = stacked_sqrt_factor(Q, R, Y, U)
    target = Y.T @ Q @ Y + U.T @ R @ U
    ref = np.linalg.norm(Y.T @ Q @ Y) + np.linalg.norm(U.T @ R @ U)
    assert np.linalg.norm(L.T @ L - target) <= 1e-8 * ref


def test_weights_validated():
    with pytest.raises(InvalidWeightError):
        stacked_sqrt_factor(0.0, np.diag([1.0, 0.0]), np.zeros((1, 2)), np.zeros((2, 2)))
    with pytest.raises(InvalidWeightError):
        psd_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidWeightError):
        psd_sqrt(np.diag([1.0, -1.0]))
    with pytest.raises(DimensionError):
        stacked_sqrt_factor(1.0, 1.0, np.zeros((1, 2)), np.zeros((1, 3)))


def test_compress_factor_preserves_gram(rng):
    L = rng.standard_normal((20, 5))
    Lc = compress_factor(L)
    assert Lc.shape == (5, 5)
    np.testing.assert_allclose(Lc.T @ Lc, L.T @ L, atol=1e-10)
    short = rng.standard_normal((2, 5))
    assert compress_factor(short) is short
