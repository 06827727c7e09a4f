"""Dense linear-algebra kernels: pseudoinverses, kernel bases, square-root factors.

Every routine validates that its inputs are finite and routes factorization
failures into :class:`~netctl.errors.NumericalError` instead of returning
garbage.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import DimensionError, InvalidWeightError, NumericalError

DEFAULT_PINV_TOL = 1e-8
DEFINITENESS_TOL = 1e-10


class SvdFactorization(NamedTuple):
    """Thin or full SVD ``M = U @ diag(s) @ Vt`` with ``s`` non-increasing."""

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        k = self.s.size
        return (self.U[:, :k] * self.s) @ self.Vt[:k]


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array, raising on NaN/Inf."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def svd(M, full_matrices: bool = False) -> SvdFactorization:
    """SVD with a ``gesvd`` fallback when the divide-and-conquer driver fails."""
    M = as_matrix(M)
    if M.size == 0:
        r, c = M.shape
        k = min(r, c)
        U = np.eye(r) if full_matrices else np.eye(r, k)
        Vt = np.eye(c) if full_matrices else np.eye(k, c)
        return SvdFactorization(U, np.zeros(k), Vt)
    for driver in ("gesdd", "gesvd"):
        try:
            U, s, Vt = scipy.linalg.svd(
                M, full_matrices=full_matrices, check_finite=False, lapack_driver=driver
            )
        except (np.linalg.LinAlgError, ValueError):
            continue
        if np.all(np.isfinite(s)):
            return SvdFactorization(U, s, Vt)
    raise NumericalError(f"SVD did not converge for a {M.shape[0]}x{M.shape[1]} matrix")


def numerical_rank(M, tol: float = DEFAULT_PINV_TOL) -> int:
    """Number of singular values above ``tol * sigma_max``."""
    s = svd(M).s
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def _pinv_from_svd(f: SvdFactorization, keep: np.ndarray) -> np.ndarray:
    k = int(np.count_nonzero(keep))
    if k == 0:
        return np.zeros((f.Vt.shape[1], f.U.shape[0]))
    # keep is a prefix because s is sorted
    return (f.Vt[:k].T / f.s[:k]) @ f.U[:, :k].T


def pinv(M, tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with relative singular-value truncation.

    Singular values ``<= tol * sigma_max`` are treated as zero. ``tol=0``
    keeps every strictly positive singular value.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    f = svd(M)
    if f.s.size == 0 or f.s[0] == 0.0:
        return np.zeros((f.Vt.shape[1], f.U.shape[0]))
    return _pinv_from_svd(f, f.s > tol * f.s[0])


def absolute_tol(M, threshold: float = DEFAULT_PINV_TOL) -> float:
    """Relative tolerance equivalent to an absolute cutoff ``threshold`` on ``M``.

    Useful when data are badly scaled and a fixed absolute cutoff is wanted
    from functions that take a relative ``tol``.
    """
    s_max = float(np.linalg.norm(as_matrix(M, "M"), 2)) if np.size(M) else 0.0
    return threshold / s_max if s_max > 0 else threshold


def pinv_eps(M, eps: float) -> np.ndarray:
    """Pseudoinverse that zeroes singular values below the absolute threshold ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    f = svd(M)
    return _pinv_from_svd(f, f.s >= eps)


def pinv_relative_to(M, reference, tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Pseudoinverse of ``M`` truncated at ``tol * ||reference||_2``.

    For products such as ``L K`` with orthonormal ``K`` the natural scale is
    that of ``L``: when ``L K`` is round-off noise, a cutoff relative to its
    own largest singular value would invert that noise.
    """
    M = as_matrix(M)
    ref = float(np.linalg.norm(as_matrix(reference), 2)) if np.size(reference) else 0.0
    if ref == 0.0:
        return np.zeros((M.shape[1], M.shape[0]))
    return pinv_eps(M, tol * ref)


def kernel_basis(M, tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Orthonormal basis of ``Ker(M)`` as the columns of a ``cols x k`` matrix.

    When the kernel is trivial the result has zero columns, so callers can use
    it in products without special-casing.
    """
    M = as_matrix(M)
    f = svd(M, full_matrices=True)
    if f.s.size == 0 or f.s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(f.s > tol * f.s[0]))
    return f.Vt[rank:].T.copy()


def psd_sqrt(W, name: str = "weight", strict: bool = False):
    """Symmetric square root of a PSD weight, via eigendecomposition.

    Scalars are accepted and returned as scalars (``q`` stands for ``q * I``).
    Slightly negative eigenvalues (within the definiteness tolerance) are
    clamped to zero; with ``strict`` the weight must be positive definite.
    """
    if np.ndim(W) == 0:
        w = float(W)
        if not np.isfinite(w) or w < 0 or (strict and w <= DEFINITENESS_TOL):
            raise InvalidWeightError(f"{name} must be {'positive' if strict else 'non-negative'}, got {w}")
        return np.sqrt(w)
    W = as_matrix(W, name)
    if W.shape[0] != W.shape[1]:
        raise DimensionError(f"{name} must be square, got {W.shape}")
    scale = max(1.0, np.abs(W).max(initial=0.0))
    if not np.allclose(W, W.T, atol=DEFINITENESS_TOL * scale, rtol=0):
        raise InvalidWeightError(f"{name} must be symmetric")
    evals, evecs = np.linalg.eigh((W + W.T) / 2)
    lo = evals.min(initial=np.inf)
    if strict and lo <= DEFINITENESS_TOL * scale:
        raise InvalidWeightError(f"{name} must be positive definite (min eigenvalue {lo:.3e})")
    if lo < -DEFINITENESS_TOL * scale:
        raise InvalidWeightError(f"{name} must be positive semidefinite (min eigenvalue {lo:.3e})")
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T


def apply_weight_root(root, Y: np.ndarray) -> np.ndarray:
    """Multiply ``Y`` on the left by a square root returned from :func:`psd_sqrt`."""
    if np.ndim(root) == 0:
        return root * Y
    if root.shape[1] != Y.shape[0]:
        raise DimensionError(f"weight of size {root.shape[1]} does not match {Y.shape[0]} rows")
    return root @ Y


def stacked_sqrt_factor(Q, R, Y, U) -> np.ndarray:
    """Return ``L = [Q^{1/2} Y ; R^{1/2} U]`` so that ``L^T L = Y^T Q Y + U^T R U``.

    ``Q`` must be PSD and ``R`` positive definite; scalars denote multiples of
    the identity.
    """
    Y = as_matrix(Y, "Y")
    U = as_matrix(U, "U")
    if Y.shape[1] != U.shape[1]:
        raise DimensionError(f"Y has {Y.shape[1]} columns but U has {U.shape[1]}")
    q_root = psd_sqrt(Q, "Q")
    r_root = psd_sqrt(R, "R", strict=True)
    return np.vstack([apply_weight_root(q_root, Y), apply_weight_root(r_root, U)])


def compress_factor(L: np.ndarray) -> np.ndarray:
    """Square-root factor with at most ``cols`` rows and the same Gram ``L^T L``.

    Tall factors are replaced by the triangular factor of their QR
    decomposition, which leaves every quadratic form ``||L a||`` unchanged.
    """
    if L.shape[0] <= L.shape[1]:
        return L
    try:
        return scipy.linalg.qr(L, mode="r", check_finite=False)[0][: L.shape[1]]
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError("QR factorization failed") from exc
