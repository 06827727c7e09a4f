"""Data-driven optimal and minimum-energy controls computed from experiment records.

All controls are linear in the target ``y_f``. Formulas that need the
orthogonal projector onto ``Ker(Y_T)`` are evaluated through small Gram
matrices (``U U^T``, ``U Y_T^T``, ``Y_T Y_T^T`` ...), so no ``N x N``
matrix is ever formed by the noise-corrected estimators.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InfeasibleDataError
from .experiments import DataMatrices, NoiseSpec
from .linalg import (
    DEFAULT_PINV_TOL,
    apply_weight_root,
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
from .network import ControlSequence, LinearNetwork, constrained_min_norm, output_ctrb_matrix

DEFAULT_EPS_REL = 1e-6


@dataclass
class DDSolution:
    """A data-driven control with its combination coefficients and diagnostics."""

    u: ControlSequence
    alpha: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BoundReport:
    eta: float
    bound: float
    sigma_min_CT: float
    kappa_CT: float
    delta: float

    @property
    def vacuous(self) -> bool:
        return self.eta >= 1.0


def _target(data: DataMatrices, y_f) -> np.ndarray:
    y_f = np.asarray(y_f, dtype=float).ravel()
    if y_f.size != data.p:
        raise DimensionError(f"target has size {y_f.size}, data record {data.p} outputs")
    return y_f


def _require_rank(Y: np.ndarray, required: int, tol: float, what: str = "Y_T") -> int:
    rank = numerical_rank(Y, tol)
    if rank < required:
        raise InfeasibleDataError(
            f"rank({what}) = {rank} < {required}: the recorded experiments cannot reach every target",
            rank=rank,
            required=required,
        )
    return rank


def _diagnostics(
    data: DataMatrices, YT_rank: int, kernel_dim: int | None, alpha, y_f, Yc=None, target=None, rank_U: bool = True
):
    # rank(U) costs a full SVD of the largest matrix; formulas that never
    # factor U skip it so their timing reflects the control computation
    diag = {"rank_U": numerical_rank(data.U) if rank_U else None, "rank_YT": YT_rank, "kernel_dim": kernel_dim}
    if alpha is not None:
        Yc = data.YT if Yc is None else Yc
        target = y_f if target is None else target
        diag["residual"] = float(np.linalg.norm(Yc @ alpha - target))
    return diag


def _solution(data: DataMatrices, u, alpha=None, diagnostics=None) -> DDSolution:
    return DDSolution(ControlSequence(u, data.m), alpha, diagnostics or {})


def _episodic(data: DataMatrices) -> None:
    if data.X0 is not None and np.any(data.X0 != 0):
        raise ValueError("data have nonzero initial states; use dd_optimal_x0")


def data_sqrt_factor(data: DataMatrices, Q, R) -> np.ndarray:
    """``L = [Q^{1/2} Y_{1:T-1}; R^{1/2} U]`` compressed to at most ``N`` rows."""
    if np.ndim(Q) == 0 and float(Q) == 0.0:
        L = apply_weight_root(psd_sqrt(R, "R", strict=True), data.U)
    else:
        L = stacked_sqrt_factor(Q, R, data.Ymid, data.U)
    return compress_factor(L)


def dd_optimal(data: DataMatrices, Q, R, y_f, tol: float = DEFAULT_PINV_TOL) -> DDSolution:
    """Optimal control ``U (I - K (L K)^+ L) Y_T^+ y_f`` from episodic data.

    Exact whenever ``U`` has full row rank; with fewer (but at least ``p``)
    independent experiments the endpoint is still met at a higher cost.
    """
    _episodic(data)
    y_f = _target(data, y_f)
    rank = _require_rank(data.YT, data.p, tol)
    L = data_sqrt_factor(data, Q, R)
    alpha = constrained_min_norm(L, data.YT, y_f, tol)
    diag = _diagnostics(data, rank, data.N - rank, alpha, y_f)
    return _solution(data, data.U @ alpha, alpha, diag)


def dd_optimal_x0(data: DataMatrices, Q, R, y_f, tol: float = DEFAULT_PINV_TOL, x_start=None) -> DDSolution:
    """Optimal control from experiments with measured, nonzero initial states.

    Combinations are restricted to ``Ker(X0)`` so the free responses cancel.
    With ``x_start`` the control instead starts from that state: the
    combination must reproduce ``x_start`` as its initial state and ``y_f``
    as its final output.
    """
    if data.X0 is None:
        raise ValueError("data carry no initial states")
    y_f = _target(data, y_f)
    L = data_sqrt_factor(data, Q, R)
    if x_start is None:
        KX = kernel_basis(data.X0, tol)
        if KX.shape[1] == 0:
            raise InfeasibleDataError("Ker(X0) is trivial: collect more experiments than states", rank=0, required=data.p)
        YK = data.YT @ KX
        rank = _require_rank(YK, data.p, tol, "Y_T K_X0")
        beta = constrained_min_norm(L @ KX, YK, y_f, tol)
        alpha = KX @ beta
        diag = _diagnostics(data, rank, YK.shape[1] - rank, alpha, y_f)
    else:
        x_start = np.asarray(x_start, dtype=float).ravel()
        if x_start.size != data.X0.shape[0]:
            raise DimensionError(f"x_start has size {x_start.size}, data have {data.X0.shape[0]} states")
        Ys = np.vstack([data.YT, data.X0])
        target = np.concatenate([y_f, x_start])
        rank = _require_rank(Ys, Ys.shape[0], tol, "[Y_T; X0]")
        alpha = constrained_min_norm(L, Ys, target, tol)
        diag = _diagnostics(data, rank, data.N - rank, alpha, y_f, Ys, target)
    return _solution(data, data.U @ alpha, alpha, diag)


def min_energy_map(U, YT, form: str = "compact", tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Linear map ``y_f -> u`` of the data-driven minimum-energy control.

    ``form="compact"`` evaluates ``(Y_T U^+)^+``; ``form="long"`` evaluates
    ``(I - U K (U K)^+) U Y_T^+`` with ``K`` a kernel basis of ``Y_T``. The
    two agree whenever ``Ker(U)`` is contained in ``Ker(Y_T)``.
    """
    U = np.asarray(U, dtype=float)
    YT = np.asarray(YT, dtype=float)
    if form == "compact":
        return pinv(YT @ pinv(U, tol), tol)
    if form == "long":
        base = U @ pinv(YT, tol)
        K = kernel_basis(YT, tol)
        if K.shape[1] == 0:
            return base
        UK = U @ K
        return base - UK @ (pinv_relative_to(UK, U, tol) @ base)
    raise ValueError(f"unknown form {form!r}")


def dd_min_energy(data: DataMatrices, y_f, tol: float = DEFAULT_PINV_TOL) -> DDSolution:
    """Minimum-energy control ``(Y_T U^+)^+ y_f``; uses the final outputs only."""
    y_f = _target(data, y_f)
    rank = _require_rank(data.YT, data.p, tol)
    u = min_energy_map(data.U, data.YT, "compact", tol) @ y_f
    return _solution(data, u, None, _diagnostics(data, rank, data.N - rank, None, y_f))


def dd_min_energy_approx(data: DataMatrices, y_f, tol: float = DEFAULT_PINV_TOL) -> DDSolution:
    """Approximate minimum-energy control ``U Y_T^+ y_f``.

    Reaches ``y_f`` exactly once ``p`` independent experiments are recorded
    and converges to the minimum-energy input as ``N`` grows for i.i.d.
    zero-mean inputs.
    """
    y_f = _target(data, y_f)
    rank = _require_rank(data.YT, data.p, tol)
    alpha = pinv(data.YT, tol) @ y_f
    return _solution(data, data.U @ alpha, alpha, _diagnostics(data, rank, data.N - rank, alpha, y_f, rank_U=False))


def _corrected_gram(G: np.ndarray, shift: float, what: str, diag: dict) -> np.ndarray:
    """``G - shift*I``; records a warning when it is numerically indefinite."""
    Gc = G - shift * np.eye(G.shape[0])
    evals = np.linalg.eigvalsh((Gc + Gc.T) / 2)
    scale = max(abs(evals).max(initial=0.0), np.finfo(float).tiny)
    diag[f"min_eig_{what}"] = float(evals.min(initial=0.0))
    if evals.min(initial=0.0) < -1e-8 * scale:
        diag.setdefault("warnings", []).append(f"corrected {what} Gram matrix is indefinite")
    return Gc


def dd_min_energy_corrected(data: DataMatrices, y_f, sigma_U2: float, tol: float = DEFAULT_PINV_TOL) -> DDSolution:
    """Input-noise corrected minimum-energy control ``(Y_T U^T (U U^T - N s^2 I)^+)^+ y_f``.

    With ``sigma_U2 = 0`` this is exactly :func:`dd_min_energy`.
    """
    if sigma_U2 < 0:
        raise ValueError("sigma_U2 must be non-negative")
    if sigma_U2 == 0:
        return dd_min_energy(data, y_f, tol)
    y_f = _target(data, y_f)
    rank = _require_rank(data.YT, data.p, tol)
    diag = _diagnostics(data, rank, data.N - rank, None, y_f, rank_U=False)
    if data.N <= data.U.shape[0]:
        warnings.warn("input-noise correction needs N > mT experiments", RuntimeWarning, stacklevel=2)
        diag.setdefault("warnings", []).append("N <= mT")
    G = _corrected_gram(data.U @ data.U.T, data.N * sigma_U2, "U", diag)
    ctrb_estimate = (data.YT @ data.U.T) @ pinv(G, tol)
    u = pinv(ctrb_estimate, tol) @ y_f
    return _solution(data, u, None, diag)


def dd_min_energy_approx_corrected(
    data: DataMatrices, y_f, sigma_YT2: float, tol: float = DEFAULT_PINV_TOL
) -> DDSolution:
    """Output-noise corrected approximate control ``U Y_T^T (Y_T Y_T^T - N s^2 I)^+ y_f``."""
    if sigma_YT2 < 0:
        raise ValueError("sigma_YT2 must be non-negative")
    if sigma_YT2 == 0:
        return dd_min_energy_approx(data, y_f, tol)
    y_f = _target(data, y_f)
    rank = _require_rank(data.YT, data.p, tol)
    diag = _diagnostics(data, rank, data.N - rank, None, y_f, rank_U=False)
    G = _corrected_gram(data.YT @ data.YT.T, data.N * sigma_YT2, "YT", diag)
    alpha = data.YT.T @ (pinv(G, tol) @ y_f)
    diag["residual"] = float(np.linalg.norm(data.YT @ alpha - y_f))
    return _solution(data, data.U @ alpha, alpha, diag)


def default_eps(M: np.ndarray, eps_rel: float = DEFAULT_EPS_REL) -> float:
    """Truncation level ``eps_rel * trace(M) / dim`` for the corrected middle factor."""
    dim = max(M.shape[0], 1)
    return max(eps_rel * abs(np.trace(M)) / dim, np.finfo(float).tiny)


def _full_correction(data, L, blocks, sigma_YT2, y_f, eps, eps_rel, tol, diag):
    """Shared core of the fully corrected estimators.

    ``L`` is the stacked square-root factor and ``blocks`` the matching
    ``(noise_correction, cross_correction)`` pair: the block-diagonal matrix
    subtracted from ``L Pi L^T`` and the bias of ``U L^T`` caused by input
    noise.
    """
    N = data.N
    UYt = data.U @ data.YT.T
    LYt = L @ data.YT.T
    P = pinv(_corrected_gram(data.YT @ data.YT.T, N * sigma_YT2, "YT", diag), tol)
    Py = P @ y_f
    alpha0 = data.YT.T @ Py
    correction, cross = blocks
    mid = L @ L.T - LYt @ P @ LYt.T - correction
    mid = (mid + mid.T) / 2
    left = data.U @ L.T - UYt @ P @ LYt.T - cross
    fac = svd(mid)
    if eps is None and eps_rel is not None:
        eps = default_eps(mid, eps_rel)
    if eps is None:
        # the noise-free limit of the middle factor has rank mT - p
        keep = max(data.U.shape[0] - data.p, 0)
        diag["eps"] = float(fac.s[keep - 1]) if keep else math.inf
    else:
        keep = int(np.count_nonzero(fac.s >= eps))
        diag["eps"] = eps
    diag["mid_rank"] = keep
    mid_pinv = (fac.Vt[:keep].T / fac.s[:keep]) @ fac.U[:, :keep].T
    u = data.U @ alpha0 - left @ (mid_pinv @ (LYt @ Py))
    return u


def dd_min_energy_full_corrected(
    data: DataMatrices,
    y_f,
    sigma_U2: float,
    sigma_YT2: float,
    eps: float | None = None,
    tol: float = DEFAULT_PINV_TOL,
    eps_rel: float | None = None,
) -> DDSolution:
    """Noise-corrected long-form minimum-energy control.

    Evaluates ``(I - M (M_c)^+_eps) U Y_T^T (Y_T Y_T^T - N s_YT^2 I)^+ y_f`` where
    ``M = U Pi U^T - N s_U^2 I`` and ``Pi = I - Y_T^T (Y_T Y_T^T - N s_YT^2 I)^+ Y_T``.
    """
    if min(sigma_U2, sigma_YT2) < 0:
        raise ValueError("noise variances must be non-negative")
    y_f = _target(data, y_f)
    rank = _require_rank(data.YT, data.p, tol)
    diag = _diagnostics(data, rank, data.N - rank, None, y_f, rank_U=False)
    shift = data.N * sigma_U2 * np.eye(data.U.shape[0])
    u = _full_correction(data, data.U, (shift, shift), sigma_YT2, y_f, eps, eps_rel, tol, diag)
    return _solution(data, u, None, diag)


def dd_optimal_corrected(
    data: DataMatrices,
    Q,
    R,
    y_f,
    noise: NoiseSpec,
    eps: float | None = None,
    tol: float = DEFAULT_PINV_TOL,
    eps_rel: float | None = None,
) -> DDSolution:
    """Noise-corrected optimal control for general weights.

    Uses ``L = [Q^{1/2} Y_{1:T-1}; R^{1/2} U]``, subtracts
    ``diag(N s_Y^2 Q, N s_U^2 R)`` inside the eps-truncated pseudoinverse,
    replaces ``Y_T Y_T^T`` by ``Y_T Y_T^T - N s_YT^2 I`` and removes the
    input-noise bias ``N s_U^2 [0, R^{1/2}]`` from ``U L^T``.
    """
    _episodic(data)
    y_f = _target(data, y_f)
    rank = _require_rank(data.YT, data.p, tol)
    diag = _diagnostics(data, rank, data.N - rank, None, y_f, rank_U=False)
    N, mT = data.N, data.U.shape[0]
    r_root = psd_sqrt(R, "R", strict=True)
    R_dense = R * np.eye(mT) if np.ndim(R) == 0 else np.asarray(R, dtype=float)
    r_root_dense = r_root * np.eye(mT) if np.ndim(r_root) == 0 else r_root
    if np.ndim(Q) == 0 and float(Q) == 0.0:
        L = apply_weight_root(r_root, data.U)
        correction = N * noise.sigma_U2 * R_dense
        cross = N * noise.sigma_U2 * r_root_dense
    else:
        q_root = psd_sqrt(Q, "Q")
        nq = data.Ymid.shape[0]
        Q_dense = Q * np.eye(nq) if np.ndim(Q) == 0 else np.asarray(Q, dtype=float)
        L = np.vstack([apply_weight_root(q_root, data.Ymid), apply_weight_root(r_root, data.U)])
        correction = np.zeros((nq + mT, nq + mT))
        correction[:nq, :nq] = N * noise.sigma_Y2 * Q_dense
        correction[nq:, nq:] = N * noise.sigma_U2 * R_dense
        cross = np.hstack([np.zeros((mT, nq)), N * noise.sigma_U2 * r_root_dense])
    u = _full_correction(data, L, (correction, cross), noise.sigma_YT2, y_f, eps, eps_rel, tol, diag)
    return _solution(data, u, None, diag)


def theorem1_bound(source, T: int, N: int, delta: float, y_f) -> BoundReport:
    """High-probability bound on ``||u* - U Y_T^+ y_f||`` for Gaussian experiment inputs.

    ``source`` is a :class:`LinearNetwork` or its output controllability
    matrix. The bound assumes the network is output controllable; it does
    not depend on the input variance because ``U Y_T^+`` is scale invariant.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    C_T = output_ctrb_matrix(source, T) if isinstance(source, LinearNetwork) else np.asarray(source, dtype=float)
    s = svd(C_T).s
    rank = int(np.count_nonzero(s > DEFAULT_PINV_TOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < C_T.shape[0]:
        raise InfeasibleDataError("controllability matrix is rank deficient", rank=rank, required=C_T.shape[0])
    s_min, s_max = s[C_T.shape[0] - 1], s[0]
    kappa = s_max / s_min
    mT = C_T.shape[1]
    eta = math.sqrt(mT / N) + math.sqrt(2 * math.log(1 / delta) / N)
    if eta >= 1:
        bound = math.inf
    else:
        y_norm = float(np.linalg.norm(np.asarray(y_f, dtype=float)))
        bound = 3 * max(eta, eta**2) / s_min * (1 + (1 + eta) / (1 - eta) * kappa**2) * y_norm
    return BoundReport(eta, bound, float(s_min), float(kappa), delta)
