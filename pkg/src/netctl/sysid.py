"""Least-squares identification of ``(A, B)`` and the identify-then-control baseline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleDataError, PartialStateError
from .experiments import DataMatrices
from .linalg import DEFAULT_PINV_TOL, as_matrix, numerical_rank, pinv
from .network import ControlProblem, ControlSequence, LinearNetwork, model_based_optimal, save_network


@dataclass
class IdentifiedModel:
    """Estimated dynamics of a fully measured network.

    ``residuals`` holds ``ctrb`` (``||Y_T - C_hat U||_F``) and ``shift``
    (misfit of the shifted-block regression that yields ``A_hat``).
    """

    A_hat: np.ndarray
    B_hat: np.ndarray
    residuals: dict = field(default_factory=dict)
    T: int | None = None

    @property
    def n(self) -> int:
        return self.A_hat.shape[0]

    @property
    def m(self) -> int:
        return self.B_hat.shape[1]

    def to_network(self) -> LinearNetwork:
        return LinearNetwork(self.A_hat, self.B_hat, np.eye(self.n))

    def save(self, path) -> None:
        """Write the estimate in the network file format with a provenance note."""
        note = [f"identified from data, T={self.T}"]
        note += [f"residual {k} = {v:.6g}" for k, v in self.residuals.items()]
        save_network(self.to_network(), path, note="\n".join(note))


def _full_state(data: DataMatrices) -> None:
    if data.n is not None and data.p != data.n:
        raise PartialStateError(
            f"data record p={data.p} of n={data.n} states; A cannot be recovered from partial "
            "measurements, since only C A^k B is identifiable"
        )


def estimate_ctrb(data: DataMatrices, tol: float = DEFAULT_PINV_TOL) -> np.ndarray:
    """Least-squares controllability matrix ``Y_T U^+``.

    Minimizes ``||Y_T - C_T U||_F``; when ``U`` is rank deficient the
    minimum-Frobenius-norm minimizer is returned.
    """
    _full_state(data)
    if numerical_rank(data.U, tol) == 0:
        raise InfeasibleDataError("input records are numerically zero", rank=0, required=1)
    return data.YT @ pinv(data.U, tol)


def ctrb_residual(data: DataMatrices, C_hat: np.ndarray) -> float:
    return float(np.linalg.norm(data.YT - C_hat @ data.U))


def subspace_id(data: DataMatrices, tol: float = DEFAULT_PINV_TOL) -> IdentifiedModel:
    """Recover ``(A, B)`` from full-state episodic data.

    ``B_hat`` is the first block column of ``C_hat = [B, AB, ..., A^{T-1}B]``
    and ``A_hat`` solves ``C_hat[:, m:] = A C_hat[:, :(T-1)m]`` in the
    least-squares sense. Exact for noiseless data when ``U`` has full row
    rank and the network is controllable in ``T - 1`` steps.
    """
    if data.T < 2:
        raise InfeasibleDataError("identification needs T >= 2", rank=data.T, required=2)
    C_hat = estimate_ctrb(data, tol)
    m, T, n = data.m, data.T, data.p
    B_hat = C_hat[:, :m].copy()
    head, tail = C_hat[:, : (T - 1) * m], C_hat[:, m:]
    A_hat = tail @ pinv(head, tol)
    residuals = {"ctrb": ctrb_residual(data, C_hat), "shift": float(np.linalg.norm(tail - A_hat @ head))}
    rank_U, rank_head = numerical_rank(data.U, tol), numerical_rank(head, tol)
    if rank_U < m * T or rank_head < n:
        warnings.warn(
            f"identification is not exact: rank(U)={rank_U}/{m * T}, "
            f"rank of shifted block={rank_head}/{n}; residuals {residuals}",
            RuntimeWarning,
            stacklevel=2,
        )
    return IdentifiedModel(A_hat, B_hat, residuals, T)


def spectral_radius(A) -> float:
    A = as_matrix(A, "A")
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def stabilize(A_hat, margin: float = 0.01) -> np.ndarray:
    """Scale an unstable estimate to ``A / (rho(A) + margin)``; stable inputs pass through."""
    A_hat = as_matrix(A_hat, "A_hat")
    rho = spectral_radius(A_hat)
    if rho >= 1.0:
        return A_hat / (rho + margin)
    return A_hat.copy()


def two_step_min_energy(data: DataMatrices, y_f, tol: float = DEFAULT_PINV_TOL) -> ControlSequence:
    """Identify ``(A, B)`` then solve the model-based minimum-energy problem on the estimate.

    The target is not required to be reachable for the estimate: an
    inaccurate model yields a least-squares control whose final-state error
    is the quantity of interest.
    """
    model = subspace_id(data, tol)
    prob = ControlProblem.min_energy(data.T, y_f)
    return model_based_optimal(model.to_network(), prob, tol, check_reachable=False)
