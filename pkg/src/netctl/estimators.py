"""Scikit-learn style wrappers: fit on experiment records, predict controls for targets."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import ddcontrol, sysid
from .experiments import DataMatrices, NoiseSpec
from .linalg import DEFAULT_PINV_TOL
from .network import ControlProblem, model_based_optimal, output_ctrb_matrix

METHODS = (
    "optimal",
    "optimal_x0",
    "min_energy",
    "min_energy_approx",
    "min_energy_corrected",
    "min_energy_approx_corrected",
    "min_energy_full_corrected",
    "optimal_corrected",
)


def _check_data(data) -> DataMatrices:
    if not isinstance(data, DataMatrices):
        raise TypeError(f"expected DataMatrices, got {type(data).__name__}")
    return data


class DataDrivenController(BaseEstimator):
    """Data-driven point-to-point controller.

    Parameters
    ----------
    method : str
        One of ``METHODS``.
    Q, R : float or ndarray
        Output and input weights (used by the ``optimal*`` methods).
    noise : NoiseSpec, optional
        Noise variances for the corrected methods.
    eps : float, optional
        Absolute truncation for the fully corrected methods; by default the
        middle factor is cut to its noise-free rank.
    tol : float
        Relative pseudoinverse tolerance.

    Examples
    --------
    >>> ctrl = DataDrivenController("min_energy").fit(data)  # doctest: +SKIP
    >>> U_hat = ctrl.predict(targets)                          # doctest: +SKIP
    """

    def __init__(self, method="optimal", Q=0.0, R=1.0, noise=None, eps=None, tol=DEFAULT_PINV_TOL):
        self.method = method
        self.Q = Q
        self.R = R
        self.noise = noise
        self.eps = eps
        self.tol = tol

    def fit(self, data, y=None):
        data = _check_data(data)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.method.endswith("corrected") and self.noise is None:
            raise ValueError(f"method {self.method!r} needs a NoiseSpec")
        self.data_ = data
        self.n_outputs_ = data.p
        self.n_inputs_ = data.m
        self.horizon_ = data.T
        return self

    def _solve(self, y_f) -> ddcontrol.DDSolution:
        d, m, noise = self.data_, self.method, self.noise or NoiseSpec()
        if m == "optimal":
            return ddcontrol.dd_optimal(d, self.Q, self.R, y_f, self.tol)
        if m == "optimal_x0":
            return ddcontrol.dd_optimal_x0(d, self.Q, self.R, y_f, self.tol)
        if m == "min_energy":
            return ddcontrol.dd_min_energy(d, y_f, self.tol)
        if m == "min_energy_approx":
            return ddcontrol.dd_min_energy_approx(d, y_f, self.tol)
        if m == "min_energy_corrected":
            return ddcontrol.dd_min_energy_corrected(d, y_f, noise.sigma_U2, self.tol)
        if m == "min_energy_approx_corrected":
            return ddcontrol.dd_min_energy_approx_corrected(d, y_f, noise.sigma_YT2, self.tol)
        if m == "min_energy_full_corrected":
            return ddcontrol.dd_min_energy_full_corrected(d, y_f, noise.sigma_U2, noise.sigma_YT2, self.eps, self.tol)
        return ddcontrol.dd_optimal_corrected(d, self.Q, self.R, y_f, noise, self.eps, self.tol)

    def predict(self, targets) -> np.ndarray:
        """Stacked controls, one row per target row of ``targets`` (``k x p``)."""
        check_is_fitted(self, "data_")
        Y = check_array(np.atleast_2d(targets), ensure_min_samples=1)
        if Y.shape[1] != self.n_outputs_:
            raise ValueError(f"targets have {Y.shape[1]} entries, data record {self.n_outputs_} outputs")
        return np.vstack([self._solve(y).u.stacked for y in Y])

    def solve(self, y_f) -> ddcontrol.DDSolution:
        """Full solution (control, coefficients, diagnostics) for one target."""
        check_is_fitted(self, "data_")
        return self._solve(np.asarray(y_f, dtype=float))


class SubspaceIdentifier(BaseEstimator):
    """Least-squares ``(A, B)`` identification from full-state episodic data.

    Parameters
    ----------
    stabilize : bool
        Rescale an unstable estimate to spectral radius just below one.
    tol : float
        Relative pseudoinverse tolerance.
    """

    def __init__(self, stabilize=False, tol=DEFAULT_PINV_TOL):
        self.stabilize = stabilize
        self.tol = tol

    def fit(self, data, y=None):
        model = sysid.subspace_id(_check_data(data), self.tol)
        A = sysid.stabilize(model.A_hat) if self.stabilize else model.A_hat
        self.model_ = sysid.IdentifiedModel(A, model.B_hat, model.residuals, model.T)
        self.A_ = A
        self.B_ = model.B_hat
        self.residuals_ = dict(model.residuals)
        return self

    def predict(self, U) -> np.ndarray:
        """Final states predicted by the identified model for stacked input columns ``U``."""
        check_is_fitted(self, "model_")
        U = check_array(U)
        C_T = output_ctrb_matrix(self.model_.to_network(), self.model_.T)
        if U.shape[0] != C_T.shape[1]:
            raise ValueError(f"U must have {C_T.shape[1]} rows, got {U.shape[0]}")
        return C_T @ U

    def control(self, y_f, T: int | None = None) -> np.ndarray:
        """Model-based minimum-energy control computed on the identified network."""
        check_is_fitted(self, "model_")
        prob = ControlProblem.min_energy(T or self.model_.T, y_f)
        return model_based_optimal(self.model_.to_network(), prob, self.tol).stacked
