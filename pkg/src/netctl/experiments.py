"""Experiment records: generation, sliding windows, noise and CSV storage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .linalg import as_matrix
from .network import LinearNetwork


@dataclass(frozen=True)
class DataMatrices:
    """Column-per-experiment records.

    ``U`` holds reverse-time stacked inputs (``mT x N``), ``Ymid`` the
    stacked outputs ``y(1..T-1)`` (``p(T-1) x N``), ``YT`` the final outputs
    (``p x N``) and ``X0`` the measured initial states when available.
    """

    U: np.ndarray
    Ymid: np.ndarray
    YT: np.ndarray
    T: int
    X0: np.ndarray | None = None
    n: int | None = None
    seed: int | None = None
    # noiseless copy kept for test harness comparisons; never serialized
    truth: "DataMatrices | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        U = as_matrix(self.U, "U")
        YT = as_matrix(self.YT, "YT")
        N = U.shape[1]
        if self.T < 1 or U.shape[0] % self.T:
            raise DimensionError(f"U has {U.shape[0]} rows, not a multiple of T={self.T}")
        p = YT.shape[0]
        Ymid = np.asarray(self.Ymid, dtype=float).reshape(p * (self.T - 1), N)
        Ymid = as_matrix(Ymid, "Ymid") if Ymid.size else Ymid
        if YT.shape[1] != N:
            raise DimensionError(f"YT has {YT.shape[1]} columns, U has {N}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Ymid", Ymid)
        object.__setattr__(self, "YT", YT)
        if self.X0 is not None:
            X0 = as_matrix(self.X0, "X0")
            if X0.shape[1] != N:
                raise DimensionError(f"X0 has {X0.shape[1]} columns, U has {N}")
            if self.n is not None and X0.shape[0] != self.n:
                raise DimensionError(f"X0 has {X0.shape[0]} rows, n={self.n}")
            object.__setattr__(self, "X0", X0)
            object.__setattr__(self, "n", X0.shape[0])

    @property
    def N(self) -> int:
        return self.U.shape[1]

    @property
    def m(self) -> int:
        return self.U.shape[0] // self.T

    @property
    def p(self) -> int:
        return self.YT.shape[0]

    def subset(self, columns) -> "DataMatrices":
        """Records restricted to the given experiment columns (index array, mask or slice)."""
        cols = columns if isinstance(columns, slice) else np.asarray(columns)
        truth = self.truth.subset(cols) if self.truth is not None else None
        X0 = None if self.X0 is None else self.X0[:, cols]
        return replace(self, U=self.U[:, cols], Ymid=self.Ymid[:, cols], YT=self.YT[:, cols], X0=X0, truth=truth)

    def save(self, directory) -> None:
        """Write ``U.csv``, ``Ymid.csv``, ``YT.csv``, optional ``X0.csv`` and ``meta.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("U", "Ymid", "YT"):
            np.savetxt(d / f"{name}.csv", getattr(self, name), delimiter=",", fmt="%.17g")
        if self.X0 is not None:
            np.savetxt(d / "X0.csv", self.X0, delimiter=",", fmt="%.17g")
        meta = {"T": self.T, "m": self.m, "p": self.p, "n": self.n, "N": self.N, "seed": self.seed}
        (d / "meta.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, directory) -> "DataMatrices":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        T, m, p, N = meta["T"], meta["m"], meta["p"], meta["N"]

        def read(name, rows):
            path = d / f"{name}.csv"
            if rows == 0 or N == 0:
                return np.zeros((rows, N))
            return np.loadtxt(path, delimiter=",", ndmin=2).reshape(rows, N)

        X0 = read("X0", meta["n"]) if (d / "X0.csv").exists() else None
        return cls(read("U", m * T), read("Ymid", p * (T - 1)), read("YT", p), T, X0=X0, n=meta["n"], seed=meta["seed"])


@dataclass(frozen=True)
class NoiseSpec:
    """Variances of the i.i.d. zero-mean noise added to ``U``, ``Ymid`` and ``YT``."""

    sigma_U2: float = 0.0
    sigma_Y2: float = 0.0
    sigma_YT2: float = 0.0
    distribution: str = "gaussian"

    def __post_init__(self):
        if min(self.sigma_U2, self.sigma_Y2, self.sigma_YT2) < 0:
            raise ValueError("noise variances must be non-negative")
        if self.distribution not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def random_inputs(m: int, T: int, N: int, rng=None) -> np.ndarray:
    """``mT x N`` matrix of standard normal experiment inputs."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return _rng(rng).standard_normal((m * T, N))


def _run(net: LinearNetwork, U: np.ndarray, T: int, X: np.ndarray):
    m, p = net.m, net.p
    N = U.shape[1]
    Ymid = np.empty((p * (T - 1), N))
    for t in range(T):
        k = T - 1 - t  # block of U holding u(t)
        X = net.A @ X + net.B @ U[k * m : (k + 1) * m]
        if t < T - 1:
            Ymid[t * p : (t + 1) * p] = net.C @ X
    return Ymid, net.C @ X


def _check_inputs(net, U, T):
    U = as_matrix(U, "U")
    if U.shape[0] != net.m * T:
        raise DimensionError(f"U must have m*T={net.m * T} rows, got {U.shape[0]}")
    return U


def run_episodic(net: LinearNetwork, U, T: int, seed: int | None = None) -> DataMatrices:
    """Simulate every input column from a zero initial state."""
    U = _check_inputs(net, U, T)
    Ymid, YT = _run(net, U, T, np.zeros((net.n, U.shape[1])))
    return DataMatrices(U, Ymid, YT, T, n=net.n, seed=seed)


def run_with_initial_states(net: LinearNetwork, U, X0, T: int, seed: int | None = None) -> DataMatrices:
    """Simulate every input column from its own measured initial state."""
    U = _check_inputs(net, U, T)
    X0 = as_matrix(X0, "X0")
    if X0.shape != (net.n, U.shape[1]):
        raise DimensionError(f"X0 must be {net.n}x{U.shape[1]}, got {X0.shape}")
    Ymid, YT = _run(net, U, T, X0.copy())
    return DataMatrices(U, Ymid, YT, T, X0=X0, n=net.n, seed=seed)


def sliding_window(u_long, y_long, T: int, x_long=None, stride: int = 1) -> DataMatrices:
    """Cut one long trajectory into overlapping length-``T`` experiments.

    ``y_long`` holds ``y(0..S-1)`` row-wise, ``u_long`` at least ``u(0..S-2)``
    and ``x_long`` (optional) the states ``x(0..S-1)``. A window starting at
    ``s`` records inputs ``u(s..s+T-1)``, outputs ``y(s+1..s+T)`` and the
    initial state ``x(s)``.
    """
    u_long = np.asarray(u_long, dtype=float)
    y_long = np.asarray(y_long, dtype=float)
    if u_long.ndim == 1:
        u_long = u_long[:, None]
    if y_long.ndim == 1:
        y_long = y_long[:, None]
    S = y_long.shape[0]
    if S < T + 1:
        raise DimensionError(f"trajectory of length {S} is shorter than T+1={T + 1}")
    if u_long.shape[0] < S - 1:
        raise DimensionError(f"need at least {S - 1} input samples, got {u_long.shape[0]}")
    if stride < 1:
        raise ValueError("stride must be positive")
    starts = np.arange(0, S - T, stride)
    m, p = u_long.shape[1], y_long.shape[1]
    U = np.empty((m * T, starts.size))
    Ymid = np.empty((p * (T - 1), starts.size))
    for i, s in enumerate(starts):
        U[:, i] = u_long[s : s + T][::-1].ravel()
        Ymid[:, i] = y_long[s + 1 : s + T].ravel()
    YT = y_long[starts + T].T
    X0 = None
    n = None
    if x_long is not None:
        x_long = np.asarray(x_long, dtype=float)
        if x_long.ndim == 1:
            x_long = x_long[:, None]
        X0 = x_long[starts].T
        n = x_long.shape[1]
    return DataMatrices(U, Ymid, YT, T, X0=X0, n=n)


def simulate_long(net: LinearNetwork, u_long, x0=None):
    """States ``x(0..S)`` and outputs ``y(0..S)`` of one long forward run."""
    u_long = np.atleast_2d(np.asarray(u_long, dtype=float))
    if u_long.shape[1] != net.m:
        raise DimensionError(f"inputs have {u_long.shape[1]} channels, expected {net.m}")
    x = np.zeros(net.n) if x0 is None else np.asarray(x0, dtype=float)
    states = np.empty((u_long.shape[0] + 1, net.n))
    states[0] = x
    for t, u in enumerate(u_long):
        x = net.A @ x + net.B @ u
        states[t + 1] = x
    return states, states @ net.C.T


def _noise(rng, shape, var, distribution):
    if var == 0:
        return np.zeros(shape)
    if distribution == "uniform":
        half = np.sqrt(3.0 * var)
        return rng.uniform(-half, half, size=shape)
    return rng.normal(0.0, np.sqrt(var), size=shape)


def add_noise(data: DataMatrices, spec: NoiseSpec, rng=None) -> DataMatrices:
    """Corrupt ``U``, ``Ymid`` and ``YT`` with independent zero-mean noise.

    The clean records are attached as ``truth`` for harness comparisons.
    """
    rng = _rng(rng)
    d = spec.distribution
    U = data.U + _noise(rng, data.U.shape, spec.sigma_U2, d)
    Ymid = data.Ymid + _noise(rng, data.Ymid.shape, spec.sigma_Y2, d)
    YT = data.YT + _noise(rng, data.YT.shape, spec.sigma_YT2, d)
    truth = data.truth if data.truth is not None else data
    return replace(data, U=U, Ymid=Ymid, YT=YT, truth=truth)
