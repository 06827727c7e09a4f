"""Linear network dynamics, controllability objects and model-based controls.

Stacked input vectors use reverse-time order throughout the package: the
top block of a stacked vector is ``u(T-1)`` and the bottom block is
``u(0)``, which is the block order of ``[CB, CAB, ..., CA^{T-1}B]``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import (
    DimensionError,
    InvalidWeightError,
    NotControllableError,
    NumericalError,
    ReachabilityError,
)
from .linalg import (
    DEFAULT_PINV_TOL,
    DEFINITENESS_TOL,
    as_matrix,
    kernel_basis,
    numerical_rank,
    pinv,
    pinv_relative_to,
    psd_sqrt,
    stacked_sqrt_factor,
)


@dataclass(frozen=True)
class LinearNetwork:
    """Discrete-time network ``x(t+1) = A x(t) + B u(t)``, ``y(t) = C x(t)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        for name, arr in (("A", A), ("B", B), ("C", C)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def with_A(self, A) -> "LinearNetwork":
        return LinearNetwork(A, self.B, self.C)


def _as_weight(W, size: int, name: str, strict: bool):
    """Validate a scalar or ``size x size`` weight and return it unchanged."""
    if np.ndim(W) == 0:
        psd_sqrt(W, name, strict=strict)
        return float(W)
    W = as_matrix(W, name)
    if W.shape != (size, size):
        raise DimensionError(f"{name} must be {size}x{size}, got {W.shape}")
    psd_sqrt(W, name, strict=strict)
    return W


@dataclass(frozen=True)
class ControlProblem:
    """Horizon, weights and target of the constrained quadratic control problem.

    ``Q`` weighs the stacked outputs ``y(1..T-1)`` and ``R`` the stacked
    inputs; either may be a scalar, meaning that multiple of the identity.
    """

    T: int
    Q: object
    R: object
    y_f: np.ndarray

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"horizon T must be a positive integer, got {self.T}")
        y_f = np.asarray(self.y_f, dtype=float).ravel()
        if not np.all(np.isfinite(y_f)):
            raise NumericalError("target contains non-finite entries")
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "y_f", y_f)
        if np.ndim(self.Q) == 0:
            if float(self.Q) < 0:
                raise InvalidWeightError("Q must be positive semidefinite")
        else:
            psd_sqrt(self.Q, "Q")
        if np.ndim(self.R) == 0:
            if float(self.R) <= DEFINITENESS_TOL:
                raise InvalidWeightError("R must be positive definite")
        else:
            psd_sqrt(self.R, "R", strict=True)

    @classmethod
    def scalar(cls, T: int, y_f, q: float = 0.0, r: float = 1.0) -> "ControlProblem":
        """Problem with per-step weights ``q*I`` and ``r*I``."""
        return cls(T, float(q), float(r), y_f)

    @classmethod
    def min_energy(cls, T: int, y_f) -> "ControlProblem":
        return cls.scalar(T, y_f, 0.0, 1.0)

    def dense_weights(self, p: int, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Materialize ``(Q, R)`` as matrices for output size ``p`` and input size ``m``."""
        nq, nr = p * (self.T - 1), m * self.T
        Q = self.Q * np.eye(nq) if np.ndim(self.Q) == 0 else _as_weight(self.Q, nq, "Q", False)
        R = self.R * np.eye(nr) if np.ndim(self.R) == 0 else _as_weight(self.R, nr, "R", True)
        return Q, R


class ControlSequence:
    """Input sequence ``u(0..T-1)`` stored in reverse-time stacked form."""

    def __init__(self, stacked, m: int):
        stacked = np.asarray(stacked, dtype=float).ravel()
        if m < 1 or stacked.size % m:
            raise DimensionError(f"stacked length {stacked.size} is not a multiple of m={m}")
        self.stacked = stacked
        self.m = int(m)

    @property
    def T(self) -> int:
        return self.stacked.size // self.m

    @classmethod
    def from_forward(cls, u) -> "ControlSequence":
        """Build from a ``T x m`` array whose row ``t`` is ``u(t)``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return cls(u[::-1].ravel(), u.shape[1])

    def at(self, t: int) -> np.ndarray:
        if not 0 <= t < self.T:
            raise IndexError(f"time {t} outside 0..{self.T - 1}")
        k = self.T - 1 - t
        return self.stacked[k * self.m : (k + 1) * self.m]

    def forward(self) -> np.ndarray:
        """``T x m`` array with row ``t`` equal to ``u(t)``."""
        return self.stacked.reshape(self.T, self.m)[::-1].copy()

    def energy(self) -> float:
        return float(self.stacked @ self.stacked)

    def __len__(self):
        return self.T

    def __repr__(self):
        return f"ControlSequence(T={self.T}, m={self.m})"


@dataclass
class Trajectory:
    """States ``x(0..T)`` and outputs ``y(0..T)`` as row-per-time arrays."""

    states: np.ndarray
    outputs: np.ndarray

    @property
    def final_output(self) -> np.ndarray:
        return self.outputs[-1]


def simulate(net: LinearNetwork, u: ControlSequence, x0=None) -> Trajectory:
    """Run the forward recursion for ``u.T`` steps from ``x0`` (default zero)."""
    if u.m != net.m:
        raise DimensionError(f"input has {u.m} channels, network expects {net.m}")
    x = np.zeros(net.n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x.size != net.n:
        raise DimensionError(f"x0 has size {x.size}, network has {net.n} states")
    forward = u.forward()
    states = np.empty((u.T + 1, net.n))
    states[0] = x
    for t in range(u.T):
        x = net.A @ x + net.B @ forward[t]
        states[t + 1] = x
    return Trajectory(states, states @ net.C.T)


def _markov_blocks(net: LinearNetwork, count: int) -> list[np.ndarray]:
    """``[CB, CAB, ..., CA^{count-1}B]`` by repeated right-multiplication of ``CA^t``."""
    blocks = []
    CAt = net.C.copy()
    for _ in range(count):
        blocks.append(CAt @ net.B)
        CAt = CAt @ net.A
    return blocks


def output_ctrb_matrix(net: LinearNetwork, T: int) -> np.ndarray:
    """T-step output controllability matrix ``[CB CAB ... CA^{T-1}B]`` (p x mT)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return np.hstack(_markov_blocks(net, T))


def output_gramian(net: LinearNetwork, T: int) -> np.ndarray:
    """``W_T = C_T C_T^T``, symmetrized to remove round-off asymmetry."""
    C_T = output_ctrb_matrix(net, T)
    W = C_T @ C_T.T
    return (W + W.T) / 2


def hankel_blocks(net: LinearNetwork, T: int) -> np.ndarray:
    """Block matrix mapping the reverse-stacked input to ``[y(1); ...; y(T-1)]``.

    Block row ``k`` (output ``y(k)``) and block column ``j`` (input
    ``u(T-1-j)``) hold ``C A^{k+j-T} B`` when ``k + j >= T`` and zero
    otherwise.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    p, m = net.p, net.m
    H = np.zeros((p * (T - 1), m * T))
    if T == 1:
        return H
    blocks = _markov_blocks(net, T - 1)
    for k in range(1, T):
        for j in range(T - k, T):
            H[(k - 1) * p : k * p, j * m : (j + 1) * m] = blocks[k + j - T]
    return H


def constrained_min_norm(L: np.ndarray, Y: np.ndarray, target, tol: float = DEFAULT_PINV_TOL):
    """Minimizer of ``||L a||`` subject to ``Y a = target``.

    Evaluates ``(I - K (L K)^+ L) Y^+ target`` with ``K`` a kernel basis of
    ``Y``; an empty kernel leaves ``Y^+ target`` unchanged.
    """
    a0 = pinv(Y, tol) @ target
    K = kernel_basis(Y, tol)
    if K.shape[1] == 0:
        return a0
    LK = L @ K
    return a0 - K @ (pinv_relative_to(LK, L, tol) @ (L @ a0))


def _check_reachable(C_T: np.ndarray, y_f: np.ndarray, rtol: float = 1e-6):
    sol, *_ = scipy.linalg.lstsq(C_T, y_f, check_finite=False)
    residual = float(np.linalg.norm(C_T @ sol - y_f))
    if residual > rtol * max(np.linalg.norm(y_f), np.finfo(float).tiny):
        raise ReachabilityError(
            f"target not reachable in {C_T.shape[1]} input coordinates (residual {residual:.3e})",
            residual=residual,
        )


def model_based_optimal(
    net: LinearNetwork, prob: ControlProblem, tol: float = DEFAULT_PINV_TOL, check_reachable: bool = True
) -> ControlSequence:
    """Batch-form model-based solution of the constrained quadratic control problem.

    With ``check_reachable=False`` an unreachable target is not an error: the
    terminal constraint is then met in the least-squares sense.
    """
    if prob.y_f.size != net.p:
        raise DimensionError(f"target has size {prob.y_f.size}, network has {net.p} outputs")
    C_T = output_ctrb_matrix(net, prob.T)
    if check_reachable:
        _check_reachable(C_T, prob.y_f)
    if np.ndim(prob.Q) == 0 and float(prob.Q) == 0.0 and np.ndim(prob.R) == 0:
        M = np.sqrt(float(prob.R)) * np.eye(net.m * prob.T)
    else:
        H_T = hankel_blocks(net, prob.T)
        Q, R = prob.dense_weights(net.p, net.m)
        M = stacked_sqrt_factor(Q, R, H_T, np.eye(net.m * prob.T))
    u = constrained_min_norm(M, C_T, prob.y_f, tol)
    return ControlSequence(u, net.m)


def model_based_min_energy_gramian(
    net: LinearNetwork, T: int, y_f, explicit_inverse: bool = False
) -> ControlSequence:
    """Classic Gramian formula ``u(t) = B^T (A^T)^{T-t-1} C^T W_T^{-1} y_f``.

    Kept in its numerically fragile form on purpose. ``W_T`` is solved
    against unless ``explicit_inverse`` is set; powers of ``A`` are applied
    by backward accumulation instead of being formed.
    """
    y_f = np.asarray(y_f, dtype=float).ravel()
    if y_f.size != net.p:
        raise DimensionError(f"target has size {y_f.size}, network has {net.p} outputs")
    W = output_gramian(net, T)
    try:
        if explicit_inverse:
            lam = np.linalg.inv(W) @ y_f
        else:
            lam = np.linalg.solve(W, y_f)
    except np.linalg.LinAlgError as exc:
        raise NotControllableError(f"output Gramian is singular for T={T}") from exc
    if not np.all(np.isfinite(lam)):
        raise NotControllableError(f"output Gramian solve overflowed for T={T}")
    w = net.C.T @ lam
    stacked = np.empty(net.m * T)
    # block k of the stacked vector is u(T-1-k) = B^T (A^T)^k C^T lam
    for k in range(T):
        stacked[k * net.m : (k + 1) * net.m] = net.B.T @ w
        w = net.A.T @ w
    return ControlSequence(stacked, net.m)


@dataclass(frozen=True)
class ControllabilityReport:
    controllable: bool
    rank: int
    p: int

    def __bool__(self):
        return self.controllable


def is_output_controllable(net: LinearNetwork, T: int, tol: float = DEFAULT_PINV_TOL) -> ControllabilityReport:
    """True iff ``rank(C_T) = p`` at relative tolerance ``tol``."""
    rank = numerical_rank(output_ctrb_matrix(net, T), tol)
    return ControllabilityReport(rank == net.p, rank, net.p)


# -- plain-text matrix file format -------------------------------------------
#
# Lines starting with '#' are comments. Each block is a header line
# "NAME rows cols" followed by `rows` lines of whitespace-separated values.


def write_matrix_blocks(path, blocks: dict, comments=()) -> None:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    for name, M in blocks.items():
        M = np.atleast_2d(np.asarray(M, dtype=float))
        buf.write(f"{name} {M.shape[0]} {M.shape[1]}\n")
        for row in M:
            buf.write(" ".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_matrix_blocks(path) -> tuple[dict, list[str]]:
    blocks, comments = {}, []
    lines = Path(path).read_text().splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"malformed block header: {line!r}")
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        data = np.zeros((rows, cols))
        for r in range(rows):
            values = lines[i].split()
            i += 1
            if len(values) != cols:
                raise ValueError(f"block {name} row {r} has {len(values)} values, expected {cols}")
            data[r] = [float(v) for v in values]
        blocks[name] = data
    return blocks, comments


def save_network(net: LinearNetwork, path, note: str | None = None) -> None:
    comments = [f"linear network n={net.n} m={net.m} p={net.p}"]
    if note:
        comments.extend(note.splitlines())
    write_matrix_blocks(path, {"A": net.A, "B": net.B, "C": net.C}, comments)


def load_network(path) -> LinearNetwork:
    blocks, _ = read_matrix_blocks(path)
    missing = {"A", "B", "C"} - blocks.keys()
    if missing:
        raise ValueError(f"network file lacks blocks {sorted(missing)}")
    return LinearNetwork(blocks["A"], blocks["B"], blocks["C"])
