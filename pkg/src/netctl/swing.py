"""Swing-equation generator networks: simulation, data harvesting and fault recovery.

States are kept in absolute coordinates (phases relative to the reference
generator, frequency deviations from nominal). Data and controls use
deviation coordinates ``x = [delta - delta*; omega - omega*]`` over the
non-reference generators, with one frequency input per such generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DimensionError
from .experiments import DataMatrices
from .ddcontrol import dd_optimal_x0
from .network import ControlSequence

DIVERGENCE_GUARD = 1e3


@dataclass(frozen=True)
class SwingGrid:
    """Parameters of a ``g``-generator swing network.

    ``G`` and ``B`` hold the transfer conductances and susceptances between
    generators (diagonals ignored); ``Gii`` the internal conductances.
    """

    H: np.ndarray
    D: np.ndarray
    Pm: np.ndarray
    E: np.ndarray
    Gii: np.ndarray
    G: np.ndarray
    B: np.ndarray
    f_b: float = 60.0
    ref: int = 0

    def __post_init__(self):
        vecs = {k: np.array(getattr(self, k), dtype=float).ravel() for k in ("H", "D", "Pm", "E", "Gii")}
        g = vecs["H"].size
        for k, v in vecs.items():
            if v.size != g:
                raise DimensionError(f"{k} has {v.size} entries, expected {g}")
        if np.any(vecs["H"] <= 0):
            raise ValueError("inertia constants must be positive")
        for k in ("G", "B"):
            M = np.array(getattr(self, k), dtype=float)
            if M.shape != (g, g):
                raise DimensionError(f"{k} must be {g}x{g}, got {M.shape}")
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"coupling matrix {k} must be symmetric")
            M = M.copy()
            np.fill_diagonal(M, 0.0)
            vecs[k] = M
        if not 0 <= self.ref < g:
            raise ValueError(f"reference index {self.ref} out of range")
        if self.f_b <= 0:
            raise ValueError("base frequency must be positive")
        for k, v in vecs.items():
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @property
    def g(self) -> int:
        return self.H.size

    @property
    def free(self) -> np.ndarray:
        """Indices of the integrated (non-reference) generators."""
        return np.delete(np.arange(self.g), self.ref)

    def with_coupling(self, G=None, B=None) -> "SwingGrid":
        return replace(self, G=self.G if G is None else G, B=self.B if B is None else B)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k).tolist() for k in ("H", "D", "Pm", "E", "Gii", "G", "B")}
        out.update(f_b=self.f_b, ref=self.ref)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SwingGrid":
        keys = ("H", "D", "Pm", "E", "Gii", "G", "B", "f_b", "ref")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass(frozen=True)
class SwingState:
    delta: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        d = np.array(self.delta, dtype=float)
        w = np.array(self.omega, dtype=float)
        if d.shape != w.shape:
            raise DimensionError(f"delta {d.shape} and omega {w.shape} differ in shape")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(w))):
            raise ValueError("swing state must be finite")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "omega", w)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.delta, self.omega])


@dataclass(frozen=True)
class FaultScenario:
    """Pre-fault, faulted and post-fault grids with the event timeline (seconds)."""

    pre: SwingGrid
    fault: SwingGrid
    post: SwingGrid
    onset: float = 2.0
    clearing: float = 2.5
    control_start: float = 3.0
    control_duration: float = 0.1
    Ts: float = 2.5e-4
    t_end: float = 10.0

    def __post_init__(self):
        if not self.onset < self.clearing <= self.control_start:
            raise ValueError("need onset < clearing <= control start")
        if self.Ts <= 0 or self.control_duration <= 0:
            raise ValueError("sampling period and control duration must be positive")
        if self.t_end < self.control_start + self.control_duration:
            raise ValueError("run must extend past the control window")

    @property
    def horizon(self) -> int:
        """Number of samples in the control window."""
        return int(round(self.control_duration / self.Ts))


def _rhs(grid: SwingGrid, delta: np.ndarray, omega: np.ndarray):
    """Vectorized right-hand side over leading batch dimensions."""
    diff = delta[..., :, None] - delta[..., None, :]
    coupling = (grid.G * np.cos(diff) + grid.B * np.sin(diff)) * grid.E[None, :]
    power = -grid.D * omega + grid.Pm - grid.Gii * grid.E**2 + grid.E * coupling.sum(axis=-1)
    domega = (math.pi * grid.f_b / grid.H) * power
    ddelta = omega.copy()
    ddelta[..., grid.ref] = 0.0
    domega[..., grid.ref] = 0.0
    return ddelta, domega


def swing_rhs(grid: SwingGrid, state: SwingState) -> SwingState:
    """Time derivative of ``(delta, omega)``; the reference generator is frozen."""
    if state.delta.shape[-1] != grid.g:
        raise DimensionError(f"state has {state.delta.shape[-1]} generators, grid has {grid.g}")
    return SwingState(*_rhs(grid, state.delta, state.omega))


def _step(grid: SwingGrid, delta, omega, forcing, dt):
    dd, dw = _rhs(grid, delta, omega)
    if forcing is not None:
        dw = dw + forcing
        dw[..., grid.ref] = 0.0
    return delta + dt * dd, omega + dt * dw


def euler_step(grid: SwingGrid, state: SwingState, forcing=None, dt: float = 2.5e-4) -> SwingState:
    """One forward Euler step; ``forcing`` (one entry per generator) enters the frequency equations only."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if forcing is not None:
        forcing = np.asarray(forcing, dtype=float)
        if forcing.shape[-1] != grid.g:
            raise DimensionError(f"forcing has {forcing.shape[-1]} entries, grid has {grid.g}")
    return SwingState(*_step(grid, state.delta, state.omega, forcing, dt))


def rhs_norm(grid: SwingGrid, state: SwingState) -> float:
    d = swing_rhs(grid, state)
    return float(max(np.abs(d.delta).max(initial=0.0), np.abs(d.omega).max(initial=0.0)))


@dataclass
class Equilibrium:
    state: SwingState
    converged: bool
    residual: float
    steps: int


def find_equilibrium(
    grid: SwingGrid,
    guess: SwingState | None = None,
    tol: float = 1e-8,
    damping: float = 10.0,
    dt: float | None = None,
    max_steps: int = 200_000,
) -> Equilibrium:
    """Settle the grid at a stable operating point.

    Runs the overdamped flow ``delta' = (power mismatch) / damping`` (the
    large-damping limit of the swing dynamics, which only settles at stable
    points), then polishes the phases with a root finder. Raises
    :class:`ConvergenceError` when no point with ``||rhs||_inf <= tol`` is
    reached.
    """
    free = grid.free
    delta = np.zeros(grid.g) if guess is None else np.array(guess.delta, dtype=float)
    ref_phase = delta[grid.ref]
    zero = np.zeros(grid.g)

    def mismatch(d_free):
        d = delta.copy()
        d[free] = d_free
        _, dw = _rhs(grid, d, zero)
        return dw[free] * grid.H[free] / (math.pi * grid.f_b)

    if dt is None:
        # explicit Euler on the overdamped flow is stable below 2 / Lipschitz constant
        lip = 2 * np.abs(grid.E[:, None] * grid.E[None, :] * np.hypot(grid.G, grid.B)).sum(axis=1).max()
        dt = damping / max(lip, 1e-12)
    x = delta[free].copy()
    steps = 0
    for steps in range(1, max_steps + 1):
        f = mismatch(x)
        if np.abs(f).max(initial=0.0) <= 1e-3 * tol + 1e-6:
            break
        x = x + dt * f / damping
        if not np.all(np.isfinite(x)) or np.abs(x - ref_phase).max(initial=0.0) > DIVERGENCE_GUARD:
            break
    sol = optimize.root(mismatch, x, method="hybr", options={"xtol": 1e-14})
    # hybr can report failure on an xtol stall even after reaching round-off
    if np.all(np.isfinite(sol.x)) and np.abs(sol.fun).max() < np.abs(mismatch(x)).max():
        x = sol.x
    delta[free] = x
    state = SwingState(delta, zero.copy())
    residual = rhs_norm(grid, state)
    converged = residual <= tol
    if not converged:
        raise ConvergenceError(f"no equilibrium found: ||rhs||_inf = {residual:.3e} after {steps} steps")
    return Equilibrium(state, True, residual, steps)


def deviation(grid: SwingGrid, state: SwingState, eq: SwingState, wrap: bool = True) -> np.ndarray:
    """Deviation vector ``[delta - delta*; omega - omega*]`` over the free generators.

    Phase deviations are wrapped to ``[-pi, pi)`` so that operating points
    differing by full turns are identified.
    """
    free = grid.free
    dd = state.delta[..., free] - eq.delta[free]
    if wrap:
        dd = (dd + math.pi) % (2 * math.pi) - math.pi
    return np.concatenate([dd, state.omega[..., free] - eq.omega[free]], axis=-1)


def _embed(grid: SwingGrid, eq: SwingState, x: np.ndarray):
    free = grid.free
    k = free.size
    lead = x.shape[:-1]
    delta = np.broadcast_to(eq.delta, lead + (grid.g,)).copy()
    omega = np.broadcast_to(eq.omega, lead + (grid.g,)).copy()
    delta[..., free] += x[..., :k]
    omega[..., free] += x[..., k:]
    return delta, omega


def _forcing(grid: SwingGrid, u: np.ndarray) -> np.ndarray:
    f = np.zeros(u.shape[:-1] + (grid.g,))
    f[..., grid.free] = u
    return f


def harvest_perturbation_data(
    grid: SwingGrid,
    eq: SwingState,
    N: int,
    T: int,
    Ts: float = 2.5e-4,
    rng=None,
    input_var: float = 0.01,
    state_var: float = 0.01,
    max_resample: int = 10,
    chunk: int = 1000,
    per_sample: bool = True,
) -> DataMatrices:
    """Record ``N`` perturbation experiments of ``T`` Euler steps around ``eq``.

    Each experiment starts at ``eq`` plus Gaussian noise of variance
    ``state_var`` on every free phase and frequency and applies Gaussian
    frequency forcing of variance ``input_var`` at every step. Outputs are
    full deviation states. Diverging experiments are redrawn up to
    ``max_resample`` times.

    With ``per_sample`` (default) an input value is the frequency increment
    it causes over one sample, i.e. it enters the Euler step as forcing
    ``u / Ts``; otherwise it is a raw forcing term in the frequency equations.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    k = grid.free.size
    n = 2 * k
    gain = 1.0 / Ts if per_sample else 1.0
    U = np.empty((k * T, N))
    Ymid = np.empty((n * (T - 1), N))
    YT = np.empty((n, N))
    X0 = np.empty((n, N))
    done = 0
    redraws = 0
    while done < N:
        b = min(chunk, N - done)
        x0 = rng.normal(0.0, math.sqrt(state_var), size=(b, n))
        u = rng.normal(0.0, math.sqrt(input_var), size=(T, b, k))
        delta, omega = _embed(grid, eq, x0)
        ys = np.empty((T, b, n))
        for t in range(T):
            delta, omega = _step(grid, delta, omega, _forcing(grid, u[t] * gain), Ts)
            ys[t] = deviation(grid, SwingState(delta, omega), eq, wrap=False)
        ok = np.all(np.isfinite(ys), axis=(0, 2)) & (np.abs(ys).max(axis=(0, 2)) <= DIVERGENCE_GUARD)
        if not ok.all():
            redraws += int((~ok).sum())
            if redraws > max_resample * N:
                raise ConvergenceError("too many diverging perturbation experiments")
        idx = np.flatnonzero(ok)
        cols = slice(done, done + idx.size)
        # reverse-time stacking: block j holds u(T-1-j)
        U[:, cols] = u[::-1, idx, :].transpose(0, 2, 1).reshape(k * T, idx.size)
        Ymid[:, cols] = ys[:-1, idx, :].transpose(0, 2, 1).reshape(n * (T - 1), idx.size)
        YT[:, cols] = ys[-1, idx, :].T
        X0[:, cols] = x0[idx].T
        done += idx.size
    return DataMatrices(U, Ymid, YT, T, X0=X0, n=n)


@dataclass
class RecoveryResult:
    """Sampled run of a fault scenario with its synchronization verdict."""

    times: np.ndarray
    delta: np.ndarray
    omega: np.ndarray
    recovered: bool
    max_final_omega: float
    settle_rhs: float
    info: dict = field(default_factory=dict)

    def save_csv(self, path) -> None:
        """Write ``time, delta_1..delta_g, omega_1..omega_g``."""
        g = self.delta.shape[1]
        header = ",".join(["time"] + [f"delta_{i + 1}" for i in range(g)] + [f"omega_{i + 1}" for i in range(g)])
        np.savetxt(path, np.column_stack([self.times, self.delta, self.omega]), delimiter=",", header=header, comments="", fmt="%.10g")


def load_trajectory_csv(path):
    """Read a trajectory CSV back as ``(times, delta, omega)``."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    g = (arr.shape[1] - 1) // 2
    return arr[:, 0], arr[:, 1 : 1 + g], arr[:, 1 + g :]


Controller = Callable[[np.ndarray], ControlSequence]


def run_fault_recovery(
    scenario: FaultScenario,
    eq: SwingState,
    control: ControlSequence | Controller | None = None,
    tol_sync: float = 1e-2,
    tol_settle: float = 1e-2,
    record_every: int = 1,
    per_sample: bool = True,
) -> RecoveryResult:
    """Simulate pre-fault, fault, clearing, an optional control window and the free run.

    ``control`` is a fixed input sequence (deviation coordinates, one input
    per free generator) or a callable mapping the deviation at control
    start to such a sequence. The run counts as recovered when every
    ``|omega_i(t_end)| < tol_sync`` and ``||rhs||_inf < tol_settle`` over the
    last 5% of the run. ``per_sample`` must match the convention used when
    the data behind the control were harvested.
    """
    Ts = scenario.Ts
    gain = 1.0 / Ts if per_sample else 1.0
    steps = int(round(scenario.t_end / Ts))
    k_on = int(round(scenario.onset / Ts))
    k_clear = int(round(scenario.clearing / Ts))
    k_ctrl = int(round(scenario.control_start / Ts))
    T = scenario.horizon
    g = scenario.pre.g
    delta, omega = eq.delta.copy(), eq.omega.copy()
    keep = np.arange(0, steps + 1, record_every)
    rec_d = np.empty((keep.size, g))
    rec_w = np.empty((keep.size, g))
    rec_d[0], rec_w[0] = delta, omega
    r = 1
    tail_start = int(math.floor(0.95 * steps))
    settle = 0.0
    inputs = None
    info = {}
    for k in range(steps):
        grid = scenario.pre if k < k_on else scenario.fault if k < k_clear else scenario.post
        forcing = None
        if control is not None and k == k_ctrl:
            x_start = deviation(grid, SwingState(delta, omega), eq)
            seq = control(x_start) if callable(control) else control
            inputs = seq.forward()
            if inputs.shape != (T, grid.free.size):
                raise DimensionError(f"control has shape {inputs.shape}, expected {(T, grid.free.size)}")
            info["x_start"] = x_start
            info["control_energy"] = float(np.sum(inputs**2))
        if inputs is not None and k_ctrl <= k < k_ctrl + T:
            forcing = _forcing(grid, inputs[k - k_ctrl] * gain)
        if k == k_ctrl + T and inputs is not None:
            info["x_end_control"] = deviation(grid, SwingState(delta, omega), eq)
        if k >= tail_start:
            dd, dw = _rhs(grid, delta, omega)
            settle = max(settle, float(np.abs(dd).max()), float(np.abs(dw).max()))
        delta, omega = _step(grid, delta, omega, forcing, Ts)
        if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(omega))):
            info["diverged_at"] = (k + 1) * Ts
            rec_d[r:], rec_w[r:] = np.nan, np.nan
            return RecoveryResult(keep * Ts, rec_d, rec_w, False, math.inf, math.inf, info)
        if r < keep.size and keep[r] == k + 1:
            rec_d[r], rec_w[r] = delta, omega
            r += 1
    max_w = float(np.abs(omega - eq.omega).max())
    recovered = max_w < tol_sync and settle < tol_settle
    return RecoveryResult(keep * Ts, rec_d, rec_w, recovered, max_w, settle, info)


def save_grid_config(path, scenario: FaultScenario) -> None:
    """Write a scenario as JSON: generator data, normal/faulted/post couplings and timing."""
    cfg = {
        "grid": scenario.pre.to_dict(),
        "fault": {"G": scenario.fault.G.tolist(), "B": scenario.fault.B.tolist()},
        "post": {"G": scenario.post.G.tolist(), "B": scenario.post.B.tolist()},
        "timing": {
            k: getattr(scenario, k)
            for k in ("onset", "clearing", "control_start", "control_duration", "Ts", "t_end")
        },
    }
    Path(path).write_text(json.dumps(cfg, indent=2))


def scenario_from_config(cfg: dict) -> FaultScenario:
    pre = SwingGrid.from_dict(cfg["grid"])
    fault = pre.with_coupling(**cfg["fault"]) if "fault" in cfg else pre
    post = pre.with_coupling(**cfg["post"]) if "post" in cfg else pre
    return FaultScenario(pre, fault, post, **cfg.get("timing", {}))


def load_grid_config(path=None) -> FaultScenario:
    """Read a scenario JSON; without ``path`` the bundled 10-generator ring is used."""
    if path is None:
        text = resources.files("netctl").joinpath("data/ring10.json").read_text()
    else:
        text = Path(path).read_text()
    return scenario_from_config(json.loads(text))


def ring_scenario(
    g: int = 10,
    susceptance: float = 1.6,
    loading: float = 1.6,
    damping: float = 0.1,
    inertia=(25.0, 45.0),
    conductance: float = 0.02,
    internal_conductance: float = 0.05,
    fault_gen: int = 3,
    fault_scale: float = 0.1,
    f_b: float = 60.0,
    **timing,
) -> FaultScenario:
    """Synthetic ring of ``g`` generators around an infinite bus (generator 0).

    The operating point is prescribed and the mechanical powers are chosen to
    balance it: the phase step across the ``s``-th line away from the bus is
    ``loading * (g/2 + 1/2 - s) / (g/2)``, so lines near the bus are the most
    stressed. Negative susceptances make the coupling restoring. During the
    fault every line of ``fault_gen`` carries only ``fault_scale`` of its
    admittance; the cleared grid equals the pre-fault one.
    """
    half = g / 2
    hops = np.array([min(i, g - i) for i in range(g)])
    step = loading * (half + 0.5 - np.arange(1, int(half) + 1)) / half
    delta = np.concatenate([[0.0], np.cumsum(step)])[hops]
    Gm = np.zeros((g, g))
    Bm = np.zeros((g, g))
    for i in range(g):
        j = (i + 1) % g
        Gm[i, j] = Gm[j, i] = conductance
        Bm[i, j] = Bm[j, i] = -susceptance
    E = np.ones(g)
    Gii = np.full(g, internal_conductance)
    diff = delta[:, None] - delta[None, :]
    # balance the prescribed phases exactly
    Pm = Gii * E**2 - E * ((Gm * np.cos(diff) + Bm * np.sin(diff)) * E[None, :]).sum(axis=1)
    H = np.linspace(inertia[0], inertia[1], g)
    grid = SwingGrid(H, np.full(g, damping), Pm, E, Gii, Gm, Bm, f_b=f_b, ref=0)
    scale = np.ones(g)
    scale[fault_gen] = fault_scale
    mask = np.outer(scale, scale)
    fault = grid.with_coupling(Gm * mask, Bm * mask)
    return FaultScenario(grid, fault, grid, **timing)


def operating_point(scenario: FaultScenario) -> SwingState:
    """Stable equilibrium of the pre-fault grid."""
    return find_equilibrium(scenario.pre).state


def data_driven_controller(data: DataMatrices, Q=0.01, R=1.0, tol: float = 1e-3) -> Controller:
    """Controller steering the deviation from its start value to zero over ``data.T`` samples.

    ``tol`` truncates the pseudoinverses well above round-off: perturbation
    data of a nonlinear plant are only approximately linear, and keeping
    directions at the level of the nonlinear residual lets the combination
    of experiments fit that residual instead of using the inputs.
    """

    def control(x_start: np.ndarray) -> ControlSequence:
        return dd_optimal_x0(data, Q, R, np.zeros(data.p), tol=tol, x_start=x_start).u

    return control
