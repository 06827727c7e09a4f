import math

import numpy as np
import pytest

from netctl.errors import ConvergenceError, DimensionError
from netctl.network import ControlSequence
from netctl.swing import (
    FaultScenario,
    SwingGrid,
    SwingState,
    data_driven_controller,
    deviation,
    euler_step,
    find_equilibrium,
    harvest_perturbation_data,
    load_grid_config,
    load_trajectory_csv,
    ring_scenario,
    rhs_norm,
    run_fault_recovery,
    save_grid_config,
    swing_rhs,
)


def two_machine(b=-1.0, pm=0.5, d=1.0):
    """Generator 1 against an infinite bus (generator 0) through a lossless line."""
    B = np.array([[0.0, b], [b, 0.0]])
    return SwingGrid(H=[1.0, 1.0], D=[d, d], Pm=[0.0, pm], E=[1.0, 1.0], Gii=[0.0, 0.0], G=np.zeros((2, 2)), B=B)


def test_rhs_two_machine_example():
    grid = two_machine()
    state = SwingState([0.0, 0.3], [0.0, 0.1])
    d = swing_rhs(grid, state)
    # omega' = pi f_b / H (-D omega + Pm + B sin(delta_0 - delta_1))
    expected = math.pi * 60 * (-0.1 + 0.5 - math.sin(0.3))
    np.testing.assert_allclose(d.delta, [0.0, 0.1])
    assert d.omega[1] == pytest.approx(expected, rel=1e-14)
    assert d.omega[0] == 0.0


def test_equilibrium_two_machine():
    eq = find_equilibrium(two_machine())
    assert eq.state.delta[1] == pytest.approx(math.asin(0.5), abs=1e-9)
    assert eq.residual <= 1e-8 and eq.converged
    with pytest.raises(ConvergenceError):
        find_equilibrium(two_machine(pm=1.5))  # demand exceeds line capacity


def test_ring_equilibrium_matches_prescribed_phases():
    sc = ring_scenario(g=6)
    eq = find_equilibrium(sc.pre)
    assert rhs_norm(sc.pre, eq.state) <= 1e-8
    np.testing.assert_allclose(np.diff(eq.state.delta[:4]), [1.6 * (3.5 - s) / 3 for s in (1, 2, 3)], atol=1e-7)


def test_euler_step_and_reference_constancy():
    grid = two_machine()
    state = SwingState([0.2, 0.7], [0.0, 0.3])
    nxt = euler_step(grid, state, forcing=[5.0, 1.0], dt=0.01)
    d = swing_rhs(grid, state)
    np.testing.assert_allclose(nxt.delta, state.delta + 0.01 * d.delta)
    np.testing.assert_allclose(nxt.omega[1], state.omega[1] + 0.01 * (d.omega[1] + 1.0))
    assert nxt.delta[0] == 0.2 and nxt.omega[0] == 0.0
    with pytest.raises(DimensionError):
        euler_step(grid, state, forcing=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        euler_step(grid, state, dt=0.0)


def test_damped_oscillation_settles():
    grid = two_machine(d=0.1)
    eq = find_equilibrium(grid).state
    state = SwingState(eq.delta + [0.0, 0.2], eq.omega)
    gaps = []
    for _ in range(20):
        for _ in range(400):
            state = euler_step(grid, state, dt=2.5e-4)
        gaps.append(np.abs(deviation(grid, state, eq)).max())
    assert gaps[-1] < 1e-2 * 0.2
    assert gaps[-1] < gaps[0]


def test_deviation_wraps_phases():
    grid = two_machine()
    eq = SwingState([0.0, 0.5], [0.0, 0.0])
    x = deviation(grid, SwingState([0.0, 0.5 + 2 * math.pi + 0.1], [0.0, 0.2]), eq)
    np.testing.assert_allclose(x, [0.1, 0.2], atol=1e-12)


def test_grid_validation():
    with pytest.raises(ValueError):
        SwingGrid([1.0, -1.0], [1, 1], [0, 0], [1, 1], [0, 0], np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        two_machine().with_coupling(B=np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(DimensionError):
        SwingGrid([1.0, 1.0], [1, 1, 1], [0, 0], [1, 1], [0, 0], np.zeros((2, 2)), np.zeros((2, 2)))


def test_harvest_shapes_and_zero_variance():
    grid = two_machine()
    eq = find_equilibrium(grid).state
    data = harvest_perturbation_data(grid, eq, N=7, T=5, rng=0)
    assert data.U.shape == (5, 7) and data.YT.shape == (2, 7) and data.Ymid.shape == (8, 7)
    assert data.X0.shape == (2, 7)
    quiet = harvest_perturbation_data(grid, eq, N=3, T=4, rng=0, input_var=0.0, state_var=0.0)
    assert np.abs(quiet.YT).max() <= 1e-12 and np.abs(quiet.U).max() == 0.0
    again = harvest_perturbation_data(grid, eq, N=7, T=5, rng=0)
    np.testing.assert_array_equal(again.YT, data.YT)


def test_recovery_without_fault_stays_put(tmp_path):
    grid = two_machine()
    eq = find_equilibrium(grid).state
    sc = FaultScenario(grid, grid, grid, onset=0.1, clearing=0.2, control_start=0.2, control_duration=0.01, t_end=1.0)
    res = run_fault_recovery(sc, eq, record_every=100)
    assert res.recovered and res.max_final_omega <= 1e-9
    np.testing.assert_allclose(res.delta, np.broadcast_to(eq.delta, res.delta.shape), atol=1e-9)
    res.save_csv(tmp_path / "traj.csv")
    times, delta, omega = load_trajectory_csv(tmp_path / "traj.csv")
    np.testing.assert_allclose(times, res.times)
    np.testing.assert_allclose(delta, res.delta, atol=1e-9)


def test_recovery_rejects_wrong_control_shape():
    grid = two_machine()
    eq = find_equilibrium(grid).state
    sc = FaultScenario(grid, grid, grid, onset=0.1, clearing=0.2, control_start=0.2, control_duration=0.01, t_end=0.5)
    with pytest.raises(DimensionError):
        run_fault_recovery(sc, eq, ControlSequence(np.zeros(3), 1))


def test_controller_steers_deviation_to_zero():
    grid = two_machine()
    eq = find_equilibrium(grid).state
    T = 400
    # small perturbations keep the nonlinear residual below the truncation level
    data = harvest_perturbation_data(grid, eq, N=1000, T=T, rng=1, input_var=1e-8, state_var=1e-6)
    x_start = np.array([5e-4, 2e-4])
    u = data_driven_controller(data)(x_start).forward()
    state = SwingState(eq.delta + [0.0, x_start[0]], eq.omega + [0.0, x_start[1]])
    for t in range(T):
        state = euler_step(grid, state, forcing=[0.0, u[t, 0] / 2.5e-4])
    assert np.abs(deviation(grid, state, eq)).max() < 1e-2 * np.abs(x_start).max()


def test_config_round_trip(tmp_path):
    sc = ring_scenario(g=4, t_end=12.0)
    save_grid_config(tmp_path / "grid.json", sc)
    back = load_grid_config(tmp_path / "grid.json")
    np.testing.assert_array_equal(back.fault.B, sc.fault.B)
    np.testing.assert_array_equal(back.pre.Pm, sc.pre.Pm)
    assert back.t_end == 12.0 and back.horizon == sc.horizon
    bundled = load_grid_config()
    assert bundled.pre.g == 10 and bundled.horizon == 400
