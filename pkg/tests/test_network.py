import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netctl.bench.oracle import oracle_kkt, quadratic_cost
from netctl.errors import DimensionError, InvalidWeightError, NotControllableError, ReachabilityError
from netctl.linalg import kernel_basis, pinv
from netctl.network import (
    ControlProblem,
    ControlSequence,
    LinearNetwork,
    hankel_blocks,
    is_output_controllable,
    load_network,
    model_based_min_energy_gramian,
    model_based_optimal,
    output_ctrb_matrix,
    output_gramian,
    save_network,
    simulate,
)

from conftest import random_stable_net


def test_linear_network_validates_shapes():
    with pytest.raises(DimensionError):
        LinearNetwork(np.eye(2), np.ones((3, 1)), np.eye(2))
    with pytest.raises(DimensionError):
        LinearNetwork(np.eye(2), np.ones((2, 1)), np.ones((1, 3)))


def test_control_sequence_reverse_stacking():
    u = ControlSequence.from_forward([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(u.stacked, [5, 6, 3, 4, 1, 2])
    np.testing.assert_array_equal(u.at(0), [1, 2])
    np.testing.assert_array_equal(u.at(2), [5, 6])
    np.testing.assert_array_equal(ControlSequence(u.stacked, 2).forward(), [[1, 2], [3, 4], [5, 6]])
    assert u.T == 3 and len(u) == 3


@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_control_sequence_round_trip(m, T, seed):
    fwd = np.random.default_rng(seed).standard_normal((T, m))
    u = ControlSequence.from_forward(fwd)
    np.testing.assert_array_equal(ControlSequence(u.stacked, m).forward(), fwd)
    for t in range(T):
        np.testing.assert_array_equal(u.at(t), u.stacked[(T - 1 - t) * m : (T - t) * m])


def test_simulate_examples(integrator):
    net = LinearNetwork(np.zeros((2, 2)), np.eye(2), np.eye(2))
    v = np.array([1.0, -2.0])
    traj = simulate(net, ControlSequence.from_forward([v, v, v]))
    for t in (1, 2, 3):
        np.testing.assert_array_equal(traj.states[t], v)
    traj = simulate(integrator, ControlSequence.from_forward([[1.0], [0.0]]))
    np.testing.assert_array_equal(traj.states[2], [1.0, 0.0])
    np.testing.assert_array_equal(traj.outputs, traj.states @ integrator.C.T)


def test_ctrb_gramian_hankel_examples(integrator):
    np.testing.assert_array_equal(output_ctrb_matrix(integrator, 2), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(output_gramian(integrator, 2), np.eye(2))
    np.testing.assert_array_equal(hankel_blocks(integrator, 2), np.hstack([np.zeros((2, 1)), integrator.B]))
    assert hankel_blocks(integrator, 1).shape == (0, 1)
    zero = LinearNetwork(np.zeros((2, 2)), np.eye(2), np.eye(2))
    C4 = output_ctrb_matrix(zero, 4)
    np.testing.assert_array_equal(C4[:, :2], np.eye(2))
    np.testing.assert_array_equal(C4[:, 2:], 0)
    H = hankel_blocks(zero, 4)
    # y(k) depends only on u(k-1): identity blocks on the anti-diagonal band
    for k in range(1, 4):
        np.testing.assert_array_equal(H[(k - 1) * 2 : k * 2, (4 - k) * 2 : (5 - k) * 2], np.eye(2))
    assert np.count_nonzero(H) == 6


def test_simulation_oracles(small_net, rng):
    T = 5
    u = ControlSequence(rng.standard_normal(small_net.m * T), small_net.m)
    traj = simulate(small_net, u)
    y_T = output_ctrb_matrix(small_net, T) @ u.stacked
    assert np.linalg.norm(traj.final_output - y_T) <= 1e-10 * np.linalg.norm(y_T)
    np.testing.assert_allclose(hankel_blocks(small_net, T) @ u.stacked, traj.outputs[1:T].ravel(), atol=1e-12)


def test_gramian_properties(small_net):
    W = output_gramian(small_net, 4)
    assert np.abs(W - W.T).max() <= 1e-12
    assert np.linalg.eigvalsh(W).min() >= -1e-10 * np.linalg.norm(W, 2)
    C = output_ctrb_matrix(small_net, 4)
    assert np.linalg.matrix_rank(W) == np.linalg.matrix_rank(C)


def test_model_based_integrator(integrator):
    prob = ControlProblem.min_energy(2, [1.0, 0.0])
    u = model_based_optimal(integrator, prob)
    np.testing.assert_allclose(u.forward().ravel(), [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(model_based_min_energy_gramian(integrator, 2, [1.0, 0.0]).stacked, u.stacked)


def test_model_based_min_energy_reduction(small_net, rng):
    y_f = rng.standard_normal(small_net.p)
    u = model_based_optimal(small_net, ControlProblem.min_energy(4, y_f))
    np.testing.assert_allclose(u.stacked, pinv(output_ctrb_matrix(small_net, 4)) @ y_f, atol=1e-10)
    assert np.linalg.norm(simulate(small_net, u).final_output - y_f) <= 1e-8
    np.testing.assert_allclose(model_based_min_energy_gramian(small_net, 4, y_f).stacked, u.stacked, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_model_based_matches_kkt_oracle(seed):
    rng = np.random.default_rng(seed)
    net = random_stable_net(rng, n=7, m=2, p=3)
    T = 5
    G = rng.standard_normal((3 * (T - 1), 3 * (T - 1)))
    H = rng.standard_normal((2 * T, 2 * T))
    prob = ControlProblem(T, G @ G.T, H @ H.T + np.eye(2 * T), rng.standard_normal(3))
    u = model_based_optimal(net, prob)
    ref = oracle_kkt(net, prob)
    assert ref.kkt_residual <= 1e-10
    assert np.linalg.norm(u.stacked - ref.u.stacked) <= 1e-6 * np.linalg.norm(ref.u.stacked)
    assert np.linalg.norm(simulate(net, u).final_output - prob.y_f) <= 1e-6
    assert quadratic_cost(net, prob, u) == pytest.approx(ref.cost, rel=1e-8)


def test_min_energy_beats_feasible_perturbations(small_net, rng):
    T = 4
    y_f = rng.standard_normal(small_net.p)
    u = model_based_optimal(small_net, ControlProblem.min_energy(T, y_f)).stacked
    K = kernel_basis(output_ctrb_matrix(small_net, T))
    others = u[:, None] + K @ rng.standard_normal((K.shape[1], 1000))
    assert np.all(np.linalg.norm(u) <= np.linalg.norm(others, axis=0))


def test_unreachable_target_raises_with_residual():
    net = LinearNetwork(np.zeros((2, 2)), np.array([[1.0], [0.0]]), np.eye(2))
    with pytest.raises(ReachabilityError) as info:
        model_based_optimal(net, ControlProblem.min_energy(1, [0.0, 1.0]))
    assert info.value.residual == pytest.approx(1.0)
    u = model_based_optimal(net, ControlProblem.min_energy(1, [2.0, 1.0]), check_reachable=False)
    np.testing.assert_allclose(u.stacked, [2.0])
    with pytest.raises(NotControllableError):
        model_based_min_energy_gramian(net, 1, [0.0, 1.0])


def test_gramian_explicit_inverse_flag(small_net, rng):
    y_f = rng.standard_normal(small_net.p)
    a = model_based_min_energy_gramian(small_net, 4, y_f)
    b = model_based_min_energy_gramian(small_net, 4, y_f, explicit_inverse=True)
    np.testing.assert_allclose(a.stacked, b.stacked, rtol=1e-8)


def test_perturbed_gramian_error_grows():
    from netctl.graphs import perturb_edges, random_network

    rng = np.random.default_rng(3)
    net, _ = random_network(100, 10, 100, rng, epsilon=0.1, normalize=False, full_state=True)
    net = net.with_A(net.A / np.abs(np.linalg.eigvals(net.A)).max())
    x_f = rng.standard_normal(100)
    exact = model_based_min_energy_gramian(net, 200, x_f)
    perturbed = model_based_min_energy_gramian(net.with_A(perturb_edges(net.A, 1e-3, rng)), 200, x_f)
    err = [np.linalg.norm(simulate(net, u).final_output - x_f) for u in (exact, perturbed)]
    assert err[1] > err[0]


def test_is_output_controllable(integrator):
    assert is_output_controllable(integrator, 2)
    report = is_output_controllable(integrator, 1)
    assert not report and report.rank == 1


def test_control_problem_validation():
    with pytest.raises(ValueError):
        ControlProblem.min_energy(0, [1.0])
    with pytest.raises(InvalidWeightError):
        ControlProblem(2, -1.0, 1.0, [1.0])
    with pytest.raises(InvalidWeightError):
        ControlProblem(2, 0.0, 0.0, [1.0])
    Q, R = ControlProblem.scalar(3, [1.0, 2.0], 0.5, 2.0).dense_weights(2, 1)
    np.testing.assert_array_equal(Q, 0.5 * np.eye(4))
    np.testing.assert_array_equal(R, 2.0 * np.eye(3))


def test_network_file_round_trip(tmp_path, small_net):
    path = tmp_path / "net.txt"
    save_network(small_net, path, note="round trip")
    back = load_network(path)
    for a, b in ((back.A, small_net.A), (back.B, small_net.B), (back.C, small_net.C)):
        np.testing.assert_array_equal(a, b)
    assert "# round trip" in path.read_text()
