import numpy as np
import pytest

from netctl.errors import DimensionError
from netctl.experiments import (
    DataMatrices,
    NoiseSpec,
    add_noise,
    random_inputs,
    run_episodic,
    run_with_initial_states,
    simulate_long,
    sliding_window,
)
from netctl.network import ControlSequence, hankel_blocks, output_ctrb_matrix, simulate


def test_random_inputs_statistics_and_rank():
    U = random_inputs(2, 3, 100_000, rng=0)
    assert U.shape == (6, 100_000)
    assert np.abs(U.mean(axis=1)).max() <= 0.02
    np.testing.assert_array_equal(random_inputs(2, 3, 10, rng=5), random_inputs(2, 3, 10, rng=5))
    for seed in range(100):
        assert np.linalg.matrix_rank(random_inputs(2, 3, 6, rng=seed)) == 6
    with pytest.raises(ValueError):
        random_inputs(1, 1, 0)


def test_run_episodic_examples(small_net, rng):
    T = 4
    U = rng.standard_normal((small_net.m * T, 5))
    U[:, 0] = 0
    data = run_episodic(small_net, U, T)
    assert not data.YT[:, 0].any() and not data.Ymid[:, 0].any()
    traj = simulate(small_net, ControlSequence(U[:, 1], small_net.m))
    np.testing.assert_allclose(data.YT[:, 1], traj.final_output, atol=1e-14)
    np.testing.assert_allclose(data.Ymid[:, 1], traj.outputs[1:T].ravel(), atol=1e-14)
    assert np.linalg.norm(data.YT - output_ctrb_matrix(small_net, T) @ U) <= 1e-10
    assert np.linalg.norm(data.Ymid - hankel_blocks(small_net, T) @ U) <= 1e-10
    assert data.X0 is None
    with pytest.raises(DimensionError):
        run_episodic(small_net, U[:-1], T)


def test_run_with_initial_states(small_net, rng):
    T, N = 3, 6
    U = rng.standard_normal((small_net.m * T, N))
    X0 = rng.standard_normal((small_net.n, N))
    zero_x = run_with_initial_states(small_net, U, np.zeros_like(X0), T)
    np.testing.assert_allclose(zero_x.YT, run_episodic(small_net, U, T).YT)
    free = run_with_initial_states(small_net, np.zeros_like(U), X0, T)
    np.testing.assert_allclose(free.YT, small_net.C @ np.linalg.matrix_power(small_net.A, T) @ X0, atol=1e-12)
    both = run_with_initial_states(small_net, U, X0, T)
    np.testing.assert_allclose(both.YT, zero_x.YT + free.YT, atol=1e-10)
    np.testing.assert_allclose(both.Ymid, zero_x.Ymid + free.Ymid, atol=1e-10)
    np.testing.assert_array_equal(both.X0, X0)
    with pytest.raises(DimensionError):
        run_with_initial_states(small_net, U, X0[:, :2], T)


def test_sliding_window_matches_episodes(small_net, rng):
    T, S = 3, 12
    u_long = rng.standard_normal((S, small_net.m))
    states, outputs = simulate_long(small_net, u_long)
    one = sliding_window(u_long[:T], outputs[: T + 1], T)
    np.testing.assert_allclose(one.YT, run_episodic(small_net, one.U, T).YT, atol=1e-12)
    data = sliding_window(u_long, outputs, T, states)
    assert data.N == S + 1 - T
    for s in range(data.N):
        traj = simulate(small_net, ControlSequence(data.U[:, s], small_net.m), states[s])
        np.testing.assert_allclose(data.YT[:, s], traj.final_output, atol=1e-12)
        np.testing.assert_allclose(data.Ymid[:, s], traj.outputs[1:T].ravel(), atol=1e-12)
        np.testing.assert_array_equal(data.X0[:, s], states[s])
    assert sliding_window(u_long, outputs, T, stride=2).N == len(range(0, S + 1 - T, 2))
    with pytest.raises(DimensionError):
        sliding_window(u_long[:2], outputs[:3], T)


def test_add_noise_channels_and_variance(rng):
    N = 200_000
    U = rng.standard_normal((5, N))
    clean = DataMatrices(U, np.zeros((0, N)), rng.standard_normal((1, N)), 1)
    same = add_noise(clean, NoiseSpec(), rng)
    np.testing.assert_array_equal(same.U, clean.U)
    np.testing.assert_array_equal(same.YT, clean.YT)
    noisy = add_noise(clean, NoiseSpec(sigma_U2=0.04, sigma_YT2=0.25), rng)
    assert np.var(noisy.U - clean.U) == pytest.approx(0.04, rel=0.05)
    assert np.var(noisy.YT - clean.YT) == pytest.approx(0.25, rel=0.05)
    assert noisy.truth is clean
    yt_only = add_noise(clean, NoiseSpec(sigma_YT2=1.0), rng)
    np.testing.assert_array_equal(yt_only.U, clean.U)
    uniform = add_noise(clean, NoiseSpec(sigma_U2=0.04, distribution="uniform"), rng)
    assert np.abs(uniform.U - clean.U).max() <= np.sqrt(3 * 0.04)
    with pytest.raises(ValueError):
        NoiseSpec(sigma_U2=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(distribution="laplace")


def test_data_matrices_round_trip(tmp_path, small_net, rng):
    T = 3
    data = run_with_initial_states(
        small_net, rng.standard_normal((small_net.m * T, 4)), rng.standard_normal((small_net.n, 4)), T
    )
    data.save(tmp_path / "d")
    back = DataMatrices.load(tmp_path / "d")
    for name in ("U", "Ymid", "YT", "X0"):
        np.testing.assert_array_equal(getattr(back, name), getattr(data, name))
    assert (back.T, back.n) == (data.T, data.n)
    noisy = add_noise(data, NoiseSpec(sigma_U2=0.1), rng)
    noisy.save(tmp_path / "n")
    assert DataMatrices.load(tmp_path / "n").truth is None  # ground truth never serialized


def test_data_matrices_validation(rng):
    with pytest.raises(DimensionError):
        DataMatrices(np.zeros((5, 3)), np.zeros((0, 3)), np.zeros((1, 3)), 2)
    with pytest.raises(DimensionError):
        DataMatrices(np.zeros((2, 3)), np.zeros((1, 3)), np.zeros((1, 4)), 2)
    d = DataMatrices(rng.standard_normal((2, 6)), rng.standard_normal((1, 6)), rng.standard_normal((1, 6)), 2)
    assert d.subset(slice(0, 3)).N == 3
    assert d.subset([0, 5]).N == 2
    assert (d.m, d.p) == (1, 1)
