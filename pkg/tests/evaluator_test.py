import numpy as np
import pytest
from utils import random_params
from utils import zero_gain_head

from pinnobs.evaluator import LinearInterpolant
from pinnobs.evaluator import format_metrics
from pinnobs.evaluator import inference_time_ms
from pinnobs.evaluator import metrics
from pinnobs.evaluator import prediction_metrics
from pinnobs.evaluator import replay_observer
from pinnobs.evaluator import write_error_csv
from pinnobs.evaluator import write_metrics
from pinnobs.exceptions import GridMismatchError
from pinnobs.exceptions import OutOfRangeError
from pinnobs.integrator import Trajectory
from pinnobs.integrator import simulate
from pinnobs.network import LayerSpec
from pinnobs.network import init_params
from pinnobs.systems import build_system


def pair(true, estimate, times=None):
    true = np.atleast_2d(np.asarray(true, dtype=np.float64))
    estimate = np.atleast_2d(np.asarray(estimate, dtype=np.float64))
    times = np.arange(true.shape[0], dtype=np.float64) if times is None else times
    return Trajectory(times=times, states=true), Trajectory(times=times, states=estimate)


def test_single_pair():
    report = metrics(*pair([[1.0]], [[0.5]]))
    assert report.mae == 0.5
    assert report.mse == 0.25
    assert report.rmse == 0.5
    assert report.smape_percent == pytest.approx(200.0 / 3.0, abs=1e-9)


def test_identical_trajectories():
    states = np.random.default_rng(0).normal(size=(20, 3))
    report = metrics(*pair(states, states))
    assert (report.mae, report.mse, report.rmse, report.smape_percent) == (0.0, 0.0, 0.0, 0.0)


def test_rmse_is_root_of_mse():
    rng = np.random.default_rng(1)
    report = metrics(*pair(rng.normal(size=(50, 2)), rng.normal(size=(50, 2))), measured=[0])
    for values in [report.overall, report.unmeasured, *report.per_state.values()]:
        assert values.rmse == np.sqrt(values.mse)
        assert 0.0 <= values.smape_percent <= 200.0


def test_metrics_are_symmetric():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(30, 2)), rng.normal(size=(30, 2))
    forward = metrics(*pair(a, b))
    backward = metrics(*pair(b, a))
    assert forward.mae == backward.mae
    assert forward.mse == backward.mse
    assert forward.smape_percent == backward.smape_percent


def test_metrics_scale():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(30, 2)), rng.normal(size=(30, 2))
    base = metrics(*pair(a, b))
    scaled = metrics(*pair(3.0 * a, 3.0 * b))
    assert scaled.mae == pytest.approx(3.0 * base.mae, rel=1e-12)
    assert scaled.mse == pytest.approx(9.0 * base.mse, rel=1e-12)
    assert scaled.smape_percent == pytest.approx(base.smape_percent, rel=1e-12)


def test_smape_ignores_double_zeros():
    report = metrics(*pair([[0.0], [1.0]], [[0.0], [1.0]]))
    assert report.smape_percent == 0.0


def test_per_state_and_unmeasured():
    true = np.array([[1.0, 2.0], [1.0, 2.0]])
    estimate = np.array([[1.0, 1.0], [1.0, 3.0]])
    report = metrics(*pair(true, estimate), measured=[0])
    assert set(report.per_state) == {"x1", "x2"}
    assert report.per_state["x1"].mae == 0.0
    assert report.per_state["x2"].mae == 1.0
    assert report.unmeasured.mse == 1.0
    assert report.per_time_error.shape == (2, 2)
    assert metrics(*pair(true, estimate), measured=[0, 1]).unmeasured is None


def test_grid_mismatch():
    true, _ = pair([[1.0], [2.0]], [[1.0], [2.0]])
    with pytest.raises(GridMismatchError):
        metrics(true, Trajectory(times=np.array([0.0, 0.5]), states=np.ones((2, 1))))
    with pytest.raises(GridMismatchError):
        metrics(true, Trajectory(times=np.array([0.0, 1.0]), states=np.ones((2, 2))))


def test_interpolant():
    measurements = LinearInterpolant([0.0, 1.0, 2.0], [[0.0], [2.0], [0.0]])
    assert measurements(0.5) == pytest.approx([1.0])
    assert measurements(2.0) == pytest.approx([0.0])
    with pytest.raises(OutOfRangeError):
        measurements(2.5)
    with pytest.raises(OutOfRangeError):
        measurements(-0.1)


def test_zero_gain_replay_is_open_loop_simulation():
    sys = build_system("reverse_duffing")
    truth = simulate(sys, T=1.0)
    measurements = LinearInterpolant(truth.times, truth.states @ sys.C.T)
    params = zero_gain_head(init_params(LayerSpec.for_system(2, 1, 3, 8), 0), sys.n_x)
    replayed = replay_observer(sys, params, sys.xhat0, measurements, 1.0, sys.dt)
    open_loop = simulate(sys, x0=sys.xhat0, T=1.0)
    np.testing.assert_array_equal(replayed.states, open_loop.states)


def test_exact_start_tracks_truth():
    sys = build_system("reverse_duffing")
    fine = simulate(sys, T=1.0, dt=sys.dt / 16)
    measurements = LinearInterpolant(fine.times, fine.states @ sys.C.T)
    params = init_params(LayerSpec.for_system(2, 1, 3, 8), 1)
    replayed = replay_observer(sys, params, sys.x0, measurements, 1.0, sys.dt)
    truth = simulate(sys, T=1.0)
    assert np.max(np.abs(replayed.states - truth.states)) <= 1e-6


def test_replay_is_deterministic():
    sys = build_system("harmonic_oscillator")
    truth = simulate(sys, T=0.5)
    measurements = LinearInterpolant(truth.times, truth.states @ sys.C.T)
    params = random_params(LayerSpec.for_system(3, 1, 2, 6), 4, scale=0.2)
    first = replay_observer(sys, params, sys.xhat0, measurements, 0.5, sys.dt)
    second = replay_observer(sys, params, sys.xhat0, measurements, 0.5, sys.dt)
    np.testing.assert_array_equal(first.states, second.states)


def test_replay_needs_measurements_over_the_horizon():
    sys = build_system("reverse_duffing")
    truth = simulate(sys, T=0.5)
    measurements = LinearInterpolant(truth.times, truth.states @ sys.C.T)
    params = init_params(LayerSpec.for_system(2, 1, 2, 4), 0)
    with pytest.raises(OutOfRangeError):
        replay_observer(sys, params, sys.xhat0, measurements, 1.0, sys.dt)


def test_prediction_metrics_on_subset():
    sys = build_system("reverse_duffing")
    truth = simulate(sys, T=0.1)
    params = init_params(LayerSpec.for_system(2, 1, 2, 4), 0)
    report = prediction_metrics(params, truth, indices=[1, 4, 7], measured=[0])
    assert report.per_time_error.shape == (3, 2)
    assert report.unmeasured is not None


def test_inference_time():
    params = init_params(LayerSpec.for_system(2, 1, 2, 4), 0)
    assert inference_time_ms(params, repeats=5) > 0.0
    with pytest.raises(ValueError):
        inference_time_ms(params, repeats=0)


def test_metrics_file(tmp_path):
    report = metrics(*pair([[1.0, 0.0]], [[0.5, 0.0]]), measured=[0])
    lines = format_metrics(report, prefix="prediction_")
    assert "prediction_mae=0.25" in lines
    assert "prediction_mae_x1=0.5" in lines
    assert "prediction_rmse_unmeasured=0" in lines

    path = write_metrics(report, tmp_path / "metrics.txt")
    values = dict(line.split("=") for line in path.read_text().splitlines())
    assert float(values["mse"]) == 0.125
    assert set(values) >= {"mae", "mse", "rmse", "smape_percent", "mae_x1", "mae_x2"}


def test_error_csv(tmp_path):
    true, estimate = pair([[1.0, 2.0], [3.0, 4.0]], [[1.5, 2.0], [3.0, 3.0]])
    path = write_error_csv(true, estimate, tmp_path / "errors.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t,e1,e2"
    assert lines[1] == "0,0.5,0"
