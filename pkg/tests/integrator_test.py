import numpy as np
import pytest
from utils import duffing_dataset

from pinnobs.exceptions import ShapeError
from pinnobs.exceptions import TrajectoryEscapeError
from pinnobs.integrator import Trajectory
from pinnobs.integrator import build_dataset
from pinnobs.integrator import grid
from pinnobs.integrator import integrate
from pinnobs.integrator import read_trajectory_csv
from pinnobs.integrator import rk4_step
from pinnobs.integrator import simulate
from pinnobs.integrator import write_trajectory_csv
from pinnobs.systems import build_system
from pinnobs.systems import duffing_energy
from pinnobs.systems import registry
from pinnobs.systems import rigid_body_invariants


def test_rk4_exponential_step():
    x = rk4_step(lambda x, t: x, np.array([1.0]), 0.0, 0.1)
    assert x[0] == pytest.approx(1.1051708333333333, abs=1e-14)
    assert abs(x[0] - np.exp(0.1)) < 1e-7


def test_rk4_zero_field():
    x = np.array([0.3, -2.0])
    assert np.array_equal(rk4_step(lambda x, t: np.zeros(2), x, 1.0, 0.01), x)


def test_rk4_constant_field_is_exact():
    assert rk4_step(lambda x, t: np.ones(1), np.zeros(1), 0.0, 0.5)[0] == 0.5


def test_rk4_rejects_non_positive_step():
    with pytest.raises(ValueError):
        rk4_step(lambda x, t: x, np.ones(1), 0.0, 0.0)


def test_rk4_reports_escape():
    with pytest.raises(TrajectoryEscapeError) as error:
        rk4_step(lambda x, t: np.array([np.inf]), np.ones(1), 2.5, 0.1)
    assert error.value.time == 2.5


def test_blow_up_reports_time():
    with pytest.raises(TrajectoryEscapeError) as error:
        integrate(lambda x, t: x * x, np.ones(1), grid(2.0, 0.01), 0.01)
    assert error.value.time > 0.9


def test_rk4_observed_order():
    errors = []
    for dt in (0.1, 0.05, 0.025):
        traj = integrate(lambda x, t: x, np.ones(1), grid(1.0, dt), dt)
        errors.append(abs(traj.states[-1, 0] - np.e))
    for coarse, fine in zip(errors, errors[1:]):
        assert np.log2(coarse / fine) >= 3.9


def test_substeps_split_each_interval():
    def field(x, t):
        return x * t

    traj = integrate(field, np.ones(1), np.array([0.0, 0.2]), 0.2, substeps=2)
    expected = rk4_step(field, rk4_step(field, np.ones(1), 0.0, 0.1), 0.1, 0.1)
    assert np.array_equal(traj.states[1], expected)


def test_substeps_must_be_positive():
    with pytest.raises(ValueError):
        integrate(lambda x, t: x, np.ones(1), grid(1.0, 0.5), 0.5, substeps=0)


@pytest.mark.parametrize(
    "sys",
    [
        pytest.param(sys, marks=pytest.mark.slow) if sys.substeps > 1 else sys
        for sys in registry()
    ],
    ids=lambda sys: sys.name,
)
def test_step_halving_agrees_over_default_horizon(sys):
    coarse = simulate(sys)
    fine = simulate(sys, dt=sys.dt / 2)
    assert len(coarse) == 10001
    assert np.all(np.isfinite(coarse.states))
    assert np.max(np.abs(coarse.states - fine.states[::2])) <= 1e-6


def test_grid_sizes():
    assert grid(20.0, 2e-3).size == 10001
    assert grid(0.018, 2e-3).size == 10
    assert grid(0.0, 0.1).size == 1
    times = grid(1.0, 0.1)
    assert times[0] == 0.0
    assert np.allclose(np.diff(times), 0.1, rtol=1e-12)


@pytest.mark.parametrize("T, dt", [(-1.0, 0.1), (1.0, 0.0), (1e9, 1e-3)])
def test_grid_rejects(T, dt):
    with pytest.raises(ValueError):
        grid(T, dt)


def test_harmonic_oscillator_matches_analytic_solution():
    sys = build_system("harmonic_oscillator")
    traj = simulate(sys, x0=[0.0, 1.0, 3.0], T=20.0, dt=1e-3)
    omega = np.sqrt(3.0)
    assert np.max(np.abs(traj.states[:, 0] - np.sin(omega * traj.times) / omega)) <= 1e-6
    assert np.max(np.abs(traj.states[:, 1] - np.cos(omega * traj.times))) <= 1e-6
    assert np.all(traj.states[:, 2] == 3.0)


def test_reverse_duffing_conserves_energy():
    traj = simulate(build_system("reverse_duffing"), T=20.0, dt=2e-3)
    energy = duffing_energy(traj.states)
    assert np.max(np.abs(energy - energy[0])) / energy[0] <= 1e-8


def test_rigid_body_conserves_invariants():
    sys = build_system("rigid_body")
    traj = simulate(sys, T=20.0, dt=2e-3)
    for invariant in rigid_body_invariants(sys, traj.states):
        assert np.max(np.abs(invariant - invariant[0])) / invariant[0] <= 1e-8


@pytest.mark.parametrize("sys", registry(), ids=lambda sys: sys.name)
def test_zero_horizon(sys):
    traj = simulate(sys, T=0.0)
    assert len(traj) == 1
    assert np.array_equal(traj.states[0], sys.x0)


def test_induction_motor_stays_finite():
    traj = simulate(build_system("induction_motor"), T=2.0)
    assert np.all(np.isfinite(traj.states))


def test_split_sizes():
    _, _, dataset = duffing_dataset(train_fraction=0.6)
    assert dataset.train_idx.size == 6
    assert dataset.test_idx.size == 4
    assert dataset.train_idx[0] == 0
    assert not set(dataset.train_idx) & set(dataset.test_idx)
    assert sorted(set(dataset.train_idx) | set(dataset.test_idx)) == list(range(10))


def test_split_is_deterministic():
    _, _, first = duffing_dataset(train_fraction=0.6, split_seed=4)
    _, _, second = duffing_dataset(train_fraction=0.6, split_seed=4)
    assert np.array_equal(first.train_idx, second.train_idx)
    assert np.array_equal(first.test_idx, second.test_idx)


def test_duffing_outputs_are_first_state():
    _, truth, dataset = duffing_dataset()
    assert np.array_equal(dataset.outputs[:, 0], truth.states[:, 0])
    assert np.array_equal(dataset.xhat0, [1.0, 1.0])


def test_build_dataset_rejects_bad_fraction():
    sys, truth, _ = duffing_dataset()
    with pytest.raises(ValueError):
        build_dataset(truth, sys, 0, train_fraction=0.0)


def test_trajectory_shape_is_checked():
    with pytest.raises(ShapeError):
        Trajectory(times=np.zeros(3), states=np.zeros((2, 2)))


def test_trajectory_csv(tmp_path):
    traj = simulate(build_system("rigid_body"), T=0.01)
    path = write_trajectory_csv(traj, tmp_path / "truth.csv")
    assert path.read_text().splitlines()[0] == "t,x1,x2,x3"
    loaded = read_trajectory_csv(path)
    assert np.array_equal(loaded.times, traj.times)
    assert np.array_equal(loaded.states, traj.states)
