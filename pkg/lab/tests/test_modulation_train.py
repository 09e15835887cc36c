import math

import numpy as np
import numpy.testing as npt
import pytest

from novikov.dynamics.evolution import StepControl, simulate
from novikov.dynamics.profiles import MollifierSpec, PeakonSpec, TrainSpec, exact_train, train
from novikov.grid.grid_field import Grid
from shared.run_config import Tolerances
from novikov.stability.modulation import modulation_solve, orthogonality_jacobian, orthogonality_residual
from novikov.stability.train import (
    global_identity,
    monotonicity_report,
    train_diagnostics,
    train_geometry,
    virial_check,
)


@pytest.fixture(scope="module")
def wide_train():
    ts = TrainSpec((PeakonSpec(1.0, 1.0, -12.5), PeakonSpec(2.0, 1.5, 12.5)), L=25.0)
    return ts, exact_train(ts, Grid(-40.0, 40.0, 2049))


def test_exact_train_is_already_modulated(wide_train):
    ts, s = wide_train
    npt.assert_array_equal(orthogonality_residual(s, ts, ts.positions), 0.0)
    solved = modulation_solve(s, ts, ts.positions)
    assert solved.iterations == 1
    assert solved.residual_norm == 0.0
    npt.assert_array_equal(solved.x_tilde, ts.positions)


def test_modulation_recovers_shifted_positions(wide_train):
    ts, s = wide_train
    solved = modulation_solve(s, ts, ts.positions + np.array([0.3, -0.2]))
    assert solved.residual_norm <= 1e-8 * (1.0 + 1.0)
    npt.assert_allclose(solved.x_tilde, ts.positions, atol=1e-4)


def test_modulation_rejects_bad_warm_starts(wide_train):
    ts, s = wide_train
    with pytest.raises(ValueError):
        modulation_solve(s, ts, [0.0])
    with pytest.raises(ValueError):
        modulation_solve(s, ts, [0.0, 2.0])
    with pytest.raises(ValueError):
        orthogonality_residual(s, ts, [0.0, 1.0, 2.0])


def test_jacobian_off_diagonal_closed_form(wide_train):
    ts, s = wide_train
    x = np.array([-1.0, 1.5])
    jac = orthogonality_jacobian(s, ts, x)
    d = 2.5
    expected = (1.0 * 2.0 + 1.0 * 1.5) * (1.0 - d) * math.exp(-d)
    assert jac[0, 1] == pytest.approx(expected)
    assert jac[1, 0] == pytest.approx(expected)


def test_geometry_splits_at_midpoints(wide_train):
    ts, s = wide_train
    g = train_geometry(s, ts.positions)
    assert g.y == (0.0,)
    assert g.intervals == ((-40.0, 0.0), (0.0, 40.0))
    assert g.x_peak == (-12.5, 12.5)
    npt.assert_allclose(g.M_peak, ts.speeds, rtol=1e-9)


def test_global_identity_sees_the_interaction():
    grid = Grid(-16.0, 16.0, 1025)
    ts = TrainSpec((PeakonSpec(1.0, 1.0, -1.0), PeakonSpec(2.0, 3.0, 1.0)), L=2.0)
    s = exact_train(ts, grid)
    identity = global_identity(s, ts, ts.positions)
    assert identity.orbit_distance == pytest.approx(0.0, abs=1e-12)
    # the cross term counts twice in 4 sum a_i u(x_i) but once in the energy
    assert identity.residual_u == pytest.approx(-8.0 * math.exp(-2.0), abs=2e-2)
    assert identity.residual_v == pytest.approx(-12.0 * math.exp(-2.0), abs=5e-2)


@pytest.fixture(scope="module")
def train_run():
    grid = Grid(-20.0, 40.0, 1537)
    ts = TrainSpec((PeakonSpec(1.0, 1.0, -6.0), PeakonSpec(1.5, 1.5, 6.0)), L=12.0)
    traj = simulate(train(ts, MollifierSpec(0.2), grid), StepControl(t_end=1.0, record_every=2))
    return ts, traj


@pytest.mark.slow
def test_train_diagnostics_track_both_peakons(train_run):
    ts, traj = train_run
    report = train_diagnostics(traj, ts, 4.0)
    assert len(report.snapshots) == len(traj.states)
    assert report.max_residual <= 1e-8 * 2.0
    speeds = report.fitted_speeds()
    assert speeds[1] > speeds[0]
    assert np.all(speeds > 0.5 * ts.speeds)
    assert np.all(speeds < 1.2 * ts.speeds)
    assert report.min_separation_margin > 0.0


@pytest.mark.slow
def test_right_energy_does_not_grow(train_run):
    ts, traj = train_run
    fixed = monotonicity_report(traj, ts, 4.0, centers=[0.0])
    assert fixed.increases.shape == (1, 3)
    assert fixed.passes(1.0)
    moving = monotonicity_report(traj, ts, 4.0)
    assert moving.passes(1.0)


@pytest.mark.slow
def test_virial_rates_match_the_measured_ones(train_run):
    ts, traj = train_run
    assert traj.particles
    check = virial_check(traj, 0.0, 4.0)
    assert check.measured.shape == check.predicted.shape
    assert check.max_relative_error <= Tolerances().virial


@pytest.mark.slow
def test_gap_between_the_crests_keeps_growing(train_run):
    ts, traj = train_run
    report = train_diagnostics(traj, ts, 4.0)
    slack = math.sqrt(report.initial_orbit_distance)
    assert report.max_separation_drop <= slack
    assert report.separation_increasing(slack)
    gaps = np.diff(report.positions, axis=1)[:, 0]
    assert gaps[-1] > gaps[0]


def test_separation_drop_reads_the_running_maximum(wide_train):
    ts, s = wide_train
    traj = simulate(s, StepControl(t_end=0.0))
    report = train_diagnostics(traj, ts, 4.0)
    assert report.max_separation_drop == 0.0
    assert report.separation_increasing()


def test_virial_check_needs_three_snapshots(wide_train):
    ts, s = wide_train
    traj = simulate(s, StepControl(t_end=0.0))
    with pytest.raises(ValueError):
        virial_check(traj, 0.0, 4.0)
