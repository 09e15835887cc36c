import numpy as np
import pytest

from novikov.diagnostics.functionals import energy_u, relative_drift
from novikov.dynamics.characteristics import CharacteristicExitError, characteristics, momentum_along_flow
from novikov.dynamics.evolution import (
    BlowUpError,
    StepControl,
    cfl_dt,
    rhs,
    simulate,
    step_rk4,
    virial_rates,
    weighted_energies,
)
from novikov.dynamics.profiles import MollifierSpec, PeakonSpec, exact_peakon_pair, mollified_peakon_pair
from novikov.grid.green_kernel import KernelWorkspace, helmholtz_inverse
from novikov.grid.grid_field import Field, Grid, State, zero_state


def _smooth_pair(grid):
    m = np.exp(-0.5 * grid.nodes**2) / np.sqrt(2.0 * np.pi)
    u = helmholtz_inverse(Field(grid, 2.0 * m))
    return State(u, u)


@pytest.fixture(scope="module")
def mollified_run():
    grid = Grid(-20.0, 20.0, 1025)
    initial = mollified_peakon_pair(PeakonSpec(1.0, 1.0), MollifierSpec(0.2), grid)
    return simulate(initial, StepControl(t_end=1.0, record_every=2))


def test_step_control_rejects_bad_values():
    with pytest.raises(ValueError, match="cfl"):
        StepControl(cfl=0.0)
    with pytest.raises(ValueError, match="t_end"):
        StepControl(t_end=-1.0)
    with pytest.raises(ValueError, match="record_every"):
        StepControl(record_every=0)
    with pytest.raises(ValueError, match="dt_max"):
        StepControl(dt_max=0.0)
    with pytest.raises(ValueError, match="scheme"):
        StepControl(scheme="spectral")


def test_zero_horizon_gives_one_snapshot(small_grid):
    initial = exact_peakon_pair(PeakonSpec(1.0, 1.0), small_grid)
    seen = []
    traj = simulate(initial, StepControl(t_end=0.0), on_record=lambda s, r: seen.append(r))
    assert len(traj.states) == 1
    assert traj.steps == 0
    assert len(seen) == 1


def test_rhs_is_the_rate_of_a_small_step(small_grid):
    ws = KernelWorkspace(small_grid)
    du, dv = rhs(zero_state(small_grid), ws)
    assert not du.values.any() and not dv.values.any()

    s = _smooth_pair(small_grid)
    du, dv = rhs(s, ws)
    np.testing.assert_array_equal(du.values, dv.values)
    dt = 1e-6
    stepped = step_rk4(s, dt, ws)
    rate = (stepped.u.values - s.u.values) / dt
    assert np.max(np.abs(rate - du.values)) <= 1e-4 * np.max(np.abs(du.values))


def test_cfl_step_scales_with_the_peak_speed(small_grid):
    ctl = StepControl(dt_max=10.0)
    unit = cfl_dt(exact_peakon_pair(PeakonSpec(1.0, 1.0), small_grid), ctl)
    fast = cfl_dt(exact_peakon_pair(PeakonSpec(2.0, 2.0), small_grid), ctl)
    assert fast == pytest.approx(unit / 4.0)


def test_rk4_is_fourth_order_in_time():
    grid = Grid(-20.0, 20.0, 257)
    ws = KernelWorkspace(grid)
    initial = _smooth_pair(grid)

    def advance(dt, t_end=0.4):
        s = initial
        for _ in range(int(round(t_end / dt))):
            s = step_rk4(s, dt, ws)
        return s.u.values

    coarse, mid, fine = advance(0.02), advance(0.01), advance(0.005)
    ratio = np.max(np.abs(coarse - mid)) / np.max(np.abs(mid - fine))
    assert ratio > 10.0


def test_overflow_raises_blow_up(small_grid):
    huge = Field(small_grid, 1e120 * np.exp(-small_grid.nodes**2))
    with np.errstate(all="ignore"):
        with pytest.raises(BlowUpError) as e:
            step_rk4(State(huge, huge), 0.01, KernelWorkspace(small_grid))
    assert e.value.t == pytest.approx(0.01)


def test_snapshots_end_exactly_at_t_end(mollified_run):
    times = mollified_run.times
    assert times[0] == 0.0
    assert times[-1] == 1.0
    assert np.all(np.diff(times) > 0.0)


def test_mollified_pair_conserves_and_travels(mollified_run):
    for name in ("E_u", "E_v", "H", "F"):
        assert relative_drift(mollified_run.records, name) <= 1e-3
    last = mollified_run.records[-1]
    first = mollified_run.records[0]
    # the crest moves right at roughly u*v at the peak
    assert 0.5 < last.xi - first.xi < 1.2


def test_grid_scheme_keeps_no_particles():
    grid = Grid(-20.0, 20.0, 257)
    initial = mollified_peakon_pair(PeakonSpec(1.0, 1.0), MollifierSpec(0.5), grid)
    traj = simulate(initial, StepControl(t_end=0.2, scheme="grid"))
    assert traj.particles == []
    assert traj.times[-1] == pytest.approx(0.2)
    np.testing.assert_array_equal(traj.states[-1].u.values, traj.states[-1].v.values)
    for name in ("E_u", "F"):
        assert relative_drift(traj.records, name) < 1e-2


def test_particle_run_keeps_a_particle_state_per_snapshot(mollified_run):
    assert len(mollified_run.particles) == len(mollified_run.states)
    for ps, state in zip(mollified_run.particles, mollified_run.states):
        assert ps.t == state.t


def test_constant_weight_has_no_virial_rate(small_grid):
    s = _smooth_pair(small_grid)
    rates = virial_rates(s, np.zeros(small_grid.n), KernelWorkspace(small_grid))
    assert rates == (0.0, 0.0, 0.0)
    energies = weighted_energies(s, np.ones(small_grid.n))
    assert energies.I_u == pytest.approx(energy_u(s))


def test_characteristics_need_two_snapshots(small_grid):
    initial = exact_peakon_pair(PeakonSpec(1.0, 1.0), small_grid)
    traj = simulate(initial, StepControl(t_end=0.0))
    with pytest.raises(ValueError):
        characteristics(traj, [0.0])


def test_no_seeds_no_paths(mollified_run):
    assert characteristics(mollified_run, []) == []
    assert momentum_along_flow(mollified_run, []).max_deviation == 0.0


def test_paths_leaving_the_grid_raise(mollified_run):
    with pytest.raises(CharacteristicExitError):
        characteristics(mollified_run, [25.0])


def test_momentum_is_transported_along_characteristics(mollified_run):
    seeds = np.linspace(-0.4, 0.4, 9)
    paths = characteristics(mollified_run, seeds)
    assert len(paths) == 9
    for path in paths:
        assert np.all(np.diff(path.q) >= 0.0)
        assert path.qx_disagreement < 0.15
    flow = momentum_along_flow(mollified_run, paths)
    assert flow.max_deviation < 0.15
    assert flow.min_momentum > -1e-8
