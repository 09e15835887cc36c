import numpy as np
import numpy.testing as npt
import pytest

from novikov.diagnostics.functionals import functional_record, relative_drift
from novikov.dynamics import BlowUpError
from novikov.dynamics.evolution import StepControl, particle_dt, simulate
from novikov.dynamics.particles import (
    ParticleState,
    from_state,
    particle_invariants,
    particle_tendencies,
    sample_state,
    step_particles,
    weighted_energies_and_rates,
)
from novikov.dynamics.profiles import MollifierSpec, PeakonSpec, exact_peakon_pair, mollified_peakon_pair
from novikov.grid.grid_field import Grid, zero_state
from novikov.stability.identities import sign_report
from shared.run_config import Tolerances

INVARIANTS = ("E_u", "E_v", "H", "F")


def _mollified(grid, a=1.0, b=1.0):
    return mollified_peakon_pair(PeakonSpec(a, b), MollifierSpec(0.2), grid)


def _max_drifts(traj):
    return {name: relative_drift(traj.records, name) for name in INVARIANTS}


def test_state_rejects_bad_particles():
    with pytest.raises(ValueError, match="nondecreasing"):
        ParticleState([1.0, 0.0], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError, match="shape"):
        ParticleState([0.0, 1.0], [1.0], [1.0, 1.0])
    with pytest.raises(ValueError, match="non-finite"):
        ParticleState([0.0, 1.0], [np.nan, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        ParticleState([], [], [])


def test_spacing_shares_every_gap():
    ps = ParticleState([0.0, 1.0, 3.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    npt.assert_array_equal(ps.spacing(), [0.5, 1.5, 1.0])
    assert ParticleState([0.0], [1.0], [1.0]).spacing().tolist() == [0.0]


def test_one_particle_samples_a_peakon(small_grid):
    ps = ParticleState([0.3], [3.0], [1.0])
    s = sample_state(ps, small_grid)
    expected = 1.5 * np.exp(-np.abs(small_grid.nodes - 0.3))
    npt.assert_allclose(s.u.values, expected, rtol=1e-13)
    npt.assert_allclose(s.v.values, expected / 3.0, rtol=1e-13)
    npt.assert_allclose(s.u.slope, np.where(small_grid.nodes < 0.3, expected, -expected), rtol=1e-13)


def test_particle_on_a_node_gets_the_mean_slope():
    grid = Grid(-2.0, 2.0, 5)
    s = sample_state(ParticleState([0.0], [2.0], [2.0]), grid)
    assert s.u.values[2] == 1.0
    assert s.u.slope[2] == 0.0


def test_nodes_reproduce_the_sampled_state(small_grid):
    initial = _mollified(small_grid)
    s = sample_state(from_state(initial), small_grid)
    scale = float(np.max(initial.u.values))
    npt.assert_allclose(s.u.values, initial.u.values, atol=1e-12 * scale)
    npt.assert_allclose(s.v.values, initial.v.values, atol=1e-12 * scale)


def test_exact_peakon_is_one_particle(small_grid):
    ps = from_state(exact_peakon_pair(PeakonSpec(1.0, 1.5), small_grid))
    centre = small_grid.n // 2
    assert ps.p[centre] == pytest.approx(2.0, rel=1e-12)
    assert ps.q[centre] == pytest.approx(3.0, rel=1e-12)
    others = np.delete(np.abs(ps.p), centre)
    assert np.max(others) <= 1e-12


def test_closed_forms_of_a_peakon():
    inv = particle_invariants(ParticleState([0.0], [2.0], [3.0]))
    assert inv.E_u == pytest.approx(2.0)
    assert inv.E_v == pytest.approx(4.5)
    assert inv.H == pytest.approx(3.0)
    assert inv.F == pytest.approx(4.0 / 3.0 * 2.25)
    assert inv.E0 == 0.0


def test_closed_forms_agree_with_the_node_quadrature(fine_grid):
    initial = _mollified(fine_grid)
    inv = particle_invariants(from_state(initial))
    record = functional_record(initial)
    for name in INVARIANTS:
        assert getattr(inv, name) == pytest.approx(getattr(record, name), rel=1e-2)


def test_zero_state_stays_at_rest(small_grid):
    ps = from_state(zero_state(small_grid))
    for rate in particle_tendencies(ps.x, ps.p, ps.q):
        assert not rate.any()
    stepped = step_particles(ps, 0.1)
    npt.assert_array_equal(stepped.x, ps.x)
    assert stepped.t == pytest.approx(0.1)


def test_step_needs_a_positive_dt():
    with pytest.raises(ValueError, match="dt"):
        step_particles(ParticleState([0.0], [1.0], [1.0]), 0.0)


def test_overflow_raises_blow_up():
    ps = ParticleState([0.0, 1.0], [1e200, 1e200], [1e200, 1e200])
    with np.errstate(all="ignore"):
        with pytest.raises(BlowUpError) as e:
            step_particles(ps, 0.01)
    assert e.value.t == pytest.approx(0.01)


def test_one_step_keeps_the_energy():
    grid = Grid(-40.0, 40.0, 4097)
    ps = from_state(_mollified(grid))
    before = particle_invariants(ps)
    after = particle_invariants(step_particles(ps, particle_dt(ps, grid, StepControl())))
    assert abs(after.E_u - before.E_u) <= 1e-8 * before.E_u
    assert abs(after.E_v - before.E_v) <= 1e-8 * before.E_v


def test_exact_pair_travels_at_its_speed(small_grid):
    spec = PeakonSpec(1.0, 1.5)
    traj = simulate(exact_peakon_pair(spec, small_grid), StepControl(t_end=6.0, record_every=50))
    first, last = traj.records[0], traj.records[-1]
    assert abs((last.xi - first.xi) - spec.a * spec.b * 6.0) <= small_grid.dx
    assert last.E_u == pytest.approx(2.0, rel=1e-9)
    assert last.E_v == pytest.approx(4.5, rel=1e-9)
    assert last.H == pytest.approx(3.0, rel=1e-9)
    assert last.F == pytest.approx(3.0, rel=1e-9)
    # crest sits between nodes, at most dx/2 from the nearest one
    assert 1.5 * np.exp(-small_grid.dx) <= last.M <= 1.5 * (1.0 + 1e-9)


def test_equal_components_stay_equal(small_grid):
    traj = simulate(_mollified(small_grid), StepControl(t_end=1.0, record_every=10))
    for ps, state in zip(traj.particles, traj.states):
        npt.assert_array_equal(ps.p, ps.q)
        npt.assert_array_equal(state.u.values, state.v.values)


def test_signs_and_slope_bound_hold_along_the_run(small_grid):
    traj = simulate(_mollified(small_grid, 1.0, 2.0), StepControl(t_end=2.0, record_every=10))
    tol = Tolerances()
    first = sign_report(traj.states[0])
    for state in traj.states:
        report = sign_report(state)
        assert report.min_m >= -tol.sign * first.max_m
        assert report.min_n >= -tol.sign * first.max_n
        scale = max(float(np.max(state.u.values)), float(np.max(state.v.values)))
        assert report.slope_excess <= tol.slope * scale


def test_drift_falls_fourfold_when_the_grid_doubles():
    drifts = []
    for n in (513, 1025):
        traj = simulate(_mollified(Grid(-20.0, 20.0, n)), StepControl(t_end=2.0, record_every=20))
        drifts.append(_max_drifts(traj))
    coarse, fine = drifts
    for name in ("E_u", "F"):
        assert fine[name] <= max(coarse[name] / 4.0, 1e-12)


@pytest.mark.slow
def test_acceptance_run_conserves():
    grid = Grid(-40.0, 40.0, 4097)
    traj = simulate(_mollified(grid), StepControl(t_end=10.0))
    tol = Tolerances()
    for name, drift in _max_drifts(traj).items():
        assert drift <= tol.conservation, name
    assert relative_drift(traj.records, "E0") <= tol.e0
    assert traj.times[-1] == 10.0


def test_constant_weight_recovers_the_energy(small_grid):
    ps = from_state(_mollified(small_grid))
    energies, rates = weighted_energies_and_rates(ps, np.ones_like, np.zeros_like)
    assert rates == (0.0, 0.0, 0.0)
    inv = particle_invariants(ps)
    assert energies.I_u == pytest.approx(inv.E_u, rel=1e-9)
    assert energies.I_uv == pytest.approx(inv.H, rel=1e-9)


def test_weighted_energies_need_two_particles():
    with pytest.raises(ValueError):
        weighted_energies_and_rates(ParticleState([0.0], [1.0], [1.0]), np.ones_like, np.zeros_like)
