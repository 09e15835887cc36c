import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import trapezoid

from novikov.config import WEIGHT_SAMPLE_POINTS
from novikov.diagnostics.functionals import (
    cross_H,
    cubic_E0,
    functional_record,
    localized_functionals,
    novikov_F,
    quartic_F,
    relative_drift,
)
from novikov.diagnostics.weights import (
    build_weight,
    default_scale,
    partition_phi,
    psi,
    psi_prime,
    right_energy_J,
    verify_psi,
)
from novikov.dynamics.profiles import MollifierSpec, PeakonSpec, exact_peakon_pair, mollified_peakon_pair
from novikov.grid.grid_field import Field, Grid, State, sample


def test_exact_pair_functionals_match_closed_forms(small_grid):
    a, b = 1.5, 2.0
    s = exact_peakon_pair(PeakonSpec(a, b), small_grid)
    h = small_grid.dx
    assert cross_H(s) == pytest.approx(2.0 * a * b * h / math.tanh(h), rel=1e-10)
    # F = (8/3) a^2 b^2 int exp(-4|x|), summed on nodes as h*coth(2h)
    assert quartic_F(s) == pytest.approx(8.0 / 3.0 * (a * b) ** 2 * h / math.tanh(2.0 * h), rel=1e-10)
    assert quartic_F(s) == pytest.approx(4.0 / 3.0 * (a * b) ** 2, rel=5e-3)


def test_quartic_functional_reduces_to_the_scalar_one(small_grid):
    u = sample(small_grid, lambda x: np.exp(-x * x) + 0.3 * np.exp(-((x - 1.0) ** 2)))
    assert quartic_F(State(u, u)) == pytest.approx(novikov_F(u), rel=1e-12)


def test_cubic_functional_scales_with_the_two_thirds_power(small_grid):
    s = mollified_peakon_pair(PeakonSpec(1.0, 2.0), MollifierSpec(0.2), small_grid)
    scaled = State(s.u.scaled(8.0), s.v.scaled(8.0))
    assert cubic_E0(s) > 0.0
    assert cubic_E0(scaled) == pytest.approx(4.0 * cubic_E0(s), rel=1e-12)


def test_functional_record_and_drift(small_grid):
    s = exact_peakon_pair(PeakonSpec(1.0, 1.0, 2.5), small_grid)
    record = functional_record(s)
    assert record.xi == 2.5
    assert record.M == pytest.approx(1.0)
    assert set(record.as_dict()) == {"t", "E_u", "E_v", "H", "F", "E0", "xi", "M"}
    assert relative_drift([record, record], "E_u") == 0.0
    assert relative_drift([], "E_u") == 0.0


def test_localized_functionals_with_a_unit_weight(small_grid):
    s = mollified_peakon_pair(PeakonSpec(1.0, 2.0), MollifierSpec(0.2), small_grid)
    (whole,) = localized_functionals(s, [Field(small_grid, np.ones(small_grid.n))])
    record = functional_record(s)
    assert whole.E_u == pytest.approx(record.E_u)
    assert whole.H == pytest.approx(record.H)
    assert whole.F == pytest.approx(record.F)


def test_weight_sample_checks():
    check = verify_psi(4.0)
    assert check.monotone
    assert check.seams_continuous
    assert check.ratio_ok
    assert 20.0 < check.ratio < 40.0
    assert not check.virial_margin
    assert verify_psi(6.0).virial_margin


def test_weight_keeps_the_samples_it_was_checked_on():
    wf = build_weight(4.0)
    assert wf.psi_samples.grid.n == WEIGHT_SAMPLE_POINTS
    assert verify_psi(4.0, wf.psi_samples) == wf.check
    flipped = Field(wf.psi_samples.grid, wf.psi_samples.values[::-1], -wf.psi_samples.slope[::-1])
    assert not verify_psi(4.0, flipped).monotone


def test_psi_shape():
    x = np.linspace(-4.0, 4.0, 801)
    npt.assert_allclose(psi(x) + psi(-x), 1.0, atol=1e-12)
    assert psi(np.array(0.0)) == pytest.approx(0.5)
    npt.assert_allclose(psi(np.array([-2.0, 3.0])), [math.exp(-2.0), 1.0 - math.exp(-3.0)])
    fine = np.linspace(-3.0, 3.0, 60001)
    assert trapezoid(psi_prime(fine), fine) == pytest.approx(float(psi(np.array(3.0)) - psi(np.array(-3.0))), rel=1e-7)


def test_weight_scale_rules():
    with pytest.raises(ValueError):
        build_weight(3.0)
    assert default_scale(25.0) == 4.0
    assert default_scale(6400.0) == pytest.approx(10.0)
    wf = build_weight(4.0)
    with pytest.raises(ValueError):
        wf.translated((5.0, 1.0))
    assert wf.translated((1.0, 5.0), 0.25).y == (1.0, 5.0)


def test_partition_sums_to_one():
    grid = Grid(-40.0, 80.0, 6145)
    wf = build_weight(4.0)
    phi = partition_phi(wf, (0.0, 30.0), grid)
    assert len(phi) == 3
    total = np.sum([p.values for p in phi], axis=0)
    npt.assert_allclose(total, 1.0, atol=1e-12)
    assert min(p.values.min() for p in phi) >= -1e-14
    (single,) = partition_phi(wf, (), grid)
    npt.assert_array_equal(single.values, 1.0)


def test_right_energy_counts_mass_to_the_right():
    grid = Grid(-40.0, 60.0, 2561)
    s = mollified_peakon_pair(PeakonSpec(1.0, 1.0, 10.0), MollifierSpec(0.2), grid)
    record = functional_record(s)
    far_left = right_energy_J(s, -25.0, 4.0)
    far_right = right_energy_J(s, 50.0, 4.0)
    assert far_left.J_u == pytest.approx(record.E_u, rel=1e-3)
    assert far_right.J_u < 1e-3 * record.E_u
    assert far_left.J_uv == pytest.approx(record.H, rel=1e-3)


def test_weight_report_lists_the_samples(capsys):
    from main import check_weights

    assert check_weights(4.0)
    out = capsys.readouterr().out
    assert f"samples: {WEIGHT_SAMPLE_POINTS} on [-1, 1]" in out
    assert "Weight family OK" in out
