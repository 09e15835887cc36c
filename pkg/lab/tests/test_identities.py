import math

import numpy as np
import pytest

from novikov.dynamics.profiles import MollifierSpec, PeakonSpec, exact_peakon_pair, mollified_peakon_pair
from novikov.grid.green_kernel import helmholtz_inverse
from novikov.grid.grid_field import Field, State, zero_state
from novikov.stability.identities import (
    build_diagnostic_fields,
    identity_g1g2,
    identity_h,
    key_inequality,
    orbital_distance,
    peak_gap,
    pointwise_energy_identity,
    sign_report,
    stability_record,
)


def _smooth_state(grid):
    x = grid.nodes
    m = 1.2 * np.exp(-0.5 * (x - 0.3) ** 2)
    n = 0.8 * np.exp(-0.5 * ((x + 0.2) / 0.8) ** 2)
    return State(helmholtz_inverse(Field(grid, m)), helmholtz_inverse(Field(grid, n)))


def test_exact_pair_sits_on_its_orbit(small_grid):
    s = exact_peakon_pair(PeakonSpec(1.0, 2.0, 2.5), small_grid)
    fit = orbital_distance(s, 1.0, 2.0)
    assert fit.dist_total <= 1e-10
    assert fit.best_shift == 2.5


def test_off_node_shift_is_recovered(small_grid):
    s = exact_peakon_pair(PeakonSpec(1.0, 1.0, 2.51), small_grid)
    fit = orbital_distance(s, 1.0, 1.0)
    assert fit.dist_total < 0.05
    assert abs(fit.best_shift - 2.51) < 0.5 * small_grid.dx


def test_zero_state_distance_is_the_peakon_norm(small_grid):
    fit = orbital_distance(zero_state(small_grid), 1.0, 1.0)
    assert fit.dist_total == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-3)
    with pytest.raises(ValueError):
        orbital_distance(zero_state(small_grid), 0.0, 1.0)


def test_pointwise_identity_at_the_crest(fine_grid):
    s = exact_peakon_pair(PeakonSpec(1.0, 1.0), fine_grid)
    res = pointwise_energy_identity(s, 1.0, 1.0, 0.0)
    assert res.rhs_u == pytest.approx(0.0, abs=1e-8)
    assert res.residual_u < 1e-3
    assert res.residual_v < 1e-3


def test_pointwise_identity_off_the_nodes(fine_grid):
    s = _smooth_state(fine_grid)
    rng = np.random.default_rng(12)
    for xi in rng.uniform(-5.0, 5.0, 20):
        a, b = rng.uniform(0.5, 2.0, 2)
        res = pointwise_energy_identity(s, a, b, xi)
        assert res.residual_u <= 1e-3 * (1.0 + abs(res.rhs_u))
        assert res.residual_v <= 1e-3 * (1.0 + abs(res.rhs_v))


def test_pointwise_identity_needs_an_interior_point(small_grid):
    with pytest.raises(ValueError):
        pointwise_energy_identity(_smooth_state(small_grid), 1.0, 1.0, small_grid.x_right)


def test_one_sided_identities_on_a_smooth_state(fine_grid):
    s = _smooth_state(fine_grid)
    assert identity_g1g2(s).passes(5e-3)
    assert identity_h(s).passes(5e-3)


def test_one_sided_identities_on_the_exact_pair(fine_grid):
    s = exact_peakon_pair(PeakonSpec(1.0, 1.0), fine_grid)
    check = identity_g1g2(s)
    assert abs(check.lhs) < 1e-3
    assert check.passes(1e-3)


def test_diagnostic_fields_are_signed(small_grid):
    s = mollified_peakon_pair(PeakonSpec(1.0, 2.0), MollifierSpec(0.2), small_grid)
    fields = build_diagnostic_fields(s, 0.0)
    scale = float(np.max(s.v.values))
    assert fields.g1.values.min() >= -1e-12 * scale
    assert fields.g2.values.min() >= -1e-12 * scale
    assert fields.g1_right >= -1e-12 * scale
    excess = fields.h.values - 4.0 * s.u.values * s.v.values / 3.0
    assert excess.max() <= 1e-12 * scale**2


def test_key_inequality(small_grid, fine_grid):
    mollified = mollified_peakon_pair(PeakonSpec(1.0, 1.0), MollifierSpec(0.2), small_grid)
    assert key_inequality(mollified) < 0.0
    # vanishes for the exact pair up to quadrature, about (8/9)c^2 dx^2
    exact = exact_peakon_pair(PeakonSpec(1.0, 1.0), fine_grid)
    assert abs(key_inequality(exact)) < 5e-3


def test_peak_gap_bounds(small_grid):
    exact = peak_gap(exact_peakon_pair(PeakonSpec(1.0, 1.0), small_grid), 1.0, 1.0)
    assert exact.gap == 0.0
    assert exact.bound < 0.1
    empty = peak_gap(zero_state(small_grid), 1.0, 1.0)
    assert empty.gap == 1.0
    assert empty.bound == pytest.approx(1.0)


def test_stability_record_fields(small_grid):
    s = exact_peakon_pair(PeakonSpec(1.0, 2.0, 2.5), small_grid)
    record = stability_record(s, 1.0, 2.0)
    assert record.u_at_xi == 1.0
    assert record.v_at_xi == 2.0
    assert record.xi == 2.5
    assert record.dist_total <= 1e-10
    assert set(record.as_dict()) >= {"t", "dist_total", "gap", "gap_bound", "key"}


def test_sign_report_on_positive_momentum(small_grid):
    s = mollified_peakon_pair(PeakonSpec(1.0, 2.0), MollifierSpec(0.2), small_grid)
    report = sign_report(s)
    assert report.min_m >= -1e-12 * report.max_m
    assert report.min_n >= -1e-12 * report.max_n
    assert report.slope_excess <= 1e-12 * 2.0
    assert report.boundary < 1e-6
