"""
Single-peakon stability diagnostics: orbital distance, the pointwise energy
identity, the one-sided fields g1, g2, h and the inequalities built on them
"""

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from novikov.config import ORBIT_SCAN_HALF_WIDTH, ORBIT_SHIFT_TOLERANCE
from novikov.diagnostics.functionals import cross_H, energy_u, energy_v, quartic_F
from novikov.dynamics.profiles import peakon_profile
from novikov.grid.green_kernel import fitted_slope_values, helmholtz_forward
from novikov.grid.grid_field import Field, State, argmax_product, derivative, h1_norm


class OrbitFit(NamedTuple):
    dist_u: float
    dist_v: float
    best_shift: float

    @property
    def dist_total(self) -> float:
        return self.dist_u + self.dist_v


def _orbit_objective(s: State, a: float, b: float, shift: float) -> OrbitFit:
    du = h1_norm(s.u - peakon_profile(s.grid, a, shift))
    dv = h1_norm(s.v - peakon_profile(s.grid, b, shift))
    return OrbitFit(du, dv, float(shift))


def orbital_distance(s: State, a: float, b: float) -> OrbitFit:
    """Distance to the closest translate of the peakon pair (a, b), one shared shift

    Coarse scan over node shifts near the u*v peak, then bounded refinement
    inside the best cell.
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"Peakon amplitudes must be positive, got a={a}, b={b}")

    grid = s.grid
    peak = argmax_product(s)
    anchor = peak.xi if peak.M > 0 else grid.nodes[grid.nearest_index(grid.midpoint)]
    reach = max(1, int(round(ORBIT_SCAN_HALF_WIDTH / grid.dx)))
    center = grid.nearest_index(anchor)
    indices = range(max(center - reach, 0), min(center + reach, grid.n - 1) + 1)

    best = None
    for k in indices:
        fit = _orbit_objective(s, a, b, float(grid.nodes[k]))
        if best is None or fit.dist_total < best.dist_total:
            best = fit

    found = minimize_scalar(
        lambda x0: _orbit_objective(s, a, b, x0).dist_total,
        bounds=(best.best_shift - grid.dx, best.best_shift + grid.dx),
        method="bounded",
        options={"xatol": ORBIT_SHIFT_TOLERANCE * grid.dx},
    )
    refined = _orbit_objective(s, a, b, float(found.x))
    return refined if refined.dist_total < best.dist_total else best


class EnergyResidual(NamedTuple):
    residual_u: float
    residual_v: float
    rhs_u: float
    rhs_v: float


def _extrapolated_slope(x: np.ndarray, slope: np.ndarray, k0: int, k1: int, xi: float) -> float:
    """Linear extrapolation of slope[k1] through slope[k0] out to xi"""
    return float(slope[k1] + (xi - x[k1]) * (slope[k1] - slope[k0]) / (x[k1] - x[k0]))


def _gap_norm_sq(f: Field, amp: float, xi: float) -> float:
    """||f - amp exp(-|. - xi|)||_H1^2 with xi inserted as a quadrature node

    Each side of the kink gets its own trapezoid sum, closed at xi by
    one-sided limits, so the result is second order for any xi.
    """
    grid = f.grid
    x = grid.nodes
    if not x[1] < xi < x[-2]:
        raise ValueError(f"xi={xi} must lie at least one cell inside the grid")
    values = f.values
    slope = derivative(f).values
    profile = amp * np.exp(-np.abs(x - xi))
    profile_slope = np.where(x < xi, profile, -profile)
    density = (values - profile) ** 2 + (slope - profile_slope) ** 2

    left = np.flatnonzero(x < xi)
    right = np.flatnonzero(x > xi)
    u_xi = f.at(xi)
    slope_left = _extrapolated_slope(x, slope, left[-2], left[-1], xi)
    slope_right = _extrapolated_slope(x, slope, right[1], right[0], xi)
    at_left = (u_xi - amp) ** 2 + (slope_left - amp) ** 2
    at_right = (u_xi - amp) ** 2 + (slope_right + amp) ** 2

    left_part = trapezoid(np.append(density[left], at_left), np.append(x[left], xi))
    right_part = trapezoid(np.insert(density[right], 0, at_right), np.insert(x[right], 0, xi))
    return float(left_part + right_part)


def pointwise_energy_identity(s: State, a: float, b: float, xi: float) -> EnergyResidual:
    """E_u - 2a^2 = ||u - phi(. - xi)||^2 + 4a(u(xi) - a), and the v analogue

    Holds for any xi; both sides come from independent quadratures.
    """
    residuals = []
    sides = []
    for field, energy, amp in ((s.u, energy_u(s), a), (s.v, energy_v(s), b)):
        rhs = _gap_norm_sq(field, amp, xi) + 4.0 * amp * (field.at(xi) - amp)
        residuals.append(abs((energy - 2.0 * amp * amp) - rhs))
        sides.append(rhs)
    return EnergyResidual(residuals[0], residuals[1], sides[0], sides[1])


@dataclass(frozen=True)
class DiagnosticFields:
    """g1, g2, h with the left formula at nodes <= split index, right formula after

    The *_right values are the right limits at the split node, where all
    three fields jump.
    """

    g1: Field
    g2: Field
    h: Field
    split_point: float
    index: int
    g1_right: float
    g2_right: float
    h_right: float

    def split_integral(self, density: np.ndarray, right_value: float) -> float:
        """Trapezoid on each side of the split, using the right limit on the right"""
        k = self.index
        dx = self.g1.grid.dx
        left = trapezoid(density[: k + 1], dx=dx) if k > 0 else 0.0
        right_part = np.concatenate(([right_value], density[k + 1 :]))
        right = trapezoid(right_part, dx=dx) if right_part.size > 1 else 0.0
        return float(left + right)


def _one_sided_slopes(f: Field, k: int):
    """Slopes on nodes 0..k and k..n-1, each side differenced on its own"""
    dx = f.grid.dx
    values = f.values
    right = fitted_slope_values(values[k:], dx)
    if f.slope is not None:
        left = f.slope[: k + 1].copy()
        right[1:] = f.slope[k + 1 :]
    else:
        left = fitted_slope_values(values[: k + 1], dx)
    return left, right


def _g_and_h(u, v, ux, vx, side: float):
    """side = -1 left of the split, +1 right of it"""
    g1 = u + side * ux
    g2 = v + side * vx
    h = u * v + side * (ux * v + u * vx) / 3.0 - ux * vx / 3.0
    return g1, g2, h


def build_diagnostic_fields(s: State, xi: float) -> DiagnosticFields:
    grid = s.grid
    k = grid.nearest_index(xi)
    u, v = s.u.values, s.v.values
    ux_left, ux_right = _one_sided_slopes(s.u, k)
    vx_left, vx_right = _one_sided_slopes(s.v, k)

    g1_l, g2_l, h_l = _g_and_h(u[: k + 1], v[: k + 1], ux_left, vx_left, -1.0)
    g1_r, g2_r, h_r = _g_and_h(u[k:], v[k:], ux_right, vx_right, 1.0)

    return DiagnosticFields(
        g1=Field(grid, np.concatenate((g1_l, g1_r[1:]))),
        g2=Field(grid, np.concatenate((g2_l, g2_r[1:]))),
        h=Field(grid, np.concatenate((h_l, h_r[1:]))),
        split_point=float(grid.nodes[k]),
        index=k,
        g1_right=float(g1_r[0]),
        g2_right=float(g2_r[0]),
        h_right=float(h_r[0]),
    )


class IdentityCheck(NamedTuple):
    lhs: float
    rhs: float
    residual: float

    def passes(self, tolerance: float) -> bool:
        return self.residual <= tolerance * (1.0 + abs(self.rhs))


def identity_g1g2(s: State) -> IdentityCheck:
    """int g1*g2 = H - 2M at the grid argmax of u*v"""
    peak = argmax_product(s)
    fields = build_diagnostic_fields(s, peak.xi)
    density = fields.g1.values * fields.g2.values
    lhs = fields.split_integral(density, fields.g1_right * fields.g2_right)
    rhs = cross_H(s) - 2.0 * peak.M
    return IdentityCheck(lhs, rhs, abs(lhs - rhs))


def identity_h(s: State) -> IdentityCheck:
    """int h*g1*g2 = F - (4/3)M^2 at the grid argmax of u*v"""
    peak = argmax_product(s)
    fields = build_diagnostic_fields(s, peak.xi)
    density = fields.h.values * fields.g1.values * fields.g2.values
    lhs = fields.split_integral(density, fields.h_right * fields.g1_right * fields.g2_right)
    rhs = quartic_F(s) - 4.0 * peak.M**2 / 3.0
    return IdentityCheck(lhs, rhs, abs(lhs - rhs))


def key_inequality(s: State) -> float:
    """F - (4/3)M H + (4/3)M^2, nonpositive on the positive-momentum cone"""
    M = argmax_product(s).M
    return quartic_F(s) - 4.0 * M * cross_H(s) / 3.0 + 4.0 * M * M / 3.0


class PeakGap(NamedTuple):
    gap: float
    bound: float


def peak_gap(s: State, a: float, b: float) -> PeakGap:
    """|M - ab| and the bound sqrt(|H - 2ab| M + (3/4)|F - (4/3)a^2 b^2|)

    The bound follows from comparing P(y) = (4/3)y^2 - (4/3)H y + F, which
    is <= 0 at y = M, with its value for the exact pair.
    """
    M = argmax_product(s).M
    c = a * b
    spread = abs(cross_H(s) - 2.0 * c) * M + 0.75 * abs(quartic_F(s) - 4.0 * c * c / 3.0)
    return PeakGap(abs(M - c), math.sqrt(spread))


@dataclass(frozen=True)
class StabilityRecord:
    t: float
    xi: float
    M: float
    u_at_xi: float
    v_at_xi: float
    dist_u: float
    dist_v: float
    dist_total: float
    best_shift: float
    gap: float
    gap_bound: float
    key: float

    def as_dict(self) -> dict:
        return asdict(self)


def stability_record(s: State, a: float, b: float) -> StabilityRecord:
    peak = argmax_product(s)
    fit = orbital_distance(s, a, b)
    gap = peak_gap(s, a, b)
    return StabilityRecord(
        t=s.t,
        xi=peak.xi,
        M=peak.M,
        u_at_xi=float(s.u.values[peak.index]),
        v_at_xi=float(s.v.values[peak.index]),
        dist_u=fit.dist_u,
        dist_v=fit.dist_v,
        dist_total=fit.dist_total,
        best_shift=fit.best_shift,
        gap=gap.gap,
        gap_bound=gap.bound,
        key=key_inequality(s),
    )


class SignReport(NamedTuple):
    min_m: float
    min_n: float
    max_m: float
    max_n: float
    slope_excess: float  # max(|u_x| - u, |v_x| - v) over interior nodes
    boundary: float  # largest |u|, |v| at the two end nodes


def sign_report(s: State) -> SignReport:
    """Momentum signs, the slope bound |u_x| <= u and truncation health"""
    m = helmholtz_forward(s.u).values
    n = helmholtz_forward(s.v).values
    dx = s.grid.dx
    u, v = s.u.values, s.v.values
    ux = fitted_slope_values(u, dx)
    vx = fitted_slope_values(v, dx)
    excess = max(
        float(np.max(np.abs(ux[1:-1]) - u[1:-1])),
        float(np.max(np.abs(vx[1:-1]) - v[1:-1])),
    )
    boundary = float(max(abs(u[0]), abs(u[-1]), abs(v[0]), abs(v[-1])))
    return SignReport(
        min_m=float(np.min(m)),
        min_n=float(np.min(n)),
        max_m=float(np.max(m)),
        max_n=float(np.max(n)),
        slope_excess=excess,
        boundary=boundary,
    )
