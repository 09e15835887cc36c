"""
Conserved functionals E_u, E_v, H, F, E_0 and their localized versions
"""

from dataclasses import asdict, dataclass
from typing import List, NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid

from novikov.grid.green_kernel import helmholtz_forward
from novikov.grid.grid_field import Field, State, argmax_product, derivative, h1_inner


@dataclass(frozen=True)
class FunctionalRecord:
    """One time sample of the invariants plus the peak of u*v"""

    t: float
    E_u: float
    E_v: float
    H: float
    F: float
    E0: float
    xi: float
    M: float

    def as_dict(self) -> dict:
        return asdict(self)


def energy_u(s: State) -> float:
    return h1_inner(s.u, s.u)


def energy_v(s: State) -> float:
    return h1_inner(s.v, s.v)


def cross_H(s: State) -> float:
    return h1_inner(s.u, s.v)


def _quartic_density(u, v, ux, vx):
    return (
        u * u * v * v
        + (u * u * vx * vx) / 3.0
        + (v * v * ux * ux) / 3.0
        + 4.0 * u * v * ux * vx / 3.0
        - (ux * ux * vx * vx) / 3.0
    )


def quartic_F(s: State) -> float:
    ux = derivative(s.u).values
    vx = derivative(s.v).values
    density = _quartic_density(s.u.values, s.v.values, ux, vx)
    return float(trapezoid(density, dx=s.grid.dx))


def novikov_F(u: Field) -> float:
    """Scalar Novikov functional int(u^4 + 2u^2u_x^2 - u_x^4/3)"""
    ux = derivative(u).values
    w = u.values
    return float(trapezoid(w**4 + 2.0 * w * w * ux * ux - ux**4 / 3.0, dx=u.grid.dx))


def cubic_E0(s: State) -> float:
    """int sign(mn)|mn|^(1/3), total even where discrete m*n dips below zero"""
    m = helmholtz_forward(s.u).values
    n = helmholtz_forward(s.v).values
    return float(trapezoid(np.cbrt(m * n), dx=s.grid.dx))


def functional_record(s: State) -> FunctionalRecord:
    peak = argmax_product(s)
    return FunctionalRecord(
        t=s.t,
        E_u=energy_u(s),
        E_v=energy_v(s),
        H=cross_H(s),
        F=quartic_F(s),
        E0=cubic_E0(s),
        xi=peak.xi,
        M=peak.M,
    )


class LocalizedFunctionals(NamedTuple):
    E_u: float
    E_v: float
    H: float
    F: float


def localized_functionals(s: State, phi: Sequence[Field]) -> List[LocalizedFunctionals]:
    """Densities of E_u, E_v, H, F integrated against each weight"""
    u, v = s.u.values, s.v.values
    ux = derivative(s.u).values
    vx = derivative(s.v).values
    dx = s.grid.dx

    energy_u_density = u * u + ux * ux
    energy_v_density = v * v + vx * vx
    cross_density = u * v + ux * vx
    quartic_density = _quartic_density(u, v, ux, vx)

    results = []
    for weight in phi:
        if weight.grid != s.grid:
            raise ValueError("Weight and state live on different grids")
        w = weight.values
        results.append(
            LocalizedFunctionals(
                E_u=float(trapezoid(energy_u_density * w, dx=dx)),
                E_v=float(trapezoid(energy_v_density * w, dx=dx)),
                H=float(trapezoid(cross_density * w, dx=dx)),
                F=float(trapezoid(quartic_density * w, dx=dx)),
            )
        )
    return results


def relative_drift(records: Sequence[FunctionalRecord], name: str) -> float:
    """max_t |Q(t) - Q(0)| / max(|Q(0)|, tiny)"""
    if not records:
        return 0.0
    values = np.array([getattr(r, name) for r in records])
    reference = max(abs(values[0]), 1e-300)
    return float(np.max(np.abs(values - values[0])) / reference)


class WeightedEnergies(NamedTuple):
    I_u: float
    I_v: float
    I_uv: float


class VirialRates(NamedTuple):
    rate_u: float
    rate_v: float
    rate_uv: float


def nonlocal_sources(u, v, ux, vx):
    """A_u, A_v, B_u, B_v: the integrands under P_x* and P* in the weak form"""
    a_u = 0.5 * ux * ux * v + u * ux * vx + u * u * v
    a_v = 0.5 * vx * vx * u + v * vx * ux + v * v * u
    b_u = 0.5 * ux * ux * vx
    b_v = 0.5 * vx * vx * ux
    return a_u, a_v, b_u, b_v


def energy_fluxes(u, v, ux, vx, p_au, px_bu, p_av, px_bv):
    """Fluxes of u^2+u_x^2, v^2+v_x^2 and uv+u_xv_x

    d/dt int(u^2+u_x^2)g = int g' [uv u_x^2 + 2u P*A_u + 2u P_x*B_u] for a
    weight g fixed in time, and likewise for the other two densities.
    """
    speed = u * v
    flux_u = speed * ux * ux + 2.0 * u * p_au + 2.0 * u * px_bu
    flux_v = speed * vx * vx + 2.0 * v * p_av + 2.0 * v * px_bv
    flux_uv = speed * ux * vx + v * p_au + v * px_bu + u * p_av + u * px_bv
    return flux_u, flux_v, flux_uv
