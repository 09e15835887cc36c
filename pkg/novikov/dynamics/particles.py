"""
Multipeakon form of the two-component system

With m = sum_j p_j delta(x - x_j) and n = sum_j q_j delta(x - x_j), so that
u = P*m and v = P*n, the weak form reduces to

    x_j' = (uv)(x_j),   p_j' = -p_j v(x_j) <u_x>(x_j),   q_j' = -q_j u(x_j) <v_x>(x_j)

where <f> is the mean of the one-sided limits at the particle. The particles
ride the characteristics, so a steepening crest never has to be resolved by
grid nodes. Fields at any point come from two exponential sweeps over the
particles; invariants and weighted energies are integrated exactly or with
Gauss-Legendre rules between neighbouring particles, where u and v are
combinations of exp(+-x).
"""

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Tuple

import numpy as np

from novikov.config import SPEED_FLOOR
from novikov.diagnostics.functionals import (
    FunctionalRecord,
    VirialRates,
    WeightedEnergies,
    energy_fluxes,
    nonlocal_sources,
)
from novikov.dynamics import BlowUpError
from novikov.grid.green_kernel import fitted_gain, helmholtz_forward
from novikov.grid.grid_field import Field, Grid, State, argmax_product

_SWEEP_SPAN = 200.0  # exp(span) stays far inside the double range
_GAUSS_POINTS = 8
_ORDER_SLACK = 1e-12  # relative size of a roundoff inversion that gets clamped
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(_GAUSS_POINTS)

WeightFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ParticleState:
    """Nondecreasing positions x with momentum weights p (for m) and q (for n)"""

    x: np.ndarray
    p: np.ndarray
    q: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValueError(f"Particle positions must be a non-empty 1-d array, got shape {x.shape}")
        for name in ("x", "p", "q"):
            arr = x if name == "x" else np.array(getattr(self, name), dtype=float)
            if arr.shape != x.shape:
                raise ValueError(f"Particle {name} has shape {arr.shape}, expected {x.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"Particle {name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(x) < 0.0):
            raise ValueError("Particle positions must be nondecreasing")
        if not self.t >= 0.0:
            raise ValueError(f"Particle time must be >= 0, got {self.t}")

    @property
    def size(self) -> int:
        return self.x.size

    def spacing(self) -> np.ndarray:
        """Length of line each particle stands for: half the gap to each neighbour"""
        out = np.zeros(self.size)
        if self.size < 2:
            return out
        gaps = np.diff(self.x)
        out[:-1] += 0.5 * gaps
        out[1:] += 0.5 * gaps
        return out


def from_state(s: State) -> ParticleState:
    """One particle per node carrying that node's share of m and n

    p_k = c_k dx m_k / gain with trapezoid weights c_k, so that u = P*m summed
    over the particles reproduces helmholtz_inverse at the nodes.
    """
    grid = s.grid
    share = np.full(grid.n, grid.dx / fitted_gain(grid.dx))
    share[[0, -1]] *= 0.5
    m = helmholtz_forward(s.u).values
    n = helmholtz_forward(s.v).values
    return ParticleState(grid.nodes.copy(), share * m, share * n, s.t)


def _left_inclusive(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_{i <= j} w_i exp(-(z_j - z_i)) along the last axis, z sorted

    Runs as scaled cumulative sums over blocks no wider than _SWEEP_SPAN.
    """
    out = np.empty(np.shape(w))
    size = z.shape[0]
    carry = 0.0
    start = 0
    while start < size:
        stop = max(int(np.searchsorted(z, z[start] + _SWEEP_SPAN, side="right")), start + 1)
        shift = z[start:stop] - z[start]
        acc = np.cumsum(w[..., start:stop] * np.exp(shift), axis=-1) + carry
        out[..., start:stop] = acc * np.exp(-shift)
        if stop < size:
            carry = out[..., stop - 1 : stop] * math.exp(-(z[stop] - z[stop - 1]))
        start = stop
    return out


def _right_inclusive(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_{i >= j} w_i exp(-(z_i - z_j)) along the last axis, z sorted"""
    return _left_inclusive(-z[::-1], w[..., ::-1])[..., ::-1]


def _sums_from_left(z: np.ndarray, w: np.ndarray, y: np.ndarray) -> np.ndarray:
    """sum over z_j <= y of w_j exp(-(y - z_j))"""
    if z.size == 0:
        return np.zeros(np.shape(w)[:-1] + np.shape(y))
    lam = _left_inclusive(z, w)
    k = np.searchsorted(z, y, side="right") - 1
    valid = k >= 0
    kc = np.maximum(k, 0)
    decay = np.exp(-np.where(valid, y - z[kc], 0.0))
    return np.where(valid, lam[..., kc] * decay, 0.0)


def _sums_from_right(z: np.ndarray, w: np.ndarray, y: np.ndarray) -> np.ndarray:
    """sum over z_j > y of w_j exp(-(z_j - y))"""
    if z.size == 0:
        return np.zeros(np.shape(w)[:-1] + np.shape(y))
    rho = _right_inclusive(z, w)
    k = np.searchsorted(z, y, side="right")
    valid = k < z.size
    kc = np.minimum(k, z.size - 1)
    decay = np.exp(-np.where(valid, z[kc] - y, 0.0))
    return np.where(valid, rho[..., kc] * decay, 0.0)


class ParticleFields(NamedTuple):
    """u, v and the mean one-sided slopes at every particle"""

    u: np.ndarray
    v: np.ndarray
    ux: np.ndarray
    vx: np.ndarray


def particle_fields(x: np.ndarray, p: np.ndarray, q: np.ndarray) -> ParticleFields:
    w = np.stack((p, q))
    lam = _left_inclusive(x, w)
    rho = _right_inclusive(x, w)
    value = 0.5 * (lam + rho - w)
    slope = 0.5 * (rho - lam)
    return ParticleFields(value[0], value[1], slope[0], slope[1])


def particle_tendencies(x: np.ndarray, p: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = particle_fields(x, p, q)
    return f.u * f.v, -p * f.v * f.ux, -q * f.u * f.vx


def _keep_order(x: np.ndarray, t: float) -> np.ndarray:
    """Clamp roundoff-sized inversions; real crossings mean the step failed"""
    gaps = np.diff(x)
    if gaps.size == 0 or float(np.min(gaps)) >= 0.0:
        return x
    depth = float(-np.min(gaps))
    if depth > _ORDER_SLACK * (1.0 + float(np.max(np.abs(x)))):
        raise BlowUpError(t, f"Particles crossed by {depth:.3g} at t={t:.6g}")
    return np.maximum.accumulate(x)


def step_particles(ps: ParticleState, dt: float) -> ParticleState:
    """Classical RK4 on positions and weights"""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x0, p0, q0 = ps.x, ps.p, ps.q

    k1 = particle_tendencies(x0, p0, q0)
    k2 = particle_tendencies(*(y + 0.5 * dt * k for y, k in zip((x0, p0, q0), k1)))
    k3 = particle_tendencies(*(y + 0.5 * dt * k for y, k in zip((x0, p0, q0), k2)))
    k4 = particle_tendencies(*(y + dt * k for y, k in zip((x0, p0, q0), k3)))

    x1, p1, q1 = (
        y + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d) for y, a, b, c, d in zip((x0, p0, q0), k1, k2, k3, k4)
    )
    t1 = ps.t + dt
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(p1)) and np.all(np.isfinite(q1))):
        raise BlowUpError(t1)
    return ParticleState(_keep_order(x1, t1), p1, q1, t1)


def peak_speed(ps: ParticleState) -> float:
    """max |uv| over the line; uv is convex between particles, so a particle attains it"""
    f = particle_fields(ps.x, ps.p, ps.q)
    return max(float(np.max(np.abs(f.u * f.v))), SPEED_FLOOR)


def sample_state(ps: ParticleState, grid: Grid) -> State:
    """u, v and their analytic slopes at the nodes

    A node sitting exactly on a particle gets the mean of the one-sided slopes.
    """
    y = grid.nodes
    w = np.stack((ps.p, ps.q))
    left = _sums_from_left(ps.x, w, y)
    right = _sums_from_right(ps.x, w, y)
    values = 0.5 * (left + right)
    slope = 0.5 * (right - left)

    k = np.searchsorted(ps.x, y, side="right") - 1
    kc = np.maximum(k, 0)
    on_particle = (k >= 0) & (ps.x[kc] == y)
    slope = slope + np.where(on_particle, 0.5 * w[:, kc], 0.0)
    return State(Field(grid, values[0], slope[0]), Field(grid, values[1], slope[1]), ps.t)


class ParticleInvariants(NamedTuple):
    E_u: float
    E_v: float
    H: float
    F: float
    E0: float


def _quartic_total(x: np.ndarray, lam: np.ndarray, rho: np.ndarray) -> float:
    """int of the F density, exact for sums of exp(-|x - x_j|)

    On [x_k, x_{k+1}] write u = al e^{-s} + be e^{s-l} and v = ga e^{-s} + de e^{s-l}
    with s = x - x_k, l the gap. The density collapses to
    (8/3)[(al ga e^{-2s})^2 + (be de e^{2(s-l)})^2 + (al de + be ga) e^{-l}(al ga e^{-2s} + be de e^{2(s-l)})].
    """
    # tails beyond the outermost particles: u, v proportional to exp(-|x|)
    tails = (rho[0, 0] * rho[1, 0]) ** 2 + (lam[0, -1] * lam[1, -1]) ** 2
    if x.size < 2:
        return float(2.0 * tails / 3.0)
    gap = np.diff(x)
    left_pair = lam[0, :-1] * lam[1, :-1]
    right_pair = rho[0, 1:] * rho[1, 1:]
    cross = lam[0, :-1] * rho[1, 1:] + rho[0, 1:] * lam[1, :-1]
    inner = (left_pair**2 + right_pair**2) * (-np.expm1(-4.0 * gap)) / 4.0 + cross * np.exp(-gap) * (
        left_pair + right_pair
    ) * (-np.expm1(-2.0 * gap)) / 2.0
    return float(8.0 * np.sum(inner) / 3.0 + 2.0 * tails / 3.0)


def particle_invariants(ps: ParticleState) -> ParticleInvariants:
    """E_u = sum p u(x_j), E_v = sum q v(x_j), H, F in closed form, E0 by particle spacing"""
    w = np.stack((ps.p, ps.q))
    lam = 0.5 * _left_inclusive(ps.x, w)
    rho = 0.5 * _right_inclusive(ps.x, w)
    value = lam + rho - 0.5 * w
    u, v = value[0], value[1]
    H = 0.5 * (float(np.dot(ps.p, v)) + float(np.dot(ps.q, u)))
    E0 = float(np.sum(np.cbrt(ps.p * ps.q * ps.spacing())))
    return ParticleInvariants(
        E_u=float(np.dot(ps.p, u)),
        E_v=float(np.dot(ps.q, v)),
        H=H,
        F=_quartic_total(ps.x, lam, rho),
        E0=E0,
    )


def particle_record(ps: ParticleState, sampled: State) -> FunctionalRecord:
    """Invariants from the particles, crest from the grid samples"""
    inv = particle_invariants(ps)
    peak = argmax_product(sampled)
    return FunctionalRecord(t=ps.t, E_u=inv.E_u, E_v=inv.E_v, H=inv.H, F=inv.F, E0=inv.E0, xi=peak.xi, M=peak.M)


class ParticleMomentum(NamedTuple):
    """Momentum densities at the particles and their transport rates"""

    m: np.ndarray
    n: np.ndarray
    rate_m: np.ndarray  # 2v u_x + u v_x
    rate_n: np.ndarray  # 2u v_x + v u_x


def particle_momentum(ps: ParticleState) -> ParticleMomentum:
    spacing = ps.spacing()
    safe = np.where(spacing > 0.0, spacing, np.inf)
    f = particle_fields(ps.x, ps.p, ps.q)
    return ParticleMomentum(
        m=ps.p / safe,
        n=ps.q / safe,
        rate_m=2.0 * f.v * f.ux + f.u * f.vx,
        rate_n=2.0 * f.u * f.vx + f.v * f.ux,
    )


class _Pieces:
    """u, v on each gap [x_k, x_{k+1}] as a e^{-(y - x_k)} + b e^{y - x_{k+1}}"""

    def __init__(self, ps: ParticleState):
        w = np.stack((ps.p, ps.q))
        lam = 0.5 * _left_inclusive(ps.x, w)
        rho = 0.5 * _right_inclusive(ps.x, w)
        self.left = ps.x[:-1]
        self.gap = np.diff(ps.x)
        self.a = lam[:, :-1]
        self.b = rho[:, 1:]

    def fields(self, k: np.ndarray, y: np.ndarray):
        """u, v, u_x, v_x at points y lying in gaps k"""
        down = np.exp(-(y - self.left[k]))
        up = np.exp(y - self.left[k] - self.gap[k])
        a, b = self.a[:, k], self.b[:, k]
        value = a * down + b * up
        slope = b * up - a * down
        return value[0], value[1], slope[0], slope[1]

    def sources(self, k: np.ndarray, y: np.ndarray) -> np.ndarray:
        """A_u, A_v, B_u, B_v stacked on the first axis"""
        return np.stack(nonlocal_sources(*self.fields(k, y)))


def weighted_energies_and_rates(
    ps: ParticleState, weight: WeightFunction, weight_slope: WeightFunction
) -> Tuple[WeightedEnergies, VirialRates]:
    """int(u^2+u_x^2)g and its exact rate int g' flux, by Gauss rules on every gap

    The convolutions P*A, P_x*B at each quadrature point add the sweeps over
    the other gaps to a split rule on its own gap. Mass beyond the outermost
    particles is left out, as the grid quadrature leaves out mass beyond the grid.
    """
    if ps.size < 2:
        raise ValueError("Weighted energies need at least two particles")
    pieces = _Pieces(ps)
    gaps = pieces.gap.size
    half = 0.5 * pieces.gap[:, None]
    k = np.repeat(np.arange(gaps), _GAUSS_POINTS)
    y = (pieces.left[:, None] + half * (1.0 + _GAUSS_NODES)).ravel()
    dy = (half * _GAUSS_WEIGHTS).ravel()

    u, v, ux, vx = pieces.fields(k, y)
    sources = pieces.sources(k, y)

    # whole-gap moments, placed at the gap end they are measured from
    right_end = pieces.left[k] + pieces.gap[k]
    to_right = np.add.reduceat(sources * dy * np.exp(-(right_end - y)), np.arange(0, k.size, _GAUSS_POINTS), axis=1)
    to_left = np.add.reduceat(
        sources * dy * np.exp(-(y - pieces.left[k])), np.arange(0, k.size, _GAUSS_POINTS), axis=1
    )
    from_left = _sums_from_left(ps.x[1:], to_right, y)
    from_right = _sums_from_right(ps.x[:-1], to_left, y)

    # own gap, split at the point
    below = 0.5 * (y - pieces.left[k])[:, None]
    above = 0.5 * (right_end - y)[:, None]
    s_below = (pieces.left[k][:, None] + below * (1.0 + _GAUSS_NODES)).ravel()
    s_above = (y[:, None] + above * (1.0 + _GAUSS_NODES)).ravel()
    k_sub = np.repeat(k, _GAUSS_POINTS)
    y_sub = np.repeat(y, _GAUSS_POINTS)
    shape = (4, y.size, _GAUSS_POINTS)
    own_below = np.sum(
        (pieces.sources(k_sub, s_below) * np.exp(-(y_sub - s_below))).reshape(shape) * (below * _GAUSS_WEIGHTS),
        axis=2,
    )
    own_above = np.sum(
        (pieces.sources(k_sub, s_above) * np.exp(-(s_above - y_sub))).reshape(shape) * (above * _GAUSS_WEIGHTS),
        axis=2,
    )

    left_total = from_left + own_below
    right_total = from_right + own_above
    p_conv = 0.5 * (left_total + right_total)
    px_conv = 0.5 * (right_total - left_total)
    fluxes = energy_fluxes(u, v, ux, vx, p_conv[0], px_conv[2], p_conv[1], px_conv[3])

    g = weight(y) * dy
    g1 = weight_slope(y) * dy
    energies = WeightedEnergies(
        float(np.sum(g * (u * u + ux * ux))),
        float(np.sum(g * (v * v + vx * vx))),
        float(np.sum(g * (u * v + ux * vx))),
    )
    rates = VirialRates(*(float(np.sum(g1 * flux)) for flux in fluxes))
    return energies, rates
