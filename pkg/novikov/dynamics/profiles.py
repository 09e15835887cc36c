"""
Initial data: exact peakon pairs, mollified near-peakon data, peakon trains
and sign-preserving momentum perturbations
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from novikov.config import MOLLIFIER_SUPPORT, PERTURBATION_BUMPS
from novikov.grid.green_kernel import fitted_gain, helmholtz_forward, helmholtz_inverse
from novikov.grid.grid_field import Field, Grid, State, h1_norm
from novikov.utils.logger import log_debug


class TrainSpecError(ValueError):
    """Peakon train parameters out of order or too close

    field names the offending entry, e.g. "peakons[1].a".
    """

    def __init__(self, message: str, field: str = None):
        super().__init__(message)
        self.field = field


class PerturbationError(ValueError):
    """Requested perturbation cannot keep the momenta nonnegative"""


@dataclass(frozen=True)
class PeakonSpec:
    a: float
    b: float
    x0: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Peakon amplitudes must be positive, got a={self.a}, b={self.b}")

    @property
    def c(self) -> float:
        return self.a * self.b


@dataclass(frozen=True)
class TrainSpec:
    """Ordered peakons (a_i, b_i, z_i) with minimum separation L"""

    peakons: Tuple[PeakonSpec, ...]
    L: float

    def __post_init__(self):
        object.__setattr__(self, "peakons", tuple(self.peakons))
        if not self.peakons:
            raise TrainSpecError("A train needs at least one peakon", "peakons")
        for i in range(1, len(self.peakons)):
            prev, cur = self.peakons[i - 1], self.peakons[i]
            if not cur.a > prev.a:
                raise TrainSpecError(
                    f"peakons[{i}].a must exceed peakons[{i - 1}].a ({cur.a} <= {prev.a})", f"peakons[{i}].a"
                )
            if not cur.b > prev.b:
                raise TrainSpecError(
                    f"peakons[{i}].b must exceed peakons[{i - 1}].b ({cur.b} <= {prev.b})", f"peakons[{i}].b"
                )
            if cur.x0 - prev.x0 < self.L:
                raise TrainSpecError(
                    f"peakons[{i}].x0 is {cur.x0 - prev.x0:g} from its neighbour, less than L={self.L:g}",
                    f"peakons[{i}].x0",
                )

    @property
    def size(self) -> int:
        return len(self.peakons)

    @property
    def amplitudes_u(self) -> np.ndarray:
        return np.array([p.a for p in self.peakons])

    @property
    def amplitudes_v(self) -> np.ndarray:
        return np.array([p.b for p in self.peakons])

    @property
    def speeds(self) -> np.ndarray:
        return np.array([p.c for p in self.peakons])

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.x0 for p in self.peakons])

    @property
    def sigma0(self) -> float:
        """(1/4) min(c_1, c_i - c_{i-1})"""
        c = self.speeds
        gaps = [c[0]] + [c[i] - c[i - 1] for i in range(1, len(c))]
        return 0.25 * min(gaps)


@dataclass(frozen=True)
class MollifierSpec:
    w: float

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError(f"Mollifier width must be positive, got {self.w}")


def peakon_profile(grid: Grid, a: float, x0: float) -> Field:
    """a exp(-|x - x0|) with its analytic slope (left limit at the crest)"""
    x = grid.nodes
    values = a * np.exp(-np.abs(x - x0))
    slope = np.where(x <= x0, values, -values)
    return Field(grid, values, slope)


def exact_peakon_pair(spec: PeakonSpec, grid: Grid) -> State:
    return State(peakon_profile(grid, spec.a, spec.x0), peakon_profile(grid, spec.b, spec.x0), 0.0)


def momentum_bump(grid: Grid, mass: float, x0: float, w: float) -> np.ndarray:
    """Truncated gaussian of width w (support 8w), normalized to its discrete mass"""
    x = grid.nodes
    z = (x - x0) / w
    shape = np.where(np.abs(z) <= MOLLIFIER_SUPPORT, np.exp(-0.5 * z * z), 0.0)
    discrete_mass = trapezoid(shape, dx=grid.dx)
    if not discrete_mass > 0:
        raise ValueError(f"Bump at x0={x0} with width {w} covers no grid node")
    return mass * shape / discrete_mass


def mollified_peakon_pair(spec: PeakonSpec, moll: MollifierSpec, grid: Grid) -> State:
    m = Field(grid, momentum_bump(grid, 2.0 * spec.a, spec.x0, moll.w))
    n = Field(grid, momentum_bump(grid, 2.0 * spec.b, spec.x0, moll.w))
    return State(helmholtz_inverse(m), helmholtz_inverse(n), 0.0)


def train(ts: TrainSpec, moll: MollifierSpec, grid: Grid) -> State:
    """Momenta of all bumps added, then one Helmholtz inversion"""
    m = np.zeros(grid.n)
    n = np.zeros(grid.n)
    for p in ts.peakons:
        m += momentum_bump(grid, 2.0 * p.a, p.x0, moll.w)
        n += momentum_bump(grid, 2.0 * p.b, p.x0, moll.w)
    return State(helmholtz_inverse(Field(grid, m)), helmholtz_inverse(Field(grid, n)), 0.0)


def exact_train(ts: TrainSpec, grid: Grid) -> State:
    """Superposition R_Z, S_Z of exact profiles (orbit targets)"""
    u = peakon_profile(grid, ts.peakons[0].a, ts.peakons[0].x0)
    v = peakon_profile(grid, ts.peakons[0].b, ts.peakons[0].x0)
    for p in ts.peakons[1:]:
        u = u + peakon_profile(grid, p.a, p.x0)
        v = v + peakon_profile(grid, p.b, p.x0)
    return State(u, v, 0.0)


def _support_window(values: np.ndarray, grid: Grid) -> Tuple[float, float]:
    peak = float(np.max(np.abs(values)))
    if peak == 0.0:
        quarter = 0.25 * grid.length
        return grid.midpoint - quarter, grid.midpoint + quarter
    inside = grid.nodes[np.abs(values) > 1e-3 * peak]
    return float(inside[0]), float(inside[-1])


def _random_bumps(rng: np.random.Generator, grid: Grid, window: Sequence[float]) -> np.ndarray:
    total = np.zeros(grid.n)
    for _ in range(PERTURBATION_BUMPS):
        center = rng.uniform(window[0], window[1])
        width = rng.uniform(0.1, 0.4)
        weight = rng.uniform(0.5, 1.0)
        total += momentum_bump(grid, weight, center, max(width, 2.0 * grid.dx))
    return total


def perturb_momentum(s: State, amplitude: float, seed: int) -> State:
    """Mass-neutral perturbation of m and n scaled to a given H1 size

    The direction is B - lam*m, where B is a seeded sum of nonnegative bumps
    and lam = mass(B)/mass(m), so m + t*(B - lam*m) stays >= 0 while t*lam <= 1.
    The step t is chosen so that ||du||_H1 + ||dv||_H1 = amplitude.
    """
    if amplitude < 0:
        raise PerturbationError(f"amplitude must be >= 0, got {amplitude}")
    if amplitude == 0:
        return s

    grid = s.grid
    m = helmholtz_forward(s.u).values
    n = helmholtz_forward(s.v).values
    for label, momentum in (("m", m), ("n", n)):
        scale = max(float(np.max(np.abs(momentum))), 1e-300)
        if float(np.min(momentum)) < -1e-8 * scale:
            raise PerturbationError(f"State has negative momentum {label} (min {np.min(momentum):.3e})")
    m = np.clip(m, 0.0, None)
    n = np.clip(n, 0.0, None)

    rng = np.random.default_rng(seed)
    directions = []
    ratios = []
    for momentum, field in ((m, s.u), (n, s.v)):
        bumps = _random_bumps(rng, grid, _support_window(field.values, grid))
        base_mass = float(np.sum(momentum))
        ratio = float(np.sum(bumps)) / base_mass if base_mass > 0 else 0.0
        directions.append(bumps - ratio * momentum)
        ratios.append(ratio)

    du = helmholtz_inverse(Field(grid, directions[0]))
    dv = helmholtz_inverse(Field(grid, directions[1]))
    unit = h1_norm(du) + h1_norm(dv)
    if not unit > 0:
        raise PerturbationError("Perturbation direction has zero H1 size")

    step = amplitude / unit
    # the forward stencil scales momenta by (dx/2)coth(dx/2) > 1
    if step * max(ratios) * fitted_gain(grid.dx) > 1.0:
        raise PerturbationError(
            f"amplitude {amplitude} needs step {step:.3g} but nonnegativity allows at most {1.0 / max(ratios):.3g}"
        )
    log_debug(f"perturbation seed={seed} amplitude={amplitude} step={step:.6g}")
    return State(s.u + du.scaled(step), s.v + dv.scaled(step), s.t)


def h1_distance(s: State, other: State) -> float:
    """||u - u'||_H1 + ||v - v'||_H1"""
    return h1_norm(s.u - other.u) + h1_norm(s.v - other.v)


def mollification_distance(spec: PeakonSpec, w: float, grid: Grid) -> float:
    """H1 distance of the mollified pair to the exact pair"""
    return h1_distance(mollified_peakon_pair(spec, MollifierSpec(w), grid), exact_peakon_pair(spec, grid))

