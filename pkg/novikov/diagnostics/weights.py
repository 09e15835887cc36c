"""
Smooth right-cutoff Psi, its scalings Psi_K, the partition Phi_i and the
right-localized energies J

Psi(x) = exp(x) for x < -1 and 1 - exp(-x) for x > 1. On [-1, 1] its slope is
exp(-1) * exp(rho(x)) with rho = s/2 - nu*s^2, s = 1 - x^2, which matches
Psi' and Psi'' at both seams; nu is fixed by the mass Psi(1) - Psi(-1).
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson, quad, trapezoid
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from novikov.config import MIN_WEIGHT_SCALE, WEIGHT_SAMPLE_POINTS, WEIGHT_RATIO_CEILING
from novikov.grid.grid_field import Field, Grid, State, derivative
from novikov.utils.logger import log_debug

_TABLE_POINTS = 20001
_E_INV = math.exp(-1.0)


class WeightConstructionError(RuntimeError):
    """The blended cutoff failed its verification gate"""


def _rho(x, nu):
    s = 1.0 - x * x
    return 0.5 * s - nu * s * s


def _rho_prime(x, nu):
    s = 1.0 - x * x
    return -x + 4.0 * nu * x * s


def _rho_second(x, nu):
    return -1.0 + 4.0 * nu * (1.0 - 3.0 * x * x)


@lru_cache(maxsize=1)
def _blend():
    """Solve for nu, then tabulate Psi on [0, 1] for Hermite interpolation"""
    target = math.e - 2.0  # int_{-1}^{1} exp(rho) for Psi(1) - Psi(-1) = 1 - 2/e

    def mass_gap(nu):
        value, _ = quad(lambda x: math.exp(_rho(x, nu)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
        return value - target

    nu = brentq(mass_gap, 0.0, 50.0, xtol=1e-15, rtol=1e-15)

    xs = np.linspace(0.0, 1.0, _TABLE_POINTS)
    slope = np.exp(_rho(xs, nu))
    partial = cumulative_simpson(slope, x=xs, initial=0.0)
    # pin the seam value exactly
    partial *= (0.5 * target) / partial[-1]
    spline = CubicHermiteSpline(xs, partial, slope)
    log_debug(f"weight blend nu={nu:.12f}")
    return nu, spline


def psi(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    nu, spline = _blend()
    ax = np.minimum(np.abs(x), 1.0)
    middle = 0.5 + np.sign(x) * _E_INV * spline(ax)
    return np.where(x < -1.0, np.exp(np.minimum(x, 0.0)), np.where(x > 1.0, 1.0 - np.exp(-np.abs(x)), middle))


def psi_prime(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    nu, _ = _blend()
    inner = np.clip(x, -1.0, 1.0)
    middle = _E_INV * np.exp(_rho(inner, nu))
    return np.where(np.abs(x) > 1.0, np.exp(-np.abs(x)), middle)


def psi_third(x) -> np.ndarray:
    """Psi''' (equal to exp(-|x|) on both tails)"""
    x = np.asarray(x, dtype=float)
    nu, _ = _blend()
    inner = np.clip(x, -1.0, 1.0)
    rp = _rho_prime(inner, nu)
    middle = _E_INV * np.exp(_rho(inner, nu)) * (_rho_second(inner, nu) + rp * rp)
    return np.where(np.abs(x) > 1.0, np.exp(-np.abs(x)), middle)


class WeightCheck(NamedTuple):
    monotone: bool
    seams_continuous: bool
    ratio: float
    ratio_ok: bool
    virial_margin: bool


@dataclass(frozen=True)
class WeightFamily:
    """Psi_K = Psi(./K) and its translates Psi_{j,K} = Psi_K(. - y_j)"""

    K: float
    y: Tuple[float, ...] = ()
    psi_samples: Field = field(default=None, repr=False, compare=False)
    sigma0: float = 0.0
    check: WeightCheck = field(default=None, compare=False)

    def value(self, x, center: float = 0.0) -> np.ndarray:
        return psi((np.asarray(x, dtype=float) - center) / self.K)

    def slope(self, x, center: float = 0.0) -> np.ndarray:
        return psi_prime((np.asarray(x, dtype=float) - center) / self.K) / self.K

    def on_grid(self, grid: Grid, center: float) -> Field:
        x = grid.nodes
        return Field(grid, self.value(x, center), self.slope(x, center))

    def translated(self, centers: Sequence[float], sigma0: float = None) -> "WeightFamily":
        centers = tuple(float(c) for c in centers)
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError(f"Weight centers must increase, got {centers}")
        return replace(self, y=centers, sigma0=self.sigma0 if sigma0 is None else sigma0)


def sample_psi() -> Field:
    """Psi and Psi' on the sample grid of [-1, 1]"""
    sample_grid = Grid(-1.0, 1.0, WEIGHT_SAMPLE_POINTS)
    return Field(sample_grid, psi(sample_grid.nodes), psi_prime(sample_grid.nodes))


def verify_psi(K: float, samples: Optional[Field] = None) -> WeightCheck:
    """Check the samples for monotonicity, seam continuity and max|Psi'''/Psi'|"""
    if samples is None:
        samples = sample_psi()
    nodes = samples.grid.nodes
    values = samples.values
    slopes = derivative(samples).values
    monotone = bool(np.all(slopes > 0.0) and np.all(np.diff(values) > 0.0))

    seams = np.array([-1.0 - 1e-12, -1.0, 1.0, 1.0 + 1e-12])
    seam_values = psi(seams)
    seams_continuous = bool(
        abs(seam_values[1] - _E_INV) < 1e-12
        and abs(seam_values[2] - (1.0 - _E_INV)) < 1e-12
        and abs(seam_values[0] - seam_values[1]) < 1e-10
        and abs(seam_values[3] - seam_values[2]) < 1e-10
    )

    ratio = float(np.max(np.abs(psi_third(nodes)) / slopes))
    return WeightCheck(
        monotone=monotone,
        seams_continuous=seams_continuous,
        ratio=ratio,
        ratio_ok=ratio <= WEIGHT_RATIO_CEILING,
        virial_margin=ratio < K * K,
    )


def build_weight(K: float) -> WeightFamily:
    if not K >= MIN_WEIGHT_SCALE:
        raise ValueError(f"K must be >= {MIN_WEIGHT_SCALE:g}, got {K}")

    samples = sample_psi()
    check = verify_psi(K, samples)
    if not (check.monotone and check.seams_continuous and check.ratio_ok):
        raise WeightConstructionError(f"Weight blend failed verification: {check}")

    return WeightFamily(K=float(K), psi_samples=samples, check=check)


def default_scale(L: float) -> float:
    """sqrt(L)/8, raised to the smallest admissible K"""
    return max(MIN_WEIGHT_SCALE, math.sqrt(L) / 8.0)


def partition_phi(wf: WeightFamily, y: Sequence[float], grid: Grid) -> List[Field]:
    """Phi_1 = 1 - Psi_2, Phi_i = Psi_i - Psi_{i+1}, Phi_N = Psi_N"""
    centers = list(y)
    if not centers:
        return [Field(grid, np.ones(grid.n))]

    cut = [wf.value(grid.nodes, c) for c in centers]
    phi = [1.0 - cut[0]]
    for i in range(1, len(cut)):
        phi.append(cut[i - 1] - cut[i])
    phi.append(cut[-1])
    return [Field(grid, p) for p in phi]


class RightEnergy(NamedTuple):
    J_u: float
    J_v: float
    J_uv: float


def right_energy_J(s: State, y_j: float, K: float, wf: WeightFamily = None) -> RightEnergy:
    """Energies weighted by Psi_K(. - y_j): the mass to the right of y_j"""
    if wf is None:
        wf = build_weight(K)
    weight = wf.value(s.grid.nodes, y_j)
    u, v = s.u.values, s.v.values
    ux = derivative(s.u).values
    vx = derivative(s.v).values
    dx = s.grid.dx
    return RightEnergy(
        J_u=float(trapezoid((u * u + ux * ux) * weight, dx=dx)),
        J_v=float(trapezoid((v * v + vx * vx) * weight, dx=dx)),
        J_uv=float(trapezoid((u * v + ux * vx) * weight, dx=dx)),
    )
