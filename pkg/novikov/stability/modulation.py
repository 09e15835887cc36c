"""
Modulated peakon positions: solve the orthogonality system

    Y^i(x) = int (u - sum_j R_j) d_x R_i + (v - sum_j S_j) d_x S_i = 0,

with R_j = a_j exp(-|. - x_j|) and S_j = b_j exp(-|. - x_j|), by damped Newton.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from novikov.config import MODULATION_MAX_ITERATIONS, MODULATION_MIN_SEPARATION, MODULATION_TOLERANCE
from novikov.dynamics.profiles import TrainSpec, peakon_profile
from novikov.grid.grid_field import Grid, State, derivative
from novikov.utils.logger import log_debug

_MAX_HALVINGS = 30


class ModulationError(RuntimeError):
    """Newton failed or the positions crossed: the state has left the train tube"""

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message if t is None else f"{message} (t={t:.6g})")
        self.t = t


@dataclass
class ModulationState:
    x_tilde: np.ndarray
    residual_norm: float
    iterations: int


def _check_positions(x: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(x)) and np.all(np.diff(x) > 0.0))


class _Profiles:
    """Shifted peakons and their slopes at one set of positions"""

    def __init__(self, grid: Grid, ts: TrainSpec, x: np.ndarray):
        self.u_parts = [peakon_profile(grid, p.a, xi) for p, xi in zip(ts.peakons, x)]
        self.v_parts = [peakon_profile(grid, p.b, xi) for p, xi in zip(ts.peakons, x)]

    def sums(self):
        u_sum = self.u_parts[0].values
        v_sum = self.v_parts[0].values
        for ru, rv in zip(self.u_parts[1:], self.v_parts[1:]):
            u_sum = u_sum + ru.values
            v_sum = v_sum + rv.values
        return u_sum, v_sum


def orthogonality_residual(s: State, ts: TrainSpec, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size != ts.size:
        raise ValueError(f"Expected {ts.size} positions, got {x.size}")
    profiles = _Profiles(s.grid, ts, x)
    u_sum, v_sum = profiles.sums()
    rest_u = s.u.values - u_sum
    rest_v = s.v.values - v_sum
    dx = s.grid.dx
    return np.array(
        [
            trapezoid(rest_u * ru.slope + rest_v * rv.slope, dx=dx)
            for ru, rv in zip(profiles.u_parts, profiles.v_parts)
        ]
    )


def orthogonality_jacobian(s: State, ts: TrainSpec, x: Sequence[float]) -> np.ndarray:
    """dY^i/dx_j from the closed forms

    j != i: (a_i a_j + b_i b_j)(1 - |d|)exp(-|d|), d = x_j - x_i
    j == i: int(u_x R_i' + v_x S_i') - sum of the off-diagonal entries in row i
    """
    x = np.asarray(x, dtype=float)
    a = ts.amplitudes_u
    b = ts.amplitudes_v
    distance = np.abs(x[None, :] - x[:, None])
    jac = (np.outer(a, a) + np.outer(b, b)) * (1.0 - distance) * np.exp(-distance)
    np.fill_diagonal(jac, 0.0)

    profiles = _Profiles(s.grid, ts, x)
    ux = derivative(s.u).values
    vx = derivative(s.v).values
    dx = s.grid.dx
    for i, (ru, rv) in enumerate(zip(profiles.u_parts, profiles.v_parts)):
        own = trapezoid(ux * ru.slope + vx * rv.slope, dx=dx)
        jac[i, i] = own - np.sum(jac[i])
    return jac


def modulation_solve(s: State, ts: TrainSpec, x_init: Sequence[float]) -> ModulationState:
    """Positions x with Y(x) = 0, converged when |Y| <= tol * (a_1^2 + b_1^2)"""
    x = np.asarray(x_init, dtype=float).copy()
    if x.size != ts.size:
        raise ValueError(f"Expected {ts.size} initial positions, got {x.size}")
    if x.size > 1 and not np.all(np.diff(x) > MODULATION_MIN_SEPARATION):
        raise ValueError(f"Initial positions must increase with gaps > {MODULATION_MIN_SEPARATION:g}, got {x}")

    first = ts.peakons[0]
    tolerance = MODULATION_TOLERANCE * (first.a**2 + first.b**2)
    residual = orthogonality_residual(s, ts, x)
    norm = float(np.linalg.norm(residual))

    for iteration in range(1, MODULATION_MAX_ITERATIONS + 1):
        if norm <= tolerance:
            log_debug(f"modulation: converged in {iteration} iterations, |Y|={norm:.3e}")
            return ModulationState(x_tilde=x, residual_norm=norm, iterations=iteration)

        try:
            step = np.linalg.solve(orthogonality_jacobian(s, ts, x), -residual)
        except np.linalg.LinAlgError as e:
            raise ModulationError(f"Singular modulation Jacobian at x={x}") from e

        damping = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = x + damping * step
            if _check_positions(trial):
                trial_residual = orthogonality_residual(s, ts, trial)
                trial_norm = float(np.linalg.norm(trial_residual))
                if trial_norm < norm:
                    break
            damping *= 0.5
        else:
            raise ModulationError(f"Newton line search stalled at |Y|={norm:.3e}, x={x}")

        x, residual, norm = trial, trial_residual, trial_norm

    raise ModulationError(
        f"Modulation did not converge in {MODULATION_MAX_ITERATIONS} iterations (|Y|={norm:.3e})"
    )
