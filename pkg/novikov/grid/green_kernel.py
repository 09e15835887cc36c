"""
Convolution with P(x) = exp(-|x|)/2 and its derivative kernel, plus the
discrete Helmholtz pair m = u - u_xx, u = P*m

Both convolutions come from two first-order recursive sweeps, O(N) per call.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from novikov.grid.grid_field import Field, Grid


@dataclass
class KernelWorkspace:
    """Sweep accumulators for one grid

    Not safe to share between concurrent convolutions: keep one per worker.
    """

    grid: Grid
    left_accumulator: np.ndarray = field(init=False, repr=False)
    right_accumulator: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.decay = math.exp(-self.grid.dx)
        self._denominator = np.array([1.0, -self.decay])
        self._increment = np.zeros(self.grid.n)
        self.left_accumulator = np.zeros(self.grid.n)
        self.right_accumulator = np.zeros(self.grid.n)

    def sweep(self, values: np.ndarray) -> None:
        """Fill both accumulators for the samples f_k

        L_k = e^{-dx} L_{k-1} + dx/2 (f_k + e^{-dx} f_{k-1}),  L_0 = 0
        R_k = e^{-dx} R_{k+1} + dx/2 (f_k + e^{-dx} f_{k+1}),  R_{n-1} = 0
        Every intermediate stays bounded by max|f| times a constant.
        """
        half_dx = 0.5 * self.grid.dx
        inc = self._increment

        inc[0] = 0.0
        np.multiply(values[:-1], self.decay, out=inc[1:])
        inc[1:] += values[1:]
        inc[1:] *= half_dx
        self.left_accumulator[:] = lfilter([1.0], self._denominator, inc)

        inc[-1] = 0.0
        np.multiply(values[1:], self.decay, out=inc[:-1])
        inc[:-1] += values[:-1]
        inc[:-1] *= half_dx
        self.right_accumulator[:] = lfilter([1.0], self._denominator, inc[::-1])[::-1]

    def p_values(self, values: np.ndarray) -> np.ndarray:
        self.sweep(values)
        return 0.5 * (self.left_accumulator + self.right_accumulator)

    def px_values(self, values: np.ndarray) -> np.ndarray:
        self.sweep(values)
        return 0.5 * (self.right_accumulator - self.left_accumulator)


def _workspace(f: Field, ws: Optional[KernelWorkspace]) -> KernelWorkspace:
    if ws is None:
        return KernelWorkspace(f.grid)
    if ws.grid != f.grid:
        raise ValueError(f"Workspace grid {ws.grid} does not match field grid {f.grid}")
    return ws


def convolve_P(f: Field, ws: Optional[KernelWorkspace] = None) -> Field:
    """(P*f)(x_k) with f taken as zero outside the grid"""
    return Field(f.grid, _workspace(f, ws).p_values(f.values))


def convolve_Px(f: Field, ws: Optional[KernelWorkspace] = None) -> Field:
    """Convolution with -sign(x) exp(-|x|)/2"""
    return Field(f.grid, _workspace(f, ws).px_values(f.values))


def fitted_scale(dx: float) -> float:
    """4 sinh^2(dx/2): second difference of exp(+-x) divided by exp(+-x)"""
    return 4.0 * math.sinh(0.5 * dx) ** 2


def helmholtz_forward(u: Field) -> Field:
    """m = u - u_xx with the exponentially fitted second difference

    Boundary nodes copy their interior neighbour.
    """
    values = u.values
    m = np.empty_like(values)
    m[1:-1] = values[1:-1] - (values[2:] - 2.0 * values[1:-1] + values[:-2]) / fitted_scale(u.grid.dx)
    m[0] = m[1]
    m[-1] = m[-2]
    return Field(u.grid, m)


def helmholtz_inverse(m: Field, ws: Optional[KernelWorkspace] = None) -> Field:
    return convolve_P(m, ws)


def fitted_slope_values(values: np.ndarray, dx: float) -> np.ndarray:
    """Centered difference over 2 sinh(dx), one-sided second order at the ends"""
    n = values.shape[0]
    if n == 1:
        return np.zeros(1)
    if n == 2:
        slope = (values[1] - values[0]) / dx
        return np.array([slope, slope])
    grad = np.gradient(values, dx, edge_order=2)
    grad[1:-1] = (values[2:] - values[:-2]) / (2.0 * math.sinh(dx))
    return grad


def fitted_derivative(f: Field) -> Field:
    """Derivative exact on exp(+-x)

    For u = P*m with m >= 0 it satisfies |u_x| <= u at every interior node.
    """
    if f.slope is not None:
        return Field(f.grid, f.slope)
    return Field(f.grid, fitted_slope_values(f.values, f.grid.dx))


def fitted_gain(dx: float) -> float:
    """helmholtz_forward(helmholtz_inverse(m)) = gain * m at interior nodes"""
    half = 0.5 * dx
    return half / math.tanh(half)
