"""
Uniform grid on a truncated line, sampled fields, stencils and quadrature
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import trapezoid

from novikov.config import MIN_GRID_NODES


class GridError(ValueError):
    """Grid parameters that cannot carry a simulation"""


@dataclass(frozen=True)
class Grid:
    """Uniform nodes x_left + k*dx, k = 0..n-1"""

    x_left: float
    x_right: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.x_left) and math.isfinite(self.x_right)):
            raise GridError(
                f"Grid endpoints must be finite, got ({self.x_left}, {self.x_right})"
            )
        if not self.x_right > self.x_left:
            raise GridError(
                f"x_right must exceed x_left, got ({self.x_left}, {self.x_right})"
            )
        if int(self.n) != self.n or self.n < MIN_GRID_NODES:
            raise GridError(f"n must be an integer >= {MIN_GRID_NODES}, got {self.n}")

    @property
    def dx(self) -> float:
        return (self.x_right - self.x_left) / (self.n - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        # from k, never by accumulation
        x = self.x_left + np.arange(self.n) * self.dx
        x.setflags(write=False)
        return x

    @property
    def length(self) -> float:
        return self.x_right - self.x_left

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.x_left + self.x_right)

    def nearest_index(self, x: float) -> int:
        k = int(round((x - self.x_left) / self.dx))
        return min(max(k, 0), self.n - 1)

    def contains(self, x: float) -> bool:
        return self.x_left <= x <= self.x_right

    def refined(self) -> "Grid":
        """Same interval with every cell halved"""
        return Grid(self.x_left, self.x_right, 2 * self.n - 1)

    def as_dict(self) -> dict:
        return {"x_left": self.x_left, "x_right": self.x_right, "n": self.n}


def make_grid(x_left: float, x_right: float, n: int) -> Grid:
    return Grid(float(x_left), float(x_right), int(n))


def _frozen(values, n, label):
    arr = np.array(values, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{label} has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    """Node samples of a real function on a grid

    slope, when present, is the analytic derivative at the nodes and is
    returned by derivative() in place of the finite-difference stencil.
    """

    grid: Grid
    values: np.ndarray
    slope: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.n, "Field"))
        if self.slope is not None:
            object.__setattr__(
                self, "slope", _frozen(self.slope, self.grid.n, "Field slope")
            )

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise ValueError(f"Grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        slope = None
        if self.slope is not None or other.slope is not None:
            slope = derivative(self).values + derivative(other).values
        return Field(self.grid, self.values + other.values, slope)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        slope = None
        if self.slope is not None or other.slope is not None:
            slope = derivative(self).values - derivative(other).values
        return Field(self.grid, self.values - other.values, slope)

    def scaled(self, factor: float) -> "Field":
        slope = None if self.slope is None else factor * self.slope
        return Field(self.grid, factor * self.values, slope)

    def at(self, x: float) -> float:
        """Linear interpolation between nodes"""
        return float(np.interp(x, self.grid.nodes, self.values))


@dataclass(frozen=True, eq=False)
class State:
    """The pair (u, v) at time t"""

    u: Field
    v: Field
    t: float = 0.0

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ValueError("u and v must share one grid")
        if not self.t >= 0.0:
            raise ValueError(f"State time must be >= 0, got {self.t}")

    @property
    def grid(self) -> Grid:
        return self.u.grid


def zero_field(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.n))


def zero_state(grid: Grid, t: float = 0.0) -> State:
    return State(zero_field(grid), zero_field(grid), t)


def sample(grid: Grid, fn, slope_fn=None) -> Field:
    """Field from a vectorized function of x (and optionally its derivative)"""
    x = grid.nodes
    slope = None if slope_fn is None else slope_fn(x)
    return Field(grid, fn(x), slope)


def derivative(f: Field) -> Field:
    """Central differences inside, second-order one-sided at both ends"""
    if f.slope is not None:
        return Field(f.grid, f.slope)
    return Field(f.grid, np.gradient(f.values, f.grid.dx, edge_order=2))


def integrate(f: Field) -> float:
    """Trapezoid rule over the grid"""
    return float(trapezoid(f.values, dx=f.grid.dx))


def h1_inner(f: Field, g: Field) -> float:
    if f.grid != g.grid:
        raise ValueError(f"Grid mismatch: {f.grid} vs {g.grid}")
    fx = derivative(f).values
    gx = derivative(g).values
    return float(trapezoid(f.values * g.values + fx * gx, dx=f.grid.dx))


def h1_norm(f: Field) -> float:
    return math.sqrt(max(h1_inner(f, f), 0.0))


class ProductPeak(NamedTuple):
    index: int
    xi: float
    M: float


def argmax_product(s: State) -> ProductPeak:
    """Node maximizing u*v, smallest index on ties"""
    product = s.u.values * s.v.values
    k = int(np.argmax(product))
    return ProductPeak(k, float(s.grid.nodes[k]), float(product[k]))
