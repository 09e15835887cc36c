"""
Characteristic flow dq/dt = (uv)(t, q) through a recorded trajectory and the
momentum transport check along it
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from novikov.dynamics.evolution import Trajectory
from novikov.dynamics.particles import particle_momentum
from novikov.grid.green_kernel import helmholtz_forward
from novikov.utils.logger import log_debug

_SUBSTEPS = 2  # RK4 substeps per snapshot interval


class CharacteristicExitError(RuntimeError):
    """A path left the grid: the truncation is too tight for the run"""

    def __init__(self, x_seed: float, t: float):
        super().__init__(f"Characteristic from x={x_seed:g} left the grid at t={t:.6g}")
        self.x_seed = x_seed
        self.t = t


@dataclass
class CharacteristicPath:
    x_seed: float
    times: np.ndarray
    q: np.ndarray
    qx: np.ndarray  # finite difference of neighbouring paths
    qx_formula: np.ndarray  # exp of the integrated (uv)_x along the path

    @property
    def qx_disagreement(self) -> float:
        return float(np.max(np.abs(self.qx / self.qx_formula - 1.0)))


def _speed_tables(traj: Trajectory):
    dx = traj.grid.dx
    speed = np.array([s.u.values * s.v.values for s in traj.states])
    speed_x = np.gradient(speed, dx, axis=1, edge_order=2)
    return speed, speed_x


def _sample(table_row: np.ndarray, nodes: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.interp(q, nodes, table_row)


def _integrate_positions(traj: Trajectory, speed: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Positions at every snapshot time; uv is linear in x and in t between snapshots"""
    nodes = traj.grid.nodes
    times = traj.times
    grid = traj.grid
    q = np.empty((len(times), seeds.size))
    q[0] = seeds

    for k in range(len(times) - 1):
        t0, t1 = times[k], times[k + 1]
        lo, hi = speed[k], speed[k + 1]

        def velocity(t, x):
            theta = (t - t0) / (t1 - t0)
            return (1.0 - theta) * _sample(lo, nodes, x) + theta * _sample(hi, nodes, x)

        x = q[k].copy()
        h = (t1 - t0) / _SUBSTEPS
        for j in range(_SUBSTEPS):
            t = t0 + j * h
            k1 = velocity(t, x)
            k2 = velocity(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = velocity(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = velocity(t + h, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        outside = (x < grid.x_left) | (x > grid.x_right) | ~np.isfinite(x)
        if np.any(outside):
            raise CharacteristicExitError(float(seeds[np.argmax(outside)]), float(t1))
        q[k + 1] = x
    return q


def _along(table: np.ndarray, nodes: np.ndarray, q: np.ndarray) -> np.ndarray:
    """table[k] sampled at q[k] for every snapshot k"""
    return np.array([_sample(table[k], nodes, q[k]) for k in range(q.shape[0])])


def characteristics(traj: Trajectory, x_seeds: Sequence[float]) -> List[CharacteristicPath]:
    if len(traj.states) < 2:
        raise ValueError("characteristics needs a trajectory with at least two snapshots")

    seeds = np.asarray(list(x_seeds), dtype=float)
    if seeds.size == 0:
        return []
    offset = 0.25 * traj.grid.dx
    speed, speed_x = _speed_tables(traj)
    times = traj.times
    nodes = traj.grid.nodes

    all_seeds = np.concatenate([seeds, seeds - offset, seeds + offset])
    q_all = _integrate_positions(traj, speed, all_seeds)
    count = seeds.size
    q = q_all[:, :count]
    stretch_fd = (q_all[:, 2 * count :] - q_all[:, count : 2 * count]) / (2.0 * offset)

    stretch_rate = _along(speed_x, nodes, q)
    stretch_formula = np.exp(cumulative_trapezoid(stretch_rate, times, axis=0, initial=0.0))

    paths = []
    for i, seed in enumerate(seeds):
        paths.append(
            CharacteristicPath(
                x_seed=float(seed),
                times=times.copy(),
                q=q[:, i].copy(),
                qx=stretch_fd[:, i].copy(),
                qx_formula=stretch_formula[:, i].copy(),
            )
        )
    log_debug(f"characteristics: {count} seeds over {len(times)} snapshots")
    return paths


@dataclass
class MomentumFlowReport:
    """Deviation of m(t, q) and n(t, q) from the exponential transport formula"""

    max_deviation_m: float = 0.0
    max_deviation_n: float = 0.0
    min_momentum: float = 0.0
    skipped_seeds: List[float] = field(default_factory=list)
    per_seed: List[float] = field(default_factory=list)

    @property
    def max_deviation(self) -> float:
        return max(self.max_deviation_m, self.max_deviation_n)


def _grid_series(traj: Trajectory, paths: Sequence[CharacteristicPath]):
    """m, n and their transport rates interpolated along each path"""
    nodes = traj.grid.nodes
    dx = traj.grid.dx
    m_table = np.array([helmholtz_forward(s.u).values for s in traj.states])
    n_table = np.array([helmholtz_forward(s.v).values for s in traj.states])
    u_table = np.array([s.u.values for s in traj.states])
    v_table = np.array([s.v.values for s in traj.states])
    ux_table = np.gradient(u_table, dx, axis=1, edge_order=2)
    vx_table = np.gradient(v_table, dx, axis=1, edge_order=2)
    rate_m = 2.0 * v_table * ux_table + u_table * vx_table
    rate_n = 2.0 * u_table * vx_table + v_table * ux_table

    for path in paths:
        q = path.q[:, None]
        yield path, tuple(_along(table, nodes, q)[:, 0] for table in (m_table, n_table, rate_m, rate_n))


def _particle_series(traj: Trajectory, paths: Sequence[CharacteristicPath]):
    """The same series along the particle that starts nearest each seed"""
    start = traj.particles[0].x
    flows = [particle_momentum(ps) for ps in traj.particles]
    tables = tuple(np.array([getattr(f, name) for f in flows]) for name in ("m", "n", "rate_m", "rate_n"))
    for path in paths:
        i = int(np.argmin(np.abs(start - path.x_seed)))
        yield path, tuple(table[:, i] for table in tables)


def momentum_along_flow(traj: Trajectory, paths: Sequence[CharacteristicPath]) -> MomentumFlowReport:
    """m(t,q) = m0 exp(-int(2v u_x + u v_x)) and n(t,q) = n0 exp(-int(2u v_x + v u_x))

    Particle runs read m and n off the particles, which are the characteristics;
    grid runs interpolate the discrete momenta along the integrated paths.
    """
    report = MomentumFlowReport()
    if not paths:
        return report

    times = traj.times
    series = _particle_series(traj, paths) if traj.particles else _grid_series(traj, paths)
    minimum = np.inf
    scale_m = scale_n = 0.0
    rows = list(series)
    for _, (m_path, n_path, _, _) in rows:
        scale_m = max(scale_m, abs(float(m_path[0])))
        scale_n = max(scale_n, abs(float(n_path[0])))

    for path, (m_path, n_path, rate_m, rate_n) in rows:
        minimum = min(minimum, float(np.min(m_path)), float(np.min(n_path)))
        if abs(m_path[0]) <= 1e-10 * scale_m or abs(n_path[0]) <= 1e-10 * scale_n:
            report.skipped_seeds.append(path.x_seed)
            continue

        decay_m = np.exp(-cumulative_trapezoid(rate_m, times, initial=0.0))
        decay_n = np.exp(-cumulative_trapezoid(rate_n, times, initial=0.0))
        deviation_m = float(np.max(np.abs(m_path / (m_path[0] * decay_m) - 1.0)))
        deviation_n = float(np.max(np.abs(n_path / (n_path[0] * decay_n) - 1.0)))
        report.per_seed.append(max(deviation_m, deviation_n))
        report.max_deviation_m = max(report.max_deviation_m, deviation_m)
        report.max_deviation_n = max(report.max_deviation_n, deviation_n)

    report.min_momentum = 0.0 if minimum == np.inf else minimum
    return report
