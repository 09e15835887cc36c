"""
Peakon train diagnostics along a trajectory: modulated positions, the
per-bump geometry, localized functionals and inequalities, right-energy
monotonicity and the Virial check
"""

import math
from dataclasses import dataclass, field
from functools import partial
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from novikov.diagnostics.functionals import LocalizedFunctionals, energy_u, energy_v, localized_functionals
from novikov.diagnostics.weights import RightEnergy, WeightFamily, build_weight, partition_phi, right_energy_J
from novikov.dynamics.evolution import Trajectory, virial_rates, weighted_energies
from novikov.dynamics.particles import weighted_energies_and_rates
from novikov.dynamics.profiles import TrainSpec, peakon_profile
from novikov.grid.green_kernel import KernelWorkspace
from novikov.grid.grid_field import Field, State, h1_norm
from novikov.stability.modulation import ModulationError, modulation_solve
from novikov.utils.logger import log, log_debug, log_error

GUARD_FACTOR = 5.0  # allowed |dx~| per snapshot, in units of dt * max c


@dataclass(frozen=True)
class TrainGeometry:
    """Midpoints y_2..y_N, intervals J_i and the u*v maximum on each"""

    y: Tuple[float, ...]
    intervals: Tuple[Tuple[float, float], ...]
    x_peak: Tuple[float, ...]
    M_peak: Tuple[float, ...]
    u_peak: Tuple[float, ...]
    v_peak: Tuple[float, ...]


def train_geometry(s: State, x_tilde: Sequence[float]) -> TrainGeometry:
    grid = s.grid
    x_tilde = np.asarray(x_tilde, dtype=float)
    y = 0.5 * (x_tilde[:-1] + x_tilde[1:])
    edges = np.concatenate(([grid.x_left], y, [grid.x_right]))
    nodes = grid.nodes
    product = s.u.values * s.v.values

    x_peak, M_peak, u_peak, v_peak = [], [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = np.flatnonzero((nodes >= lo) & (nodes <= hi))
        if inside.size == 0:
            raise ModulationError(f"Interval [{lo:g}, {hi:g}] holds no grid node", s.t)
        k = int(inside[np.argmax(product[inside])])
        x_peak.append(float(nodes[k]))
        M_peak.append(float(product[k]))
        u_peak.append(float(s.u.values[k]))
        v_peak.append(float(s.v.values[k]))

    return TrainGeometry(
        y=tuple(float(c) for c in y),
        intervals=tuple((float(lo), float(hi)) for lo, hi in zip(edges[:-1], edges[1:])),
        x_peak=tuple(x_peak),
        M_peak=tuple(M_peak),
        u_peak=tuple(u_peak),
        v_peak=tuple(v_peak),
    )


def train_profiles(s: State, ts: TrainSpec, x_tilde: Sequence[float]) -> Tuple[Field, Field]:
    """R_X and S_X: the exact train with its bumps moved to x_tilde"""
    parts = list(zip(ts.peakons, x_tilde))
    first, x0 = parts[0]
    u = peakon_profile(s.grid, first.a, x0)
    v = peakon_profile(s.grid, first.b, x0)
    for p, xi in parts[1:]:
        u = u + peakon_profile(s.grid, p.a, xi)
        v = v + peakon_profile(s.grid, p.b, xi)
    return u, v


class GlobalIdentity(NamedTuple):
    """E - sum 2a_i^2 minus ||u - R_X||^2 + 4 sum a_i(u(x_i) - a_i), per component"""

    residual_u: float
    residual_v: float
    orbit_distance: float


def global_identity(s: State, ts: TrainSpec, x_tilde: Sequence[float]) -> GlobalIdentity:
    target_u, target_v = train_profiles(s, ts, x_tilde)
    gap_u = s.u - target_u
    gap_v = s.v - target_v
    a, b = ts.amplitudes_u, ts.amplitudes_v
    at_u = np.array([s.u.at(x) for x in x_tilde])
    at_v = np.array([s.v.at(x) for x in x_tilde])

    rhs_u = h1_norm(gap_u) ** 2 + 4.0 * float(np.sum(a * (at_u - a)))
    rhs_v = h1_norm(gap_v) ** 2 + 4.0 * float(np.sum(b * (at_v - b)))
    return GlobalIdentity(
        residual_u=energy_u(s) - 2.0 * float(np.sum(a * a)) - rhs_u,
        residual_v=energy_v(s) - 2.0 * float(np.sum(b * b)) - rhs_v,
        orbit_distance=h1_norm(gap_u) + h1_norm(gap_v),
    )


@dataclass
class TrainSnapshot:
    t: float
    x_tilde: np.ndarray
    residual_norm: float
    iterations: int
    geometry: TrainGeometry
    localized: List[LocalizedFunctionals]
    localized_inequality: np.ndarray
    right_energies: List[RightEnergy]
    identity: GlobalIdentity
    separation_margin: np.ndarray  # x~_i - x~_{i-1} - (3L/4 + (c_i - c_{i-1}) t / 2)


@dataclass
class TrainReport:
    spec: TrainSpec
    K: float
    snapshots: List[TrainSnapshot] = field(default_factory=list)
    speeds: Optional[np.ndarray] = None  # dx~_i/dt at every snapshot

    @property
    def times(self) -> np.ndarray:
        return np.array([snap.t for snap in self.snapshots])

    @property
    def positions(self) -> np.ndarray:
        return np.array([snap.x_tilde for snap in self.snapshots])

    def fitted_speeds(self, transient: float = 0.2) -> np.ndarray:
        """Least-squares slope of x~_i(t) after the first `transient` fraction of the run"""
        times = self.times
        if times.size < 2:
            return np.full(self.spec.size, np.nan)
        keep = times >= times[0] + transient * (times[-1] - times[0])
        if np.count_nonzero(keep) < 2:
            keep = np.ones_like(times, dtype=bool)
        return np.array([np.polyfit(times[keep], column[keep], 1)[0] for column in self.positions.T])

    @property
    def max_residual(self) -> float:
        return max((snap.residual_norm for snap in self.snapshots), default=0.0)

    @property
    def min_separation_margin(self) -> float:
        margins = [float(np.min(snap.separation_margin)) for snap in self.snapshots if snap.separation_margin.size]
        return min(margins, default=math.inf)

    @property
    def max_peak_error(self) -> float:
        """Largest of |M_i - c_i|, |u(x_i) - a_i|, |v(x_i) - b_i|"""
        c, a, b = self.spec.speeds, self.spec.amplitudes_u, self.spec.amplitudes_v
        worst = 0.0
        for snap in self.snapshots:
            g = snap.geometry
            worst = max(
                worst,
                float(np.max(np.abs(np.array(g.M_peak) - c))),
                float(np.max(np.abs(np.array(g.u_peak) - a))),
                float(np.max(np.abs(np.array(g.v_peak) - b))),
            )
        return worst

    @property
    def max_localized_inequality(self) -> float:
        return max((float(np.max(snap.localized_inequality)) for snap in self.snapshots), default=-math.inf)

    @property
    def initial_orbit_distance(self) -> float:
        return self.snapshots[0].identity.orbit_distance if self.snapshots else 0.0

    @property
    def max_separation_drop(self) -> float:
        """Largest fall of any gap x~_{i+1} - x~_i below its earlier maximum"""
        if len(self.snapshots) < 2 or self.spec.size < 2:
            return 0.0
        gaps = np.diff(self.positions, axis=1)
        return float(np.max(np.maximum.accumulate(gaps, axis=0) - gaps))

    def separation_increasing(self, slack: float = 0.0) -> bool:
        """Gaps never fall more than slack below their running maximum"""
        return self.max_separation_drop <= slack


def _snapshot(s: State, ts: TrainSpec, wf: WeightFamily, x_init, t0: float) -> TrainSnapshot:
    solved = modulation_solve(s, ts, x_init)
    x_tilde = solved.x_tilde
    geometry = train_geometry(s, x_tilde)

    phi = partition_phi(wf, geometry.y, s.grid)
    localized = localized_functionals(s, phi)
    M = np.array(geometry.M_peak)
    H = np.array([entry.H for entry in localized])
    F = np.array([entry.F for entry in localized])
    inequality = 4.0 * M * M / 3.0 - 4.0 * M * H / 3.0 + F

    c = ts.speeds
    elapsed = s.t - t0
    margin = np.diff(x_tilde) - (0.75 * ts.L + 0.5 * np.diff(c) * elapsed)

    return TrainSnapshot(
        t=s.t,
        x_tilde=x_tilde,
        residual_norm=solved.residual_norm,
        iterations=solved.iterations,
        geometry=geometry,
        localized=localized,
        localized_inequality=inequality,
        right_energies=[right_energy_J(s, y_j, wf.K, wf) for y_j in geometry.y],
        identity=global_identity(s, ts, x_tilde),
        separation_margin=margin,
    )


def train_diagnostics(traj: Trajectory, ts: TrainSpec, K: float) -> TrainReport:
    """Modulate every snapshot, warm-starting from the previous one

    A position jump larger than GUARD_FACTOR * dt * max c (plus one cell)
    between snapshots is treated as a modulation failure.
    """
    wf = build_weight(K).translated((), ts.sigma0)
    report = TrainReport(spec=ts, K=float(K))
    if not traj.states:
        return report

    t0 = traj.states[0].t
    x_prev = ts.positions
    t_prev = t0
    fastest = float(np.max(ts.speeds))
    dx = traj.grid.dx

    for state in traj.states:
        try:
            snap = _snapshot(state, ts, wf, x_prev, t0)
        except ModulationError as e:
            log_error(f"train diagnostics: modulation failed at t={state.t:.6g}: {e}")
            if e.t is not None:
                raise
            raise ModulationError(str(e), state.t) from e
        except ValueError as e:
            raise ModulationError(f"Modulation rejected its warm start: {e}", state.t) from e

        allowed = GUARD_FACTOR * (state.t - t_prev) * fastest + dx
        jump = float(np.max(np.abs(snap.x_tilde - x_prev)))
        if report.snapshots and jump > allowed:
            raise ModulationError(f"Modulated positions jumped by {jump:.4g} (allowed {allowed:.4g})", state.t)

        report.snapshots.append(snap)
        x_prev, t_prev = snap.x_tilde, state.t
        log_debug(f"train t={state.t:.3f} x~={np.array2string(snap.x_tilde, precision=4)} |Y|={snap.residual_norm:.2e}")

    times = report.times
    if times.size >= 2:
        report.speeds = np.gradient(report.positions, times, axis=0)
    log(f"train diagnostics: {len(report.snapshots)} snapshots, max |Y|={report.max_residual:.3e}")
    return report


@dataclass
class MonotonicityReport:
    """increases[j, k]: max_t J(t) - J(0) for center j and k in (u, v, uv)"""

    increases: np.ndarray
    decay_scale: float  # exp(-sigma0 L / (8K))

    @property
    def max_increase(self) -> float:
        return float(np.max(self.increases)) if self.increases.size else 0.0

    def passes(self, constant: float) -> bool:
        return self.max_increase <= constant * self.decay_scale


def monotonicity_report(
    traj: Trajectory,
    ts: TrainSpec,
    K: float,
    centers: Optional[Sequence[float]] = None,
    report: Optional[TrainReport] = None,
) -> MonotonicityReport:
    """J^u, J^v, J^uv growth at each y_j

    Centers default to the moving midpoints of the modulated positions,
    taken from report when one is already at hand. Pass fixed centers to
    skip modulation.
    """
    wf = build_weight(K)
    decay = math.exp(-ts.sigma0 * ts.L / (8.0 * K))
    if not traj.states:
        return MonotonicityReport(np.zeros((0, 3)), decay)

    if centers is None:
        if report is None:
            report = train_diagnostics(traj, ts, K)
        per_snapshot = [[tuple(J) for J in snap.right_energies] for snap in report.snapshots]
    else:
        fixed = [float(c) for c in centers]
        per_snapshot = [[tuple(right_energy_J(s, y_j, K, wf)) for y_j in fixed] for s in traj.states]

    values = np.array(per_snapshot, dtype=float)
    if values.size == 0:
        return MonotonicityReport(np.zeros((0, 3)), decay)
    increases = np.max(values - values[0], axis=0)
    return MonotonicityReport(increases, decay)


@dataclass
class VirialReport:
    times: np.ndarray
    measured: np.ndarray  # finite-difference rates, one row per interior snapshot
    predicted: np.ndarray
    relative_error: np.ndarray  # per functional, scaled by the largest predicted rate

    @property
    def max_relative_error(self) -> float:
        return float(np.max(self.relative_error)) if self.relative_error.size else 0.0


def virial_check(
    traj: Trajectory,
    weight_center: float,
    K: float,
    ws: Optional[KernelWorkspace] = None,
) -> VirialReport:
    """Measured rates of the weighted energies against their exact rates

    The weight Psi_K(. - weight_center) stays fixed in time, so the identity
    carries no term for a moving center. Measured rates differentiate a cubic
    spline through the snapshot energies. Particle runs evaluate energies and
    rates with Gauss rules between particles, grid runs with the node quadrature.
    """
    if len(traj.states) < 3:
        raise ValueError("virial_check needs at least three snapshots")

    wf = build_weight(K)
    times = traj.times
    if traj.particles:
        weight = partial(wf.value, center=weight_center)
        weight_slope = partial(wf.slope, center=weight_center)
        pairs = [weighted_energies_and_rates(ps, weight, weight_slope) for ps in traj.particles]
        energies = np.array([tuple(e) for e, _ in pairs])
        predicted = np.array([tuple(r) for _, r in pairs])[1:-1]
    else:
        grid = traj.grid
        if ws is None:
            ws = KernelWorkspace(grid)
        weight = wf.value(grid.nodes, weight_center)
        weight_slope = wf.slope(grid.nodes, weight_center)
        energies = np.array([tuple(weighted_energies(s, weight)) for s in traj.states])
        predicted = np.array([tuple(virial_rates(s, weight_slope, ws)) for s in traj.states[1:-1]])

    measured = CubicSpline(times, energies, axis=0)(times, 1)[1:-1]
    scale = np.maximum(np.max(np.abs(predicted), axis=0), 1e-300)
    error = np.max(np.abs(measured - predicted), axis=0) / scale
    log_debug(f"virial check: relative errors {np.array2string(error, precision=3)}")
    return VirialReport(times=times[1:-1], measured=measured, predicted=predicted, relative_error=error)
