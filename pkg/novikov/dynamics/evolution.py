"""
Time stepping for the two-component Novikov system

Two schemes share one driver. "particles" (the default) advances the
multipeakon form in novikov.dynamics.particles. "grid" advances the
semi-discrete weak form

    u_t + uv u_x + P_x*(u_x^2 v/2 + u u_x v_x + u^2 v) + P*(u_x^2 v_x)/2 = 0

and its mirror for v. Both use classical RK4 under a CFL bound on uv.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from novikov.config import DEFAULT_CFL, DEFAULT_DT_MAX, DEFAULT_RECORD_EVERY, SPEED_FLOOR
from novikov.diagnostics.functionals import (
    FunctionalRecord,
    VirialRates,
    WeightedEnergies,
    energy_fluxes,
    functional_record,
    nonlocal_sources,
)
from novikov.dynamics import BlowUpError
from novikov.dynamics.particles import (
    ParticleState,
    from_state,
    particle_record,
    peak_speed,
    sample_state,
    step_particles,
)
from novikov.grid.green_kernel import KernelWorkspace
from novikov.grid.grid_field import Field, Grid, State, derivative
from novikov.utils.logger import log, log_debug, log_error

SCHEMES = ("particles", "grid")


@dataclass(frozen=True)
class StepControl:
    cfl: float = DEFAULT_CFL
    dt_max: float = DEFAULT_DT_MAX
    t_end: float = 10.0
    record_every: int = DEFAULT_RECORD_EVERY
    scheme: str = "particles"

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must be in (0, 1], got {self.cfl}")
        if not self.dt_max > 0.0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if not self.t_end >= 0.0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be an integer >= 1, got {self.record_every}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")


@dataclass
class Trajectory:
    """Snapshots in time order, each with its FunctionalRecord

    particles holds the particle state behind every snapshot when the run
    used the particle scheme, and stays empty otherwise.
    """

    states: List[State] = field(default_factory=list)
    records: List[FunctionalRecord] = field(default_factory=list)
    particles: List[ParticleState] = field(default_factory=list)
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    def append(
        self,
        state: State,
        record: Optional[FunctionalRecord] = None,
        particles: Optional[ParticleState] = None,
    ):
        if self.states and not state.t > self.states[-1].t:
            raise ValueError(f"Snapshot times must increase ({state.t} after {self.states[-1].t})")
        if particles is not None and len(self.particles) != len(self.states):
            raise ValueError("Particle snapshots must accompany every state or none")
        self.states.append(state)
        self.records.append(record if record is not None else functional_record(state))
        if particles is not None:
            self.particles.append(particles)


def _upwind_slope(f: np.ndarray, speed: np.ndarray, dx: float, central: np.ndarray) -> np.ndarray:
    """Third-order upwind-biased derivative, left-biased where speed > 0

    Falls back to the central stencil within two nodes of either end.
    """
    out = central.copy()
    left = (f[:-4] - 6.0 * f[1:-3] + 3.0 * f[2:-2] + 2.0 * f[3:-1]) / (6.0 * dx)
    right = (-2.0 * f[1:-3] - 3.0 * f[2:-2] + 6.0 * f[3:-1] - f[4:]) / (6.0 * dx)
    out[2:-2] = np.where(speed[2:-2] > 0.0, left, right)
    return out


def _component_tendency(u, v, ux, vx, speed, dx, ws: KernelWorkspace) -> np.ndarray:
    """du/dt for the u equation; the v equation is the same call with roles swapped"""
    transport = speed * _upwind_slope(u, speed, dx, ux)
    nonlocal_px = ws.px_values(0.5 * ux * ux * v + u * ux * vx + u * u * v)
    nonlocal_p = ws.p_values(ux * ux * vx)
    return -transport - nonlocal_px - 0.5 * nonlocal_p


def tendencies(u: np.ndarray, v: np.ndarray, grid: Grid, ws: KernelWorkspace) -> Tuple[np.ndarray, np.ndarray]:
    dx = grid.dx
    ux = np.gradient(u, dx, edge_order=2)
    vx = np.gradient(v, dx, edge_order=2)
    speed = u * v
    du = _component_tendency(u, v, ux, vx, speed, dx, ws)
    dv = _component_tendency(v, u, vx, ux, speed, dx, ws)
    return du, dv


def rhs(s: State, ws: KernelWorkspace) -> Tuple[Field, Field]:
    du, dv = tendencies(s.u.values, s.v.values, s.grid, ws)
    return Field(s.grid, du), Field(s.grid, dv)


def step_rk4(s: State, dt: float, ws: KernelWorkspace) -> State:
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = s.grid
    u0, v0 = s.u.values, s.v.values

    k1u, k1v = tendencies(u0, v0, grid, ws)
    k2u, k2v = tendencies(u0 + 0.5 * dt * k1u, v0 + 0.5 * dt * k1v, grid, ws)
    k3u, k3v = tendencies(u0 + 0.5 * dt * k2u, v0 + 0.5 * dt * k2v, grid, ws)
    k4u, k4v = tendencies(u0 + dt * k3u, v0 + dt * k3v, grid, ws)

    u1 = u0 + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    v1 = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    t1 = s.t + dt
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(v1))):
        raise BlowUpError(t1)
    return State(Field(grid, u1), Field(grid, v1), t1)


def cfl_dt(s: State, ctl: StepControl) -> float:
    speed = float(np.max(np.abs(s.u.values * s.v.values)))
    return min(ctl.dt_max, ctl.cfl * s.grid.dx / max(speed, SPEED_FLOOR))


def particle_dt(ps: ParticleState, grid: Grid, ctl: StepControl) -> float:
    """cfl_dt with the peak speed taken from the particles"""
    return min(ctl.dt_max, ctl.cfl * grid.dx / peak_speed(ps))


RecordCallback = Callable[[State, FunctionalRecord], None]


class _GridStepper:
    def __init__(self, initial: State, ctl: StepControl, ws: KernelWorkspace):
        self.state = initial
        self.ctl = ctl
        self.ws = ws

    @property
    def t(self) -> float:
        return self.state.t

    def dt(self) -> float:
        return cfl_dt(self.state, self.ctl)

    def advance(self, dt: float, t_land: Optional[float] = None):
        state = step_rk4(self.state, dt, self.ws)
        self.state = state if t_land is None else State(state.u, state.v, t_land)

    def snapshot(self):
        return self.state, functional_record(self.state), None


class _ParticleStepper:
    def __init__(self, initial: State, ctl: StepControl):
        self.grid = initial.grid
        self.ctl = ctl
        self.particles = from_state(initial)

    @property
    def t(self) -> float:
        return self.particles.t

    def dt(self) -> float:
        return particle_dt(self.particles, self.grid, self.ctl)

    def advance(self, dt: float, t_land: Optional[float] = None):
        ps = step_particles(self.particles, dt)
        self.particles = ps if t_land is None else ParticleState(ps.x, ps.p, ps.q, t_land)

    def snapshot(self):
        state = sample_state(self.particles, self.grid)
        return state, particle_record(self.particles, state), self.particles


def simulate(
    initial: State,
    ctl: StepControl,
    ws: Optional[KernelWorkspace] = None,
    on_record: Optional[RecordCallback] = None,
) -> Trajectory:
    """Step to t_end, snapshotting every record_every steps and at t_end

    The first snapshot is the initial state itself. on_record sees each
    snapshot as soon as it is taken.
    """
    if ws is None:
        ws = KernelWorkspace(initial.grid)
    elif ws.grid != initial.grid:
        raise ValueError("Workspace grid does not match the initial state")

    if ctl.scheme == "particles":
        stepper = _ParticleStepper(initial, ctl)
        first = particle_record(stepper.particles, initial)
        first_particles = stepper.particles
    else:
        stepper = _GridStepper(initial, ctl, ws)
        first = functional_record(initial)
        first_particles = None

    traj = Trajectory()
    traj.append(initial, first, first_particles)
    if on_record:
        on_record(initial, first)

    t_end = initial.t + ctl.t_end
    started = time.monotonic()
    log(f"simulate: {ctl.scheme} scheme, n={initial.grid.n} dx={initial.grid.dx:.6g} t_end={ctl.t_end:g}")

    while stepper.t < t_end:
        dt = stepper.dt()
        final = stepper.t + dt >= t_end - 1e-3 * dt
        if final:
            dt = t_end - stepper.t
        try:
            stepper.advance(dt, t_end if final else None)
        except BlowUpError as e:
            log_error(f"blow-up at t={e.t:.6g} after {traj.steps} steps")
            raise BlowUpError(e.t, str(e), traj) from e
        traj.steps += 1

        if final or traj.steps % ctl.record_every == 0:
            state, record, particles = stepper.snapshot()
            traj.append(state, record, particles)
            if on_record:
                on_record(state, record)
            log_debug(f"t={state.t:.4f} E_u={record.E_u:.12g} M={record.M:.6g}")

    log(f"simulate: {traj.steps} steps, {len(traj.states)} snapshots in {time.monotonic() - started:.2f}s")
    return traj


def virial_rates(s: State, weight_slope: np.ndarray, ws: KernelWorkspace) -> VirialRates:
    """Exact time derivatives of the weighted energies for a fixed weight g

    d/dt int(u^2+u_x^2)g  = int g'[uv u_x^2 + 2u P*A_u + 2u P_x*B_u]
    d/dt int(uv+u_xv_x)g  = int g'[uv u_x v_x + v P*A_u + v P_x*B_u + u P*A_v + u P_x*B_v]
    with A_u = u_x^2 v/2 + u u_x v_x + u^2 v, B_u = u_x^2 v_x/2 and v mirrored.
    """
    u, v = s.u.values, s.v.values
    ux = derivative(s.u).values
    vx = derivative(s.v).values
    g1 = np.asarray(weight_slope, dtype=float)

    a_u, a_v, b_u, b_v = nonlocal_sources(u, v, ux, vx)
    fluxes = energy_fluxes(u, v, ux, vx, ws.p_values(a_u), ws.px_values(b_u), ws.p_values(a_v), ws.px_values(b_v))
    return VirialRates(*(float(trapezoid(g1 * flux, dx=s.grid.dx)) for flux in fluxes))


def weighted_energies(s: State, weight: np.ndarray) -> WeightedEnergies:
    """int(u^2+u_x^2)g, int(v^2+v_x^2)g, int(uv+u_xv_x)g"""
    u, v = s.u.values, s.v.values
    ux = derivative(s.u).values
    vx = derivative(s.v).values
    dx = s.grid.dx
    return WeightedEnergies(
        float(trapezoid((u * u + ux * ux) * weight, dx=dx)),
        float(trapezoid((v * v + vx * vx) * weight, dx=dx)),
        float(trapezoid((u * v + ux * vx) * weight, dx=dx)),
    )
