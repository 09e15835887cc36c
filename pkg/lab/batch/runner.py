"""
Experiment pipelines: profiles -> simulate -> diagnostics -> outputs

Each pipeline streams its tables into the run directory while it works and
records pass/fail assertions; run() always finishes with summary.json.
"""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from novikov.diagnostics.functionals import quartic_F, relative_drift
from novikov.diagnostics.weights import build_weight, partition_phi
from novikov.dynamics.characteristics import characteristics, momentum_along_flow
from novikov.dynamics.evolution import BlowUpError, simulate
from novikov.dynamics.profiles import (
    MollifierSpec,
    exact_peakon_pair,
    momentum_bump,
    mollified_peakon_pair,
    perturb_momentum,
    train,
)
from novikov.grid.green_kernel import KernelWorkspace, helmholtz_inverse
from novikov.grid.grid_field import Field, State, argmax_product
from novikov.stability.identities import (
    build_diagnostic_fields,
    identity_g1g2,
    identity_h,
    key_inequality,
    pointwise_energy_identity,
    sign_report,
    stability_record,
)
from novikov.stability.train import monotonicity_report, train_diagnostics, virial_check
from novikov.utils.logger import log, log_error
from shared.config import OUTPUT_DIR, SHOW_PROGRESS
from shared.run_config import config_hash, serialize
from shared.setup_filesystem import detach_filesystem, setup_run_filesystem

from batch.outputs import TIMESERIES_COLUMNS, Checks, SnapshotWriter, TableWriter, write_summary

CONSERVED = ("E_u", "E_v", "H", "F")


def show_progress(current, total, start_time):
    """Progress display that updates same line (avoids terminal spam)"""
    if not SHOW_PROGRESS or total <= 0:
        return
    elapsed = time.time() - start_time
    rate = current / elapsed if elapsed > 0 else 0
    eta = (total - current) / rate if rate > 0 else 0
    progress_pct = (current / total) * 100

    print(f"\rProgress: {current}/{total} ({progress_pct:.1f}%) - {rate:.1f} items/sec - ETA: {eta:.0f}s", end="", flush=True)

    if current == total:
        print()


@dataclass
class RunOutput:
    directory: Path
    summary: dict = field(default_factory=dict)
    rows: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed", False))


def run_directory(config, out_dir=None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if config.output.directory:
        return Path(config.output.directory)
    return Path(OUTPUT_DIR) / f"{config.experiment}-{config_hash(config)[:8]}"


def build_initial(config, grid) -> State:
    initial = config.initial
    moll = MollifierSpec(initial.w)
    if initial.kind == "train":
        state = train(initial.train_spec(), moll, grid)
    else:
        spec = initial.peakon_specs()[0]
        if initial.kind == "exact":
            return exact_peakon_pair(spec, grid)
        state = mollified_peakon_pair(spec, moll, grid)
    if initial.kind in ("perturbed", "train") and initial.amplitude > 0:
        state = perturb_momentum(state, initial.amplitude, config.seed)
    return state


class _SnapshotSink:
    """on_record callback: one CSV row per snapshot plus the per-row checks"""

    def __init__(self, config, fs, table):
        self.config = config
        self.table = table
        self.snapshots = SnapshotWriter(fs) if config.diagnostics.snapshots else None
        single = config.initial.kind != "train" and config.diagnostics.stability
        self.target = config.initial.peakons[0] if single else None
        self.worst = {"min_m": 0.0, "slope": -math.inf, "key": -math.inf, "gap": -math.inf, "boundary": 0.0}
        self.crest_u = 0.0
        self.crest_v = 0.0
        self.sup_distance = 0.0

    def __call__(self, state, record):
        row = record.as_dict()
        signs = sign_report(state)
        row.update(signs._asdict())
        worst = self.worst
        worst["min_m"] = min(worst["min_m"], signs.min_m, signs.min_n)
        scale_u = max(float(np.max(state.u.values)), float(np.max(state.v.values)), 1e-300)
        worst["slope"] = max(worst["slope"], signs.slope_excess / scale_u)
        worst["boundary"] = max(worst["boundary"], signs.boundary)

        if self.target is not None:
            stab = stability_record(state, self.target.a, self.target.b)
            row.update(stab.as_dict())
            worst["key"] = max(worst["key"], stab.key / (1.0 + abs(record.F)))
            worst["gap"] = max(worst["gap"], stab.gap - stab.gap_bound)
            self.crest_u = max(self.crest_u, abs(stab.u_at_xi - self.target.a))
            self.crest_v = max(self.crest_v, abs(stab.v_at_xi - self.target.b))
            self.sup_distance = max(self.sup_distance, stab.dist_total)
        else:
            worst["key"] = max(worst["key"], key_inequality(state) / (1.0 + abs(record.F)))

        self.table.write(row)
        if self.snapshots is not None:
            self.snapshots.write(state)


def _evolve(config, fs, checks, fitted):
    """Shared simulate step; returns the trajectory"""
    grid = config.grid.build()
    initial = build_initial(config, grid)
    ctl = config.step.build()
    reference = sign_report(initial)
    tol = config.tolerances

    with TableWriter(fs, "timeseries.csv", TIMESERIES_COLUMNS) as table:
        sink = _SnapshotSink(config, fs, table)
        try:
            traj = simulate(initial, ctl, KernelWorkspace(grid), on_record=sink)
        finally:
            fitted["rows"] = table.rows

    for name in CONSERVED:
        checks.add(f"drift_{name}", relative_drift(traj.records, name), tol.conservation)
    fitted["drift_E0"] = relative_drift(traj.records, "E0")
    checks.add("drift_E0", fitted["drift_E0"], tol.e0)

    momentum_scale = max(reference.max_m, reference.max_n)
    checks.add("min_momentum", -sink.worst["min_m"] / momentum_scale, tol.sign)
    checks.add("slope_bound", sink.worst["slope"], tol.slope)
    checks.add("key_inequality", sink.worst["key"], tol.key)
    fitted["boundary_max"] = sink.worst["boundary"]
    fitted["steps"] = traj.steps

    if sink.target is not None:
        checks.add("peak_gap_mechanism", sink.worst["gap"], tol.peak_gap)
        fitted["sup_distance"] = sink.sup_distance
        fitted["sup_crest_u"] = sink.crest_u
        fitted["sup_crest_v"] = sink.crest_v

    if config.diagnostics.characteristics > 0 and len(traj.states) > 1:
        peak = argmax_product(initial).xi
        seeds = np.linspace(peak - 5.0, peak + 5.0, config.diagnostics.characteristics)
        paths = characteristics(traj, seeds)
        flow = momentum_along_flow(traj, paths)
        checks.add("momentum_along_flow", flow.max_deviation, tol.momentum_flow)
        checks.add("min_momentum_on_paths", -flow.min_momentum / momentum_scale, tol.sign)
        checks.add("qx_consistency", max(p.qx_disagreement for p in paths), tol.qx)
        fitted["skipped_seeds"] = len(flow.skipped_seeds)

    return traj


def simulate_pipeline(config, fs, checks, fitted):
    _evolve(config, fs, checks, fitted)


def fuzz_state(grid, seed):
    """Seeded positive-momentum state: a few gaussian bumps in m and in n"""
    rng = np.random.default_rng(seed)
    m = np.zeros(grid.n)
    n = np.zeros(grid.n)
    span = 0.25 * grid.length
    for _ in range(int(rng.integers(1, 4))):
        center = grid.midpoint + rng.uniform(-span, span)
        width = rng.uniform(0.3, 1.0)
        m += momentum_bump(grid, rng.uniform(0.5, 2.0), center, width)
        n += momentum_bump(grid, rng.uniform(0.5, 2.0), center + rng.uniform(-0.5, 0.5), width)
    return State(helmholtz_inverse(Field(grid, m)), helmholtz_inverse(Field(grid, n)))


def _pair_residuals(state):
    return identity_g1g2(state).residual + identity_h(state).residual


def identities_pipeline(config, fs, checks, fitted):
    """Energy identities and sign inequalities over seeded states"""
    grid = config.grid.build()
    diag = config.diagnostics
    tol = config.tolerances
    columns = ["seed", "pointwise", "g1g2", "g1g2_rhs", "h", "h_rhs", "key", "g_min", "h_excess"]
    worst = {name: 0.0 for name in ("pointwise", "g1g2", "h", "g_min", "h_excess")}
    worst["key"] = -math.inf

    start_time = time.time()
    with TableWriter(fs, "residuals.csv", columns) as table:
        for i in range(diag.fuzz_states):
            seed = config.seed + i
            try:
                state = fuzz_state(grid, seed)
                rng = np.random.default_rng(seed + 7919)
                pointwise = 0.0
                for xi in rng.uniform(grid.x_left / 2.0, grid.x_right / 2.0, diag.fuzz_points):
                    a, b = rng.uniform(0.5, 2.0, 2)
                    res = pointwise_energy_identity(state, a, b, xi)
                    pointwise = max(
                        pointwise,
                        res.residual_u / (1.0 + abs(res.rhs_u)),
                        res.residual_v / (1.0 + abs(res.rhs_v)),
                    )

                g1g2 = identity_g1g2(state)
                h = identity_h(state)
                fields = build_diagnostic_fields(state, argmax_product(state).xi)
                scale = max(float(np.max(state.u.values)), float(np.max(state.v.values)))
                g_min = -min(float(np.min(fields.g1.values)), float(np.min(fields.g2.values))) / scale
                h_excess = float(np.max(fields.h.values - 4.0 * state.u.values * state.v.values / 3.0))
                row = {
                    "seed": seed,
                    "pointwise": pointwise,
                    "g1g2": g1g2.residual / (1.0 + abs(g1g2.rhs)),
                    "g1g2_rhs": g1g2.rhs,
                    "h": h.residual / (1.0 + abs(h.rhs)),
                    "h_rhs": h.rhs,
                    "key": key_inequality(state) / (1.0 + abs(quartic_F(state))),
                    "g_min": g_min,
                    "h_excess": h_excess,
                }
                table.write(row)
                for name in worst:
                    worst[name] = max(worst[name], row[name])
                show_progress(i + 1, diag.fuzz_states, start_time)
            except Exception as e:
                log_error(f"identity fuzz seed {seed} failed: {e}")
                checks.add(f"fuzz_seed_{seed}", 1.0, 0.0, passed=False)
                continue
        fitted["rows"] = table.rows

    checks.add("pointwise_residual", worst["pointwise"], tol.pointwise)
    checks.add("g1g2_residual", worst["g1g2"], tol.one_sided)
    checks.add("h_residual", worst["h"], tol.one_sided)
    checks.add("key_inequality", worst["key"], tol.key)
    checks.add("g_nonnegative", worst["g_min"], 1e-8)
    checks.add("h_bound", worst["h_excess"], 1e-8)

    if diag.refinement_states > 0:
        coarse = fine = 0.0
        for i in range(diag.refinement_states):
            seed = config.seed + i
            coarse += _pair_residuals(fuzz_state(grid, seed))
            fine += _pair_residuals(fuzz_state(grid.refined(), seed))
        order = math.log2(coarse / fine) if fine > 0 and coarse > 0 else math.inf
        fitted["refinement_order"] = order
        checks.add("refinement_order", order, tol.refinement_order, passed=order >= tol.refinement_order)


def train_pipeline(config, fs, checks, fitted):
    traj = _evolve(config, fs, checks, fitted)
    ts = config.initial.train_spec()
    K = config.diagnostics.K
    tol = config.tolerances

    report = train_diagnostics(traj, ts, K)
    columns = ["t", "residual", "iterations", "orbit_distance", "identity_u", "identity_v"]
    for i in range(ts.size):
        columns += [f"x_tilde_{i + 1}", f"x_peak_{i + 1}", f"M_{i + 1}", f"localized_{i + 1}"]
    for j in range(ts.size - 1):
        columns += [f"J_u_{j + 2}", f"J_v_{j + 2}", f"J_uv_{j + 2}", f"separation_{j + 2}"]

    with TableWriter(fs, "train.csv", columns) as table:
        for snap in report.snapshots:
            row = {
                "t": snap.t,
                "residual": snap.residual_norm,
                "iterations": snap.iterations,
                "orbit_distance": snap.identity.orbit_distance,
                "identity_u": snap.identity.residual_u,
                "identity_v": snap.identity.residual_v,
            }
            for i in range(ts.size):
                row[f"x_tilde_{i + 1}"] = snap.x_tilde[i]
                row[f"x_peak_{i + 1}"] = snap.geometry.x_peak[i]
                row[f"M_{i + 1}"] = snap.geometry.M_peak[i]
                row[f"localized_{i + 1}"] = snap.localized_inequality[i]
            for j, J in enumerate(snap.right_energies):
                row[f"J_u_{j + 2}"], row[f"J_v_{j + 2}"], row[f"J_uv_{j + 2}"] = J
                row[f"separation_{j + 2}"] = snap.separation_margin[j]
            table.write(row)

    first = ts.peakons[0]
    checks.add("modulation_residual", report.max_residual, tol.modulation * (first.a**2 + first.b**2))
    speeds = report.fitted_speeds()
    fitted["fitted_speeds"] = speeds
    checks.add("speed_error", float(np.max(np.abs(speeds - ts.speeds))), tol.speed)
    if ts.size > 1:
        checks.add("separation", -report.min_separation_margin, tol.separation_slack)
        drop_slack = tol.separation_drop * math.sqrt(report.initial_orbit_distance)
        fitted["separation_drop"] = report.max_separation_drop
        checks.add("separation_increasing", report.max_separation_drop, drop_slack)
    checks.add("peak_error", report.max_peak_error, tol.peak)
    checks.add("localized_inequality", report.max_localized_inequality, tol.localized)

    if ts.size > 1:
        monotone = monotonicity_report(traj, ts, K, report=report)
        fitted["J_increase"] = monotone.increases
        fitted["J_decay_scale"] = monotone.decay_scale
        checks.add("J_monotonicity", monotone.max_increase, tol.monotonicity)

        y0 = report.snapshots[0].geometry.y
        phi = partition_phi(build_weight(K), y0, traj.grid)
        fitted["partition_sum_error"] = float(np.max(np.abs(sum(p.values for p in phi) - 1.0)))

        if config.diagnostics.virial and len(traj.states) >= 3:
            virial = virial_check(traj, y0[0], K)
            fitted["virial_errors"] = virial.relative_error
            checks.add("virial", virial.max_relative_error, tol.virial)


PIPELINES = {
    "simulate": simulate_pipeline,
    "identities": identities_pipeline,
    "train": train_pipeline,
}


def run(config, out_dir=None, silent=False) -> RunOutput:
    """Execute one config; summary.json is written even when the pipeline fails"""
    if config.experiment == "stability-sweep":
        from batch.sweep import run_sweep

        return run_sweep(config, out_dir, silent)

    directory = run_directory(config, out_dir)
    fs = setup_run_filesystem(directory, silent)
    fs.write_text("config.yaml", serialize(config))
    checks = Checks()
    fitted = {}
    failure = None
    started = time.monotonic()
    log(f"run: {config.experiment} -> {directory}")

    try:
        PIPELINES[config.experiment](config, fs, checks, fitted)
    except BlowUpError as e:
        failure = {"type": type(e).__name__, "message": str(e), "t": e.t}
        log_error(f"run failed: {e}")
    except Exception as e:
        failure = {"type": type(e).__name__, "message": str(e), "t": getattr(e, "t", None)}
        log_error(f"run failed: {type(e).__name__}: {e}")

    summary = write_summary(fs, config_hash(config), checks, fitted, started, failure)
    if checks.failures():
        log_error(f"failed assertions: {', '.join(checks.failures())}")
    log(f"run: {'passed' if summary['passed'] else 'FAILED'} in {summary['runtime_seconds']:.1f}s")
    detach_filesystem()
    return RunOutput(directory=directory, summary=summary, rows=int(fitted.get("rows", 0)))
