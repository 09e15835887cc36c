"""
Sweeps: independent simulate runs over one config axis, plus the delta scaling fit

Each member gets its own member_NN directory; a failing member is recorded
and the sweep carries on.
"""

import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from novikov.utils.logger import log, log_error
from shared.config import MAX_WORKERS
from shared.run_config import config_hash, serialize
from shared.setup_filesystem import detach_filesystem, setup_run_filesystem

from batch.outputs import Checks, write_summary
from batch.runner import RunOutput, run, run_directory, show_progress


def member_config(config, axis, value, directory, index=0):
    """The simulate config for one sweep value

    Delta members perturb with their own seed, config.seed + index.
    """
    initial = config.initial
    member = replace(config, experiment="simulate", sweep=None)
    if axis == "delta":
        kind = "train" if initial.kind == "train" else "perturbed"
        member = replace(member, initial=replace(initial, kind=kind, amplitude=float(value)))
        member = member.with_seed(config.seed + int(index))
    elif axis == "n":
        member = replace(member, grid=replace(config.grid, n=int(value)))
    elif axis == "w":
        member = replace(member, initial=replace(initial, w=float(value)))
    elif axis == "seed":
        member = member.with_seed(int(value))
    else:
        raise ValueError(f"Unknown sweep axis '{axis}'")
    return member.with_output(str(directory))


def _run_member(member):
    """Worker entry point; module-level so process pools can pickle it"""
    return run(member, silent=True)


def _failed_member(directory, error):
    return RunOutput(
        directory=Path(directory),
        summary={"passed": False, "failure": {"type": type(error).__name__, "message": str(error), "t": None}},
    )


def sweep(config, axis, values, base_dir=None):
    """Run one simulate member per value; results come back in value order

    Args:
        config: the sweep's RunConfig (its own experiment field is ignored)
        axis (str): "delta", "n", "w" or "seed"
        values: the axis values
        base_dir: parent of the member_NN directories

    Returns:
        list of RunOutput, one per value
    """
    values = list(values)
    if not values:
        return []
    base = Path(base_dir) if base_dir is not None else run_directory(config)
    members = [member_config(config, axis, value, base / f"member_{i:02d}", i) for i, value in enumerate(values)]
    outputs = [None] * len(members)
    start_time = time.time()

    if MAX_WORKERS > 1 and len(members) > 1:
        with ProcessPoolExecutor(max_workers=min(MAX_WORKERS, len(members))) as pool:
            futures = {pool.submit(_run_member, member): i for i, member in enumerate(members)}
            for done, future in enumerate(as_completed(futures), 1):
                i = futures[future]
                try:
                    outputs[i] = future.result()
                except Exception as e:
                    log_error(f"sweep member {i} ({axis}={values[i]}) crashed: {e}")
                    outputs[i] = _failed_member(members[i].output.directory, e)
                show_progress(done, len(members), start_time)
    else:
        for i, member in enumerate(members):
            try:
                outputs[i] = _run_member(member)
            except Exception as e:
                log_error(f"sweep member {i} ({axis}={values[i]}) crashed: {e}")
                outputs[i] = _failed_member(member.output.directory, e)
            show_progress(i + 1, len(members), start_time)

    return outputs


def member_extremes(output, a, b):
    """sup over time of the stability columns of one member's timeseries.csv"""
    table = pd.read_csv(Path(output.directory) / "timeseries.csv")
    return {
        "sup_distance": float(table["dist_total"].max()),
        "crest_u": float((table["u_at_xi"] - a).abs().max()),
        "crest_v": float((table["v_at_xi"] - b).abs().max()),
        "gap_excess": float((table["gap"] - table["gap_bound"]).max()),
        "rows": int(len(table)),
    }


def _spread(values):
    values = np.asarray(values, dtype=float)
    low = float(np.min(values))
    return float(np.max(values)) / low if low > 0 else np.inf


def scaling_fit(config, deltas, outputs, checks):
    """Distance and crest scaling across the delta ladder; returns the fitted section"""
    tol = config.tolerances
    target = config.initial.peakons[0]
    rows = []
    for delta, output in zip(deltas, outputs):
        if output.summary.get("failure") is not None or delta <= 0:
            continue
        try:
            rows.append({"delta": float(delta), **member_extremes(output, target.a, target.b)})
        except Exception as e:
            log_error(f"sweep: cannot read {output.directory}: {e}")
            continue

    if len(rows) < 2:
        checks.add("scaling_members", len(rows), 2, passed=False)
        return {"members": rows}

    frame = pd.DataFrame(rows).sort_values("delta")
    delta = frame["delta"].to_numpy()
    distance = frame["sup_distance"].to_numpy()
    crest = np.maximum(frame["crest_u"].to_numpy(), frame["crest_v"].to_numpy())

    drops = distance[:-1] - distance[1:]
    checks.add("distance_monotone_in_delta", max(float(np.max(drops)), 0.0), 1e-12 * float(np.max(distance)))
    checks.add("distance_quarter_power", _spread(distance / delta**0.25), tol.scaling_ratio)
    checks.add("crest_half_power", _spread(crest / delta**0.5), tol.scaling_ratio)
    checks.add("peak_gap_mechanism", float(frame["gap_excess"].max()), tol.peak_gap)

    fitted = {"members": frame.to_dict(orient="records")}
    if np.all(distance > 0):
        fitted["distance_exponent"] = float(np.polyfit(np.log(delta), np.log(distance), 1)[0])
    if np.all(crest > 0):
        fitted["crest_exponent"] = float(np.polyfit(np.log(delta), np.log(crest), 1)[0])
    return fitted


def run_sweep(config, out_dir=None, silent=False):
    """stability-sweep: members, sweep_summary.json and the top-level summary.json"""
    directory = run_directory(config, out_dir)
    fs = setup_run_filesystem(directory, silent)
    fs.write_text("config.yaml", serialize(config))
    started = time.monotonic()
    axis = config.sweep.axis
    values = config.sweep.values
    log(f"sweep: {axis} over {list(values)} -> {directory}")

    outputs = sweep(config, axis, values, directory)
    # members detach the logger when they finish in-process
    fs = setup_run_filesystem(directory, silent)

    checks = Checks()
    failed = [str(o.directory.name) for o in outputs if not o.passed]
    checks.add("members_passed", len(failed), 0)
    fitted = {"axis": axis, "values": list(values), "failed_members": failed}
    failure = None
    if axis == "delta" and config.initial.kind != "train":
        try:
            fitted["scaling"] = scaling_fit(config, values, outputs, checks)
        except Exception as e:
            failure = {"type": type(e).__name__, "message": str(e), "t": None}
            log_error(f"sweep: scaling fit failed: {e}")

    fs.write_json(
        "sweep_summary.json",
        {
            "members": [
                {"value": value, "directory": str(o.directory), "passed": o.passed, "failure": o.summary.get("failure")}
                for value, o in zip(values, outputs)
            ]
        },
    )
    summary = write_summary(fs, config_hash(config), checks, fitted, started, failure)
    if checks.failures():
        log_error(f"failed assertions: {', '.join(checks.failures())}")
    log(f"sweep: {'passed' if summary['passed'] else 'FAILED'} in {summary['runtime_seconds']:.1f}s")
    detach_filesystem()
    return RunOutput(directory=directory, summary=summary, rows=len(outputs))
