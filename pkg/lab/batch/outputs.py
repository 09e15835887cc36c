"""
Run outputs: streamed time-series CSV, raw snapshot dumps and summary.json
"""

import csv
import time

import numpy as np

from novikov.grid.grid_field import State

FUNCTIONAL_COLUMNS = ["t", "E_u", "E_v", "H", "F", "E0", "xi", "M"]
SIGN_COLUMNS = ["min_m", "min_n", "max_m", "max_n", "slope_excess", "boundary"]
STABILITY_COLUMNS = [
    "u_at_xi",
    "v_at_xi",
    "dist_u",
    "dist_v",
    "dist_total",
    "best_shift",
    "gap",
    "gap_bound",
    "key",
]
TIMESERIES_COLUMNS = FUNCTIONAL_COLUMNS + SIGN_COLUMNS + STABILITY_COLUMNS


def format_value(value):
    """17 significant digits so values read back exactly; blanks stay blank"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


class TableWriter:
    """CSV with a fixed header, flushed after every row"""

    def __init__(self, filesystem, filename, columns):
        self.columns = list(columns)
        self.rows = 0
        self._file = open(filesystem.path(filename), "w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(self.columns)
        self._file.flush()

    def write(self, values):
        """values: mapping of column -> number; missing columns are left blank"""
        self._writer.writerow([format_value(values.get(column)) for column in self.columns])
        self._file.flush()
        self.rows += 1

    def close(self):
        if not self._file.closed:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class SnapshotWriter:
    """snapshots/snap_NNNN.{u,v}.f8 as little-endian float64 plus a JSON sidecar"""

    def __init__(self, filesystem):
        self.filesystem = filesystem.subdirectory("snapshots")
        self.count = 0

    def write(self, state: State):
        stem = f"snap_{self.count:04d}"
        self.filesystem.write_bytes(f"{stem}.u.f8", state.u.values.astype("<f8").tobytes())
        self.filesystem.write_bytes(f"{stem}.v.f8", state.v.values.astype("<f8").tobytes())
        self.filesystem.write_json(
            f"{stem}.json",
            {"grid": state.grid.as_dict(), "t": format_value(state.t), "index": self.count},
        )
        self.count += 1


def read_snapshot(filesystem, index):
    """(u values, v values, sidecar) for one dumped snapshot"""
    snapshots = filesystem.subdirectory("snapshots")
    stem = f"snap_{index:04d}"
    u = np.fromfile(snapshots.path(f"{stem}.u.f8"), dtype="<f8")
    v = np.fromfile(snapshots.path(f"{stem}.v.f8"), dtype="<f8")
    return u, v, snapshots.read_json(f"{stem}.json")


class Checks:
    """Named pass/fail assertions collected during a run"""

    def __init__(self):
        self.items = []

    def add(self, name, value, threshold, passed=None):
        """Record value against threshold; passes when value <= threshold unless told otherwise"""
        value = float(value)
        threshold = float(threshold)
        if passed is None:
            passed = value <= threshold
        self.items.append({"name": name, "value": value, "threshold": threshold, "passed": bool(passed)})
        return passed

    @property
    def passed(self):
        return all(item["passed"] for item in self.items)

    def failures(self):
        return [item["name"] for item in self.items if not item["passed"]]

    def as_list(self):
        return list(self.items)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_summary(filesystem, config_digest, checks, fitted, started, failure=None, extra=None):
    """summary.json; written on success and on failure alike"""
    summary = {
        "config_hash": config_digest,
        "passed": checks.passed and failure is None,
        "assertions": checks.as_list(),
        "fitted": fitted,
        "runtime_seconds": round(time.monotonic() - started, 3),
        "failure": failure,
    }
    if extra:
        summary.update(extra)
    summary = _jsonable(summary)
    filesystem.write_json("summary.json", summary)
    return summary
