"""
Run configuration: YAML documents validated into frozen dataclasses

Every section goes through ConfigValidator, which rejects keys it was never
asked about. Field errors carry the dotted field path and the YAML line.
"""

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from novikov.config import (
    DEFAULT_CFL,
    DEFAULT_DT_MAX,
    DEFAULT_MOLLIFIER_WIDTH,
    DEFAULT_NODES,
    DEFAULT_RECORD_EVERY,
    DEFAULT_X_LEFT,
    DEFAULT_X_RIGHT,
    MIN_WEIGHT_SCALE,
)
from novikov.diagnostics.weights import default_scale
from novikov.dynamics.evolution import SCHEMES, StepControl
from novikov.dynamics.profiles import PeakonSpec, TrainSpec, TrainSpecError
from novikov.grid.grid_field import Grid

EXPERIMENTS = ("simulate", "identities", "stability-sweep", "train")
INITIAL_KINDS = ("exact", "mollified", "train", "perturbed")
SWEEP_AXES = ("delta", "n", "w", "seed")


class ConfigError(ValueError):
    """Invalid run configuration, located by field path and line"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.field = field
        self.line = line
        where = field or "config"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class GridConfig:
    x_left: float = DEFAULT_X_LEFT
    x_right: float = DEFAULT_X_RIGHT
    n: int = DEFAULT_NODES

    def build(self) -> Grid:
        return Grid(self.x_left, self.x_right, self.n)


@dataclass(frozen=True)
class PeakonConfig:
    a: float = 1.0
    b: float = 1.0
    x0: float = 0.0


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "mollified"
    peakons: Tuple[PeakonConfig, ...] = (PeakonConfig(),)
    w: float = DEFAULT_MOLLIFIER_WIDTH
    L: Optional[float] = None
    amplitude: float = 0.0

    def peakon_specs(self) -> Tuple[PeakonSpec, ...]:
        return tuple(PeakonSpec(p.a, p.b, p.x0) for p in self.peakons)

    def train_spec(self) -> TrainSpec:
        return TrainSpec(self.peakon_specs(), self.L if self.L is not None else 0.0)


@dataclass(frozen=True)
class StepConfig:
    cfl: float = DEFAULT_CFL
    dt_max: float = DEFAULT_DT_MAX
    t_end: float = 10.0
    record_every: int = DEFAULT_RECORD_EVERY
    scheme: str = "particles"

    def build(self) -> StepControl:
        return StepControl(self.cfl, self.dt_max, self.t_end, self.record_every, self.scheme)


@dataclass(frozen=True)
class DiagnosticsConfig:
    stability: bool = True
    characteristics: int = 0  # number of seeds, 0 = off
    snapshots: bool = False
    K: float = MIN_WEIGHT_SCALE
    fuzz_states: int = 100
    fuzz_points: int = 100
    refinement_states: int = 4
    virial: bool = False


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "delta"
    values: Tuple[float, ...] = ()


@dataclass(frozen=True)
class Tolerances:
    conservation: float = 1e-3
    e0: float = 1e-2
    sign: float = 1e-6
    slope: float = 1e-6
    key: float = 1e-6
    peak_gap: float = 1e-6
    pointwise: float = 1e-3
    one_sided: float = 5e-3
    refinement_order: float = 1.0
    momentum_flow: float = 2e-2
    qx: float = 1e-2
    virial: float = 1e-3
    modulation: float = 1e-8
    speed: float = 0.15
    monotonicity: float = 1e-2
    peak: float = 0.3
    localized: float = 0.1
    separation_slack: float = 1.0
    separation_drop: float = 1.0  # times the square root of the initial orbit distance
    scaling_ratio: float = 3.0


@dataclass(frozen=True)
class OutputConfig:
    directory: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    step: StepConfig = field(default_factory=StepConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    sweep: Optional[SweepConfig] = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: OutputConfig = field(default_factory=OutputConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))

    def with_output(self, directory: str) -> "RunConfig":
        return replace(self, output=OutputConfig(str(directory)))

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["initial"]["peakons"] = [dict(p) for p in data["initial"]["peakons"]]
        if self.sweep is None:
            del data["sweep"]
        else:
            data["sweep"]["values"] = list(self.sweep.values)
        return data


def _line_index(node, path="", index=None) -> Dict[str, int]:
    """Dotted field path -> 1-based line, from the composed YAML tree"""
    if index is None:
        index = {}
    if node is None:
        return index
    if path:
        index.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            child = f"{path}.{key_node.value}" if path else str(key_node.value)
            index[child] = key_node.start_mark.line + 1
            _line_index(value_node, child, index)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_index(item, f"{path}[{i}]", index)
    return index


class ConfigValidator:
    """require/optional access to one mapping; finish() rejects unread keys"""

    def __init__(self, data, section: str, lines: Dict[str, int]):
        self.section = section
        self.lines = lines
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise self.error(f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.used = set()

    def path(self, key: str) -> str:
        return f"{self.section}.{key}" if self.section else key

    def error(self, message: str, key: Optional[str] = None) -> ConfigError:
        where = self.path(key) if key else (self.section or None)
        line = self.lines.get(where) if where else None
        return ConfigError(message, where, line)

    def require(self, key: str):
        """Get required field, raise if missing"""
        if key not in self.data:
            raise self.error(f"required field '{key}' is missing", key)
        self.used.add(key)
        return self.data[key]

    def optional(self, key: str, fallback=None):
        """Get optional field with fallback"""
        if key not in self.data:
            return fallback
        self.used.add(key)
        return self.data[key]

    def number(self, key: str, fallback: Optional[float], positive: bool = False) -> Optional[float]:
        value = self.optional(key, fallback)
        if value is None:
            return None
        if isinstance(value, str):
            # YAML 1.1 reads 1e-3 (no dot) as a string
            try:
                value = float(value)
            except ValueError:
                raise self.error(f"expected a number, got {value!r}", key) from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", key)
        if positive and not value > 0:
            raise self.error(f"must be positive, got {value}", key)
        return float(value)

    def integer(self, key: str, fallback: int, minimum: Optional[int] = None) -> int:
        value = self.optional(key, fallback)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(f"expected an integer, got {value!r}", key)
        if minimum is not None and value < minimum:
            raise self.error(f"must be >= {minimum}, got {value}", key)
        return value

    def boolean(self, key: str, fallback: bool) -> bool:
        value = self.optional(key, fallback)
        if not isinstance(value, bool):
            raise self.error(f"expected true or false, got {value!r}", key)
        return value

    def choice(self, key: str, options, fallback=None, required: bool = False) -> str:
        value = self.require(key) if required else self.optional(key, fallback)
        if value not in options:
            raise self.error(f"must be one of {', '.join(options)}, got {value!r}", key)
        return value

    def child(self, key: str) -> "ConfigValidator":
        return ConfigValidator(self.optional(key, {}), self.path(key), self.lines)

    def finish(self):
        unknown = sorted(str(k) for k in self.data if k not in self.used)
        if unknown:
            raise self.error(f"unknown key '{unknown[0]}'", unknown[0])


def _grid(v: ConfigValidator) -> GridConfig:
    defaults = GridConfig()
    cfg = GridConfig(
        x_left=v.number("x_left", defaults.x_left),
        x_right=v.number("x_right", defaults.x_right),
        n=v.integer("n", defaults.n),
    )
    v.finish()
    try:
        cfg.build()
    except ValueError as e:
        raise v.error(str(e)) from e
    return cfg


def _peakons(v: ConfigValidator) -> Tuple[PeakonConfig, ...]:
    raw = v.optional("peakons", None)
    if raw is None:
        return InitialConfig().peakons
    if not isinstance(raw, list) or not raw:
        raise v.error("expected a non-empty list of peakons", "peakons")

    peakons = []
    for i, entry in enumerate(raw):
        item = ConfigValidator(entry, f"{v.path('peakons')}[{i}]", v.lines)
        peakon = PeakonConfig(
            a=item.number("a", 1.0, positive=True),
            b=item.number("b", 1.0, positive=True),
            x0=item.number("x0", 0.0),
        )
        item.finish()
        peakons.append(peakon)
    return tuple(peakons)


def _initial(v: ConfigValidator) -> InitialConfig:
    defaults = InitialConfig()
    cfg = InitialConfig(
        kind=v.choice("kind", INITIAL_KINDS, defaults.kind),
        peakons=_peakons(v),
        w=v.number("w", defaults.w, positive=True),
        L=v.number("L", defaults.L, positive=True),
        amplitude=v.number("amplitude", defaults.amplitude),
    )
    v.finish()

    if cfg.amplitude < 0:
        raise v.error(f"must be >= 0, got {cfg.amplitude}", "amplitude")
    if cfg.kind == "train":
        if cfg.L is None:
            raise v.error("required field 'L' is missing for a train")
        try:
            cfg.train_spec()
        except TrainSpecError as e:
            raise v.error(str(e), e.field) from e
    elif len(cfg.peakons) != 1:
        raise v.error(f"kind '{cfg.kind}' takes exactly one peakon, got {len(cfg.peakons)}", "peakons")
    return cfg


def _step(v: ConfigValidator) -> StepConfig:
    defaults = StepConfig()
    cfg = StepConfig(
        cfl=v.number("cfl", defaults.cfl),
        dt_max=v.number("dt_max", defaults.dt_max),
        t_end=v.number("t_end", defaults.t_end),
        record_every=v.integer("record_every", defaults.record_every),
        scheme=v.choice("scheme", SCHEMES, defaults.scheme),
    )
    v.finish()
    try:
        cfg.build()
    except ValueError as e:
        key = str(e).split(" ", 1)[0]
        raise v.error(str(e), key if key in StepConfig.__dataclass_fields__ else None) from e
    return cfg


def _diagnostics(v: ConfigValidator, initial: InitialConfig) -> DiagnosticsConfig:
    defaults = DiagnosticsConfig()
    fallback_K = default_scale(initial.L) if initial.L is not None else defaults.K
    cfg = DiagnosticsConfig(
        stability=v.boolean("stability", defaults.stability),
        characteristics=v.integer("characteristics", defaults.characteristics, minimum=0),
        snapshots=v.boolean("snapshots", defaults.snapshots),
        K=v.number("K", fallback_K),
        fuzz_states=v.integer("fuzz_states", defaults.fuzz_states, minimum=0),
        fuzz_points=v.integer("fuzz_points", defaults.fuzz_points, minimum=1),
        refinement_states=v.integer("refinement_states", defaults.refinement_states, minimum=0),
        virial=v.boolean("virial", defaults.virial),
    )
    v.finish()
    if cfg.K < MIN_WEIGHT_SCALE:
        raise v.error(f"must be >= {MIN_WEIGHT_SCALE:g}, got {cfg.K}", "K")
    return cfg


def _sweep(v: ConfigValidator) -> SweepConfig:
    axis = v.choice("axis", SWEEP_AXES, required=True)
    raw = v.require("values")
    if not isinstance(raw, list):
        raise v.error("expected a list", "values")
    for i, value in enumerate(raw):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise v.error(f"values[{i}]: expected a number, got {value!r}", "values")
        if axis in ("n", "seed") and int(value) != value:
            raise v.error(f"axis '{axis}' takes integers, got {value!r}", "values")
    values = tuple(int(x) if axis in ("n", "seed") else float(x) for x in raw)
    v.finish()
    return SweepConfig(axis=axis, values=values)


def _tolerances(v: ConfigValidator) -> Tolerances:
    defaults = Tolerances()
    values = {f.name: v.number(f.name, getattr(defaults, f.name), positive=True) for f in fields(Tolerances)}
    v.finish()
    return Tolerances(**values)


def _output(v: ConfigValidator) -> OutputConfig:
    directory = v.optional("directory", None)
    if directory is not None and not isinstance(directory, str):
        raise v.error(f"expected a path string, got {directory!r}", "directory")
    v.finish()
    return OutputConfig(directory)


def parse_text(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
        tree = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed YAML in {source}: {getattr(e, 'problem', e)}", None, line) from e

    lines = _line_index(tree)
    root = ConfigValidator(data, "", lines)
    experiment = root.choice("experiment", EXPERIMENTS, required=True)
    seed = root.integer("seed", 0)
    grid = _grid(root.child("grid"))
    initial = _initial(root.child("initial"))
    step = _step(root.child("step"))
    diagnostics = _diagnostics(root.child("diagnostics"), initial)
    sweep = _sweep(root.child("sweep")) if "sweep" in root.data else None
    tolerances = _tolerances(root.child("tolerances"))
    output = _output(root.child("output"))
    root.finish()

    if experiment == "stability-sweep" and sweep is None:
        raise ConfigError("required section 'sweep' is missing for stability-sweep", "sweep")
    if experiment == "train" and initial.kind != "train":
        raise ConfigError("experiment 'train' needs initial.kind = train", "initial.kind", lines.get("initial.kind"))

    return RunConfig(
        experiment=experiment,
        seed=seed,
        grid=grid,
        initial=initial,
        step=step,
        diagnostics=diagnostics,
        sweep=sweep,
        tolerances=tolerances,
        output=output,
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_text(path.read_text(), str(path))


def serialize(config: RunConfig) -> str:
    return yaml.safe_dump(config.as_dict(), sort_keys=False, default_flow_style=False)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(serialize(config).encode("utf-8")).hexdigest()
