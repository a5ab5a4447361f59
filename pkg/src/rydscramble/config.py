"""Run configuration: nested dataclasses loaded strictly from YAML.

Unknown keys are rejected and every error carries the dotted field path.
"""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

KINDS = (
    "basis", "evolve", "echo-otoc", "forward-density", "compensation-scan",
    "fit", "spectrum", "scatter", "cluster",
)


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


@dataclass
class GeometryConfig:
    n_sites: int = 13
    spacing_um: float = 6.0


@dataclass
class DriveConfig:
    rabi_mhz: float
    detuning_mhz: float = 0.0
    ac_stark_mhz: list[float] | None = None


@dataclass
class InteractionConfig:
    v_nn_mhz: float = 12.0
    max_range: int | None = None


@dataclass
class ModelConfig:
    kind: str = "pxp"  # pxp | rydberg
    basis: str | None = None  # full | blockaded; default by kind
    compensation: bool = True
    reversal: str = "flip"


@dataclass
class EchoConfig:
    initial: str = "g"
    operator: str = "sigma_z"
    operator_site: int | None = None  # None: centre site (n + 1) // 2
    combine_neel: bool = True


@dataclass
class TimeConfig:
    start_us: float = 0.0
    stop_us: float = 1.6
    step_us: float = 0.02


@dataclass
class PropagatorConfig:
    method: str = "auto"
    tolerance: float = 1e-10
    krylov_dim: int = 30
    step_us: float | None = None
    dense_max_dim: int = 4096


@dataclass
class NoiseConfig:
    position_sigma_fraction: float = 0.05
    doppler_sigma_khz: float = 40.0
    depolarization_khz: float = 20.0
    dephasing_khz: float = 40.0
    n_trajectories: int = 300
    depolarization_kind: str = "pauli"
    doppler_site_multiplier: list[float] | None = None
    imprint_angle_sigma: float = 0.0


@dataclass
class MixtureEntry:
    config: str
    probability: float


@dataclass
class AnalysisConfig:
    window: list[float] = field(default_factory=lambda: [0.0, 3.0])
    subtract_background: bool = True
    reference_sites: list[int] | None = None
    snr_floor: float | None = None
    shapes: list[str] = field(default_factory=lambda: ["linear", "log", "power"])


@dataclass
class ForwardConfig:
    compare_flip_site: int | None = 7  # chi against sigma_x(site)|initial>; None: skip


@dataclass
class CompensationConfig:
    detunings_mhz: list[float] = field(default_factory=lambda: [0.05 * k for k in range(15)])
    window_us: float | None = None
    initials: list[str] = field(default_factory=lambda: ["g", "Z2"])


@dataclass
class FitConfig:
    input: str = "c_grid.csv"
    addressed_site: int | None = None


@dataclass
class SpectrumConfig:
    reference: str = "Z2"
    n_towers: int | None = None
    eigenstate_velocities: bool = False


@dataclass
class ScatterConfig:
    states: list[str] | None = None  # None: every blockaded product state


@dataclass
class ClusterConfig:
    perturbation_site: int | None = None
    reversal: str = "exact"


@dataclass
class RunConfig:
    experiment: str
    drive: DriveConfig
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    interaction: InteractionConfig = field(default_factory=InteractionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    echo: EchoConfig = field(default_factory=EchoConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    propagator: PropagatorConfig = field(default_factory=PropagatorConfig)
    noise: NoiseConfig | None = None
    mixture: list[MixtureEntry] = field(default_factory=list)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    forward: ForwardConfig = field(default_factory=ForwardConfig)
    compensation_scan: CompensationConfig = field(default_factory=CompensationConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    scatter: ScatterConfig = field(default_factory=ScatterConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    output_dir: str = "out"
    master_seed: int = 0

    def __post_init__(self):
        if self.experiment not in KINDS:
            raise ConfigError("experiment", f"unknown kind {self.experiment!r}; expected one of {list(KINDS)}")
        if self.drive.rabi_mhz <= 0:
            raise ConfigError("drive.rabi_mhz", "must be > 0")
        if self.model.kind not in ("pxp", "rydberg"):
            raise ConfigError("model.kind", "must be 'pxp' or 'rydberg'")
        if self.geometry.n_sites < 1:
            raise ConfigError("geometry.n_sites", "must be >= 1")
        if self.echo.operator_site is None:
            self.echo.operator_site = (self.geometry.n_sites + 1) // 2
        if not 1 <= self.echo.operator_site <= self.geometry.n_sites:
            raise ConfigError("echo.operator_site", f"outside 1..{self.geometry.n_sites}")
        if len(self.analysis.window) != 2:
            raise ConfigError("analysis.window", "needs [start, stop]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# --------------------------------------------------------------------------
# strict loader


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if value is None:
        raise ConfigError(path, "may not be null")
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return [_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp}")


def _build(cls, data, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")
    kwargs = {}
    for name, f in names.items():
        sub = f"{path}.{name}" if path else name
        if name in data:
            kwargs[name] = _convert(hints[name], data[name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(sub, "missing required field")
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if path and not exc.path.startswith(path):
            raise ConfigError(f"{path}.{exc.path}", str(exc).split(": ", 1)[-1]) from None
        raise


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data)


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("", f"could not parse {path}: {exc}") from exc
    if data is None:
        raise ConfigError("", f"{path} is empty")
    return config_from_dict(data)


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(cfg.to_yaml())
    return path


# --------------------------------------------------------------------------
# presets

_FIG3 = dict(
    geometry={"n_sites": 13, "spacing_um": 6.0},
    drive={"rabi_mhz": 2.5},
    interaction={"v_nn_mhz": 12.0},
    model={"kind": "rydberg", "compensation": True},
    echo={"operator_site": 7},
)

PRESETS: dict[str, dict] = {
    "fig3a": {**_FIG3, "experiment": "echo-otoc", "echo": {"initial": "g", "operator_site": 7}},
    "fig3b": {**_FIG3, "experiment": "echo-otoc", "echo": {"initial": "Z2", "operator_site": 7}},
    "fig4": {
        "experiment": "forward-density",
        "geometry": {"n_sites": 13},
        "drive": {"rabi_mhz": 2.5},
        "model": {"kind": "pxp"},
        "echo": {"initial": "Z2", "operator_site": 7},
        "forward": {"compare_flip_site": 7},
    },
    # variant (a): strong NN interaction with the NNN tail removed
    "sm-fig8": {
        "experiment": "echo-otoc",
        "geometry": {"n_sites": 13},
        "drive": {"rabi_mhz": 2.5, "detuning_mhz": 0.0},
        "interaction": {"v_nn_mhz": 120.0, "max_range": 1},
        "model": {"kind": "rydberg", "compensation": False},
        "echo": {"initial": "g", "operator_site": 7},
    },
    "sm-fig9": {
        **_FIG3,
        "experiment": "compensation-scan",
        "model": {"kind": "rydberg", "compensation": False},
        "compensation_scan": {"detunings_mhz": [round(0.05 * k, 10) for k in range(15)],
                              "initials": ["g", "Z2"]},
    },
    "sm-fig13": {
        "experiment": "spectrum",
        "geometry": {"n_sites": 11},
        "drive": {"rabi_mhz": 2.5},
        "model": {"kind": "pxp"},
        "echo": {"operator_site": 6},
        "spectrum": {"reference": "Z2", "eigenstate_velocities": True},
    },
    "sm-fig14": {
        "experiment": "scatter",
        "geometry": {"n_sites": 11},
        "drive": {"rabi_mhz": 2.5},
        "model": {"kind": "pxp"},
        "echo": {"operator_site": 6},
    },
    "sm-fig15": {
        "experiment": "cluster",
        "geometry": {"n_sites": 13},
        "drive": {"rabi_mhz": 2.5},
        "model": {"kind": "rydberg"},
        "echo": {"initial": "gggggrrgggggg", "operator_site": 7},
        "cluster": {"reversal": "exact"},
    },
}


class UnknownPresetError(KeyError):
    def __str__(self):
        return f"unknown preset {self.args[0]!r}; valid presets: {', '.join(PRESETS)}"


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise UnknownPresetError(name)
    return config_from_dict(PRESETS[name])
