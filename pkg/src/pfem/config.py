"""Scenario configuration files (TOML). Unknown sections and keys are hard errors.

Layout::

    [model]      ModelConfig fields (model, n, q_order, p_order, rho, ...)
    [run]        integrator, dt, t_end, snapshots, compare_linearized
    [signal]     sides = {up = 1.0, left = -1.0}, amplitude (number or "auto"),
                 target, factor, omega, func, t0, t1
    [spectrum]   count
    [converge]   pairs = [[1, 0], [1, 1, "continuous"]], levels = [8, 16]
    [verify]     seed, nstates, nfd
    [output]     dir
"""
from dataclasses import dataclass, field, fields
import math
from pathlib import Path
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .models import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    integrator: str = "midpoint"
    dt: float = 1e-3
    t_end: float = 1.0
    snapshots: list = field(default_factory=list)
    compare_linearized: bool = False

    def __post_init__(self):
        if self.integrator not in ("midpoint", "rk4"):
            raise ConfigError(f"run.integrator must be 'midpoint' or 'rk4', got {self.integrator!r}")
        if not self.dt > 0:
            raise ConfigError(f"run.dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigError(f"run.t_end must be positive, got {self.t_end}")
        for t in self.snapshots:
            if not 0 <= t <= self.t_end:
                raise ConfigError(f"run.snapshots entry {t} lies outside [0, t_end]")


@dataclass
class SignalConfig:
    sides: dict = field(default_factory=dict)
    amplitude: object = 1.0  # number, or "auto" for pilot-run calibration
    target: float = 2e-4  # max |h - h0|/h0 aimed at by "auto"
    factor: float = 1.0  # multiplies the (possibly calibrated) amplitude
    omega: float = 2 * math.pi
    func: str = "cos"
    t0: float = 0.0
    t1: float = math.inf

    def __post_init__(self):
        if not isinstance(self.sides, dict):
            raise ConfigError("signal.sides must be a table {side = amplitude}")
        if not (self.amplitude == "auto" or isinstance(self.amplitude, (int, float))):
            raise ConfigError(f"signal.amplitude must be a number or 'auto', got {self.amplitude!r}")
        if self.func not in ("cos", "sin", "const"):
            raise ConfigError(f"signal.func must be cos, sin or const, got {self.func!r}")
        if self.t1 < self.t0:
            raise ConfigError("signal.t1 must be >= signal.t0")
        if not self.target > 0:
            raise ConfigError("signal.target must be positive")


@dataclass
class SpectrumConfig:
    count: int = 10


@dataclass
class ConvergeConfig:
    pairs: list = field(default_factory=lambda: [[1, 0], [1, 1]])
    levels: list = field(default_factory=lambda: [8, 16, 32])

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ConfigError("converge.levels needs at least 2 refinement levels")
        for p in self.pairs:
            if not 2 <= len(p) <= 3:
                raise ConfigError(f"converge.pairs entry {p} must be [q, p] or [q, p, continuity]")


@dataclass
class VerifySection:
    seed: int = 42
    nstates: int = 100
    nfd: int = 20


@dataclass
class OutputConfig:
    dir: str = "out"


@dataclass
class ScenarioConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    run: RunConfig = field(default_factory=RunConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    converge: ConvergeConfig = field(default_factory=ConvergeConfig)
    verify: VerifySection = field(default_factory=VerifySection)
    output: OutputConfig = field(default_factory=OutputConfig)
    has_model: bool = False  # whether the file carried a [model] section


SECTIONS = {"model": ModelConfig, "run": RunConfig, "signal": SignalConfig,
            "spectrum": SpectrumConfig, "converge": ConvergeConfig, "verify": VerifySection,
            "output": OutputConfig}


def _section(name, cls, table):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    bad = sorted(set(table) - known)
    if bad:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(bad)}")
    try:
        return cls(**table)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _check_sides(cfg: ScenarioConfig) -> None:
    model = cfg.model.model
    if model in ("swe1d", "swe1d-varwidth"):
        allowed = ("left", "right")
    elif model == "swe2d":
        allowed = ("down", "right", "up", "left")
    elif model == "swe2d-polar":
        allowed = ("outer",)
    else:
        allowed = ()
    bad = sorted(set(cfg.signal.sides) - set(allowed))
    if bad:
        raise ConfigError(f"signal.sides {bad} do not exist for model {model!r}; allowed: {allowed}")


def config_from_dict(d: dict) -> ScenarioConfig:
    bad = sorted(set(d) - set(SECTIONS))
    if bad:
        raise ConfigError(f"unknown section(s): {', '.join(bad)}")
    kw = {name: _section(name, cls, d[name]) for name, cls in SECTIONS.items() if name in d}
    cfg = ScenarioConfig(**kw, has_model="model" in d)
    _check_sides(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(d)
