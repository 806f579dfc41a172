"""Experiment configuration: nested dataclasses loaded from YAML with strict key checking."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import MODELS, QuadrotorParams
from .lift import B_MODES, INERTIA_MODES, DomainBounds, LiftConfig

SIGNAL_KINDS = ("random", "sine", "constant")


class ConfigError(ValueError):
    pass


@dataclass
class ParamsConfig:
    m: float = 0.5
    J: list = field(default_factory=lambda: [2.32e-3, 2.32e-3, 4.0e-3])
    kt: float = 1e-5
    km: float = 1e-7
    l: float = 0.175
    g: float = 9.81

    def build(self) -> QuadrotorParams:
        J = np.asarray(self.J, dtype=float)
        if J.shape == (3,):
            J = np.diag(J)
        if J.shape != (3, 3):
            raise ConfigError("params.J must be a 3-vector (diagonal) or a 3x3 matrix")
        try:
            return QuadrotorParams(m=self.m, J=J, kt=self.kt, km=self.km, l=self.l, g=self.g)
        except ValueError as exc:
            raise ConfigError(f"params: {exc}") from exc


@dataclass
class LiftSettings:
    grid: list = field(default_factory=lambda: [5, 15, 25])
    normalized: bool = True
    omega0: typing.Optional[float] = None
    v0: typing.Optional[float] = None
    margin: float = 1.25
    b_construction: str = "columnwise"
    literal_scaling: bool = False
    input_inertia: str = "inverse"

    def orders(self) -> list:
        """Grid entries as ``(N1, N2)`` pairs; a bare integer means ``N1 = N2``."""
        out = []
        for g in self.grid:
            if isinstance(g, int):
                out.append((g, g))
            elif isinstance(g, (list, tuple)) and len(g) == 2:
                out.append((int(g[0]), int(g[1])))
            else:
                raise ConfigError(f"lift.grid entry {g!r} must be an int or [N1, N2]")
        return out

    def build(self, N1: int, N2: int, max_omega: float, max_v: float) -> LiftConfig:
        if not self.normalized:
            return LiftConfig(N1, N2, normalized=False, b_construction=self.b_construction,
                              literal_scaling=self.literal_scaling,
                              input_inertia=self.input_inertia)
        w0 = self.omega0 if self.omega0 is not None else np.sqrt(2) * self.margin * max(max_omega, 1e-9)
        v0 = self.v0 if self.v0 is not None else self.margin * max(max_v, 1e-9)
        return LiftConfig(N1, N2, normalized=True, omega0=float(w0), v0=float(v0),
                          b_construction=self.b_construction,
                          literal_scaling=self.literal_scaling,
                          input_inertia=self.input_inertia)


@dataclass
class SignalConfig:
    kind: str = "random"
    amplitude: float = 0.001
    gamma_low: float = -5.0
    gamma_high: float = 5.0
    carrier: float = 0.1
    hold_steps: int = 1


@dataclass
class InitialConfig:
    omega: list = field(default_factory=lambda: [0.05, 0.05, 0.05])
    v: list = field(default_factory=lambda: [0.1, 0.1, 0.1])
    p: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    attitude: list = field(default_factory=lambda: [0.0, 0.0, 0.0])   # rotation vector


@dataclass
class BaselineConfig:
    n_trajectories: int = 20          # 0 disables the fit
    horizon: float = 10.0
    omega_range: float = 0.15
    v_range: float = 0.3
    gravity_frame: str = "inertial"
    compare_orders: list = field(default_factory=lambda: [25, 15])


@dataclass
class AuditConfig:
    omega_bar: float = 0.6 / 2 ** 0.5
    v_bar: float = 0.9
    samples: int = 10_000
    k_max: int = 30
    input_bound: float = 1.0
    equivalence_samples: int = 1000
    controllability_orders: list = field(default_factory=lambda: [[2, 2], [3, 3], [5, 5]])
    consistency_horizon: float = 10.0
    consistency_orders: list = field(default_factory=lambda: [15, 15])
    consistency_tol: float = 1e-2

    def bounds(self) -> DomainBounds:
        return DomainBounds(self.omega_bar, self.v_bar)


@dataclass
class RecoveryConfig:
    amplitude: float = 30.0
    t_final: float = 10.0
    n_samples: int = 10
    orders: list = field(default_factory=lambda: [15, 25])
    perturbations: int = 100


@dataclass
class ExperimentConfig:
    params: ParamsConfig = field(default_factory=ParamsConfig)
    lift: LiftSettings = field(default_factory=LiftSettings)
    signal: SignalConfig = field(default_factory=SignalConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    t_final: float = 60.0
    dt: float = 1e-3
    seed: int = 0
    reference_model: str = "simplified"
    output_dir: str = "runs/default"
    record_stride: int = 100
    report_times: list = field(default_factory=lambda: [30.0, 60.0])

    def validate(self) -> "ExperimentConfig":
        if self.reference_model not in MODELS:
            raise ConfigError(f"reference_model must be one of {MODELS}")
        if self.dt <= 0 or self.t_final <= 0:
            raise ConfigError("dt and t_final must be positive")
        n = self.t_final / self.dt
        if abs(n - round(n)) > 1e-6:
            raise ConfigError("t_final must be a multiple of dt")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.signal.kind not in SIGNAL_KINDS:
            raise ConfigError(f"signal.kind must be one of {SIGNAL_KINDS}")
        if self.signal.hold_steps < 1:
            raise ConfigError("signal.hold_steps must be >= 1")
        if self.signal.gamma_low > self.signal.gamma_high:
            raise ConfigError("signal.gamma_low must not exceed signal.gamma_high")
        if self.lift.b_construction not in B_MODES:
            raise ConfigError(f"lift.b_construction must be one of {B_MODES}")
        if self.lift.input_inertia not in INERTIA_MODES:
            raise ConfigError(f"lift.input_inertia must be one of {INERTIA_MODES}")
        if self.baseline.gravity_frame not in ("inertial", "body"):
            raise ConfigError("baseline.gravity_frame must be 'inertial' or 'body'")
        if self.baseline.n_trajectories < 0:
            raise ConfigError("baseline.n_trajectories must be >= 0")
        if not self.lift.grid:
            raise ConfigError("lift.grid must not be empty")
        for N1, N2 in self.lift.orders():
            if N1 < 1 or N2 < 1:
                raise ConfigError("lift orders must be >= 1")
        for t in self.report_times:
            if t > self.t_final + 1e-12:
                raise ConfigError(f"report time {t} exceeds t_final")
        self.params.build()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


def _coerce(tp, value, where):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, where)
    if origin is typing.Union:                                   # Optional[float]
        if value is None:
            return None
        inner = [a for a in typing.get_args(tp) if a is not type(None)][0]
        return _coerce(inner, value, where)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    return value


def _from_dict(cls, data, where="config"):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, data).validate()


def load_config(path=None) -> ExperimentConfig:
    """Read a YAML config; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
