"""Sectioned key-value run configuration (INI syntax) and sweep specifications."""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .model import CircuitParams, WireParams, majorana_epsilon
from .protocol import ProtocolConfig
from .spectral import PhaseGrid

_ANGLE_RE = re.compile(
    r"^\s*(?P<coef>[+-]?(?:\d+\.?\d*|\.\d+)?(?:[eE][+-]?\d+)?)\s*\*?\s*pi"
    r"\s*(?:/\s*(?P<den>\d+\.?\d*))?\s*$"
)


def parse_angle(text: str) -> float:
    """Parse ``6.28``, ``2pi``, ``-6*pi`` or ``pi/2``."""
    text = str(text).strip()
    m = _ANGLE_RE.match(text)
    if m:
        coef = m.group("coef")
        value = float(coef) if coef not in ("", "+", "-") else float(coef + "1")
        value *= math.pi
        if m.group("den"):
            value /= float(m.group("den"))
        return value
    return float(text)


def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_optional_float(text: str):
    t = str(text).strip().lower()
    if t in ("", "none", "auto"):
        return None
    return float(t)


def parse_float_list(text: str):
    t = str(text).strip()
    if not t:
        return None
    return tuple(parse_angle(v) for v in re.split(r"[,\s]+", t) if v)


# section -> key -> (parser, default text)
SCHEMA = {
    "circuit": {
        "E_c": (float, "3.0"),
        "E_L": (float, "1.0"),
        "E_m": (float, "25.0"),
        "delta_gap": (float, "200.0"),
        "conductance": (parse_optional_float, "auto"),
        "epsilon": (float, "0.025"),
        "junction_mode": (str, "topological"),
        "charge_unit": (str, "electron"),
        "phi_e": (parse_angle, "2pi"),
    },
    "wire": {
        "B": (float, "250.0"),
        "mu": (float, "100.0"),
        "L_wire": (float, "2.0"),
        "xi": (float, "0.2413"),
        "epsilon0": (float, "100.0"),
        "derive_epsilon": (parse_bool, "false"),
    },
    "grid": {
        "phi_min": (parse_angle, "-6pi"),
        "phi_max": (parse_angle, "10pi"),
        "n": (int, "4096"),
    },
    "spectrum": {
        "k": (int, "6"),
        "model": (str, "even"),
        "wavefunctions": (parse_bool, "false"),
    },
    "dynamics": {
        "dt": (float, "1e-3"),
        "n_modes": (int, "128"),
    },
    "protocol": {
        "init_mode": (str, "ideal_left"),
        "hold_start": (float, "0"),
        "hold_stop": (float, "80"),
        "hold_step": (float, "2"),
        "hold_times": (parse_float_list, ""),
        "shots_per_point": (int, "400"),
        "tau_qp_ns": (float, "10000"),
        "measurement": (str, "projective_sampling"),
        "seed": (int, "0"),
        "ramp_time": (float, "0"),
        "reset_bias": (parse_angle, "0"),
    },
    "sweep": {
        "parameter": (str, ""),
        "values": (parse_float_list, ""),
        "start": (float, "0"),
        "stop": (float, "1"),
        "count": (int, "1"),
        "scale": (str, "linear"),
        "target": (str, "splitting"),
    },
}

SPECTRUM_MODELS = ("even", "odd", "spinor")
SWEEP_TARGETS = ("splitting", "separation", "visibility")

_FIELD_ALIASES = {"D": "conductance"}


class RunConfig:
    """Parsed and type-checked configuration; unknown sections or keys are rejected."""

    def __init__(self, values: dict | None = None):
        self.values = {s: {k: p(d) for k, (p, d) in keys.items()}
                       for s, keys in SCHEMA.items()}
        for path, value in (values or {}).items():
            self.set(path, value)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep key case
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        cfg = cls()
        for section in parser.sections():
            for key, value in parser.items(section):
                cfg.set(f"{section}.{key}", value)
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def set(self, path: str, value):
        section, key = _split_path(path)
        parser, _ = SCHEMA[section][key]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise ConfigError(f"{path}: invalid value {value!r} ({exc})", key=path) from None
        self.values[section][key] = value

    def get(self, path: str):
        section, key = _split_path(path)
        return self.values[section][key]

    def copy(self) -> "RunConfig":
        out = RunConfig()
        out.values = {s: dict(kv) for s, kv in self.values.items()}
        return out

    def to_text(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            for key, value in keys.items():
                if value is None:
                    value = ""
                elif isinstance(value, tuple):
                    value = ", ".join(repr(v) for v in value)
                elif isinstance(value, float):
                    value = repr(value)
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)

    # -- typed views -------------------------------------------------------

    def wire_params(self) -> WireParams:
        w = self.values["wire"]
        return _build(WireParams, "wire", B=w["B"], mu=w["mu"], L_wire=w["L_wire"],
                      xi=w["xi"], epsilon0=w["epsilon0"])

    def circuit_params(self) -> CircuitParams:
        c = self.values["circuit"]
        eps = c["epsilon"]
        if self.values["wire"]["derive_epsilon"]:
            eps = majorana_epsilon(self.wire_params())
        return _build(CircuitParams, "circuit", E_c=c["E_c"], E_L=c["E_L"], E_m=c["E_m"],
                      delta_gap=c["delta_gap"], conductance=c["conductance"], epsilon=eps,
                      junction_mode=c["junction_mode"], charge_unit=c["charge_unit"])

    @property
    def phi_e(self) -> float:
        return self.values["circuit"]["phi_e"]

    def grid(self) -> PhaseGrid:
        g = self.values["grid"]
        return _build(PhaseGrid, "grid", phi_min=g["phi_min"], phi_max=g["phi_max"], n=g["n"])

    def hold_times(self):
        p = self.values["protocol"]
        if p["hold_times"]:
            return p["hold_times"]
        if p["hold_step"] <= 0:
            raise ConfigError("protocol.hold_step must be positive", key="protocol.hold_step")
        n = int(math.floor((p["hold_stop"] - p["hold_start"]) / p["hold_step"] + 1e-9)) + 1
        return tuple(float(p["hold_start"] + i * p["hold_step"]) for i in range(max(n, 1)))

    def protocol_config(self) -> ProtocolConfig:
        p = self.values["protocol"]
        tau = p["tau_qp_ns"]
        if tau < 0:
            raise ConfigError("protocol.tau_qp_ns must be non-negative (0 or inf disables)",
                              key="protocol.tau_qp_ns")
        rate = 0.0 if tau == 0 or math.isinf(tau) else 1.0 / tau
        return _build(
            ProtocolConfig, "protocol",
            circuit=self.circuit_params(), grid=self.grid(), init_mode=p["init_mode"],
            hold_times=self.hold_times(), shots_per_point=p["shots_per_point"],
            poisoning_rate=rate, measurement=p["measurement"], seed=p["seed"],
            ramp_time=p["ramp_time"], dt=self.values["dynamics"]["dt"],
            reset_bias=p["reset_bias"], hold_bias=self.phi_e,
            n_modes=self.values["dynamics"]["n_modes"],
        )

    def spectrum_model(self) -> str:
        model = self.values["spectrum"]["model"]
        if model not in SPECTRUM_MODELS:
            raise ConfigError(f"spectrum.model must be one of {SPECTRUM_MODELS}",
                              key="spectrum.model")
        return model

    def validate(self):
        self.circuit_params()
        self.wire_params()
        self.grid()
        self.protocol_config()
        self.spectrum_model()
        return self


def _split_path(path: str):
    if "." not in path:
        raise ConfigError(f"config key {path!r} must look like section.key", key=path)
    section, key = path.split(".", 1)
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section {section!r}", key=path)
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {path!r}", key=path)
    return section, key


def _build(cls, section, **kwargs):
    try:
        return cls(**kwargs)
    except DomainError as exc:
        msg = str(exc)
        key = next((k for k in sorted(kwargs, key=len, reverse=True)
                    if re.search(rf"\b{re.escape(k)}\b", msg)), None)
        if key is None:
            key = next((k for a, k in _FIELD_ALIASES.items() if re.search(rf"\b{a}\b", msg)), None)
        path = f"{section}.{key}" if key else section
        raise ConfigError(f"{path}: {msg}", key=path) from exc


@dataclass(frozen=True)
class SweepSpec:
    """Values for one config key: an explicit list or a linear/log range."""

    parameter: str
    values: tuple[float, ...] | None = None
    start: float = 0.0
    stop: float = 1.0
    count: int = 1
    scale: str = "linear"

    def __post_init__(self):
        _split_path(self.parameter)
        if self.values is None:
            if self.count < 1:
                raise ConfigError("sweep.count must be at least 1", key="sweep.count")
            if self.scale not in ("linear", "log"):
                raise ConfigError("sweep.scale must be linear or log", key="sweep.scale")
            if self.scale == "log" and not (self.start > 0 and self.stop > 0):
                raise ConfigError("log sweeps need positive endpoints", key="sweep.start")

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "SweepSpec":
        s = cfg.values["sweep"]
        if not s["parameter"]:
            raise ConfigError("sweep.parameter is required", key="sweep.parameter")
        return cls(parameter=s["parameter"], values=s["values"], start=s["start"],
                   stop=s["stop"], count=s["count"], scale=s["scale"])

    def points(self) -> tuple[float, ...]:
        if self.values is not None:
            return tuple(self.values)
        if self.count == 1:
            return (float(self.start),)
        if self.scale == "log":
            return tuple(float(v) for v in np.geomspace(self.start, self.stop, self.count))
        return tuple(float(v) for v in np.linspace(self.start, self.stop, self.count))
