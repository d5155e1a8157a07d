"""Scenario configuration: flat ``section.key = value`` text with ``#`` comments.

Parsing keeps the text form of every value (so parse -> serialize -> parse
is the identity); typing and validation happen when a scenario is built,
and errors name the offending key and, when known, its line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .harvester import DEFAULT_Q_FACTOR, HarvesterParams, PPA4011
from .interface import TABLE1, ControllerParams
from .loads import ParallelImpedance, VoltageGenerator
from .mppt import PnOConfig
from .transient import AccelProfile, SimConfig, SimConfigError


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


_HARVESTER_KEYS = {
    "harvester.delta_v_per_g": "delta",
    "harvester.rho": "rho",
    "harvester.f_res_hz": "f_res",
    "harvester.c_p_f": "c_p",
    "harvester.q_factor": "q_factor",
}
_CONTROLLER_FIELDS = tuple(f.name for f in fields(ControllerParams) if f.name != "aux")

# key -> kind; "float", "int", "str", "floats" (comma separated list)
SCHEMA: dict[str, str] = {
    **{k: "float" for k in _HARVESTER_KEYS},
    **{f"controller.{name}": "float" for name in _CONTROLLER_FIELDS},
    "load.kind": "str",  # matched | impedance | generator | pno
    "load.r_ohm": "float",
    "load.x_ohm": "float",
    "load.v_volts": "float",
    "load.phi_rad": "float",
    "profile.kind": "str",  # constant | step | square
    "profile.a0_g": "float",
    "profile.a1_g": "float",
    "profile.t_step_s": "float",
    "profile.period_s": "float",
    "profile.duration_s": "float",
    "profile.drive_freq_hz": "float",
    "sim.fidelity": "str",
    "sim.dt_s": "float",
    "sim.t_end_s": "float",
    "sim.record_decimation": "int",
    "sim.q_factor_override": "float",
    "sim.conditioning": "str",
    "sim.conditioning_corner_hz": "float",
    "mppt.v_step": "float",
    "mppt.phi_step": "float",
    "mppt.dwell_periods": "int",
    "mppt.measure_periods": "int",
    "mppt.v_start": "float",
    "mppt.phi_start": "float",
    "analyze.a_max_g": "float",
    "analyze.ratios": "floats",
    "identify.amplitudes": "floats",
    "identify.noise": "float",
}


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


PRESETS: dict[str, dict[str, str]] = {
    "ppa4011": {
        "harvester.delta_v_per_g": _fmt(PPA4011.delta),
        "harvester.rho": _fmt(PPA4011.rho),
        "harvester.f_res_hz": _fmt(PPA4011.f_res),
        "harvester.c_p_f": _fmt(PPA4011.c_p),
        "harvester.q_factor": _fmt(DEFAULT_Q_FACTOR),
    },
    "table1": {f"controller.{name}": _fmt(getattr(TABLE1, name)) for name in _CONTROLLER_FIELDS},
}


@dataclass
class RawConfig:
    """Ordered key/value text pairs plus the line each key came from."""

    values: dict[str, str]
    lines: dict[str, int]

    def merged(self, other: "RawConfig") -> "RawConfig":
        values = {**self.values, **other.values}
        lines = {**self.lines, **other.lines}
        return RawConfig(values, lines)


def parse_config(text: str) -> RawConfig:
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=n)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", key=key, line=n)
        if not value:
            raise ConfigError("empty value", key=key, line=n)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key=key, line=n)
        values[key] = value
        lines[key] = n
    return RawConfig(values, lines)


def serialize_config(cfg: RawConfig | dict[str, str]) -> str:
    values = cfg.values if isinstance(cfg, RawConfig) else cfg
    out, section = [], None
    for key, value in values.items():
        head = key.split(".", 1)[0]
        if head != section:
            if out:
                out.append("")
            out.append(f"# {head}")
            section = head
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


def preset(name: str) -> RawConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (known: {', '.join(sorted(PRESETS))})")
    return RawConfig(dict(PRESETS[name]), {})


class Typed:
    """Typed read access to a :class:`RawConfig` with key/line diagnostics."""

    def __init__(self, raw: RawConfig):
        self.raw = raw

    def __contains__(self, key: str) -> bool:
        return key in self.raw.values

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, key=key, line=self.raw.lines.get(key))

    def get(self, key: str, default=None):
        if key not in self.raw.values:
            return default
        text = self.raw.values[key]
        kind = SCHEMA[key]
        try:
            if kind == "float":
                value = float(text)
                if not math.isfinite(value):
                    raise ValueError
                return value
            if kind == "int":
                return int(text)
            if kind == "floats":
                return [float(part) for part in text.split(",") if part.strip()]
            return text
        except ValueError:
            raise self.error(key, f"cannot read {text!r} as {kind}") from None

    def require(self, key: str):
        if key not in self.raw.values:
            raise ConfigError("missing required key", key=key)
        return self.get(key)


def build_harvester(t: Typed) -> HarvesterParams:
    kwargs = {}
    for key, name in _HARVESTER_KEYS.items():
        if name == "q_factor":
            kwargs[name] = t.get(key, DEFAULT_Q_FACTOR)
        else:
            kwargs[name] = t.require(key)
    try:
        return HarvesterParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def controller_overrides(t: Typed) -> dict[str, float]:
    return {name: t.get(f"controller.{name}") for name in _CONTROLLER_FIELDS if f"controller.{name}" in t}


def build_controller(t: Typed) -> ControllerParams | None:
    values = controller_overrides(t)
    if not values:
        return None
    try:
        return ControllerParams(**{**{n: getattr(TABLE1, n) for n in _CONTROLLER_FIELDS}, **values})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"controller: {exc}") from None


def build_profile(t: Typed, h: HarvesterParams) -> AccelProfile:
    kind = t.get("profile.kind", "constant")
    f = t.get("profile.drive_freq_hz", h.f_res)
    duration = t.get("profile.duration_s", 0.5)
    a0 = t.get("profile.a0_g", 1.0)
    try:
        if duration <= 0:
            raise SimConfigError("duration must be > 0")
        if kind == "constant":
            return AccelProfile.constant(a0, duration, f)
        if kind == "step":
            return AccelProfile.step(a0, t.require("profile.a1_g"), t.require("profile.t_step_s"), duration, f)
        if kind == "square":
            return AccelProfile.periodic_square(a0, t.require("profile.a1_g"), t.require("profile.period_s"), duration, f)
    except SimConfigError as exc:
        key = "profile.duration_s" if "duration" in str(exc) else "profile.kind"
        raise t.error(key, str(exc)) from None
    raise t.error("profile.kind", f"unknown profile kind {kind!r}")


def build_sim(t: Typed) -> SimConfig:
    fidelity = t.get("sim.fidelity", "behavioral")
    switched = fidelity == "switched"
    try:
        return SimConfig(
            dt=t.get("sim.dt_s", 0.25e-6 if switched else 2e-6),
            t_end=t.get("sim.t_end_s"),
            fidelity=fidelity,
            record_decimation=t.get("sim.record_decimation", 200 if switched else 50),
            q_factor_override=t.get("sim.q_factor_override"),
            conditioning=t.get("sim.conditioning", "approximate"),
            conditioning_corner_hz=t.get("sim.conditioning_corner_hz", 2e3),
        )
    except SimConfigError as exc:
        raise ConfigError(f"sim: {exc}") from None


def build_load(t: Typed):
    """Behavioral load, ``"matched"``, ``"pno"`` or ``None``."""
    if "load.kind" not in t:
        return None
    kind = t.get("load.kind")
    try:
        if kind == "matched":
            return "matched"
        if kind == "pno":
            return "pno"
        if kind == "impedance":
            return ParallelImpedance(t.require("load.r_ohm"), t.require("load.x_ohm"))
        if kind == "generator":
            return VoltageGenerator(t.require("load.v_volts"), t.get("load.phi_rad", 0.0))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"load: {exc}") from None
    raise t.error("load.kind", f"unknown load kind {kind!r}")


def build_pno(t: Typed) -> tuple[PnOConfig, tuple[float, float]]:
    d = PnOConfig()
    try:
        cfg = PnOConfig(
            v_step=t.get("mppt.v_step", d.v_step),
            phi_step=t.get("mppt.phi_step", d.phi_step),
            dwell_periods=t.get("mppt.dwell_periods", d.dwell_periods),
            measure_periods=t.get("mppt.measure_periods", d.measure_periods),
        )
    except SimConfigError as exc:
        raise ConfigError(f"mppt: {exc}") from None
    return cfg, (t.get("mppt.v_start", 2.0), t.get("mppt.phi_start", 0.3))
