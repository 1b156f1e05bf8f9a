"""Experiment files: a sectioned ``key = value`` format read with configparser.

Every field of :class:`~wmrctl.sim_engine.SimConfig` has a ``section.key``
address. Unknown sections or keys are rejected; omitted keys take the
defaults listed in ``SCHEMA``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable

from wmrctl.controllers import ChannelGains, KanayamaGains, PidGains
from wmrctl.errors import ParameterError
from wmrctl.nn_feedforward import FeatureScales
from wmrctl.sim_engine import NnConfig, SimConfig
from wmrctl.trajectory import TrajectorySpec
from wmrctl.vehicle_model import RobotParams, UncertaintySpec


class ConfigError(ParameterError):
    """Invalid experiment file. ``path`` is the offending ``section.key`` when known."""

    def __init__(self, message, path=None, lineno=None):
        super().__init__(message)
        self.path = path
        self.lineno = lineno


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    return int(text.strip())


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {text!r}")
    return v


def _opt_float(text: str):
    return None if text.strip().lower() == "none" else _float(text)


def _opt_str(text: str):
    t = text.strip()
    return None if t == "" or t.lower() == "none" else t


def _points(text: str) -> tuple[tuple[float, float], ...]:
    """``"0,0; 2,0; 2,2"`` -> ``((0, 0), (2, 0), (2, 2))``."""
    pts = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        xy = chunk.split(",")
        if len(xy) != 2:
            raise ValueError(f"waypoint {chunk.strip()!r} is not 'x, y'")
        pts.append((_float(xy[0]), _float(xy[1])))
    return tuple(pts)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "; ".join(f"{x!r}, {y!r}" for x, y in value)
    return str(value)


@dataclass(frozen=True)
class Field:
    parse: Callable[[str], object]
    default: object


def _section(cls) -> dict[str, Field]:
    return {f.name: Field(_float, f.default) for f in fields(cls)}


_default_scales = FeatureScales.from_limits(RobotParams().V_AV_max, RobotParams().theta_dot_max)

SCHEMA: dict[str, dict[str, Field]] = {
    "robot": _section(RobotParams),
    "uncertainty": _section(UncertaintySpec),
    "trajectory": {
        "kind": Field(lambda s: s.strip().lower(), "circle"),
        "speed": Field(_float, 0.5),
        "radius": Field(_float, 2.0),
        "start_x": Field(_float, 0.0),
        "start_y": Field(_float, 0.0),
        "heading": Field(_float, 0.0),
        "duration": Field(_opt_float, None),  # none: same as sim.duration
        "waypoints": Field(_points, ()),
        "turn_rate": Field(_float, 0.5),
        "ramp_time": Field(_float, 1.0),
    },
    "motion_controller": _section(KanayamaGains),
    "velocity_controller": {
        f"{g}_{ch}": Field(_float, getattr(ChannelGains(), g))
        for ch in ("v", "omega")
        for g in ("k_p", "k_i", "k_d", "i_max")
    },
    "nn": {
        "enabled": Field(_bool, True),
        "hidden": Field(_int, 8),
        "learning_rate": Field(_float, 1e-3),
        "grad_clip": Field(_opt_float, 10.0),
        "init_scale": Field(_float, 0.1),
        "seed": Field(_int, 0),
        # none: derived from robot.V_AV_max and robot.theta_dot_max
        **{f"scale_{f.name}": Field(_opt_float, None) for f in fields(FeatureScales)},
        "weights_file": Field(_opt_str, None),
    },
    "sim": {
        "plant_dt": Field(_float, 1e-3),
        "control_every": Field(_int, 10),
        "duration": Field(_float, 60.0),
        "noise_std_v": Field(_float, 0.0),
        "noise_std_omega": Field(_float, 0.0),
        "seed": Field(_int, 0),
        "integrator": Field(lambda s: s.strip().lower(), "rk4"),
        "init_dx": Field(_float, 0.0),
        "init_dy": Field(_float, 0.0),
        "init_dtheta": Field(_float, 0.0),
        "init_v": Field(_float, 0.0),
        "init_omega": Field(_float, 0.0),
    },
}

SWEEPABLE = tuple(
    [f"uncertainty.{k}" for k in SCHEMA["uncertainty"]]
    + ["nn.learning_rate"]
    + [f"motion_controller.{k}" for k in SCHEMA["motion_controller"]]
    + [f"velocity_controller.{k}" for k in SCHEMA["velocity_controller"]]
)


def _build(values: dict[str, dict[str, object]]) -> SimConfig:
    def section(name, build):
        try:
            return build(values[name])
        except ConfigError:
            raise
        except (ParameterError, ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}] {exc}", path=name) from exc

    robot = section("robot", lambda s: RobotParams(**s))
    sim = values["sim"]

    def trajectory(s):
        s = dict(s)
        if s["duration"] is None:
            s["duration"] = sim["duration"]
        return TrajectorySpec(**s, v_max=robot.V_AV_max, omega_max=robot.theta_dot_max)

    def pid(s):
        return PidGains(
            *(ChannelGains(s[f"k_p_{ch}"], s[f"k_i_{ch}"], s[f"k_d_{ch}"], s[f"i_max_{ch}"]) for ch in ("v", "omega"))
        )

    def nn(s):
        s = dict(s)
        scale_keys = [f"scale_{f.name}" for f in fields(FeatureScales)]
        given = [s.pop(k) for k in scale_keys]
        scales = None
        if any(v is not None for v in given):
            base = FeatureScales.from_limits(robot.V_AV_max, robot.theta_dot_max)
            scales = FeatureScales(*(g if g is not None else getattr(base, f.name) for g, f in zip(given, fields(FeatureScales))))
        return NnConfig(feature_scales=scales, **s)

    parts = dict(
        robot=robot,
        uncertainty=section("uncertainty", lambda s: UncertaintySpec(**s)),
        trajectory=section("trajectory", trajectory),
        motion_gains=section("motion_controller", lambda s: KanayamaGains(**s)),
        pid_gains=section("velocity_controller", pid),
        nn=section("nn", nn),
    )
    return section("sim", lambda s: SimConfig(**parts, **s))


def _parse_value(sec: str, key: str, text: str):
    spec = SCHEMA[sec].get(key)
    if spec is None:
        raise ConfigError(f"unknown key {sec}.{key}", path=f"{sec}.{key}")
    try:
        return spec.parse(text)
    except ValueError as exc:
        raise ConfigError(f"{sec}.{key}: {exc}", path=f"{sec}.{key}") from exc


def parse_config(text: str, source: str = "<config>") -> SimConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        raise ConfigError(f"{source}: {exc}", lineno=lineno) from exc
    values = {sec: {k: f.default for k, f in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]", path=sec)
        for key, text_value in cp.items(sec):
            values[sec][key] = _parse_value(sec, key, text_value)
    return _build(values)


def load_config(path) -> SimConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    return parse_config(text, source=str(p))


def config_values(cfg: SimConfig) -> dict[str, dict[str, object]]:
    """Every addressable field of ``cfg`` as ``{section: {key: value}}``."""
    pid = cfg.pid_gains
    scales = cfg.nn.feature_scales
    return {
        "robot": {f.name: getattr(cfg.robot, f.name) for f in fields(RobotParams)},
        "uncertainty": {f.name: getattr(cfg.uncertainty, f.name) for f in fields(UncertaintySpec)},
        "trajectory": {k: getattr(cfg.trajectory, k) if k != "kind" else cfg.trajectory.kind.value
                       for k in SCHEMA["trajectory"]},
        "motion_controller": {f.name: getattr(cfg.motion_gains, f.name) for f in fields(KanayamaGains)},
        "velocity_controller": {
            f"{g}_{ch}": getattr(getattr(pid, ch), g) for ch in ("v", "omega") for g in ("k_p", "k_i", "k_d", "i_max")
        },
        "nn": {
            "enabled": cfg.nn.enabled,
            "hidden": cfg.nn.hidden,
            "learning_rate": cfg.nn.learning_rate,
            "grad_clip": cfg.nn.grad_clip,
            "init_scale": cfg.nn.init_scale,
            "seed": cfg.nn.seed,
            **{f"scale_{f.name}": (getattr(scales, f.name) if scales else None) for f in fields(FeatureScales)},
            "weights_file": cfg.nn.weights_file,
        },
        "sim": {k: getattr(cfg, k) for k in SCHEMA["sim"]},
    }


def dump_config(cfg: SimConfig) -> str:
    """Render ``cfg`` with every field spelled out; ``parse_config`` inverts it."""
    lines = []
    for sec, keys in config_values(cfg).items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in keys.items())
        lines.append("")
    return "\n".join(lines)


def with_override(cfg: SimConfig, address: str, value) -> SimConfig:
    """Copy of ``cfg`` with one ``section.key`` replaced (value as text or already parsed)."""
    sec, _, key = address.partition(".")
    if sec not in SCHEMA or key not in SCHEMA[sec]:
        raise ConfigError(f"unknown config field {address!r}", path=address)
    values = config_values(cfg)
    values[sec][key] = _parse_value(sec, key, value) if isinstance(value, str) else value
    return _build(values)


def with_nn_enabled(cfg: SimConfig, enabled: bool) -> SimConfig:
    return replace(cfg, nn=replace(cfg.nn, enabled=enabled))
