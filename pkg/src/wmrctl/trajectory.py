"""Analytic reference trajectories for the motion controller.

Every trajectory starts at ``(start_x, start_y, heading)``, except the
polyline which starts at its first waypoint facing the first segment.
"""

from __future__ import annotations

import bisect
import enum
import functools
import math
from dataclasses import dataclass

from wmrctl.errors import DomainError, ParameterError
from wmrctl.vehicle_model import Posture, wrap_angle


class TrajectoryKind(enum.Enum):
    LINE = "line"
    CIRCLE = "circle"
    LEMNISCATE = "lemniscate"
    POLYLINE = "polyline"


@dataclass(frozen=True)
class ReferencePoint:
    posture: Posture
    v_r: float
    omega_r: float


@dataclass(frozen=True)
class TrajectorySpec:
    """Geometry and timing of a reference trajectory.

    ``radius`` is the circle radius or the lemniscate half-width. For the
    lemniscate ``speed`` is the peak speed (reached at the lobe tips). The
    polyline uses ``speed`` and ``turn_rate`` as cruise rates and blends them
    in and out over ``ramp_time`` seconds with raised-cosine ramps.
    """

    kind: TrajectoryKind = TrajectoryKind.CIRCLE
    speed: float = 0.5
    radius: float = 2.0
    start_x: float = 0.0
    start_y: float = 0.0
    heading: float = 0.0
    duration: float = 60.0
    waypoints: tuple[tuple[float, float], ...] = ()
    turn_rate: float = 0.5
    ramp_time: float = 1.0
    v_max: float = 1.0
    omega_max: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", TrajectoryKind(self.kind))
        object.__setattr__(self, "waypoints", tuple((float(x), float(y)) for x, y in self.waypoints))
        check_feasible(self)


def check_feasible(spec: TrajectorySpec) -> None:
    """Raise ParameterError unless the reference respects the velocity limits."""
    def positive(name):
        v = getattr(spec, name)
        if not (math.isfinite(v) and v > 0):
            raise ParameterError(f"trajectory {name} must be > 0, got {v!r}")

    for name in ("v_max", "omega_max"):
        positive(name)
    if not (math.isfinite(spec.duration) and spec.duration >= 0):
        raise ParameterError(f"trajectory duration must be >= 0, got {spec.duration!r}")
    if not (math.isfinite(spec.speed) and abs(spec.speed) <= spec.v_max):
        raise ParameterError(f"speed {spec.speed!r} exceeds v_max={spec.v_max!r}")
    kind = spec.kind
    if kind is TrajectoryKind.CIRCLE:
        positive("radius")
        if abs(spec.speed) / spec.radius > spec.omega_max:
            raise ParameterError(
                f"circle needs omega={abs(spec.speed) / spec.radius:.6g} rad/s > omega_max={spec.omega_max!r}"
            )
    elif kind is TrajectoryKind.LEMNISCATE:
        positive("radius")
        positive("speed")
        # Peak turn rate on the lemniscate is 3 * speed / radius, at the lobe tips.
        if 3.0 * spec.speed / spec.radius > spec.omega_max:
            raise ParameterError(
                f"lemniscate needs omega={3.0 * spec.speed / spec.radius:.6g} rad/s > omega_max={spec.omega_max!r}"
            )
    elif kind is TrajectoryKind.POLYLINE:
        positive("speed")
        positive("turn_rate")
        positive("ramp_time")
        if spec.turn_rate > spec.omega_max:
            raise ParameterError(f"turn_rate {spec.turn_rate!r} exceeds omega_max={spec.omega_max!r}")
        if len(spec.waypoints) < 2:
            raise ParameterError("polyline needs at least two waypoints")
        for a, b in zip(spec.waypoints, spec.waypoints[1:]):
            if a == b:
                raise ParameterError(f"repeated waypoint {a!r}")


def _to_world(spec: TrajectorySpec, x: float, y: float, th: float) -> Posture:
    c, s = math.cos(spec.heading), math.sin(spec.heading)
    return Posture(spec.start_x + c * x - s * y, spec.start_y + s * x + c * y, spec.heading + th)


def _line(spec: TrajectorySpec, t: float) -> ReferencePoint:
    return ReferencePoint(_to_world(spec, spec.speed * t, 0.0, 0.0), spec.speed, 0.0)


def _circle(spec: TrajectorySpec, t: float) -> ReferencePoint:
    R = spec.radius
    w = spec.speed / R
    a = w * t
    # Counter-clockwise circle through the origin, centre at (0, R) in the start frame.
    return ReferencePoint(_to_world(spec, R * math.sin(a), R - R * math.cos(a), a), spec.speed, w)


def _lemniscate(spec: TrajectorySpec, t: float) -> ReferencePoint:
    # Bernoulli lemniscate x = a cos s / (1 + sin^2 s), y = a sin s cos s / (1 + sin^2 s),
    # shifted so s = 0 sits at the start point and rotated so it heads along +x.
    a = spec.radius
    nu = spec.speed / a
    s = nu * t
    ss, cs = math.sin(s), math.cos(s)
    den = 1.0 + ss * ss
    x = a * cs / den
    y = a * ss * cs / den
    dx = -a * ss * (3.0 - ss * ss) / (den * den)
    dy = a * (math.cos(2.0 * s) * den - 2.0 * ss * ss * cs * cs) / (den * den)
    th = math.atan2(dy, dx)
    v = spec.speed / math.sqrt(den)
    w = 3.0 * nu * cs / den
    # Local frame: start at (a, 0) heading +y; rotate by -pi/2 about the start point.
    return ReferencePoint(_to_world(spec, y, a - x, th - math.pi / 2), v, w)


@dataclass(frozen=True)
class _Move:
    """One polyline phase: a blended translation or an in-place turn."""

    t0: float
    duration: float
    amount: float
    peak: float
    ramp: float
    x0: float
    y0: float
    th0: float
    turning: bool
    sign: float = 1.0


def _profile(tau: float, m: _Move) -> tuple[float, float]:
    """Distance covered and rate at local time ``tau`` of a blended move."""
    V, T, total = m.peak, m.ramp, m.duration
    if tau <= 0:
        return 0.0, 0.0
    if tau >= total:
        return m.amount, 0.0
    if tau < T:
        return 0.5 * V * (tau - T / math.pi * math.sin(math.pi * tau / T)), 0.5 * V * (1 - math.cos(math.pi * tau / T))
    if tau > total - T:
        rem = total - tau
        return (
            m.amount - 0.5 * V * (rem - T / math.pi * math.sin(math.pi * rem / T)),
            0.5 * V * (1 - math.cos(math.pi * rem / T)),
        )
    return 0.5 * V * T + V * (tau - T), V


def _blended(amount: float, rate: float, ramp: float) -> tuple[float, float]:
    """Return ``(duration, peak_rate)`` covering ``amount`` with raised-cosine ramps."""
    if amount >= rate * ramp:
        return amount / rate + ramp, rate
    return 2.0 * ramp, amount / ramp


@functools.lru_cache(maxsize=64)
def _polyline_plan(spec: TrajectorySpec) -> tuple[_Move, ...]:
    moves = []
    t = 0.0
    pts = spec.waypoints
    th = math.atan2(pts[1][1] - pts[0][1], pts[1][0] - pts[0][0])
    for (xa, ya), (xb, yb) in zip(pts, pts[1:]):
        seg_th = math.atan2(yb - ya, xb - xa)
        dth = wrap_angle(seg_th - th)
        if dth != 0.0:
            dur, peak = _blended(abs(dth), spec.turn_rate, spec.ramp_time)
            moves.append(_Move(t, dur, abs(dth), peak, spec.ramp_time, xa, ya, th, True, math.copysign(1.0, dth)))
            t += dur
        length = math.hypot(xb - xa, yb - ya)
        dur, peak = _blended(length, spec.speed, spec.ramp_time)
        moves.append(_Move(t, dur, length, peak, spec.ramp_time, xa, ya, seg_th, False))
        t += dur
        th = seg_th
    return tuple(moves)


def polyline_travel_time(spec: TrajectorySpec) -> float:
    m = _polyline_plan(spec)[-1]
    return m.t0 + m.duration


def _polyline(spec: TrajectorySpec, t: float) -> ReferencePoint:
    plan = _polyline_plan(spec)
    i = max(bisect.bisect_right([m.t0 for m in plan], t) - 1, 0)
    m = plan[i]
    dist, rate = _profile(t - m.t0, m)
    if m.turning:
        return ReferencePoint(Posture(m.x0, m.y0, m.th0 + m.sign * dist), 0.0, m.sign * rate)
    c, s = math.cos(m.th0), math.sin(m.th0)
    return ReferencePoint(Posture(m.x0 + c * dist, m.y0 + s * dist, m.th0), rate, 0.0)


_SAMPLERS = {
    TrajectoryKind.LINE: _line,
    TrajectoryKind.CIRCLE: _circle,
    TrajectoryKind.LEMNISCATE: _lemniscate,
    TrajectoryKind.POLYLINE: _polyline,
}


def sample(spec: TrajectorySpec, t: float) -> ReferencePoint:
    """Reference posture and velocities at time ``t`` in ``[0, duration]``."""
    if not (0.0 <= t <= spec.duration):
        raise DomainError(f"t={t!r} outside [0, {spec.duration!r}]")
    return _SAMPLERS[spec.kind](spec, t)
