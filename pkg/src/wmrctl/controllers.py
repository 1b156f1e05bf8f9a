"""Conventional control layer: posture-tracking motion controller and the
per-channel PID velocity controller."""

from __future__ import annotations

import math
from dataclasses import dataclass

from wmrctl.errors import ParameterError
from wmrctl.vehicle_model import MotorCommand, Posture, RobotParams, VelocityState, clamp_velocities, wrap_angle


@dataclass(frozen=True)
class PostureError:
    """Reference-minus-actual posture expressed in the robot body frame."""

    e_x: float
    e_y: float
    e_theta: float


@dataclass(frozen=True)
class KanayamaGains:
    k_x: float = 10.0
    k_y: float = 64.0
    k_theta: float = 16.0

    def __post_init__(self):
        for name in ("k_x", "k_y", "k_theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be > 0, got {v!r}")


@dataclass(frozen=True)
class ChannelGains:
    k_p: float = 8.0
    k_i: float = 20.0
    k_d: float = 0.0
    i_max: float = 10.0

    def __post_init__(self):
        for name in ("k_p", "k_i", "k_d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ParameterError(f"{name} must be >= 0, got {v!r}")
        if not (math.isfinite(self.i_max) and self.i_max > 0):
            raise ParameterError(f"i_max must be > 0, got {self.i_max!r}")


@dataclass(frozen=True)
class PidGains:
    """Gains for the linear-velocity (``v``) and rotation-velocity (``omega``) channels."""

    v: ChannelGains = ChannelGains()
    omega: ChannelGains = ChannelGains()


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float | None = None


def posture_error(current: Posture, reference: Posture) -> PostureError:
    dx = reference.x - current.x
    dy = reference.y - current.y
    c, s = math.cos(current.theta), math.sin(current.theta)
    return PostureError(c * dx + s * dy, -s * dx + c * dy, wrap_angle(reference.theta - current.theta))


def kanayama_control(
    e: PostureError,
    v_r: float,
    omega_r: float,
    g: KanayamaGains,
    p: RobotParams | None = None,
) -> VelocityState:
    """Velocity command of the Kanayama tracking law.

    When ``p`` is given the command is clamped to the platform velocity limits.
    """
    eta = VelocityState(
        v_r * math.cos(e.e_theta) + g.k_x * e.e_x,
        omega_r + v_r * (g.k_y * e.e_y + g.k_theta * math.sin(e.e_theta)),
    )
    return clamp_velocities(eta, p) if p is not None else eta


def pid_step(state: PidState, g: ChannelGains, error: float, dt: float) -> tuple[float, PidState]:
    """One discrete PID update with a clamped integral accumulator.

    The derivative acts on the error; on the first call there is no previous
    error and the derivative term is zero.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    integral = min(max(state.integral + error * dt, -g.i_max), g.i_max)
    prev = error if state.prev_error is None else state.prev_error
    out = g.k_p * error + g.k_i * integral + g.k_d * (error - prev) / dt
    return out, PidState(integral, error)


def velocity_feedback(
    eta_ref: VelocityState,
    eta_meas: VelocityState,
    states: tuple[PidState, PidState],
    g: PidGains,
    dt: float,
) -> tuple[MotorCommand, tuple[PidState, PidState]]:
    """Feedback voltages from the two velocity channels.

    Channel outputs are mixed as ``u_l = u_v - u_w`` and ``u_r = u_v + u_w``.
    """
    u_v, sv = pid_step(states[0], g.v, eta_ref.v - eta_meas.v, dt)
    u_w, sw = pid_step(states[1], g.omega, eta_ref.omega - eta_meas.omega, dt)
    return MotorCommand(u_v - u_w, u_v + u_w), (sv, sw)


def saturate(u: MotorCommand, U_max: float) -> MotorCommand:
    # U_max == 0 models disconnected actuators.
    if not U_max >= 0:
        raise ParameterError(f"U_max must be >= 0, got {U_max!r}")
    return MotorCommand(min(max(u.u_l, -U_max), U_max), min(max(u.u_r, -U_max), U_max))
