"""Plant models: car-like kinematics, unicycle steering kinematics and the
DC-motor driven platform dynamics.

Left/right wheel quantities use the suffixes ``_l`` / ``_r`` everywhere.
Angles are kept in (-pi, pi].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace

from wmrctl.errors import DomainError, ParameterError

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.remainder(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


class SignConvention(enum.Enum):
    """Sign of the lateral rate in the car-like kinematic model.

    ``AS_PRINTED`` uses ``y' = -sin(theta) cos(phi) u1``; ``STANDARD`` uses
    ``+sin`` so that the car-like and unicycle models agree.
    """

    STANDARD = "standard"
    AS_PRINTED = "as_printed"


@dataclass(frozen=True)
class RobotParams:
    """Physical and electrical constants of the platform and its two motors.

    ``k_E`` is a back-EMF constant in volts per motor rpm; wheel linear
    speed is converted to motor rpm through ``60 N / (2 pi r)``.
    """

    M: float = 10.0
    J: float = 0.5
    r: float = 0.1
    D: float = 0.25
    L: float = 0.5
    N: float = 20.0
    k_M: float = 0.05
    R_a: float = 1.0
    k_E: float = 0.01
    I_0: float = 0.0
    V_AV_max: float = 1.0
    theta_dot_max: float = 2.0
    U_max: float = 24.0
    phi_max: float = math.pi / 3

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"{f.name} must be a finite number, got {v!r}")
        positive = ("M", "J", "r", "D", "L", "R_a", "k_M", "V_AV_max", "theta_dot_max", "phi_max")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.N < 1:
            raise ParameterError(f"N must be >= 1, got {self.N!r}")
        for name in ("k_E", "I_0", "U_max"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)!r}")


@dataclass(frozen=True)
class Posture:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class CarKinState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    phi_c: float = 0.0
    phi_s: float = 0.0
    phi_d: float = 0.0

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.y, self.theta, self.phi, self.phi_c, self.phi_s, self.phi_d)


@dataclass(frozen=True)
class VelocityState:
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class WheelVelocities:
    v_l: float
    v_r: float

    def to_body(self, p: RobotParams) -> VelocityState:
        return VelocityState(0.5 * (self.v_l + self.v_r), (self.v_r - self.v_l) / (2.0 * p.D))


@dataclass(frozen=True)
class MotorCommand:
    u_l: float = 0.0
    u_r: float = 0.0

    def __add__(self, other: MotorCommand) -> MotorCommand:
        return MotorCommand(self.u_l + other.u_l, self.u_r + other.u_r)


@dataclass(frozen=True)
class WheelTorques:
    p_l: float
    p_r: float


# Parameters an UncertaintySpec may scale, keyed by factor name.
UNCERTAIN_FIELDS = {
    "mass_factor": "M",
    "inertia_factor": "J",
    "radius_factor": "r",
    "half_track_factor": "D",
    "torque_constant_factor": "k_M",
    "resistance_factor": "R_a",
    "back_emf_factor": "k_E",
}


@dataclass(frozen=True)
class UncertaintySpec:
    """Multiplicative deviations of the true plant from the nominal model."""

    mass_factor: float = 1.0
    inertia_factor: float = 1.0
    radius_factor: float = 1.0
    half_track_factor: float = 1.0
    torque_constant_factor: float = 1.0
    resistance_factor: float = 1.0
    back_emf_factor: float = 1.0

    def __post_init__(self):
        for name in UNCERTAIN_FIELDS:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be > 0, got {v!r}")


def kinematic_derivative(
    s: CarKinState,
    u1: float,
    u2: float,
    p: RobotParams,
    sign_convention: SignConvention = SignConvention.STANDARD,
) -> tuple[float, ...]:
    """Time derivative of the 7-state car-like model.

    ``u1`` is the driving speed (m/s) and ``u2`` the steering rate (rad/s).
    Returns ``(x', y', theta', phi', phi_c', phi_s', phi_d')``.
    """
    p.validate()
    if abs(s.phi) > p.phi_max:
        raise DomainError(f"steering angle {s.phi!r} exceeds phi_max={p.phi_max!r}")
    cth, sth = math.cos(s.theta), math.sin(s.theta)
    cphi, sphi = math.cos(s.phi), math.sin(s.phi)
    sign = 1.0 if sign_convention is SignConvention.STANDARD else -1.0
    dl = p.D / p.L
    return (
        cth * cphi * u1,
        sign * sth * cphi * u1,
        sphi * u1 / p.L,
        u2,
        u1 / p.r,
        (cphi + dl * sphi) * u1 / p.r,
        (cphi - dl * sphi) * u1 / p.r,
    )


def steering_kinematics(pose: Posture, eta: VelocityState) -> tuple[float, float, float]:
    """Unicycle posture rates ``S(q) eta = (v cos theta, v sin theta, omega)``."""
    return (eta.v * math.cos(pose.theta), eta.v * math.sin(pose.theta), eta.omega)


def motor_torque(u: float, v_wheel: float, p: RobotParams) -> float:
    """Wheel torque of one geared DC motor at terminal voltage ``u`` and
    wheel linear speed ``v_wheel``."""
    rpm_per_speed = 60.0 * p.N / (TWO_PI * p.r)
    return p.N * (
        p.k_M / p.R_a * u
        - p.k_M * p.k_E / p.R_a * rpm_per_speed * v_wheel
        - p.k_M * p.I_0
    )


def wheel_velocities(eta: VelocityState, p: RobotParams) -> WheelVelocities:
    return WheelVelocities(eta.v - p.D * eta.omega, eta.v + p.D * eta.omega)


def platform_accelerations(torques: WheelTorques, p: RobotParams) -> tuple[float, float]:
    """Platform equations of motion. The only place the platform coefficients appear."""
    v_dot = (torques.p_r + torques.p_l) / (2.0 * p.r * p.M)
    omega_dot = p.r * (torques.p_r - torques.p_l) / (2.0 * p.D * p.J)
    return v_dot, omega_dot


def dynamic_derivative(eta: VelocityState, u: MotorCommand, p: RobotParams) -> tuple[float, float]:
    """Return ``(v_dot, omega_dot)`` of the platform driven by voltages ``u``."""
    w = wheel_velocities(eta, p)
    torques = WheelTorques(motor_torque(u.u_l, w.v_l, p), motor_torque(u.u_r, w.v_r, p))
    return platform_accelerations(torques, p)


def clamp_velocities(eta: VelocityState, p: RobotParams) -> VelocityState:
    return VelocityState(
        min(max(eta.v, -p.V_AV_max), p.V_AV_max),
        min(max(eta.omega, -p.theta_dot_max), p.theta_dot_max),
    )


def perturb_params(nominal: RobotParams, spec: UncertaintySpec) -> RobotParams:
    """Build the true-plant parameter set by scaling nominal fields."""
    changes = {}
    for factor_name, field_name in UNCERTAIN_FIELDS.items():
        factor = getattr(spec, factor_name)
        if factor <= 0:
            raise ParameterError(f"{factor_name} must be > 0, got {factor!r}")
        if factor != 1.0:
            changes[field_name] = getattr(nominal, field_name) * factor
    return replace(nominal, **changes)
