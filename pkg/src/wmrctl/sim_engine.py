"""Closed-loop simulation: trajectory -> motion controller -> velocity
controller (PID + optional neural feed-forward) -> motors -> platform.

The plant is integrated at ``plant_dt``; the controllers run every
``control_every`` plant steps and hold their command in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from wmrctl import integrator
from wmrctl.controllers import (
    KanayamaGains,
    PidGains,
    PidState,
    kanayama_control,
    posture_error,
    saturate,
    velocity_feedback,
)
from wmrctl.errors import NumericError, ParameterError, UsageError
from wmrctl.nn_feedforward import (
    FeatureScales,
    Mlp,
    build_features,
    feedback_error_learn_step,
    load_weights,
    mlp_forward,
    mlp_init,
)
from wmrctl.trajectory import TrajectorySpec, sample
from wmrctl.vehicle_model import (
    CarKinState,
    MotorCommand,
    Posture,
    RobotParams,
    SignConvention,
    UncertaintySpec,
    VelocityState,
    dynamic_derivative,
    kinematic_derivative,
    perturb_params,
    wrap_angle,
)

N_FEATURES = 6


@dataclass(frozen=True)
class NnConfig:
    enabled: bool = True
    hidden: int = 8
    learning_rate: float = 1e-3
    grad_clip: float | None = 10.0
    init_scale: float = 0.1
    seed: int = 0
    feature_scales: FeatureScales | None = None  # None: derived from the velocity limits
    weights_file: str | None = None

    def __post_init__(self):
        if int(self.hidden) != self.hidden or self.hidden < 1:
            raise ParameterError(f"nn.hidden must be an integer >= 1, got {self.hidden!r}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ParameterError(f"nn.learning_rate must be >= 0, got {self.learning_rate!r}")
        if self.grad_clip is not None and not (math.isfinite(self.grad_clip) and self.grad_clip > 0):
            raise ParameterError(f"nn.grad_clip must be > 0, got {self.grad_clip!r}")
        if not (math.isfinite(self.init_scale) and self.init_scale >= 0):
            raise ParameterError(f"nn.init_scale must be >= 0, got {self.init_scale!r}")


@dataclass(frozen=True)
class SimConfig:
    robot: RobotParams = field(default_factory=RobotParams)
    uncertainty: UncertaintySpec = field(default_factory=UncertaintySpec)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    motion_gains: KanayamaGains = field(default_factory=KanayamaGains)
    pid_gains: PidGains = field(default_factory=PidGains)
    nn: NnConfig = field(default_factory=NnConfig)
    plant_dt: float = 1e-3
    control_every: int = 10
    duration: float = 60.0
    noise_std_v: float = 0.0
    noise_std_omega: float = 0.0
    seed: int = 0
    integrator: str = "rk4"
    # Initial deviation of the robot from the reference start posture, and initial velocities.
    init_dx: float = 0.0
    init_dy: float = 0.0
    init_dtheta: float = 0.0
    init_v: float = 0.0
    init_omega: float = 0.0

    def __post_init__(self):
        self.validate()

    @property
    def control_period(self) -> float:
        return self.plant_dt * self.control_every

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.control_period))

    def validate(self) -> None:
        if not (math.isfinite(self.plant_dt) and self.plant_dt > 0):
            raise ParameterError(f"sim.plant_dt must be > 0, got {self.plant_dt!r}")
        if int(self.control_every) != self.control_every or self.control_every < 1:
            raise ParameterError(f"sim.control_every must be an integer >= 1, got {self.control_every!r}")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ParameterError(f"sim.duration must be >= 0, got {self.duration!r}")
        if abs(self.n_ticks * self.control_period - self.duration) > 1e-9 * max(1.0, self.duration):
            raise ParameterError("sim.duration must be a whole number of control periods")
        if self.duration > self.trajectory.duration + 1e-9:
            raise ParameterError(
                f"sim.duration={self.duration!r} exceeds trajectory.duration={self.trajectory.duration!r}"
            )
        for name in ("noise_std_v", "noise_std_omega"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ParameterError(f"sim.{name} must be >= 0, got {v!r}")
        if self.integrator not in STEPPERS:
            raise ParameterError(f"sim.integrator must be one of {sorted(STEPPERS)}, got {self.integrator!r}")


STEPPERS = {"rk4": integrator.rk4_step, "euler": integrator.euler_step}


@dataclass(frozen=True)
class LogRecord:
    t: float
    x_ref: float
    y_ref: float
    theta_ref: float
    x: float
    y: float
    theta: float
    v_ref: float
    omega_ref: float
    v_meas: float
    omega_meas: float
    v: float
    omega: float
    u_fb_l: float
    u_fb_r: float
    u_ff_l: float
    u_ff_r: float
    u_l: float
    u_r: float
    e_x: float
    e_y: float
    e_theta: float
    nn_loss: float


LOG_FIELDS = tuple(f.name for f in fields(LogRecord))


@dataclass
class SimHooks:
    """Test and debug switches; none of them is reachable from config files."""

    zero_feedback: bool = False
    record_substeps: bool = False


@dataclass
class RunContext:
    """Mutable per-run state threaded through ``control_step``."""

    cfg: SimConfig
    true_params: RobotParams
    state: list[float]
    pid_states: tuple[PidState, PidState] = (PidState(), PidState())
    net: Mlp | None = None
    scales: FeatureScales | None = None
    eta_ref_prev: VelocityState | None = None
    rng: np.random.Generator | None = None
    hooks: SimHooks = field(default_factory=SimHooks)
    substeps: list[tuple[float, float, float]] = field(default_factory=list)


@dataclass
class SimResult:
    records: list[LogRecord]
    final_state: list[float]
    net_initial: Mlp | None = None
    net_final: Mlp | None = None
    substeps: list[tuple[float, float, float]] = field(default_factory=list)
    true_params: RobotParams | None = None


class SimulationAborted(NumericError):
    """Non-finite values mid-run; ``records`` holds the log up to the failure."""

    def __init__(self, message, index, records):
        super().__init__(message, index=index)
        self.records = records


def initial_network(cfg: SimConfig) -> Mlp | None:
    if not cfg.nn.enabled:
        return None
    if cfg.nn.weights_file:
        net = load_weights(cfg.nn.weights_file)
        if net.sizes != (N_FEATURES, cfg.nn.hidden, 2):
            raise ParameterError(f"weights file sizes {net.sizes} do not match nn config")
        return net
    return mlp_init(N_FEATURES, cfg.nn.hidden, 2, cfg.nn.seed, cfg.nn.init_scale)


def make_context(cfg: SimConfig, hooks: SimHooks | None = None) -> RunContext:
    ref0 = sample(cfg.trajectory, 0.0).posture
    state = [
        ref0.x + cfg.init_dx,
        ref0.y + cfg.init_dy,
        wrap_angle(ref0.theta + cfg.init_dtheta),
        cfg.init_v,
        cfg.init_omega,
    ]
    scales = cfg.nn.feature_scales or FeatureScales.from_limits(cfg.robot.V_AV_max, cfg.robot.theta_dot_max)
    return RunContext(
        cfg=cfg,
        true_params=perturb_params(cfg.robot, cfg.uncertainty),
        state=state,
        net=initial_network(cfg),
        scales=scales,
        rng=np.random.default_rng(cfg.seed),
        hooks=hooks or SimHooks(),
    )


def measure(ctx: RunContext) -> VelocityState:
    v, w = ctx.state[3], ctx.state[4]
    cfg = ctx.cfg
    if cfg.noise_std_v > 0:
        v += cfg.noise_std_v * ctx.rng.standard_normal()
    if cfg.noise_std_omega > 0:
        w += cfg.noise_std_omega * ctx.rng.standard_normal()
    return VelocityState(v, w)


def control_step(ctx: RunContext, t: float) -> tuple[MotorCommand, LogRecord]:
    """One tick of the two-level controller; updates PID and network state in ``ctx``."""
    cfg = ctx.cfg
    dt = cfg.control_period
    ref = sample(cfg.trajectory, t)
    x, y, th = ctx.state[0], ctx.state[1], ctx.state[2]
    err = posture_error(Posture(x, y, th), ref.posture)
    eta_ref = kanayama_control(err, ref.v_r, ref.omega_r, cfg.motion_gains, cfg.robot)
    eta_meas = measure(ctx)

    u_fb, ctx.pid_states = velocity_feedback(eta_ref, eta_meas, ctx.pid_states, cfg.pid_gains, dt)
    if ctx.hooks.zero_feedback:
        u_fb = MotorCommand(0.0, 0.0)

    u_ff = MotorCommand(0.0, 0.0)
    if ctx.net is not None:
        prev = ctx.eta_ref_prev if ctx.eta_ref_prev is not None else eta_ref
        feats = build_features(eta_ref, prev, eta_meas, dt, ctx.scales)
        y_ff, _ = mlp_forward(ctx.net, feats)
        u_ff = MotorCommand(float(y_ff[0]), float(y_ff[1]))
        u_max = cfg.robot.U_max
        pre = u_fb + u_ff
        saturated = abs(pre.u_l) >= u_max or abs(pre.u_r) >= u_max
        if not saturated:
            _, ctx.net = feedback_error_learn_step(ctx.net, feats, u_fb, cfg.nn.learning_rate, cfg.nn.grad_clip)
    ctx.eta_ref_prev = eta_ref

    u = saturate(u_fb + u_ff, cfg.robot.U_max)
    rec = LogRecord(
        t=t,
        x_ref=ref.posture.x,
        y_ref=ref.posture.y,
        theta_ref=ref.posture.theta,
        x=x,
        y=y,
        theta=th,
        v_ref=eta_ref.v,
        omega_ref=eta_ref.omega,
        v_meas=eta_meas.v,
        omega_meas=eta_meas.omega,
        v=ctx.state[3],
        omega=ctx.state[4],
        u_fb_l=u_fb.u_l,
        u_fb_r=u_fb.u_r,
        u_ff_l=u_ff.u_l,
        u_ff_r=u_ff.u_r,
        u_l=u.u_l,
        u_r=u.u_r,
        e_x=err.e_x,
        e_y=err.e_y,
        e_theta=err.e_theta,
        nn_loss=u_fb.u_l * u_fb.u_l + u_fb.u_r * u_fb.u_r,
    )
    return u, rec


def plant_derivative(p: RobotParams, u: MotorCommand) -> Callable:
    """Right-hand side for the state ``[x, y, theta, v, omega]`` under constant ``u``."""

    def f(t, s):
        v_dot, w_dot = dynamic_derivative(VelocityState(s[3], s[4]), u, p)
        return (s[3] * math.cos(s[2]), s[3] * math.sin(s[2]), s[4], v_dot, w_dot)

    return f


def advance_plant(ctx: RunContext, u: MotorCommand, t0: float) -> None:
    cfg = ctx.cfg
    step = STEPPERS[cfg.integrator]
    f = plant_derivative(ctx.true_params, u)
    s = ctx.state
    h = cfg.plant_dt
    for i in range(cfg.control_every):
        ti = t0 + i * h
        if ctx.hooks.record_substeps:
            ctx.substeps.append((ti, u.u_l, u.u_r))
        s = step(f, s, ti, h)
        s[2] = wrap_angle(s[2])
    ctx.state = s


def simulate_car_kinematics(
    s0: CarKinState,
    inputs: Callable[[float], tuple[float, float]],
    p: RobotParams,
    dt: float,
    n_steps: int,
    sign_convention: SignConvention = SignConvention.STANDARD,
    integrator_name: str = "rk4",
) -> list[CarKinState]:
    """Open-loop run of the car-like kinematic model.

    ``inputs(t)`` returns ``(u1, u2)``, held constant over each step.
    Returns the ``n_steps + 1`` states including ``s0``.
    """
    if integrator_name not in STEPPERS:
        raise ParameterError(f"unknown integrator {integrator_name!r}")
    step = STEPPERS[integrator_name]
    out = [s0]
    s = list(s0.as_tuple())
    for k in range(n_steps):
        t = k * dt
        u1, u2 = inputs(t)

        def f(_t, y, u1=u1, u2=u2):
            return kinematic_derivative(CarKinState(*y), u1, u2, p, sign_convention)

        s = step(f, s, t, dt)
        s[2] = wrap_angle(s[2])
        out.append(CarKinState(*s))
    return out


def run_simulation(cfg: SimConfig, hooks: SimHooks | None = None) -> SimResult:
    """Simulate ``cfg.duration`` seconds; one log record per control tick."""
    ctx = make_context(cfg, hooks)
    result = SimResult(records=[], final_state=list(ctx.state), net_initial=ctx.net, true_params=ctx.true_params)
    period = cfg.control_period
    for k in range(cfg.n_ticks):
        t = k * period
        try:
            u, rec = control_step(ctx, t)
            advance_plant(ctx, u, t)
            if not all(math.isfinite(si) for si in ctx.state):
                raise NumericError("non-finite plant state")
        except NumericError as exc:
            raise SimulationAborted(f"tick {k} (t={t:.6g} s): {exc}", k, result.records) from exc
        result.records.append(rec)
    result.final_state = list(ctx.state)
    result.net_final = ctx.net
    result.substeps = ctx.substeps
    return result


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metrics:
    """Error and effort summaries of one run.

    Windows: ``final`` is the last ``n - n // 2`` ticks; the 20% windows are
    the first and last ``max(1, n // 5)`` ticks.
    """

    pos_rms: float
    pos_max: float
    pos_rms_final: float
    pos_max_final: float
    theta_rms: float
    theta_max: float
    theta_rms_final: float
    theta_max_final: float
    vel_rms_v: float
    vel_rms_omega: float
    vel_rms_v_final: float
    vel_rms_omega_final: float
    u_fb_mean_first: float
    u_fb_mean_last: float


METRIC_FIELDS = tuple(f.name for f in fields(Metrics))


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(a * a)))


def compute_metrics(records) -> Metrics:
    n = len(records)
    if n == 0:
        raise ParameterError("cannot compute metrics of an empty log")
    pos = np.array([math.hypot(r.e_x, r.e_y) for r in records])
    th = np.array([abs(r.e_theta) for r in records])
    ev = np.array([r.v_ref - r.v for r in records])
    ew = np.array([r.omega_ref - r.omega for r in records])
    ufb = np.array([math.hypot(r.u_fb_l, r.u_fb_r) for r in records])
    half = n // 2
    k20 = max(1, n // 5)
    return Metrics(
        pos_rms=_rms(pos),
        pos_max=float(pos.max()),
        pos_rms_final=_rms(pos[half:]),
        pos_max_final=float(pos[half:].max()),
        theta_rms=_rms(th),
        theta_max=float(th.max()),
        theta_rms_final=_rms(th[half:]),
        theta_max_final=float(th[half:].max()),
        vel_rms_v=_rms(ev),
        vel_rms_omega=_rms(ew),
        vel_rms_v_final=_rms(ev[half:]),
        vel_rms_omega_final=_rms(ew[half:]),
        u_fb_mean_first=float(ufb[:k20].mean()),
        u_fb_mean_last=float(ufb[n - k20:].mean()),
    )


@dataclass(frozen=True)
class MetricComparison:
    name: str
    a: float
    b: float
    ratio: float
    winner: str


def _ratio(a: float, b: float) -> float:
    if a == b:
        return 1.0
    if a == 0:
        return math.inf
    return b / a


def compare_runs(log_a, log_b) -> list[MetricComparison]:
    """Metric-by-metric comparison of two runs of the same scenario (lower wins)."""
    if len(log_a) != len(log_b):
        raise UsageError(f"runs have different lengths ({len(log_a)} vs {len(log_b)} ticks)")
    for ra, rb in zip(log_a, log_b):
        if (ra.t, ra.x_ref, ra.y_ref, ra.theta_ref) != (rb.t, rb.x_ref, rb.y_ref, rb.theta_ref):
            raise UsageError(f"runs follow different references (first mismatch at t={ra.t!r})")
    ma, mb = compute_metrics(log_a), compute_metrics(log_b)
    out = []
    for name in METRIC_FIELDS:
        a, b = getattr(ma, name), getattr(mb, name)
        winner = "tie" if a == b else ("a" if a < b else "b")
        out.append(MetricComparison(name, a, b, _ratio(a, b), winner))
    return out
