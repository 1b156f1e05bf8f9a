import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wmrctl.controllers import (
    ChannelGains,
    KanayamaGains,
    PidGains,
    PidState,
    PostureError,
    kanayama_control,
    pid_step,
    posture_error,
    saturate,
    velocity_feedback,
)
from wmrctl.errors import ParameterError
from wmrctl.vehicle_model import MotorCommand, Posture, RobotParams, VelocityState

coord = st.floats(-20, 20, allow_nan=False)
angle = st.floats(-math.pi, math.pi)


def rot(a):
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


class TestPostureError:
    def test_coincident(self):
        p = Posture(1.0, -2.0, 0.4)
        assert posture_error(p, p) == PostureError(0.0, 0.0, 0.0)

    def test_longitudinal(self):
        assert posture_error(Posture(0, 0, 0), Posture(1, 0, 0)) == PostureError(1.0, 0.0, 0.0)

    def test_rotated_frame(self):
        e = posture_error(Posture(0, 0, math.pi / 2), Posture(1, 0, math.pi / 2))
        oracle = rot(-math.pi / 2) @ np.array([1.0, 0.0])
        assert (e.e_x, e.e_y, e.e_theta) == pytest.approx((oracle[0], oracle[1], 0.0), abs=1e-15)
        assert (e.e_x, e.e_y) == pytest.approx((0.0, -1.0), abs=1e-15)

    @given(x=coord, y=coord, th=angle, xr=coord, yr=coord, thr=angle, tx=coord, ty=coord, a=angle)
    def test_rigid_motion_invariance(self, x, y, th, xr, yr, thr, tx, ty, a):
        R = rot(a)

        def move(p):
            q = R @ np.array([p.x, p.y]) + np.array([tx, ty])
            return Posture(q[0], q[1], p.theta + a)

        e1 = posture_error(Posture(x, y, th), Posture(xr, yr, thr))
        e2 = posture_error(move(Posture(x, y, th)), move(Posture(xr, yr, thr)))
        assert e2.e_x == pytest.approx(e1.e_x, abs=1e-9)
        assert e2.e_y == pytest.approx(e1.e_y, abs=1e-9)
        assert math.remainder(e2.e_theta - e1.e_theta, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


class TestKanayama:
    def test_zero_error_passes_reference(self):
        assert kanayama_control(PostureError(0, 0, 0), 0.7, -0.2, KanayamaGains()) == VelocityState(0.7, -0.2)

    def test_longitudinal_correction(self):
        out = kanayama_control(PostureError(1, 0, 0), 0.0, 0.0, KanayamaGains(k_x=0.5))
        assert out == VelocityState(0.5, 0.0)

    def test_lateral_and_heading(self):
        out = kanayama_control(PostureError(0, 0.2, 0.1), 1.0, 0.0, KanayamaGains(k_y=2, k_theta=1))
        oracle = 1.0 * (2 * 0.2 + math.sin(0.1))
        assert round(oracle, 5) == 0.49983
        assert out.omega == pytest.approx(oracle, abs=1e-15)
        assert out.v == pytest.approx(math.cos(0.1), abs=1e-15)

    @given(ex=coord, ey=coord, et=angle, vr=st.floats(-1, 1), wr=st.floats(-2, 2))
    def test_vanishing_gains(self, ex, ey, et, vr, wr):
        tiny = KanayamaGains(1e-300, 1e-300, 1e-300)
        out = kanayama_control(PostureError(ex, ey, et), vr, wr, tiny)
        assert out.v == pytest.approx(vr * math.cos(et), abs=1e-250)
        assert out.omega == pytest.approx(wr, abs=1e-250)

    def test_clamped_by_limits(self):
        out = kanayama_control(PostureError(10, 10, 0), 1.0, 0.0, KanayamaGains(), RobotParams())
        assert out == VelocityState(1.0, 2.0)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_gains_positive(self, bad):
        with pytest.raises(ParameterError):
            KanayamaGains(k_y=bad)


class TestPid:
    def test_fresh_zero_error(self):
        out, st_ = pid_step(PidState(), ChannelGains(), 0.0, 0.01)
        assert out == 0.0
        assert st_.integral == 0.0

    def test_pure_p(self):
        out, _ = pid_step(PidState(), ChannelGains(k_p=2, k_i=0, k_d=0), 1.0, 0.01)
        assert out == 2.0

    def test_one_integration_step(self):
        out, st_ = pid_step(PidState(), ChannelGains(k_p=0, k_i=10, k_d=0), 1.0, 0.01)
        assert out == pytest.approx(0.1, abs=1e-15)
        assert st_.integral == pytest.approx(0.01, abs=1e-18)

    def test_no_derivative_kick(self):
        g = ChannelGains(k_p=0, k_i=0, k_d=3)
        out, s1 = pid_step(PidState(), g, 5.0, 0.01)
        assert out == 0.0
        out, _ = pid_step(s1, g, 6.0, 0.01)
        assert out == pytest.approx(3 * 1.0 / 0.01)

    @given(errs=st.lists(st.floats(-10, 10), min_size=1, max_size=30))
    def test_memoryless_without_i_and_d(self, errs):
        g = ChannelGains(k_p=3.0, k_i=0.0, k_d=0.0)
        s = PidState()
        for e in errs:
            out, s = pid_step(s, g, e, 0.01)
            assert out == 3.0 * e
            assert s.prev_error == e

    @given(e=st.floats(-100, 100).filter(lambda v: abs(v) > 1e-6), i_max=st.floats(0.01, 5))
    def test_anti_windup(self, e, i_max):
        g = ChannelGains(k_p=0, k_i=1, k_d=0, i_max=i_max)
        s = PidState()
        for _ in range(500):
            _, s = pid_step(s, g, e, 0.05)
            assert abs(s.integral) <= i_max

    def test_gain_validation(self):
        with pytest.raises(ParameterError):
            ChannelGains(k_p=-1)
        with pytest.raises(ParameterError):
            ChannelGains(i_max=0)


class TestVelocityFeedback:
    fresh = (PidState(), PidState())

    def test_no_error(self):
        u, _ = velocity_feedback(VelocityState(0.3, 0.1), VelocityState(0.3, 0.1), self.fresh, PidGains(), 0.01)
        assert u == MotorCommand(0.0, 0.0)

    def test_linear_channel_is_symmetric(self):
        u, _ = velocity_feedback(VelocityState(0.5, 0), VelocityState(0.2, 0), self.fresh, PidGains(), 0.01)
        assert u.u_l == u.u_r != 0

    def test_rotation_channel_is_antisymmetric(self):
        u, _ = velocity_feedback(VelocityState(0, 0.5), VelocityState(0, 0.1), self.fresh, PidGains(), 0.01)
        assert u.u_l == -u.u_r != 0
        assert u.u_r > 0

    @given(ev=st.floats(-5, 5), ew=st.floats(-5, 5), a=st.floats(-10, 10))
    def test_linear_in_error(self, ev, ew, a):
        g = PidGains(ChannelGains(4, 0, 0), ChannelGains(2, 0, 0))
        zero = VelocityState(0, 0)
        u1, _ = velocity_feedback(VelocityState(ev, ew), zero, self.fresh, g, 0.01)
        ua, _ = velocity_feedback(VelocityState(a * ev, a * ew), zero, self.fresh, g, 0.01)
        assert ua.u_l == pytest.approx(a * u1.u_l, rel=1e-12, abs=1e-12)
        assert ua.u_r == pytest.approx(a * u1.u_r, rel=1e-12, abs=1e-12)


class TestSaturate:
    def test_inside(self):
        assert saturate(MotorCommand(1, -1), 24) == MotorCommand(1, -1)

    def test_clipped(self):
        assert saturate(MotorCommand(30, -30), 24) == MotorCommand(24, -24)

    @given(a=st.floats(-1e6, 1e6), b=st.floats(-1e6, 1e6), m=st.floats(0, 100))
    def test_idempotent(self, a, b, m):
        once = saturate(MotorCommand(a, b), m)
        assert saturate(once, m) == once
        assert abs(once.u_l) <= m and abs(once.u_r) <= m

    def test_negative_limit(self):
        with pytest.raises(ParameterError):
            saturate(MotorCommand(), -1.0)
