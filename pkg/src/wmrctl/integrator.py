"""Fixed-step explicit integrators.

States are plain float sequences; the simulation loop calls these tens of
thousands of times per run, so they avoid numpy on purpose.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

from wmrctl.errors import NumericError, ParameterError

Derivative = Callable[[float, Sequence[float]], Sequence[float]]


def _checked(d: Sequence[float]) -> Sequence[float]:
    for i, di in enumerate(d):
        if not math.isfinite(di):
            raise NumericError(f"non-finite derivative component {i}: {di!r}", index=i)
    return d


def euler_step(f: Derivative, s: Sequence[float], t: float, dt: float) -> list[float]:
    """One explicit Euler step ``s + dt * f(t, s)``."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    k = _checked(f(t, s))
    return [si + dt * ki for si, ki in zip(s, k)]


def rk4_step(f: Derivative, s: Sequence[float], t: float, dt: float) -> list[float]:
    """One classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    h2 = 0.5 * dt
    k1 = _checked(f(t, s))
    k2 = _checked(f(t + h2, [si + h2 * ki for si, ki in zip(s, k1)]))
    k3 = _checked(f(t + h2, [si + h2 * ki for si, ki in zip(s, k2)]))
    k4 = _checked(f(t + dt, [si + dt * ki for si, ki in zip(s, k3)]))
    h6 = dt / 6.0
    return [
        si + h6 * (a + 2.0 * b + 2.0 * c + d)
        for si, a, b, c, d in zip(s, k1, k2, k3, k4)
    ]


def integrate(step, f: Derivative, s0: Sequence[float], t0: float, dt: float, n_steps: int) -> list[float]:
    """Apply ``step`` ``n_steps`` times starting from ``(t0, s0)``."""
    s = list(s0)
    for i in range(n_steps):
        s = step(f, s, t0 + i * dt, dt)
    return s
