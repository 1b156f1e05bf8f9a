"""One-hidden-layer tanh network trained online by feedback-error learning.

The network maps velocity-level features to a feed-forward voltage pair
``U_ff``. Each control tick the feedback command ``U_fb`` is used as the
output error, so the network gradually takes over the effort the feedback
loop would otherwise have to supply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wmrctl.errors import NumericError, ParameterError, UsageError
from wmrctl.vehicle_model import MotorCommand, VelocityState

WEIGHTS_MAGIC = "wmrctl-mlp"
WEIGHTS_VERSION = 1


@dataclass(frozen=True, eq=False)
class Mlp:
    """Weights of an ``n_in -> n_h (tanh) -> n_out (linear)`` network.

    Instances are treated as immutable: updates return a new network.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        n_h, n_in = self.W1.shape
        n_out = self.W2.shape[0]
        if self.b1.shape != (n_h,) or self.W2.shape != (n_out, n_h) or self.b2.shape != (n_out,):
            raise ParameterError(
                f"inconsistent shapes W1{self.W1.shape} b1{self.b1.shape} W2{self.W2.shape} b2{self.b2.shape}"
            )

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.params()])

    def same_weights(self, other: Mlp) -> bool:
        """Bitwise equality of every parameter."""
        return all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.params(), other.params()))


@dataclass(frozen=True)
class ForwardCache:
    net: Mlp
    x: np.ndarray
    h: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Gradients:
    dW1: np.ndarray
    db1: np.ndarray
    dW2: np.ndarray
    db2: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.dW1, self.db1, self.dW2, self.db2)

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.arrays()))


def mlp_init(n_in: int, n_h: int, n_out: int, seed: int, init_scale: float = 0.1) -> Mlp:
    """Uniform ``[-init_scale, init_scale]`` weights, zero biases."""
    for name, n in (("n_in", n_in), ("n_h", n_h), ("n_out", n_out)):
        if int(n) != n or n < 1:
            raise ParameterError(f"{name} must be an integer >= 1, got {n!r}")
    if not (math.isfinite(init_scale) and init_scale >= 0):
        raise ParameterError(f"init_scale must be >= 0, got {init_scale!r}")
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(-init_scale, init_scale, size=(n_h, n_in))
    W2 = rng.uniform(-init_scale, init_scale, size=(n_out, n_h))
    return Mlp(W1, np.zeros(n_h), W2, np.zeros(n_out))


def mlp_forward(net: Mlp, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.W1.shape[1],):
        raise ParameterError(f"input has shape {x.shape}, network expects ({net.W1.shape[1]},)")
    h = np.tanh(net.W1 @ x + net.b1)
    y = net.W2 @ h + net.b2
    return y, ForwardCache(net, x, h, y)


def mlp_backward(net: Mlp, cache: ForwardCache, output_error) -> Gradients:
    """Gradients of ``0.5 * ||output_error||^2`` where ``output_error = y - target``."""
    if cache.net is not net:
        raise UsageError("forward cache was produced by a different network")
    e = np.asarray(output_error, dtype=float)
    if e.shape != (net.W2.shape[0],):
        raise ParameterError(f"output error has shape {e.shape}, expected ({net.W2.shape[0]},)")
    dW2 = np.outer(e, cache.h)
    delta = (net.W2.T @ e) * (1.0 - cache.h * cache.h)
    dW1 = np.outer(delta, cache.x)
    return Gradients(dW1, delta, dW2, e.copy())


def mlp_update(net: Mlp, grads: Gradients, lr: float, clip: float | None = None) -> Mlp:
    """Plain gradient step, optionally with global-norm clipping."""
    if not (math.isfinite(lr) and lr >= 0):
        raise ParameterError(f"learning rate must be >= 0, got {lr!r}")
    for i, g in enumerate(grads.arrays()):
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient, update rejected", index=i)
    scale = lr
    if clip is not None:
        n = grads.norm()
        if n > clip:
            scale = lr * clip / n
    return Mlp(*(w - scale * g for w, g in zip(net.params(), grads.arrays())))


def feedback_error_learn_step(
    net: Mlp, x, u_fb: MotorCommand, lr: float, clip: float | None = None
) -> tuple[MotorCommand, Mlp]:
    """Emit ``U_ff`` for ``x`` and take one learning step taught by ``U_fb``.

    The output error is ``-U_fb``: the gradient step moves the network output
    towards ``U_ff + U_fb``. With ``lr == 0`` or ``U_fb == 0`` the network is
    returned unchanged (same object).
    """
    y, cache = mlp_forward(net, x)
    u_ff = MotorCommand(float(y[0]), float(y[1]))
    if lr == 0 or (u_fb.u_l == 0 and u_fb.u_r == 0):
        return u_ff, net
    grads = mlp_backward(net, cache, (-u_fb.u_l, -u_fb.u_r))
    return u_ff, mlp_update(net, grads, lr, clip)


@dataclass(frozen=True)
class FeatureScales:
    """Divisors applied to the six network inputs."""

    v_ref: float = 1.0
    omega_ref: float = 2.0
    dv_ref: float = 10.0
    domega_ref: float = 20.0
    v_meas: float = 1.0
    omega_meas: float = 2.0

    @classmethod
    def from_limits(cls, v_max: float, w_max: float) -> FeatureScales:
        return cls(v_max, w_max, 10.0 * v_max, 10.0 * w_max, v_max, w_max)

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"feature scale {k} must be > 0, got {v!r}")


def build_features(
    eta_ref: VelocityState,
    eta_ref_prev: VelocityState,
    eta_meas: VelocityState,
    dt: float,
    scales: FeatureScales,
) -> np.ndarray:
    """Normalized network input: references, their backward differences, measurements."""
    x = np.array(
        [
            eta_ref.v / scales.v_ref,
            eta_ref.omega / scales.omega_ref,
            (eta_ref.v - eta_ref_prev.v) / dt / scales.dv_ref,
            (eta_ref.omega - eta_ref_prev.omega) / dt / scales.domega_ref,
            eta_meas.v / scales.v_meas,
            eta_meas.omega / scales.omega_meas,
        ]
    )
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite network feature", index=int(np.argmin(np.isfinite(x))))
    return x


def save_weights(net: Mlp, path) -> None:
    """Write a versioned text record: header, sizes, then row-major parameters."""
    n_in, n_h, n_out = net.sizes
    lines = [f"{WEIGHTS_MAGIC} {WEIGHTS_VERSION}", f"sizes {n_in} {n_h} {n_out}"]
    for name, arr in zip(("W1", "b1", "W2", "b2"), net.params()):
        lines.append(name + " " + " ".join(repr(float(v)) for v in arr.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_weights(path) -> Mlp:
    lines = Path(path).read_text().split("\n")
    header = lines[0].split()
    if len(header) != 2 or header[0] != WEIGHTS_MAGIC:
        raise ParameterError(f"{path}: not a weights file")
    if int(header[1]) != WEIGHTS_VERSION:
        raise ParameterError(f"{path}: unsupported weights version {header[1]}")
    sizes = lines[1].split()
    if sizes[0] != "sizes" or len(sizes) != 4:
        raise ParameterError(f"{path}: line 2 must be 'sizes n_in n_h n_out'")
    n_in, n_h, n_out = (int(s) for s in sizes[1:])
    shapes = {"W1": (n_h, n_in), "b1": (n_h,), "W2": (n_out, n_h), "b2": (n_out,)}
    arrays = {}
    for lineno, line in enumerate(lines[2:6], start=3):
        name, *vals = line.split()
        if name not in shapes or name in arrays:
            raise ParameterError(f"{path}:{lineno}: unexpected record {name!r}")
        arr = np.array([float(v) for v in vals])
        if arr.size != math.prod(shapes[name]):
            raise ParameterError(f"{path}:{lineno}: {name} needs {math.prod(shapes[name])} values, got {arr.size}")
        arrays[name] = arr.reshape(shapes[name])
    if len(arrays) != 4:
        raise ParameterError(f"{path}: missing parameter records")
    return Mlp(arrays["W1"], arrays["b1"], arrays["W2"], arrays["b2"])
