"""SGD with momentum, the two-rate learning schedule, and damping diagnostics.

The update is v <- mu*v - eta*g; theta <- theta + v, with one rate for the
body of the network and a 10x larger rate for the final prediction layer.
On a quadratic loss the pair (theta, v) evolves under a fixed 2x2 matrix,
so convergence (and under/overdamping) is read off its eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neuralnet import FullyConnected, NetworkSpec

__all__ = [
    "Schedule",
    "OptimizerState",
    "DampingProbe",
    "lr_at_epoch",
    "sgd_momentum_step",
    "iteration_matrix",
    "spectral_radius",
    "simulate_quadratic",
    "is_underdamped",
]

DEFAULT_MOMENTUM = 0.9


@dataclass(frozen=True)
class Schedule:
    base_lr_body: float = 0.005
    base_lr_head: float = 0.05
    drop_epochs: tuple[int, ...] = (40, 60)
    drop_factor: float = 0.1
    stop_epoch: int = 70

    def __post_init__(self):
        if self.base_lr_body <= 0 or self.base_lr_head <= 0:
            raise ValueError("learning rates must be positive")
        if not 0 < self.drop_factor < 1:
            raise ValueError("drop_factor must be in (0, 1)")
        if any(b >= a for a, b in zip(self.drop_epochs[1:], self.drop_epochs)):
            raise ValueError("drop_epochs must be strictly increasing")


def lr_at_epoch(schedule: Schedule, epoch: int) -> tuple[float, float] | None:
    """(body_rate, head_rate) for the epoch, or None once training halts."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch >= schedule.stop_epoch:
        return None
    factor = schedule.drop_factor ** sum(1 for d in schedule.drop_epochs if epoch >= d)
    return schedule.base_lr_body * factor, schedule.base_lr_head * factor


@dataclass
class OptimizerState:
    velocity: list          # same nesting as network parameters
    momentum: float = DEFAULT_MOMENTUM
    lr_body: float = 0.005
    lr_head: float = 0.05

    @classmethod
    def for_params(cls, params: list, momentum: float = DEFAULT_MOMENTUM,
                   lr_body: float = 0.005, lr_head: float = 0.05) -> "OptimizerState":
        velocity = [None if p is None else tuple(np.zeros_like(a) for a in p) for p in params]
        return cls(velocity=velocity, momentum=momentum, lr_body=lr_body, lr_head=lr_head)


def _head_index(net: NetworkSpec) -> int:
    """Index of the final fully connected (prediction) layer."""
    for i in range(len(net.layers) - 1, -1, -1):
        if isinstance(net.layers[i], FullyConnected):
            return i
    raise ValueError("network has no fully connected head")


def sgd_momentum_step(net: NetworkSpec, params: list, grads: list, state: OptimizerState) -> None:
    """One in-place momentum update; body and head layers use their own rates."""
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise ValueError("parameter/gradient/velocity structure mismatch")
    head = _head_index(net)
    for i, (p, g, v) in enumerate(zip(params, grads, state.velocity)):
        if p is None:
            continue
        if g is None or len(g) != len(p):
            raise ValueError(f"gradient missing or malformed for layer {i}")
        eta = state.lr_head if i == head else state.lr_body
        for arr, garr, varr in zip(p, g, v):
            if arr.shape != garr.shape:
                raise ValueError(f"gradient shape {garr.shape} != parameter shape {arr.shape}")
            varr *= state.momentum
            varr -= eta * garr
            arr += varr


# --- quadratic-loss damping diagnostics ------------------------------------

@dataclass(frozen=True)
class DampingProbe:
    curvature: float          # lambda of the loss 0.5 * lambda * theta^2
    lr: float
    momentum: float
    steps: int = 1000
    theta0: float = 1.0

    def __post_init__(self):
        if self.curvature <= 0 or self.lr <= 0:
            raise ValueError("curvature and learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


def iteration_matrix(probe: DampingProbe) -> np.ndarray:
    el = probe.lr * probe.curvature
    return np.array([[1.0 - el, probe.momentum], [-el, probe.momentum]])


def spectral_radius(probe: DampingProbe) -> float:
    """Spectral radius of the (theta, v) iteration matrix; < 1 means convergence."""
    eigs = np.linalg.eigvals(iteration_matrix(probe))
    return float(np.abs(eigs).max())


def is_underdamped(probe: DampingProbe) -> bool:
    """True when the iteration eigenvalues are complex (oscillatory decay)."""
    el = probe.lr * probe.curvature
    trace = 1.0 - el + probe.momentum
    return trace * trace < 4.0 * probe.momentum


def simulate_quadratic(probe: DampingProbe) -> np.ndarray:
    """Trajectory theta_0 .. theta_steps of the momentum recurrence on 0.5*lambda*theta^2."""
    theta = probe.theta0
    v = 0.0
    out = np.empty(probe.steps + 1)
    out[0] = theta
    for t in range(1, probe.steps + 1):
        v = probe.momentum * v - probe.lr * probe.curvature * theta
        theta += v
        out[t] = theta
    return out
