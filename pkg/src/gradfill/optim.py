"""First-order optimizers used by training and by the gradient-search O-step."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .autodiff import NonFiniteError


@dataclass(frozen=True)
class NesterovState:
    velocity: np.ndarray
    momentum: float = 0.9
    step_size: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.step_size < 0:
            raise ValueError(f"step_size must be non-negative, got {self.step_size}")

    @classmethod
    def zeros_like(cls, variable: np.ndarray, momentum: float = 0.9, step_size: float = 1.0) -> "NesterovState":
        return cls(np.zeros_like(variable, dtype=np.float64), momentum, step_size)


def nesterov_step(
    state: NesterovState,
    variable: np.ndarray,
    gradient_fn: Callable[[np.ndarray], np.ndarray],
) -> tuple[np.ndarray, NesterovState]:
    """One Nesterov accelerated step; returns new (variable, state).

    The gradient is taken at the look-ahead point ``variable + momentum * velocity``.
    Inputs are never modified, so a rejected step leaves the caller's state intact.
    """
    if state.velocity.shape != variable.shape:
        raise ValueError(f"nesterov_step: velocity shape {state.velocity.shape} != variable shape {variable.shape}")
    lookahead = variable + state.momentum * state.velocity
    g = np.asarray(gradient_fn(lookahead), dtype=np.float64)
    if g.shape != variable.shape:
        raise ValueError(f"nesterov_step: gradient shape {g.shape} != variable shape {variable.shape}")
    if not np.isfinite(g).all():
        raise NonFiniteError("nesterov_step: non-finite gradient, step rejected")
    velocity = state.momentum * state.velocity - state.step_size * g
    return variable + velocity, replace(state, velocity=velocity)


def global_norm(grads: Iterable[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale so the joint L2 norm is at most ``max_norm``; returns (grads, original norm)."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


class ParamOptimizer:
    """SGD, optionally with Nesterov momentum, updating numpy arrays in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float = 0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()} if momentum else {}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            p = self.params[k]
            if self.momentum:
                # Sutskever-style reformulation: the stored parameter is the look-ahead point.
                v = self.velocity[k]
                v *= self.momentum
                v -= self.lr * g
                p += self.momentum * v - self.lr * g
            else:
                p -= self.lr * g
