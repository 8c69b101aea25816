"""Adam with bias correction and a step-decay learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteError


@dataclass(frozen=True)
class StepScheduler:
    """``lr(e) = initial_lr * (1 - decay_fraction) ** floor(e / period)``."""

    initial_lr: float
    decay_fraction: float
    period: int

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if not 0.0 <= self.decay_fraction < 1.0:
            raise ValueError("decay_fraction must lie in [0, 1)")
        if self.period < 1:
            raise ValueError("period must be >= 1")

    def lr_at(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch must be non-negative")
        return self.initial_lr * (1.0 - self.decay_fraction) ** (epoch // self.period)


def lr_at(sched: StepScheduler, epoch: int) -> float:
    return sched.lr_at(epoch)


@dataclass
class Adam:
    """Adam over a fixed list of named parameter arrays.

    Only the arrays passed at construction are tracked; frozen networks are
    simply never registered, so their moments do not exist.
    """

    params: dict[str, np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for k, p in self.params.items():
            self.m.setdefault(k, np.zeros_like(p))
            self.v.setdefault(k, np.zeros_like(p))

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None, epoch: int | None = None):
        """Apply one update in place; raises before touching anything on NaN/Inf."""
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                where = f" at epoch {epoch}" if epoch is not None else ""
                raise NonFiniteError(f"non-finite gradient for {k}{where}")
        if self.clip_norm is not None:
            total = math.sqrt(float(np.sum([np.sum(g * g) for g in grads.values()])))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {k: g * scale for k, g in grads.items()}
        lr = self.lr if lr is None else lr
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            self.params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "step_count": self.step_count,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }


def adam_step(state: Adam, grads: dict[str, np.ndarray], lr: float | None = None):
    state.step(grads, lr)
    return state.params
