"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pairtopk.errors import ConfigError, StateError
from pairtopk.tensor.params import ParameterSet


@dataclass
class OptimizerState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr < 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("AdamW needs lr >= 0, eps > 0, weight_decay >= 0")
        b1, b2 = self.betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ConfigError(f"AdamW betas must lie in [0, 1), got {self.betas}")


def adamw_step(params: ParameterSet, state: OptimizerState) -> None:
    """Apply one AdamW update to every parameter, then zero the gradients."""
    for name, p in params.items():
        if p.grad is None:
            raise StateError(f"parameter {name!r} has no gradient")
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            p.data = p.data - state.lr * state.weight_decay * p.data
        if state.lr:
            p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.zero_grad()
