"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TapeError
from .nn import ParameterSet


@dataclass
class AdamState:
    lr: float = 1e-3
    beta_m1: float = 0.9
    beta_m2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParameterSet, state: AdamState) -> None:
    """One in-place Adam update of every parameter, then clear the gradients.

    Raises if any parameter lacks a gradient: a silently skipped parameter
    would make optimizer state drift from the registry.
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise TapeError(f"adam_step: no gradient for {missing[:5]}{' ...' if len(missing) > 5 else ''}")
    state.t += 1
    bc1 = 1.0 - state.beta_m1 ** state.t
    bc2 = 1.0 - state.beta_m2 ** state.t
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta_m1
        m += (1.0 - state.beta_m1) * g
        v *= state.beta_m2
        v += (1.0 - state.beta_m2) * (g * g)
        update = (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        p.data = (p.data - update).astype(p.dtype)
        p.grad = None


class Adam:
    def __init__(self, params: ParameterSet, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta_m1=betas[0], beta_m2=betas[1], eps=eps)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
