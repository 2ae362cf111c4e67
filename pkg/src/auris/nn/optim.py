"""Adam with bias correction."""

from __future__ import annotations

import numpy as np

from .layers import Parameter


def adam_step(params: dict[str, Parameter], state: dict, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update. ``state`` holds ``t`` and the per-parameter moments."""
    t = state.get("t", 0) + 1
    state["t"] = t
    m_all = state.setdefault("m", {})
    v_all = state.setdefault("v", {})
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name}")
        m = m_all.setdefault(name, np.zeros_like(p.data))
        v = v_all.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype, copy=False)
    return params


class Adam:
    def __init__(self, params: dict[str, Parameter], lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state: dict = {}

    @property
    def t(self) -> int:
        return self.state.get("t", 0)

    def step(self):
        adam_step(self.params, self.state, self.lr, self.beta1, self.beta2, self.eps)
