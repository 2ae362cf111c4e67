"""Functional form of the gated mixture of experts."""

from __future__ import annotations

import numpy as np

from ..exceptions import ShapeError
from ..nn.layers import softmax


def moe_forward(h, experts, gate) -> np.ndarray:
    """softmax(sum_k e_k * g_k) with e_k = ReLU(W_k h + b_k) and g = softmax(W_g h + b_g).

    ``experts`` is a sequence of (W, b) pairs and ``gate`` a single (W, b).
    Works on one vector or a batch of row vectors.
    """
    h = np.asarray(h, dtype=np.float64)
    wg, bg = gate
    if np.shape(wg)[0] != len(experts):
        raise ShapeError(f"gate width {np.shape(wg)[0]} != expert count {len(experts)}")
    g = softmax(h @ np.asarray(wg).T + bg)
    mixed = 0.0
    for k, (w, b) in enumerate(experts):
        e = np.maximum(h @ np.asarray(w).T + b, 0)
        mixed = mixed + e * g[..., k:k + 1]
    return softmax(mixed)


def gate_weights(layer, h) -> np.ndarray:
    """Gate distribution of a ``MixtureOfExperts`` layer for inputs ``h``."""
    layer.forward(np.asarray(h, dtype=layer.Wg.data.dtype))
    return layer.gate_
