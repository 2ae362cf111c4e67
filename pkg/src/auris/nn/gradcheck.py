"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

import numpy as np


def rel_error(a, b) -> float:
    """Norm-wise relative error, guarded against two zero tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numerical_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """dF/dx by central differences; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return grad


def check_layer(layer, x: np.ndarray, training=False, seed=0, h=1e-6) -> dict[str, float]:
    """Compare a layer's backward against finite differences of a random projection.

    Dropout masks are re-drawn from the same seed on every evaluation so the
    function being differentiated stays fixed.
    """
    proj = np.random.default_rng(seed + 1).standard_normal(layer.forward(x, training, np.random.default_rng(seed)).shape)

    def loss():
        out = layer.forward(x, training, np.random.default_rng(seed))
        return float(np.sum(out * proj))

    loss()
    dx = layer.backward(proj)
    analytic = {"input": dx}
    analytic.update({name: p.grad.copy() for name, p in layer.params().items()})
    errors = {"input": rel_error(dx, numerical_grad(loss, x, h))}
    for name, p in layer.params().items():
        errors[name] = rel_error(analytic[name], numerical_grad(loss, p.data, h))
    return errors


def check_network(net, x: np.ndarray, loss_and_grad, training=True, seed=0, h=1e-3) -> dict[str, float]:
    """Finite-difference check of every parameter of a Sequential.

    ``loss_and_grad(output)`` returns (loss, dLoss/dOutput) where the output
    is the network's pre-softmax logits.
    """

    def loss():
        out = net.forward(x, training, np.random.default_rng(seed), logits=True)
        return float(loss_and_grad(out)[0])

    out = net.forward(x, training, np.random.default_rng(seed), logits=True)
    net.backward(loss_and_grad(out)[1])
    analytic = {name: p.grad.copy() for name, p in net.parameters().items()}
    return {name: rel_error(analytic[name], numerical_grad(loss, p.data, h))
            for name, p in net.parameters().items()}
