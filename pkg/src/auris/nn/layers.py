"""Layers with hand-written backward passes.

Activations use the (batch, F, T, C) layout for tensors and (batch, N) for
vectors. Every layer caches what its backward pass needs during
``forward``; ``backward`` takes dLoss/dOutput, stores parameter gradients
in ``Parameter.grad`` and returns dLoss/dInput.
"""

from __future__ import annotations

import math

import numpy as np

from ..exceptions import ShapeError, UsageError

DEFAULT_INIT_STD = math.sqrt(0.1)

# upper bound on im2col elements materialised at once
_IM2COL_BUDGET = 1 << 25


def init_normal(shape, seed=0, std: float = DEFAULT_INIT_STD, dtype=np.float32) -> np.ndarray:
    """Gaussian(0, std**2) draws; the default std gives variance 0.1."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Parameter:
    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad = np.zeros_like(data)

    @property
    def shape(self):
        return self.data.shape


class Layer:
    kind = ""

    def params(self) -> dict[str, Parameter]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Conv2D(Layer):
    """Stride-1 convolution with zero 'same' padding; weights are K x P x C x C'."""

    kind = "conv"

    def __init__(self, in_channels, filters, kernel=(3, 3), rng=None, init_std=DEFAULT_INIT_STD,
                 dtype=np.float32):
        k, p = kernel
        self.kernel = (k, p)
        self.W = Parameter(init_normal((k, p, in_channels, filters), rng, init_std, dtype))
        self.b = Parameter(np.zeros(filters, dtype=dtype))

    def params(self):
        return {"W": self.W, "b": self.b}

    def _pads(self):
        k, p = self.kernel
        return ((k - 1) // 2, k - 1 - (k - 1) // 2), ((p - 1) // 2, p - 1 - (p - 1) // 2)

    def _im2col(self, xp, f, t) -> np.ndarray:
        """Rows of K*P*C values (kernel offset major, channel minor) for every output position."""
        k, p = self.kernel
        cols = np.empty((xp.shape[0], f, t, k, p, xp.shape[3]), dtype=xp.dtype)
        for i in range(k):
            for j in range(p):
                cols[:, :, :, i, j, :] = xp[:, i:i + f, j:j + t, :]
        return cols.reshape(-1, k * p * xp.shape[3])

    def _steps(self, batch, f, t, c):
        k, p = self.kernel
        step = max(1, _IM2COL_BUDGET // max(1, f * t * c * k * p))
        return range(0, batch, step), step

    def _correlate(self, xp, wm, f, t):
        """Valid cross-correlation of a padded input with a (K*P*C, C') weight matrix."""
        out = np.empty((xp.shape[0], f, t, wm.shape[1]), dtype=xp.dtype)
        starts, step = self._steps(xp.shape[0], f, t, xp.shape[3])
        for s in starts:
            out[s:s + step] = (self._im2col(xp[s:s + step], f, t) @ wm).reshape(-1, f, t, wm.shape[1])
        return out

    def forward(self, x, training=False, rng=None):
        k, p, c, c2 = self.W.data.shape
        if x.ndim != 4 or x.shape[3] != c:
            raise ShapeError(f"conv expects (B, F, T, {c}), got {x.shape}")
        b, f, t, _ = x.shape
        (pt, pb), (pl, pr) = self._pads()
        self._xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        out = self._correlate(self._xp, self.W.data.reshape(k * p * c, c2), f, t)
        out += self.b.data
        return out

    def backward(self, grad, need_input=True):
        xp = self._xp
        k, p, c, c2 = self.W.data.shape
        b, f, t, _ = grad.shape
        dwm = np.zeros((k * p * c, c2), dtype=grad.dtype)
        starts, step = self._steps(b, f, t, c)
        for s in starts:
            dwm += self._im2col(xp[s:s + step], f, t).T @ grad[s:s + step].reshape(-1, c2)
        self.W.grad = dwm.reshape(k, p, c, c2)
        self.b.grad = grad.reshape(-1, c2).sum(axis=0)
        if not need_input:
            return None
        # dL/dx is the correlation of the gradient with the flipped, channel-swapped kernel
        (pt, pb), (pl, pr) = self._pads()
        gp = np.pad(grad, ((0, 0), (pb, pt), (pr, pl), (0, 0)))
        wflip = self.W.data[::-1, ::-1].transpose(0, 1, 3, 2).reshape(k * p * c2, c)
        return self._correlate(gp, wflip, f, t)


class BatchNorm(Layer):
    """Per-channel normalisation with learnable scale and shift.

    Training uses batch statistics over every axis but the last and updates
    exponential running averages (``momentum`` weights the old value);
    inference uses the running averages.
    """

    kind = "bn"

    def __init__(self, channels, eps=1e-3, momentum=0.9, dtype=np.float32):
        self.eps = eps
        self.momentum = momentum
        self.scale = Parameter(np.ones(channels, dtype=dtype))
        self.shift = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def params(self):
        return {"scale": self.scale, "shift": self.shift}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False, rng=None):
        c = x.shape[-1]
        x2 = x.reshape(-1, c)
        if training:
            if x.shape[0] < 2:
                raise UsageError("batch normalisation in training mode needs a batch of at least 2")
            mean = x2.mean(axis=0)
            xc = x2 - mean
            var = np.einsum("ij,ij->j", xc, xc) / len(x2)
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1 - m) * mean
            self.running_var[...] = m * self.running_var + (1 - m) * var
        else:
            xc = x2 - self.running_mean
            var = self.running_var
        inv = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
        xhat = xc * inv
        self._cache = (xhat, inv, training, x.shape)
        return (xhat * self.scale.data + self.shift.data).reshape(x.shape)

    def backward(self, grad):
        xhat, inv, training, shape = self._cache
        g = grad.reshape(xhat.shape)
        self.shift.grad = g.sum(axis=0)
        self.scale.grad = np.einsum("ij,ij->j", g, xhat)
        k = self.scale.data * inv
        if not training:
            return (g * k).reshape(shape)
        n = len(xhat)
        dx = g - self.shift.grad / n
        dx -= xhat * (self.scale.grad / n)
        dx *= k
        return dx.reshape(shape)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, grad):
        return grad * self._mask


class Dropout(Layer):
    """Multiply by a Bernoulli(1 - rate) mask in training; identity at inference.

    Masks are not rescaled, so at inference activations are on average
    1 / (1 - rate) times larger than during training.
    """

    kind = "dropout"

    def __init__(self, rate):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1], got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise UsageError("dropout in training mode needs a random generator")
        self._mask = (rng.random(x.shape, dtype=np.float32) >= self.rate).astype(x.dtype)
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class AvgPool(Layer):
    kind = "avg_pool"

    def __init__(self, size=2):
        self.size = size

    def forward(self, x, training=False, rng=None):
        b, f, t, c = x.shape
        k = self.size
        if f % k or t % k:
            raise ShapeError(f"average pool {k}x{k} needs F and T divisible by {k}, got {f}x{t}")
        self._shape = x.shape
        return x.reshape(b, f // k, k, t // k, k, c).mean(axis=(2, 4))

    def backward(self, grad):
        b, f, t, c = self._shape
        k = self.size
        g = grad[:, :, None, :, None, :] / (k * k)
        return np.broadcast_to(g, (b, f // k, k, t // k, k, c)).reshape(b, f, t, c)


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad):
        b, f, t, c = self._shape
        return np.broadcast_to(grad[:, None, None, :] / (f * t), self._shape).copy()


class Dense(Layer):
    """y = W x + b with W stored as (units, inputs)."""

    kind = "fc"

    def __init__(self, in_features, units, rng=None, init_std=DEFAULT_INIT_STD, dtype=np.float32):
        self.W = Parameter(init_normal((units, in_features), rng, init_std, dtype))
        self.b = Parameter(np.zeros(units, dtype=dtype))

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.W.data.shape[1]:
            raise ShapeError(f"fully connected layer expects (B, {self.W.data.shape[1]}), got {x.shape}")
        self._x = x
        return x @ self.W.data.T + self.b.data

    def backward(self, grad):
        self.W.grad = grad.T @ self._x
        self.b.grad = grad.sum(axis=0)
        return grad @ self.W.data


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(y, grad):
    """Vector-Jacobian product of softmax given its output ``y``."""
    return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False, rng=None):
        self._y = softmax(x)
        return self._y

    def backward(self, grad):
        return softmax_backward(self._y, grad)


class MixtureOfExperts(Layer):
    """K ReLU experts mixed by a softmax gate; returns the gated sum (pre-softmax).

    Expert weights are stacked as (K, units, inputs), the gate as (K, inputs).
    """

    kind = "moe"

    def __init__(self, in_features, units, experts=10, rng=None, init_std=DEFAULT_INIT_STD,
                 dtype=np.float32):
        self.experts = experts
        self.units = units
        self.We = Parameter(init_normal((experts, units, in_features), rng, init_std, dtype))
        self.be = Parameter(np.zeros((experts, units), dtype=dtype))
        self.Wg = Parameter(init_normal((experts, in_features), rng, init_std, dtype))
        self.bg = Parameter(np.zeros(experts, dtype=dtype))

    def params(self):
        return {"We": self.We, "be": self.be, "Wg": self.Wg, "bg": self.bg}

    def forward(self, x, training=False, rng=None):
        k, c, n = self.We.data.shape
        if x.ndim != 2 or x.shape[1] != n:
            raise ShapeError(f"mixture of experts expects (B, {n}), got {x.shape}")
        pre = (x @ self.We.data.reshape(k * c, n).T).reshape(-1, k, c) + self.be.data
        e = np.maximum(pre, 0)
        g = softmax(x @ self.Wg.data.T + self.bg.data)
        self._cache = (x, pre, e, g)
        self.gate_ = g
        return np.einsum("bkc,bk->bc", e, g)

    def backward(self, grad):
        x, pre, e, g = self._cache
        k, c, n = self.We.data.shape
        dpre = grad[:, None, :] * g[:, :, None] * (pre > 0)
        dgl = softmax_backward(g, np.einsum("bc,bkc->bk", grad, e))
        flat = dpre.reshape(-1, k * c)
        self.We.grad = (flat.T @ x).reshape(k, c, n)
        self.be.grad = dpre.sum(axis=0)
        self.Wg.grad = dgl.T @ x
        self.bg.grad = dgl.sum(axis=0)
        return flat @ self.We.data.reshape(k * c, n) + dgl @ self.Wg.data
