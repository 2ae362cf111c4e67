"""Layer specifications, shape inference and the sequential container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError, NumericalError, ShapeError
from .layers import (
    DEFAULT_INIT_STD,
    AvgPool,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    MixtureOfExperts,
    Parameter,
    ReLU,
    Softmax,
)

LAYER_KINDS = ("conv", "bn", "relu", "dropout", "avg_pool", "global_avg_pool", "fc", "softmax", "moe")

_REQUIRED = {
    "conv": {"filters"},
    "dropout": {"rate"},
    "avg_pool": {"size"},
    "fc": {"units"},
    "moe": {"units", "experts"},
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        missing = _REQUIRED.get(self.kind, set()) - set(self.params)
        if missing:
            raise ConfigurationError(f"{self.kind} layer is missing {sorted(missing)}")
        p = self.params
        if self.kind == "dropout" and not 0.0 <= p["rate"] <= 1.0:
            raise ConfigurationError(f"dropout rate must lie in [0, 1], got {p['rate']}")
        for key in ("filters", "units", "experts", "size"):
            if key in p and int(p[key]) < 1:
                raise ConfigurationError(f"{self.kind}.{key} must be >= 1, got {p[key]}")

    def describe(self) -> str:
        parts = [self.kind]
        for key, val in self.params.items():
            if isinstance(val, tuple):
                val = "x".join(str(v) for v in val)
            parts.append(f"{key}={val}")
        return " ".join(parts)

    @classmethod
    def parse(cls, line: str) -> "LayerSpec":
        kind, *items = line.split()
        params = {}
        for item in items:
            key, _, raw = item.partition("=")
            if key == "kernel":
                params[key] = tuple(int(v) for v in raw.split("x"))
            elif key == "rate":
                params[key] = float(raw)
            else:
                params[key] = int(raw)
        return cls(kind, params)


def conv(filters, kernel=(3, 3)):
    return LayerSpec("conv", {"kernel": tuple(kernel), "filters": filters})


def bn():
    return LayerSpec("bn")


def relu():
    return LayerSpec("relu")


def dropout(rate):
    return LayerSpec("dropout", {"rate": rate})


def avg_pool(size=2):
    return LayerSpec("avg_pool", {"size": size})


def global_avg_pool():
    return LayerSpec("global_avg_pool")


def fc(units):
    return LayerSpec("fc", {"units": units})


def softmax_layer():
    return LayerSpec("softmax")


def moe(units, experts=10):
    return LayerSpec("moe", {"units": units, "experts": experts})


def _next_shape(spec: LayerSpec, shape: tuple) -> tuple:
    k = spec.kind
    if k == "conv":
        if len(shape) != 3:
            raise ShapeError(f"conv needs an F x T x C input, got {shape}")
        return (shape[0], shape[1], spec.params["filters"])
    if k == "avg_pool":
        s = spec.params["size"]
        if len(shape) != 3 or shape[0] % s or shape[1] % s:
            raise ShapeError(f"average pool {s} cannot divide {shape}")
        return (shape[0] // s, shape[1] // s, shape[2])
    if k == "global_avg_pool":
        if len(shape) != 3:
            raise ShapeError(f"global pooling needs an F x T x C input, got {shape}")
        return (shape[2],)
    if k in ("fc", "moe"):
        if len(shape) != 1:
            raise ShapeError(f"{k} needs a vector input, got {shape}")
        return (spec.params["units"],)
    return shape


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list with a fixed input shape.

    ``embedding_index`` marks the layer whose output serves as the
    embedding (for fusion, distillation and hierarchy heads).
    """

    input_shape: tuple
    layers: tuple
    embedding_index: int | None = None
    block_ends: tuple = ()

    def block_shapes(self) -> list[tuple]:
        """Output shape at the end of each architecture row."""
        shapes = self.shapes()
        return [shapes[i] for i in self.block_ends]

    def shapes(self) -> list[tuple]:
        """Output shape of every layer, excluding the batch axis."""
        out, shape = [], tuple(self.input_shape)
        for spec in self.layers:
            shape = _next_shape(spec, shape)
            out.append(shape)
        return out

    @property
    def output_shape(self) -> tuple:
        return self.shapes()[-1]

    def describe(self) -> str:
        head = "input " + "x".join(str(d) for d in self.input_shape)
        if self.embedding_index is not None:
            head += f" embedding={self.embedding_index}"
        return "\n".join([head] + [s.describe() for s in self.layers])

    @classmethod
    def parse(cls, text: str) -> "NetworkSpec":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("input "):
            raise ConfigurationError("architecture descriptor must start with an 'input' line")
        head = lines[0].split()
        shape = tuple(int(v) for v in head[1].split("x"))
        emb = None
        for item in head[2:]:
            key, _, val = item.partition("=")
            if key == "embedding":
                emb = int(val)
        return cls(shape, tuple(LayerSpec.parse(ln) for ln in lines[1:]), emb)

    def build(self, seed=0, dtype=np.float32, init_std: float | None = DEFAULT_INIT_STD) -> "Sequential":
        """Instantiate the layers; ``init_std=None`` scales each weight draw by sqrt(2 / fan_in)."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        layers, shape = [], tuple(self.input_shape)
        for spec in self.layers:
            layers.append(_make_layer(spec, shape, rng, dtype, init_std))
            shape = _next_shape(spec, shape)
        return Sequential(layers, self.embedding_index, spec=self)


def _make_layer(spec, shape, rng, dtype, init_std) -> Layer:
    p = spec.params
    k = spec.kind
    if init_std is None:
        fan_in = shape[0] if k in ("fc", "moe") else shape[-1] * int(np.prod(p.get("kernel", (3, 3))))
        init_std = float(np.sqrt(2.0 / fan_in))
    if k == "conv":
        return Conv2D(shape[-1], p["filters"], p.get("kernel", (3, 3)), rng, init_std, dtype)
    if k == "bn":
        return BatchNorm(shape[-1], dtype=dtype)
    if k == "relu":
        return ReLU()
    if k == "dropout":
        return Dropout(p["rate"])
    if k == "avg_pool":
        return AvgPool(p["size"])
    if k == "global_avg_pool":
        return GlobalAvgPool()
    if k == "fc":
        return Dense(shape[0], p["units"], rng, init_std, dtype)
    if k == "moe":
        return MixtureOfExperts(shape[0], p["units"], p["experts"], rng, init_std, dtype)
    return Softmax()


class StateMixin:
    """Named tensor access shared by every trainable model."""

    def state(self) -> dict[str, np.ndarray]:
        state = {k: p.data for k, p in self.parameters().items()}
        state.update(self.buffers())
        return state

    def load_state(self, tensors: dict[str, np.ndarray]):
        own = self.state()
        missing = set(own) - set(tensors)
        if missing:
            raise ConfigurationError(f"checkpoint lacks tensors {sorted(missing)[:5]}")
        for name, arr in own.items():
            src = tensors[name]
            if src.shape != arr.shape:
                raise ShapeError(f"tensor {name}: checkpoint shape {src.shape} != model shape {arr.shape}")
            arr[...] = src

    def count_params(self) -> int:
        return int(sum(p.data.size for p in self.parameters().values()))


class Sequential(StateMixin):
    """Layers applied in order, with an optional embedding tap.

    ``forward`` records the embedding (output of ``embedding_index``) in
    ``self.embedding``. ``backward`` accepts an extra gradient for that
    embedding, which is how distillation and the encoder compactness term
    reach the layers below the head.
    """

    def __init__(self, layers, embedding_index=None, spec: NetworkSpec | None = None):
        self.layers = list(layers)
        self.embedding_index = embedding_index
        self.spec = spec
        self.embedding = None

    def __len__(self):
        return len(self.layers)

    @property
    def ends_with_softmax(self) -> bool:
        return bool(self.layers) and isinstance(self.layers[-1], Softmax)

    def forward(self, x, training=False, rng=None, logits=False):
        """Run the stack; ``logits=True`` stops before a trailing softmax."""
        stop = len(self.layers) - 1 if logits and self.ends_with_softmax else len(self.layers)
        for i, layer in enumerate(self.layers[:stop]):
            x = layer.forward(x, training, rng)
            if i == self.embedding_index:
                self.embedding = x
        return x

    def backward(self, grad, embedding_grad=None, from_logits=True, need_input=False):
        """Propagate dLoss/dOutput to every parameter; returns dLoss/dInput if ``need_input``.

        With ``from_logits`` the incoming gradient is taken with respect to
        the pre-softmax output, so a trailing softmax is skipped.
        """
        stop = len(self.layers) - 1 if from_logits and self.ends_with_softmax else len(self.layers)
        if grad is None:
            grad = 0.0
        for i in range(stop - 1, -1, -1):
            if i == self.embedding_index and embedding_grad is not None:
                grad = grad + embedding_grad
            layer = self.layers[i]
            if np.isscalar(grad):
                # nothing flows from above the embedding tap
                for p in layer.params().values():
                    p.grad = np.zeros_like(p.data)
                continue
            if i == 0 and not need_input and isinstance(layer, Conv2D):
                layer.backward(grad, need_input=False)
                return None
            grad = layer.backward(grad)
            if not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite gradient leaving layer {i} ({layer.kind})")
        return grad

    def parameters(self) -> dict[str, Parameter]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.params().items():
                out[f"{i}.{layer.kind}.{name}"] = p
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, b in layer.buffers().items():
                out[f"{i}.{layer.kind}.{name}"] = b
        return out
