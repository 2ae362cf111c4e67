"""Three-branch spectrogram encoder with a feature combiner."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError, ShapeError
from ..nn.layers import Parameter
from ..nn.network import NetworkSpec, StateMixin
from .architectures import EMBEDDING_WIDTH, build_dnn01, build_dnn02, build_encoder_branch

BRANCH_KINDS = ("log-mel", "gamma", "cqt")
BRANCH_NAMES = ("lm", "ga", "cq")
COMBINER_KINDS = ("sum", "max", "lin")


def combine(xs, kind: str, weights=None, bias=None) -> np.ndarray:
    """Merge equal-length feature vectors (or batches of them).

    ``lin`` is ReLU(sum_i x_i * w_i + bias) with elementwise weights.
    """
    xs = [np.asarray(x) for x in xs]
    if any(x.shape != xs[0].shape for x in xs):
        raise ShapeError(f"combiner inputs differ in shape: {[x.shape for x in xs]}")
    if kind == "sum":
        return np.sum(xs, axis=0)
    if kind == "max":
        return np.max(xs, axis=0)
    if kind == "lin":
        if weights is None or bias is None or len(weights) != len(xs):
            raise ConfigurationError("lin combiner needs one weight vector per input and a bias")
        return np.maximum(sum(x * w for x, w in zip(xs, weights)) + bias, 0)
    raise ConfigurationError(f"unknown combiner {kind!r}; expected one of {COMBINER_KINDS}")


class Combiner:
    kind_name = "combiner"

    def __init__(self, kind="sum", width=EMBEDDING_WIDTH, n_inputs=3, dtype=np.float32):
        if kind not in COMBINER_KINDS:
            raise ConfigurationError(f"unknown combiner {kind!r}; expected one of {COMBINER_KINDS}")
        self.kind = kind
        self.n_inputs = n_inputs
        self._params = {}
        if kind == "lin":
            # starts as ReLU(sum) so all branches contribute from the first step
            for name in BRANCH_NAMES[:n_inputs]:
                self._params[f"w_{name}"] = Parameter(np.ones(width, dtype=dtype))
            self._params["w_bias"] = Parameter(np.zeros(width, dtype=dtype))

    def params(self):
        return dict(self._params)

    def _weights(self):
        return [self._params[f"w_{n}"].data for n in BRANCH_NAMES[: self.n_inputs]]

    def forward(self, xs):
        self._xs = xs
        if self.kind == "lin":
            out = combine(xs, "lin", self._weights(), self._params["w_bias"].data)
            self._mask = out > 0
            return out
        if self.kind == "max":
            self._arg = np.argmax(np.stack(xs), axis=0)
        return combine(xs, self.kind)

    def backward(self, grad):
        if self.kind == "sum":
            return [grad] * len(self._xs)
        if self.kind == "max":
            return [grad * (self._arg == i) for i in range(len(self._xs))]
        g = grad * self._mask
        for name, x in zip(BRANCH_NAMES, self._xs):
            self._params[f"w_{name}"].grad = (g * x).sum(axis=0)
        self._params["w_bias"].grad = g.sum(axis=0)
        return [g * w for w in self._weights()]


@dataclass(frozen=True)
class EncoderSpec:
    branches: tuple
    heads: tuple
    combiner: str
    head: NetworkSpec

    def build(self, seed=0, dtype=np.float32) -> "Encoder":
        rng = np.random.default_rng(seed)
        branches = [s.build(rng, dtype) for s in self.branches]
        heads = [s.build(rng, dtype) for s in self.heads]
        width = self.branches[0].output_shape[0]
        return Encoder(self, branches, heads, Combiner(self.combiner, width, len(branches), dtype),
                       self.head.build(rng, dtype))

    def describe(self) -> str:
        parts = [f"encoder combiner={self.combiner}"]
        for name, b, h in zip(BRANCH_NAMES, self.branches, self.heads):
            parts += [f"[{name}]", b.describe(), f"[head_{name}]", h.describe()]
        parts += ["[head]", self.head.describe()]
        return "\n".join(parts)


def build_encoder(n_classes, combiner="lin", input_shape=(128, 128, 1)) -> EncoderSpec:
    """Three identical branches (log-mel, gammatone, CQT), per-branch heads and a joint head."""
    branch = build_encoder_branch(input_shape)
    width = branch.output_shape[0]
    if width != EMBEDDING_WIDTH:
        raise ConfigurationError(f"branch embedding width {width} != {EMBEDDING_WIDTH}")
    if combiner not in COMBINER_KINDS:
        raise ConfigurationError(f"unknown combiner {combiner!r}; expected one of {COMBINER_KINDS}")
    head = build_dnn01(n_classes, width)
    return EncoderSpec((branch,) * 3, (head,) * 3, combiner, build_dnn02(n_classes, width))


class Encoder(StateMixin):
    """Forward returns four logit (or probability) arrays: three branch heads then the joint head."""

    def __init__(self, spec, branches, heads, combiner, head):
        self.spec = spec
        self.branches = branches
        self.heads = heads
        self.combiner = combiner
        self.head = head
        self.embedding = None

    def _children(self):
        out = {}
        for name, b, h in zip(BRANCH_NAMES, self.branches, self.heads):
            out[name] = b
            out[f"head_{name}"] = h
        out["head"] = self.head
        return out

    def parameters(self):
        out = {}
        for prefix, net in self._children().items():
            out.update({f"{prefix}/{k}": v for k, v in net.parameters().items()})
        out.update({f"combiner/{k}": v for k, v in self.combiner.params().items()})
        return out

    def buffers(self):
        out = {}
        for prefix, net in self._children().items():
            out.update({f"{prefix}/{k}": v for k, v in net.buffers().items()})
        return out

    def forward(self, xs, training=False, rng=None, logits=False):
        if len(xs) != len(self.branches):
            raise ShapeError(f"encoder expects {len(self.branches)} inputs, got {len(xs)}")
        feats = [b.forward(x, training, rng) for b, x in zip(self.branches, xs)]
        outs = [h.forward(f, training, rng, logits=logits) for h, f in zip(self.heads, feats)]
        self.embedding = self.combiner.forward(feats)
        outs.append(self.head.forward(self.embedding, training, rng, logits=logits))
        return outs

    def backward(self, grads):
        """``grads`` are the four dLoss/dLogits arrays in forward order."""
        dcomb = self.combiner.backward(self.head.backward(grads[-1]))
        for b, h, g, dc in zip(self.branches, self.heads, grads[:-1], dcomb):
            b.backward(h.backward(g) + dc)

    def extract_embedding(self, xs) -> np.ndarray:
        """Combined feature in inference mode."""
        self.forward(xs, training=False)
        return self.embedding
