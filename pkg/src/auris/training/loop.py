"""Minibatch Adam training for sequential networks and the three-branch encoder."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import ConfigurationError, NumericalError, ShapeError
from ..models.encoder import Encoder
from ..nn.optim import Adam
from .losses import OBJECTIVES, add_l2_grad, embedding_distance, l2_penalty
from .mixup import mixup_batch

RNG_STREAMS = ("init", "dropout", "mixup", "shuffle")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 100
    lr: float = 1e-4
    l2: float = 1e-3
    alpha: float = 1.0 / 3.0
    beta: float = 1.0
    gamma_joint: float = 0.2
    margin: float = 0.3
    gamma_distill: float = 0.5
    mixup: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        for name in ("lr", "l2", "alpha", "beta", "margin"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        for name in ("gamma_joint", "gamma_distill"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


@dataclass
class History:
    rows: list = field(default_factory=list)

    @property
    def losses(self) -> list:
        return [r["loss"] for r in self.rows]

    def to_csv(self, path, config_hash: str = ""):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "train_acc", "val_acc", "config_hash"])
            for r in self.rows:
                val = "" if r["val_acc"] is None else f"{r['val_acc']:.6f}"
                w.writerow([r["epoch"], f"{r['loss']:.8f}", f"{r['train_acc']:.6f}", val, config_hash])


def rng_streams(seed) -> dict:
    """Independent generators per purpose so changing one consumer leaves the others intact."""
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(RNG_STREAMS, children)}


def one_hot(labels, n_classes) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeError(f"labels must lie in [0, {n_classes}), got range [{labels.min()}, {labels.max()}]")
    return np.eye(n_classes)[labels]


def _take(X, idx):
    return X[idx] if isinstance(X, np.ndarray) else tuple(x[idx] for x in X)


def _length(X) -> int:
    return len(X) if isinstance(X, np.ndarray) else len(X[0])


def predict_proba(model, X, batch_size: int = 256) -> np.ndarray:
    """Inference-mode class probabilities (the joint head for an encoder)."""
    out = []
    for s in range(0, _length(X), batch_size):
        xb = _take(X, slice(s, s + batch_size))
        y = model.forward(xb, training=False)
        out.append(y[-1] if isinstance(model, Encoder) else y)
    return np.concatenate(out) if out else np.zeros((0, 0))


def embed(model, X, batch_size: int = 256) -> np.ndarray:
    """Inference-mode embeddings (the combined feature for an encoder)."""
    out = []
    for s in range(0, _length(X), batch_size):
        model.forward(_take(X, slice(s, s + batch_size)), training=False)
        out.append(model.embedding.copy())
    return np.concatenate(out)


def train(model, X, Y, config: TrainConfig, objective: str = "kl", val=None, teacher_embeddings=None,
          partners_fn=None) -> History:
    """Run ``config.epochs`` epochs of shuffled minibatch Adam.

    ``Y`` holds (soft) label rows. With ``teacher_embeddings`` the loss
    becomes (1 - gamma) * objective + gamma * mean embedding distance, the
    distance gradient entering at the model's embedding layer. A trailing
    batch of a single sample is dropped because batch normalisation needs
    at least two rows.
    """
    if objective not in OBJECTIVES:
        raise ConfigurationError(f"unknown objective {objective!r}; expected one of {sorted(OBJECTIVES)}")
    n = _length(X)
    if n == 0:
        raise ShapeError("training set is empty")
    Y = np.asarray(Y, dtype=np.float64)
    if len(Y) != n:
        raise ShapeError(f"{n} inputs but {len(Y)} label rows")
    if teacher_embeddings is not None and config.mixup:
        raise ConfigurationError("distillation runs without mixup")
    obj = OBJECTIVES[objective]
    if objective == "joint":
        obj = lambda lg, y: OBJECTIVES["joint"](lg, y, config.gamma_joint, config.margin)
    elif objective == "triplet":
        obj = lambda lg, y: OBJECTIVES["triplet"](lg, y, config.margin)
    rngs = rng_streams(config.seed)
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    history = History()
    is_encoder = isinstance(model, Encoder)
    for epoch in range(1, config.epochs + 1):
        order = rngs["shuffle"].permutation(n)
        total, seen, correct = 0.0, 0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2 and n > 1:
                continue
            xb, yb = _take(X, idx), Y[idx]
            if config.mixup:
                partners = partners_fn(yb, rngs["mixup"]) if partners_fn else None
                xb, yb = mixup_batch(xb, yb, rngs["mixup"], partners)
            try:
                if is_encoder:
                    outs = model.forward(xb, True, rngs["dropout"], logits=True)
                    parts = [obj(o, yb) for o in outs]
                    weights = [config.alpha] * (len(outs) - 1) + [config.beta]
                    loss = sum(w * p[0] for w, p in zip(weights, parts))
                    model.backward([w * p[1] for w, p in zip(weights, parts)])
                    logits = outs[-1]
                else:
                    logits = model.forward(xb, True, rngs["dropout"], logits=True)
                    loss, grad = obj(logits, yb)
                    emb_grad = None
                    if teacher_embeddings is not None:
                        dist, dgrad = embedding_distance(model.embedding, teacher_embeddings[idx])
                        g = config.gamma_distill
                        loss = (1.0 - g) * loss + g * dist
                        grad = (1.0 - g) * grad
                        emb_grad = (g * dgrad).astype(grad.dtype)
                    model.backward(grad, embedding_grad=emb_grad)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {b}: {exc}") from exc
            loss += l2_penalty(params, config.l2)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}")
            add_l2_grad(params, config.l2)
            opt.step()
            total += loss * len(yb)
            seen += len(yb)
            correct += int(np.sum(np.argmax(logits, axis=1) == np.argmax(yb, axis=1)))
        val_acc = None
        if val is not None:
            pv = predict_proba(model, val[0])
            val_acc = float(np.mean(np.argmax(pv, axis=1) == np.argmax(val[1], axis=1)))
        history.rows.append({"epoch": epoch, "loss": total / max(seen, 1),
                             "train_acc": correct / max(seen, 1), "val_acc": val_acc})
    return history


def init_rng(seed) -> np.random.Generator:
    """Generator used for weight initialisation under a run seed."""
    return rng_streams(seed)["init"]


def save_history(path, history: History, config_hash: str = ""):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, config_hash)
