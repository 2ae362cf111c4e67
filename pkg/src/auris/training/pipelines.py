"""Multi-stage training: encoder then decoder, the scene hierarchy, and distillation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError, ShapeError
from ..models.architectures import EMBEDDING_WIDTH, build_hierarchy_mlp, build_mlp_decoder, build_moe_decoder
from ..models.encoder import EncoderSpec
from ..models.forest import rfc_train
from ..models.hierarchy import HierarchySpec, hierarchical_predict
from ..nn.network import NetworkSpec, StateMixin
from .loop import TrainConfig, embed, init_rng, one_hot, predict_proba, train
from .mixup import mixup_batch

DECODER_KINDS = ("mlp", "moe", "rfc")


@dataclass(frozen=True)
class DecoderSpec:
    kind: str = "moe"
    n_classes: int = 3
    experts: int = 10
    n_trees: int = 100
    max_depth: int = 16
    width: int = EMBEDDING_WIDTH

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ConfigurationError(f"unknown decoder {self.kind!r}; expected one of {DECODER_KINDS}")
        if self.experts < 1 or self.n_trees < 1:
            raise ConfigurationError("expert and tree counts must be >= 1")

    def network(self) -> NetworkSpec | None:
        if self.kind == "mlp":
            return build_mlp_decoder(self.n_classes, self.width)
        if self.kind == "moe":
            return build_moe_decoder(self.n_classes, self.experts, self.width)
        return None


def train_decoder(spec: DecoderSpec, H, Y, config: TrainConfig):
    """Fit a decoder on embeddings ``H`` with soft labels ``Y``.

    Network decoders use the regular loop (mixup inside each batch). The
    forest is fitted once on the source embeddings plus one mixup copy.
    """
    if H.shape[1] != spec.width:
        raise ShapeError(f"decoder expects {spec.width}-d embeddings, got {H.shape[1]}")
    if spec.kind == "rfc":
        X, T = H, Y
        if config.mixup:
            rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[2])
            mh, my = mixup_batch(H, Y, rng)
            X, T = np.concatenate([H, mh]), np.concatenate([Y, my])
        return rfc_train(X, T, spec.n_trees, spec.max_depth, seed=config.seed), None
    # no batch norm in the decoder trunk, so weights are fan-in scaled to keep activations O(1)
    net = spec.network().build(init_rng(config.seed), init_std=None)
    history = train(net, H.astype(np.float32), Y, config, objective="kl")
    return net, history


def train_encoder_then_decoder(streams, labels, n_classes, encoder_spec: EncoderSpec,
                               decoder_spec: DecoderSpec, encoder_config: TrainConfig,
                               decoder_config: TrainConfig):
    """Phase 1 trains the three-branch encoder; phase 2 trains the decoder on its embeddings.

    ``streams`` are three row-aligned patch arrays (log-mel, gammatone, CQT).
    Returns (encoder, decoder, embeddings, histories).
    """
    if len(streams) != 3:
        raise ConfigurationError(f"encoder training needs three spectrogram streams, got {len(streams)}")
    Y = one_hot(labels, n_classes)
    encoder = encoder_spec.build(init_rng(encoder_config.seed))
    h_enc = train(encoder, tuple(streams), Y, encoder_config, objective="kl")
    H = embed(encoder, tuple(streams))
    if len(H) != len(labels):
        raise ShapeError("embedding count differs from patch count")
    decoder, h_dec = train_decoder(decoder_spec, H, Y, decoder_config)
    return encoder, decoder, H, (h_enc, h_dec)


@dataclass
class HierarchyModels(StateMixin):
    spec: HierarchySpec
    meta: object
    fine: list  # a network per group, or None for single-label groups

    def parameters(self):
        out = {f"meta/{k}": v for k, v in self.meta.parameters().items()}
        for g, net in enumerate(self.fine):
            if net is not None:
                out.update({f"fine{g}/{k}": v for k, v in net.parameters().items()})
        return out

    def buffers(self):
        out = {f"meta/{k}": v for k, v in self.meta.buffers().items()}
        for g, net in enumerate(self.fine):
            if net is not None:
                out.update({f"fine{g}/{k}": v for k, v in net.buffers().items()})
        return out

    def predict_levels(self, H):
        """(meta probabilities, per-group fine probabilities) for embeddings ``H``."""
        H = np.asarray(H, dtype=np.float32)
        meta = predict_proba(self.meta, H)
        fine = [np.ones((len(H), 1)) if net is None else predict_proba(net, H) for net in self.fine]
        return meta, fine

    def predict(self, H) -> np.ndarray:
        meta, fine = self.predict_levels(H)
        return hierarchical_predict(self.spec, meta, fine)


def train_hierarchy(H, labels, spec: HierarchySpec, config: TrainConfig, width=EMBEDDING_WIDTH):
    """Train the meta classifier on group labels and one fine classifier per group.

    Fine classifiers see only their group's rows and use the joint KL plus
    triplet objective. Groups with a single label need no classifier.
    """
    labels = np.asarray(labels)
    meta_of = spec.meta_index()
    n_groups = len(spec.groups)
    meta_labels = meta_of[labels]
    missing = sorted(set(range(n_groups)) - set(meta_labels.tolist()))
    if missing:
        raise ConfigurationError(f"no training rows for groups {[spec.groups[g] for g in missing]}")
    H = H.astype(np.float32)
    meta = build_hierarchy_mlp(n_groups, width).build(init_rng(config.seed))
    train(meta, H, one_hot(meta_labels, n_groups), config, objective="kl")
    fine = []
    for g in range(n_groups):
        members = spec.group_members(g)
        rows = np.flatnonzero(meta_labels == g)
        if len(members) == 1:
            fine.append(None)
            continue
        position = {int(m): i for i, m in enumerate(members)}
        local = np.array([position[int(v)] for v in labels[rows]])
        net = build_hierarchy_mlp(len(members), width).build(init_rng(config.seed + g + 1))
        train(net, H[rows], one_hot(local, len(members)), config, objective="joint")
        fine.append(net)
    return HierarchyModels(spec, meta, fine)


def teacher_embeddings(teacher, X) -> np.ndarray:
    return embed(teacher, X)


def distill(teacher, student_spec: NetworkSpec, X, labels, n_classes, config: TrainConfig):
    """Train a student against a frozen teacher's embeddings.

    The loss is (1 - gamma) * cross-entropy + gamma * mean Euclidean
    distance between student and teacher embeddings; the teacher is only
    run in inference mode, so its parameters are untouched.
    """
    T = teacher_embeddings(teacher, X)
    student = student_spec.build(init_rng(config.seed))
    student.forward(X[:2], training=False)
    if student.embedding.shape[1] != T.shape[1]:
        raise ConfigurationError(
            f"student embedding width {student.embedding.shape[1]} != teacher width {T.shape[1]}"
        )
    history = train(student, X, one_hot(labels, n_classes), config.replace(mixup=False), objective="ce",
                    teacher_embeddings=T)
    return student, history


def mean_embedding_distance(a, b) -> float:
    return float(np.mean(np.linalg.norm(np.asarray(a, np.float64) - b, axis=1)))
