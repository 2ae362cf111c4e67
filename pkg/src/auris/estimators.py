"""Scikit-learn style estimators wrapping the networks, the encoder pipeline and distillation.

Every estimator takes its hyperparameters in ``__init__`` (exposed through
``get_params``), learns in ``fit`` and stores fitted state in attributes
with a trailing underscore. Inputs are patch arrays of shape (n, F, W);
labels may be any hashable values and are mapped through ``classes_``.
Fitted estimators round-trip through AURM1 checkpoints with ``save`` and
``load_estimator``.
"""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError, ShapeError
from .models.architectures import (
    build_cdnn_baseline,
    build_mlp_decoder,
    build_moe_decoder,
    build_resp_cnn_moe,
    build_student,
)
from .models.encoder import BRANCH_NAMES, EncoderSpec, build_encoder
from .models.forest import ForestModel, rfc_predict
from .models.hierarchy import HierarchySpec
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.network import NetworkSpec
from .training.loop import TrainConfig, embed, init_rng, one_hot, predict_proba, train
from .training.pipelines import DecoderSpec, HierarchyModels, distill, train_decoder, train_hierarchy

ARCHITECTURES = ("cdnn", "resp_moe", "student", "mlp", "moe")


def check_patches(X, name="X") -> np.ndarray:
    """Validate a patch batch and return float32 (n, F, W, 1)."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 4 and X.shape[-1] == 1:
        X = X[..., 0]
    if X.ndim != 3 or len(X) == 0:
        raise ShapeError(f"{name} must be a non-empty (n, F, W) patch array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ShapeError(f"{name} contains non-finite values")
    return X[..., None]


def check_vectors(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2 or len(X) == 0:
        raise ShapeError(f"{name} must be a non-empty (n, d) array, got shape {X.shape}")
    return X


def check_streams(X) -> tuple:
    """Three aligned patch arrays from a (n, 3, F, W) array or a sequence of three."""
    if isinstance(X, np.ndarray) and X.ndim == 4 and X.shape[1] == 3:
        X = [X[:, i] for i in range(3)]
    if len(X) != 3:
        raise ShapeError("the encoder needs three spectrogram streams")
    streams = tuple(check_patches(x, f"stream {i}") for i, x in enumerate(X))
    if len({s.shape for s in streams}) != 1:
        raise ShapeError(f"streams differ in shape: {[s.shape for s in streams]}")
    return streams


def encode_labels(y, classes=None):
    y = np.asarray(y)
    if classes is None:
        classes = np.unique(y)
        if len(classes) < 2:
            raise ConfigurationError("training data must contain at least two classes")
    lookup = {c: i for i, c in enumerate(classes.tolist())}
    try:
        return classes, np.array([lookup[v] for v in y.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise ConfigurationError(f"label {exc.args[0]!r} was not seen during fit") from exc


class _Standardizer:
    """Global mean and standard deviation of the training inputs."""

    def __init__(self, mean=0.0, std=1.0):
        self.mean = float(mean)
        self.std = float(std)

    @classmethod
    def fit(cls, X):
        x = np.asarray(X, dtype=np.float64)
        return cls(x.mean(), max(x.std(), 1e-8))

    def __call__(self, X):
        return ((X - self.mean) / self.std).astype(np.float32)

    def tensors(self, prefix):
        return {f"{prefix}norm": np.array([self.mean, self.std], dtype=np.float32)}

    @classmethod
    def from_tensors(cls, tensors, prefix):
        mean, std = tensors[f"{prefix}norm"]
        return cls(mean, std)


def _train_config(est, **overrides) -> TrainConfig:
    cfg = TrainConfig(epochs=est.epochs, batch_size=est.batch_size, lr=est.lr, l2=est.l2,
                      mixup=est.mixup, seed=est.seed)
    return cfg.replace(**overrides) if overrides else cfg


def _spec_for(architecture, n_classes, input_shape, experts) -> NetworkSpec:
    if architecture == "cdnn":
        return build_cdnn_baseline(n_classes, input_shape)
    if architecture == "resp_moe":
        return build_resp_cnn_moe(n_classes, experts, input_shape)
    if architecture == "student":
        return build_student(n_classes, input_shape)
    if architecture == "mlp":
        return build_mlp_decoder(n_classes, input_shape[0])
    if architecture == "moe":
        return build_moe_decoder(n_classes, experts, input_shape[0])
    raise ConfigurationError(f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")


class PatchClassifier(ClassifierMixin, BaseEstimator):
    """One network trained on patches (or on embedding vectors for ``mlp``/``moe``).

    Inputs are standardised with the global mean and deviation of the
    training set; the statistics are part of the checkpoint.
    """

    family = "network"

    def __init__(self, architecture="cdnn", experts=10, epochs=100, batch_size=100, lr=1e-4,
                 l2=1e-3, mixup=True, objective="kl", seed=0):
        self.architecture = architecture
        self.experts = experts
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.l2 = l2
        self.mixup = mixup
        self.objective = objective
        self.seed = seed

    def _check(self, X):
        return check_vectors(X) if self.architecture in ("mlp", "moe") else check_patches(X)

    def fit(self, X, y):
        X = self._check(X)
        self.classes_, codes = encode_labels(y)
        if len(codes) != len(X):
            raise ShapeError(f"{len(X)} inputs but {len(codes)} labels")
        self.scaler_ = _Standardizer.fit(X)
        spec = _spec_for(self.architecture, len(self.classes_), X.shape[1:], self.experts)
        self.network_ = spec.build(init_rng(self.seed))
        self.history_ = train(self.network_, self.scaler_(X), one_hot(codes, len(self.classes_)),
                              _train_config(self), objective=self.objective)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        return predict_proba(self.network_, self.scaler_(self._check(X)))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def embed(self, X):
        """Inference-mode embedding (output of the network's embedding layer)."""
        check_is_fitted(self, "network_")
        if self.network_.embedding_index is None:
            raise ConfigurationError(f"{self.architecture} networks define no embedding")
        return embed(self.network_, self.scaler_(self._check(X)))

    def _sections(self):
        return {"net": self.network_.spec.describe()}

    def _tensors(self):
        t = {f"net/{k}": v for k, v in self.network_.state().items()}
        t.update(self.scaler_.tensors(""))
        return t

    def _restore(self, sections, tensors):
        self.network_ = NetworkSpec.parse(sections["net"]).build(0)
        self.network_.load_state({k[4:]: v for k, v in tensors.items() if k.startswith("net/")})
        self.scaler_ = _Standardizer.from_tensors(tensors, "")

    def save(self, path, config_hash="", extra=None):
        check_is_fitted(self)
        save_model(path, self, config_hash, extra)


class EncoderDecoderClassifier(ClassifierMixin, BaseEstimator):
    """Three-branch encoder over (log-mel, gammatone, CQT) patches with a back-end decoder.

    ``fit`` takes X as an (n, 3, F, W) array or a sequence of three aligned
    (n, F, W) arrays. Phase one trains the encoder with the weighted branch
    and joint losses; phase two trains the decoder on the combined
    embeddings.
    """

    family = "encoder"

    def __init__(self, combiner="lin", decoder="moe", experts=10, n_trees=100, encoder_epochs=100,
                 decoder_epochs=100, encoder_batch_size=50, batch_size=100, lr=1e-4, l2=1e-3,
                 mixup=True, seed=0):
        self.combiner = combiner
        self.decoder = decoder
        self.experts = experts
        self.n_trees = n_trees
        self.encoder_epochs = encoder_epochs
        self.decoder_epochs = decoder_epochs
        self.encoder_batch_size = encoder_batch_size
        self.batch_size = batch_size
        self.lr = lr
        self.l2 = l2
        self.mixup = mixup
        self.seed = seed

    def _config(self, epochs, batch_size, seed_offset=0):
        return TrainConfig(epochs=epochs, batch_size=batch_size, lr=self.lr, l2=self.l2,
                           mixup=self.mixup, seed=self.seed + seed_offset)

    def fit(self, X, y):
        streams = check_streams(X)
        self.classes_, codes = encode_labels(y)
        c = len(self.classes_)
        self.scalers_ = [_Standardizer.fit(s) for s in streams]
        streams = tuple(sc(s) for sc, s in zip(self.scalers_, streams))
        spec = build_encoder(c, self.combiner, streams[0].shape[1:])
        self.encoder_ = spec.build(init_rng(self.seed))
        Y = one_hot(codes, c)
        self.encoder_history_ = train(self.encoder_, streams, Y,
                                      self._config(self.encoder_epochs, self.encoder_batch_size))
        H = embed(self.encoder_, streams)
        self.decoder_spec_ = DecoderSpec(self.decoder, c, self.experts, self.n_trees)
        self.decoder_, self.decoder_history_ = train_decoder(
            self.decoder_spec_, H, Y, self._config(self.decoder_epochs, self.batch_size, 1))
        return self

    def embed(self, X):
        check_is_fitted(self, "encoder_")
        streams = tuple(sc(s) for sc, s in zip(self.scalers_, check_streams(X)))
        return embed(self.encoder_, streams)

    def predict_proba(self, X):
        H = self.embed(X)
        if isinstance(self.decoder_, ForestModel):
            return rfc_predict(self.decoder_, H)
        return predict_proba(self.decoder_, H)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def _sections(self):
        out = {"encoder": self.encoder_.spec.describe()}
        if not isinstance(self.decoder_, ForestModel):
            out["decoder"] = self.decoder_.spec.describe()
        return out

    def _tensors(self):
        t = {f"encoder/{k}": v for k, v in self.encoder_.state().items()}
        if isinstance(self.decoder_, ForestModel):
            t.update(self.decoder_.to_tensors("forest/"))
        else:
            t.update({f"decoder/{k}": v for k, v in self.decoder_.state().items()})
        for name, sc in zip(BRANCH_NAMES, self.scalers_):
            t.update(sc.tensors(f"{name}/"))
        return t

    def _restore(self, sections, tensors):
        self.encoder_ = parse_encoder(sections["encoder"]).build(0)
        self.encoder_.load_state({k[8:]: v for k, v in tensors.items() if k.startswith("encoder/")})
        if "decoder" in sections:
            self.decoder_ = NetworkSpec.parse(sections["decoder"]).build(0)
            self.decoder_.load_state({k[8:]: v for k, v in tensors.items() if k.startswith("decoder/")})
        else:
            self.decoder_ = ForestModel.from_tensors(tensors, "forest/")
        self.scalers_ = [_Standardizer.from_tensors(tensors, f"{n}/") for n in BRANCH_NAMES]

    def save(self, path, config_hash="", extra=None):
        check_is_fitted(self)
        save_model(path, self, config_hash, extra)


class DistilledStudent(ClassifierMixin, BaseEstimator):
    """Student network trained against a fitted teacher's embeddings.

    ``teacher`` is a fitted ``PatchClassifier`` whose embedding width
    matches the student's (512 for the respiratory teacher). With
    ``gamma=0`` this is plain cross-entropy training of the student.
    """

    family = "student"

    def __init__(self, teacher=None, gamma=0.5, epochs=100, batch_size=100, lr=1e-4, l2=1e-3, seed=0):
        self.teacher = teacher
        self.gamma = gamma
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.l2 = l2
        self.seed = seed

    def fit(self, X, y):
        if self.teacher is None:
            raise ConfigurationError("distillation needs a fitted teacher")
        check_is_fitted(self.teacher, "network_")
        X = check_patches(X)
        self.classes_, codes = encode_labels(y, self.teacher.classes_)
        self.scaler_ = self.teacher.scaler_
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, l2=self.l2,
                          mixup=False, gamma_distill=self.gamma, seed=self.seed)
        spec = build_student(len(self.classes_), X.shape[1:])
        self.network_, self.history_ = distill(self.teacher.network_, spec, self.scaler_(X), codes,
                                               len(self.classes_), cfg)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        return predict_proba(self.network_, self.scaler_(check_patches(X)))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def embed(self, X):
        check_is_fitted(self, "network_")
        return embed(self.network_, self.scaler_(check_patches(X)))

    _sections = PatchClassifier._sections
    _tensors = PatchClassifier._tensors
    _restore = PatchClassifier._restore

    def save(self, path, config_hash="", extra=None):
        check_is_fitted(self)
        save_model(path, self, config_hash, extra)


class HierarchicalClassifier(ClassifierMixin, BaseEstimator):
    """Two-level classifier on the 256-d embedding of a flat C-DNN.

    ``groups`` maps each meta label to its fine labels. A C-DNN is first
    trained on all fine labels; its pooled embedding then feeds the meta
    classifier and one classifier per group.
    """

    family = "hierarchy"

    def __init__(self, groups=None, epochs=100, head_epochs=100, batch_size=100, lr=1e-4, l2=1e-3,
                 mixup=True, seed=0):
        self.groups = groups
        self.epochs = epochs
        self.head_epochs = head_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.l2 = l2
        self.mixup = mixup
        self.seed = seed

    def fit(self, X, y):
        if not self.groups:
            raise ConfigurationError("hierarchy needs a non-empty groups mapping")
        X = check_patches(X)
        self.classes_, codes = encode_labels(y)
        names = [str(c) for c in self.classes_]
        groups = {str(k): tuple(str(v) for v in vals) for k, vals in self.groups.items()}
        self.spec_ = HierarchySpec(groups, tuple(names))
        self.base_ = PatchClassifier("cdnn", epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                                     l2=self.l2, mixup=self.mixup, seed=self.seed).fit(X, y)
        H = self.base_.embed(X)
        cfg = TrainConfig(epochs=self.head_epochs, batch_size=self.batch_size, lr=self.lr, l2=self.l2,
                          mixup=self.mixup, seed=self.seed + 1)
        self.levels_ = train_hierarchy(H, codes, self.spec_, cfg)
        return self

    def predict_levels(self, X):
        """(meta probabilities, per-group fine probabilities)."""
        check_is_fitted(self, "levels_")
        return self.levels_.predict_levels(self.base_.embed(X))

    def predict_meta(self, X):
        meta, _ = self.predict_levels(X)
        return np.argmax(meta, axis=1)

    def predict(self, X):
        check_is_fitted(self, "levels_")
        return self.classes_[self.levels_.predict(self.base_.embed(X))]

    def predict_proba(self, X):
        """Fine-label probabilities: P(group) times P(label | group)."""
        meta, fine = self.predict_levels(X)
        out = np.zeros((len(meta), len(self.classes_)))
        for g in range(len(self.spec_.groups)):
            out[:, self.spec_.group_members(g)] = meta[:, g:g + 1] * fine[g]
        return out

    def _sections(self):
        out = {"net": self.base_.network_.spec.describe(), "meta": self.levels_.meta.spec.describe()}
        out["groups"] = json.dumps(self.spec_.meta_groups, sort_keys=False)
        for g, net in enumerate(self.levels_.fine):
            if net is not None:
                out[f"fine{g}"] = net.spec.describe()
        return out

    def _tensors(self):
        t = self.base_._tensors()
        t.update({f"levels/{k}": v for k, v in self.levels_.state().items()})
        return t

    def _restore(self, sections, tensors):
        self.base_ = PatchClassifier("cdnn")
        self.base_.classes_ = self.classes_
        self.base_._restore(sections, tensors)
        groups = {k: tuple(v) for k, v in json.loads(sections["groups"]).items()}
        self.spec_ = HierarchySpec(groups, tuple(str(c) for c in self.classes_))
        meta = NetworkSpec.parse(sections["meta"]).build(0)
        fine = [NetworkSpec.parse(sections[f"fine{g}"]).build(0) if f"fine{g}" in sections else None
                for g in range(len(groups))]
        self.levels_ = HierarchyModels(self.spec_, meta, fine)
        self.levels_.load_state({k[7:]: v for k, v in tensors.items() if k.startswith("levels/")})

    def save(self, path, config_hash="", extra=None):
        check_is_fitted(self)
        save_model(path, self, config_hash, extra)


ESTIMATORS = {cls.family: cls for cls in (PatchClassifier, EncoderDecoderClassifier, DistilledStudent,
                                          HierarchicalClassifier)}


def parse_encoder(text: str) -> EncoderSpec:
    """Inverse of ``EncoderSpec.describe``."""
    lines = text.strip().splitlines()
    combiner = lines[0].split("combiner=")[1].strip()
    sections, current = {}, None
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        else:
            sections[current].append(line)
    parse = lambda name: NetworkSpec.parse("\n".join(sections[name]))
    return EncoderSpec(tuple(parse(n) for n in BRANCH_NAMES), tuple(parse(f"head_{n}") for n in BRANCH_NAMES),
                       combiner, parse("head"))


def _portable(value):
    if isinstance(value, BaseEstimator):
        return None
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    return value


def save_model(path, est, config_hash="", extra=None):
    """Write a fitted estimator as an AURM1 checkpoint.

    The descriptor starts with a JSON header line (family, classes, params,
    config hash) followed by ``@@ name`` sections holding architecture text.
    """
    header = {
        "family": est.family,
        "classes": [_portable(c) for c in est.classes_.tolist()],
        "params": {k: _portable(v) for k, v in est.get_params(deep=False).items()},
        "config_hash": config_hash,
        "extra": extra or {},
    }
    parts = [json.dumps(header, sort_keys=True)]
    for name, text in est._sections().items():
        parts += [f"@@ {name}", text]
    save_checkpoint(path, "\n".join(parts), est._tensors())


def read_descriptor(text: str):
    lines = text.splitlines()
    header = json.loads(lines[0])
    sections, current = {}, None
    for line in lines[1:]:
        if line.startswith("@@ "):
            current = line[3:].strip()
            sections[current] = []
        else:
            sections[current].append(line)
    return header, {k: "\n".join(v) for k, v in sections.items()}


def load_estimator(path):
    """Rebuild a fitted estimator from a checkpoint; returns (estimator, descriptor header)."""
    descriptor, tensors = load_checkpoint(path)
    header, sections = read_descriptor(descriptor)
    cls = ESTIMATORS.get(header["family"])
    if cls is None:
        raise ConfigurationError(f"checkpoint family {header['family']!r} is unknown")
    params = {k: v for k, v in header["params"].items() if v is not None}
    est = cls(**params)
    est.classes_ = np.asarray(header["classes"])
    est._restore(sections, tensors)
    return est, header
