"""Command-line interface: synth, extract, train, eval, distill, fuse and report.

Runs are driven by an INI config file whose values can be overridden by
the ``--seed``, ``--out`` and ``--jobs`` flags. Every artifact carries the
hash of the configuration that produced it. Exit codes: 0 success,
1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .dataset import load_clip, make_splits, read_manifest, resample, synth_corpus
from .dsp.cache import is_valid_cache, read_feature, write_feature
from .dsp.extractor import FEATURE_KINDS, SpectrogramExtractor
from .dsp.patches import split_patches
from .estimators import (
    DistilledStudent,
    EncoderDecoderClassifier,
    HierarchicalClassifier,
    PatchClassifier,
    load_estimator,
)
from .evaluation.metrics import ICBHI_TASKS, aggregate_by_owner, fuse
from .evaluation.report import build_report, write_report
from .exceptions import AurisError, ConfigurationError, IngestionError, InputError
from .training.pipelines import mean_embedding_distance

log = logging.getLogger("auris")

FAMILIES = ("cdnn", "resp_moe", "student", "encoder", "hierarchy")
ENCODER_KINDS = ("log-mel", "gamma", "cqt")

DEFAULTS = {
    "data": {
        "manifest": "", "root": "corpus", "n_classes": "3", "per_class": "20", "duration": "3.0",
        "sample_rate": "16000", "corpus_seed": "7", "split": "fraction", "train_fraction": "0.6",
        "folds": "5", "fold": "1", "group_key": "", "stratify": "true", "class_order": "",
    },
    "features": {
        "kinds": "log-mel, gamma, cqt", "n_bands": "32", "window_len": "1024", "hop": "256",
        "n_fft": "2048", "f_min": "50", "f_max": "", "bins_per_octave": "12",
    },
    "patches": {"width": "32", "overlap": "0.5"},
    "model": {
        "family": "cdnn", "feature": "log-mel", "combiner": "lin", "decoder": "moe", "experts": "10",
        "n_trees": "100", "groups": "",
    },
    "train": {
        "epochs": "20", "batch_size": "100", "lr": "1e-3", "l2": "1e-3", "mixup": "true",
        "objective": "kl", "encoder_epochs": "20", "decoder_epochs": "20", "encoder_batch_size": "50",
    },
    "distill": {"teacher": "", "gamma": "0.5"},
    "fuse": {"inputs": "", "mode": "mean"},
    "report": {"predictions": "", "icbhi_tasks": ""},
    "run": {"out": "run", "seed": "0", "jobs": "1", "cache_dir": "cache"},
}

# sections whose values define the experiment; paths and worker counts do not
HASHED_SECTIONS = ("data", "features", "patches", "model", "train", "distill")
UNHASHED_KEYS = {"manifest", "root", "teacher"}


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


class RunConfig:
    """Typed view over the INI config with flag overrides applied."""

    def __init__(self, path=None, overrides=None):
        self.parser = configparser.ConfigParser(interpolation=None)
        self.parser.read_dict(DEFAULTS)
        self.base = Path.cwd()
        if path:
            path = Path(path)
            if not path.is_file():
                raise ConfigurationError(f"config file {path} does not exist")
            try:
                self.parser.read(path, encoding="utf-8")
            except configparser.Error as exc:
                raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
            self.base = path.resolve().parent
        for (section, key), value in (overrides or {}).items():
            if value is not None:
                self.parser.set(section, key, str(value))

    def get(self, section, key) -> str:
        return self.parser.get(section, key).strip()

    def _typed(self, section, key, kind):
        raw = self.get(section, key)
        try:
            if kind is bool:
                return self.parser.getboolean(section, key)
            return kind(raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from exc

    def int(self, section, key) -> int:
        return self._typed(section, key, int)

    def float(self, section, key) -> float:
        return self._typed(section, key, float)

    def bool(self, section, key) -> bool:
        return self._typed(section, key, bool)

    def path(self, section, key) -> Path | None:
        raw = self.get(section, key)
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base / p

    @property
    def out(self) -> Path:
        return self.path("run", "out")

    @property
    def seed(self) -> int:
        return self.int("run", "seed")

    def manifest_path(self) -> Path:
        path = self.path("data", "manifest") or self.path("data", "root") / "manifest.csv"
        if not path.is_file():
            raise ConfigurationError(f"manifest {path} does not exist")
        return path

    def cache_root(self) -> Path:
        env = os.environ.get("AURIS_CACHE_DIR")
        if env:
            return Path(env)
        return self.path("run", "cache_dir") or self.base / "cache"

    def extractor(self, kind) -> SpectrogramExtractor:
        if kind not in FEATURE_KINDS:
            raise ConfigurationError(f"unknown spectrogram kind {kind!r}; expected one of {FEATURE_KINDS}")
        f_max = self.get("features", "f_max")
        return SpectrogramExtractor(
            kind, self.int("data", "sample_rate"), self.int("features", "n_bands"),
            self.int("features", "window_len"), self.int("features", "hop"), self.int("features", "n_fft"),
            self.float("features", "f_min"), float(f_max) if f_max else None,
            self.int("features", "bins_per_octave"),
        ).fit()

    def family(self) -> str:
        family = self.get("model", "family")
        if family not in FAMILIES:
            raise ConfigurationError(f"[model] family must be exactly one of {FAMILIES}, got {family!r}")
        return family

    def model_kinds(self) -> list[str]:
        return list(ENCODER_KINDS) if self.family() == "encoder" else [self.get("model", "feature")]

    def feature_hash(self, kinds) -> str:
        """Hash of the extractor settings and patch geometry the model consumes."""
        blob = json.dumps({
            "kinds": {k: self.extractor(k).config_hash() for k in kinds},
            "width": self.int("patches", "width"),
            "overlap": self.float("patches", "overlap"),
        }, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def config_hash(self) -> str:
        blob = {s: {k: v for k, v in self.parser.items(s) if k not in UNHASHED_KEYS} for s in HASHED_SECTIONS}
        blob["seed"] = self.seed
        try:
            blob["manifest"] = hashlib.sha256(self.manifest_path().read_bytes()).hexdigest()
        except ConfigurationError:
            blob["manifest"] = ""
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# Data plumbing
# --------------------------------------------------------------------------

def clip_id(record, root: Path) -> str:
    p = Path(record.clip_path)
    try:
        p = p.relative_to(root)
    except ValueError:
        pass
    return str(p.with_suffix("")).replace(os.sep, "__")


def cache_path(cfg: RunConfig, kind: str, ex: SpectrogramExtractor, cid: str) -> Path:
    return cfg.cache_root() / f"{kind}-{ex.config_hash()}" / f"{cid}.aurf"


class Corpus:
    """Manifest records, class order and the configured train/test split."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.manifest = cfg.manifest_path()
        self.records = read_manifest(self.manifest)
        if not self.records:
            raise ConfigurationError(f"manifest {self.manifest} lists no clips")
        root = self.manifest.parent
        self.ids = [clip_id(r, root) for r in self.records]
        present = sorted({r.class_label for r in self.records})
        order = _list(cfg.get("data", "class_order"))
        if order and sorted(order) != present:
            raise ConfigurationError(f"[data] class_order {order} does not match manifest labels {present}")
        self.classes = order or present
        index = {c: i for i, c in enumerate(self.classes)}
        self.labels = np.array([index[r.class_label] for r in self.records])

    def split(self):
        cfg = self.cfg
        scheme = cfg.get("data", "split")
        spec = make_splits(self.records, scheme, k=cfg.int("data", "folds"),
                           train_fraction=cfg.float("data", "train_fraction"),
                           group_key=cfg.get("data", "group_key") or None, seed=cfg.seed,
                           stratify=cfg.bool("data", "stratify"))
        train, test = spec.train_test(cfg.int("data", "fold"))
        if not train or not test:
            raise ConfigurationError("the split leaves an empty train or test set")
        return np.array(train), np.array(test)

    def features(self, kind) -> list[np.ndarray]:
        ex = self.cfg.extractor(kind)
        out, missing = [], []
        for cid in self.ids:
            path = cache_path(self.cfg, kind, ex, cid)
            if not is_valid_cache(path):
                missing.append(cid)
                continue
            out.append(read_feature(path))
        if missing:
            raise IngestionError(f"{len(missing)} {kind} caches missing (first: {missing[0]}); run extract first")
        return out

    def patches(self, kind, indices):
        """(patches, owner) for the given records; owner indexes into ``indices``."""
        width, overlap = self.cfg.int("patches", "width"), self.cfg.float("patches", "overlap")
        specs = self.features(kind)
        blocks, owner = [], []
        for j, i in enumerate(indices):
            ps = split_patches(specs[i], width, overlap)
            blocks.append(ps.patches)
            owner.append(np.full(len(ps.patches), j))
        return np.concatenate(blocks), np.concatenate(owner)


def write_predictions(path, ids, probs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id"] + [f"prob_{k + 1}" for k in range(probs.shape[1])])
        for cid, row in zip(ids, probs):
            w.writerow([cid] + [f"{v:.9g}" for v in row])
    return path


def read_predictions(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"prediction file {path} does not exist")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "clip_id" or len(rows[0]) < 2:
        raise IngestionError(f"{path} is not a clip_id,prob_1..prob_C file")
    ids = [r[0] for r in rows[1:]]
    try:
        probs = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    if probs.ndim != 2 or probs.shape[1] != len(rows[0]) - 1:
        raise IngestionError(f"{path} has ragged rows")
    return ids, probs


def write_artifacts(out: Path, config_hash: str, files: dict, extra=None):
    """Merge this command's outputs into ``<out>/artifacts.json``."""
    path = out / "artifacts.json"
    entry = json.loads(path.read_text()) if path.is_file() else {"files": {}}
    entry["files"].update({k: str(Path(v).relative_to(out)) for k, v in files.items()})
    entry["config_hash"] = config_hash
    entry.update(extra or {})
    path.write_text(json.dumps(entry, indent=2, sort_keys=True) + "\n")


def _setup_logging(out: Path | None):
    log.setLevel(logging.INFO)
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(stream)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(out / "auris.log")
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(fh)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> int:
    n_classes, per_class = cfg.int("data", "n_classes"), cfg.int("data", "per_class")
    if n_classes < 1 or per_class < 1:
        raise ConfigurationError(f"class count ({n_classes}) and clips per class ({per_class}) must be >= 1")
    root = Path(args.out) if args.out else cfg.path("data", "root")
    seed = args.seed if args.seed is not None else cfg.int("data", "corpus_seed")
    try:
        _, manifest = synth_corpus(root, n_classes, per_class, cfg.float("data", "duration"),
                                   cfg.int("data", "sample_rate"), seed)
    except PermissionError as exc:
        raise IngestionError(f"output directory {root} is not writable: {exc}") from exc
    print(manifest)
    return 0


def cmd_extract(cfg: RunConfig, args) -> int:
    manifest = cfg.manifest_path()
    records = read_manifest(manifest)
    kinds = _list(cfg.get("features", "kinds"))
    extractors = {k: cfg.extractor(k) for k in kinds}
    jobs = max(1, cfg.int("run", "jobs"))
    rate = cfg.int("data", "sample_rate")

    def work(record):
        cid = clip_id(record, manifest.parent)
        todo = [k for k in kinds if not is_valid_cache(cache_path(cfg, k, extractors[k], cid))]
        if not todo:
            return cid, 0, len(kinds), None
        try:
            clip = load_clip(record.clip_path)
        except IngestionError as exc:
            return cid, 0, 0, str(exc)
        if clip.sample_rate != rate:
            clip = resample(clip, rate)
        for k in todo:
            write_feature(cache_path(cfg, k, extractors[k], cid), extractors[k].extract(clip))
        return cid, len(todo), len(kinds) - len(todo), None

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(work, records))
    made = sum(r[1] for r in results)
    hits = sum(r[2] for r in results)
    failed = [(r[0], r[3]) for r in results if r[3]]
    log.info("extract: %d computed, %d cache hits, cache root %s", made, hits, cfg.cache_root())
    if failed:
        for cid, msg in failed:
            log.error("missing audio for %s: %s", cid, msg)
        raise IngestionError(f"{len(failed)} clips could not be read: {', '.join(c for c, _ in failed)}")
    return 0


def _estimator(cfg: RunConfig, family: str, corpus: Corpus):
    t = "train"
    common = dict(lr=cfg.float(t, "lr"), l2=cfg.float(t, "l2"), seed=cfg.seed)
    if family in ("cdnn", "resp_moe", "student"):
        return PatchClassifier(family, cfg.int("model", "experts"), cfg.int(t, "epochs"), cfg.int(t, "batch_size"),
                               mixup=cfg.bool(t, "mixup"), objective=cfg.get(t, "objective"), **common)
    if family == "encoder":
        return EncoderDecoderClassifier(
            cfg.get("model", "combiner"), cfg.get("model", "decoder"), cfg.int("model", "experts"),
            cfg.int("model", "n_trees"), cfg.int(t, "encoder_epochs"), cfg.int(t, "decoder_epochs"),
            cfg.int(t, "encoder_batch_size"), cfg.int(t, "batch_size"), mixup=cfg.bool(t, "mixup"), **common)
    # models see integer class codes, so group members are translated to codes
    index = {c: str(i) for i, c in enumerate(corpus.classes)}
    groups = {}
    for part in cfg.get("model", "groups").split(";"):
        if part.strip():
            name, _, members = part.partition(":")
            unknown = [m for m in _list(members) if m not in index]
            if unknown:
                raise ConfigurationError(f"[model] groups names unknown labels {unknown}")
            groups[name.strip()] = [index[m] for m in _list(members)]
    if not groups:
        raise ConfigurationError("the hierarchy family needs [model] groups = meta: a, b; meta2: c")
    return HierarchicalClassifier(groups, cfg.int(t, "epochs"), cfg.int(t, "epochs"), cfg.int(t, "batch_size"),
                                  mixup=cfg.bool(t, "mixup"), **common)


def _inputs(corpus: Corpus, kinds, indices):
    if len(kinds) == 1:
        return corpus.patches(kinds[0], indices)
    parts = [corpus.patches(k, indices) for k in kinds]
    if any(len(p[1]) != len(parts[0][1]) or np.any(p[1] != parts[0][1]) for p in parts):
        raise ConfigurationError("spectrogram kinds yield different patch counts; use equal frame grids")
    return tuple(p[0] for p in parts), parts[0][1]


def _clip_probs(est, X, owner, n_clips):
    return aggregate_by_owner(est.predict_proba(X), owner, n_clips)


def _class_names(est, corpus):
    return [corpus.classes[int(c)] for c in est.classes_]


def _check_classes(est, corpus):
    if [int(c) for c in est.classes_] != list(range(len(corpus.classes))):
        raise ConfigurationError(f"model classes {est.classes_.tolist()} do not cover the manifest's "
                                 f"{len(corpus.classes)} classes; check the split")


def _report(cfg: RunConfig, corpus: Corpus, pred_path: Path, out: Path, config_hash: str, stem="metrics"):
    ids, probs = read_predictions(pred_path)
    lookup = {cid: i for i, cid in enumerate(corpus.ids)}
    unknown = [cid for cid in ids if cid not in lookup]
    if unknown:
        raise ConfigurationError(f"{len(unknown)} predicted clips are not in the manifest (first: {unknown[0]})")
    if probs.shape[1] != len(corpus.classes):
        raise ConfigurationError(f"predictions have {probs.shape[1]} classes, manifest has {len(corpus.classes)}")
    rows = np.array([lookup[c] for c in ids])
    truth = corpus.labels[rows]
    keys = sorted({k for r in corpus.records for k in r.group_labels})
    groups = {k: [corpus.records[i].group_labels.get(k, "") for i in rows] for k in keys}
    tasks = _list(cfg.get("report", "icbhi_tasks"))
    bad = [t for t in tasks if t not in ICBHI_TASKS]
    if bad:
        raise ConfigurationError(f"unknown ICBHI tasks {bad}; expected {ICBHI_TASKS}")
    report = build_report(np.argmax(probs, axis=1), truth, corpus.classes, groups, tasks)
    return write_report(report, out, config_hash, stem)


def cmd_train(cfg: RunConfig, args) -> int:
    family = cfg.family()
    if family == "student" and cfg.get("distill", "teacher"):
        log.info("a teacher is configured; use 'distill' to train the student against it")
    corpus = Corpus(cfg)
    train_idx, test_idx = corpus.split()
    kinds = cfg.model_kinds()
    X, owner_train = _inputs(corpus, kinds, train_idx)
    y = corpus.labels[train_idx][owner_train]
    est = _estimator(cfg, family, corpus).fit(X, y)
    _check_classes(est, corpus)
    out, h = cfg.out, cfg.config_hash()
    out.mkdir(parents=True, exist_ok=True)
    files = {"checkpoint": out / "model.aurm"}
    est.save(files["checkpoint"], h, {"features": cfg.feature_hash(kinds), "kinds": kinds,
                                      "classes": corpus.classes})
    histories = {"history": getattr(est, "history_", None)}
    if family == "encoder":
        histories = {"history_encoder": est.encoder_history_, "history_decoder": est.decoder_history_}
    elif family == "hierarchy":
        histories = {"history": est.base_.history_}
    for name, hist in histories.items():
        if hist is not None:
            files[name] = out / f"{name}.csv"
            hist.to_csv(files[name], h)
    Xt, owner = _inputs(corpus, kinds, test_idx)
    files["predictions"] = write_predictions(out / "predictions.csv", [corpus.ids[i] for i in test_idx],
                                             _clip_probs(est, Xt, owner, len(test_idx)))
    write_artifacts(out, h, files, {"classes": corpus.classes})
    log.info("train: %s checkpoint written to %s (config %s)", family, files["checkpoint"], h)
    return 0


def _load_checked(cfg: RunConfig, path: Path):
    if path is None or not path.is_file():
        raise ConfigurationError(f"checkpoint {path} does not exist")
    est, header = load_estimator(path)
    extra = header.get("extra", {})
    kinds = extra.get("kinds") or cfg.model_kinds()
    expected = cfg.feature_hash(kinds)
    if extra.get("features") != expected:
        raise ConfigurationError(
            f"checkpoint {path} was trained on features {extra.get('features')} but the current config "
            f"produces {expected}; the spectrogram or patch settings differ, refusing to evaluate")
    return est, header, kinds


def cmd_eval(cfg: RunConfig, args) -> int:
    out = cfg.out
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.aurm"
    est, header, kinds = _load_checked(cfg, ckpt)
    corpus = Corpus(cfg)
    _check_classes(est, corpus)
    _, test_idx = corpus.split()
    X, owner = _inputs(corpus, kinds, test_idx)
    h = header.get("config_hash", "")
    files = {"predictions": write_predictions(out / "predictions.csv", [corpus.ids[i] for i in test_idx],
                                              _clip_probs(est, X, owner, len(test_idx)))}
    files.update(_report(cfg, corpus, files["predictions"], out, h))
    write_artifacts(out, h, files, {"classes": corpus.classes, "checkpoint": ckpt.name})
    log.info("eval: metrics written to %s", files["metrics"])
    return 0


def cmd_distill(cfg: RunConfig, args) -> int:
    teacher_path = Path(args.teacher) if args.teacher else cfg.path("distill", "teacher")
    if teacher_path is None:
        raise ConfigurationError("distill needs a teacher checkpoint ([distill] teacher or --teacher)")
    teacher, _, kinds = _load_checked(cfg, teacher_path)
    if not isinstance(teacher, PatchClassifier):
        raise ConfigurationError(f"teacher {teacher_path} is a {teacher.family} model, not a single network")
    corpus = Corpus(cfg)
    train_idx, test_idx = corpus.split()
    X, owner = corpus.patches(kinds[0], train_idx)
    t = "train"
    student = DistilledStudent(teacher, cfg.float("distill", "gamma"), cfg.int(t, "epochs"),
                               cfg.int(t, "batch_size"), cfg.float(t, "lr"), cfg.float(t, "l2"),
                               cfg.seed).fit(X, corpus.labels[train_idx][owner])
    out, h = cfg.out, cfg.config_hash()
    out.mkdir(parents=True, exist_ok=True)
    files = {"checkpoint": out / "model.aurm", "history": out / "history.csv"}
    student.save(files["checkpoint"], h, {"features": cfg.feature_hash(kinds), "kinds": kinds,
                                          "classes": corpus.classes, "teacher": teacher_path.name})
    student.history_.to_csv(files["history"], h)
    Xt, owner_t = corpus.patches(kinds[0], test_idx)
    dist = mean_embedding_distance(student.embed(Xt), teacher.embed(Xt))
    files["predictions"] = write_predictions(out / "predictions.csv", [corpus.ids[i] for i in test_idx],
                                             _clip_probs(student, Xt, owner_t, len(test_idx)))
    files.update(_report(cfg, corpus, files["predictions"], out, h))
    write_artifacts(out, h, files, {"classes": corpus.classes, "embedding_distance": round(dist, 6)})
    log.info("distill: mean teacher-student embedding distance %.6f", dist)
    return 0


def cmd_fuse(cfg: RunConfig, args) -> int:
    inputs = [Path(p) for p in args.inputs] if args.inputs else [cfg.base / p for p in _list(cfg.get("fuse", "inputs"))]
    if not inputs:
        raise ConfigurationError("fuse needs prediction files (--inputs or [fuse] inputs)")
    mode = args.mode or cfg.get("fuse", "mode")
    loaded = [read_predictions(p) for p in inputs]
    ids = loaded[0][0]
    for p, (other, probs) in zip(inputs, loaded):
        if sorted(other) != sorted(ids):
            raise ConfigurationError(f"{p} covers different clips than {inputs[0]}")
        if probs.shape[1] != loaded[0][1].shape[1]:
            raise ConfigurationError(f"{p} has {probs.shape[1]} classes, {inputs[0]} has {loaded[0][1].shape[1]}")
    rows = [{cid: i for i, cid in enumerate(other)} for other, _ in loaded]
    fused = np.array([fuse([probs[r[cid]] for (_, probs), r in zip(loaded, rows)], mode) for cid in ids])
    out = cfg.out
    h = hashlib.sha256("".join(p.read_text() for p in inputs).encode() + mode.encode()).hexdigest()[:16]
    files = {"predictions": write_predictions(out / "fused.csv", ids, fused)}
    try:
        corpus = Corpus(cfg)
    except ConfigurationError:
        corpus = None
    if corpus is not None:
        files.update(_report(cfg, corpus, files["predictions"], out, h, stem="fused_metrics"))
    write_artifacts(out, h, files, {"inputs": [str(p) for p in inputs], "mode": mode})
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    pred = Path(args.predictions) if args.predictions else cfg.path("report", "predictions")
    if pred is None:
        pred = cfg.out / "predictions.csv"
    corpus = Corpus(cfg)
    files = _report(cfg, corpus, pred, cfg.out, cfg.config_hash(), stem="report")
    print(files["summary"].read_text(), end="")
    return 0


COMMANDS = {"synth": cmd_synth, "extract": cmd_extract, "train": cmd_train, "eval": cmd_eval,
            "distill": cmd_distill, "fuse": cmd_fuse, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auris", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--seed", type=int, help="run seed (corpus seed for synth)")
        p.add_argument("--out", help="output directory (corpus directory for synth)")
        p.add_argument("--jobs", type=int, help="extraction worker count")
        if name == "eval":
            p.add_argument("--checkpoint", help="model checkpoint (default <out>/model.aurm)")
        if name == "distill":
            p.add_argument("--teacher", help="teacher checkpoint")
        if name == "fuse":
            p.add_argument("--inputs", nargs="+", help="prediction CSV files")
            p.add_argument("--mode", choices=("mean", "sum"))
        if name == "report":
            p.add_argument("--predictions", help="prediction CSV (default <out>/predictions.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {("run", "jobs"): args.jobs}
        if args.command != "synth":
            overrides[("run", "seed")] = args.seed
            overrides[("run", "out")] = str(Path(args.out).resolve()) if args.out else None
        cfg = RunConfig(args.config, overrides)
        _setup_logging(None if args.command == "synth" else cfg.out)
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, InputError) as exc:
        print(f"auris {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (AurisError, OSError, ValueError) as exc:
        print(f"auris {args.command}: {exc}", file=sys.stderr)
        return 1
    finally:
        for h in list(log.handlers):
            log.removeHandler(h)
            h.close()


if __name__ == "__main__":
    sys.exit(main())
