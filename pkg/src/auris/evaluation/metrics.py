"""Patch aggregation, fusion and classification metrics."""

from __future__ import annotations

import numpy as np

from ..exceptions import InputError, ShapeError, UndefinedMetricError

TASK1_CLASSES = ("Crackle", "Wheeze", "Both", "Normal")
TASK2_CLASSES = ("Chronic", "Non-chronic", "Healthy")
ICBHI_TASKS = ("1-1", "1-2", "2-1", "2-2")
FUSE_MODES = ("mean", "sum")


def aggregate_patches(patch_probs) -> np.ndarray:
    """Elementwise mean of the patch probability vectors of one clip."""
    p = np.asarray(patch_probs, dtype=np.float64)
    if p.ndim != 2 or len(p) == 0:
        raise InputError("need at least one patch probability vector")
    return p.mean(axis=0)


def aggregate_by_owner(patch_probs, owner, n_clips) -> np.ndarray:
    """Clip-level probabilities from patch rows tagged with their clip index."""
    owner = np.asarray(owner)
    out = np.empty((n_clips, patch_probs.shape[1]))
    for k in range(n_clips):
        out[k] = aggregate_patches(patch_probs[owner == k])
    return out


def predict_label(p) -> int | np.ndarray:
    """Arg-max class index; ties go to the lowest index."""
    p = np.asarray(p)
    return np.argmax(p, axis=-1) if p.ndim > 1 else int(np.argmax(p))


def fuse(streams, mode: str = "mean") -> np.ndarray:
    """Combine M patch-probability streams of one clip.

    ``mean`` averages the per-stream aggregates (each stream counts once, so
    a simplex point comes out); ``sum`` adds every patch vector.
    """
    if mode not in FUSE_MODES:
        raise InputError(f"unknown fusion mode {mode!r}; expected one of {FUSE_MODES}")
    if len(streams) == 0:
        raise InputError("fusion needs at least one stream")
    arrays = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in streams]
    if len({a.shape[1] for a in arrays}) != 1:
        raise ShapeError("streams disagree on the class count")
    if mode == "sum":
        return np.sum([a.sum(axis=0) for a in arrays], axis=0)
    return np.mean([aggregate_patches(a) for a in arrays], axis=0)


def accuracy(correct: int, total: int) -> float:
    if total <= 0:
        raise UndefinedMetricError("accuracy is undefined for zero samples")
    if not 0 <= correct <= total:
        raise InputError(f"correct count {correct} outside [0, {total}]")
    return 100.0 * correct / total


def confusion_matrix(pred, truth, n_classes: int) -> np.ndarray:
    """Counts with rows indexed by prediction and columns by ground truth."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ShapeError(f"{len(pred)} predictions for {len(truth)} labels")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (pred, truth), 1)
    return cm


def _ratio(num, den, classes, cols, totals):
    if den == 0:
        empty = [classes[c] for c in cols if totals[c] == 0]
        raise UndefinedMetricError(f"no ground-truth samples for {', '.join(empty)}")
    return num / den


def icbhi_metrics(cm, task: str) -> tuple[float, float, float]:
    """(sensitivity, specificity, score) for an ICBHI task.

    Task 1 matrices are ordered Crackle, Wheeze, Both, Normal and task 2
    matrices Chronic, Non-chronic, Healthy. Variant ``-1`` credits only the
    exact anomaly class; ``-2`` credits any anomaly predicted for an anomaly.
    """
    cm = np.asarray(cm, dtype=np.float64)
    if task not in ICBHI_TASKS:
        raise InputError(f"unknown ICBHI task {task!r}; expected one of {ICBHI_TASKS}")
    size, classes = (4, TASK1_CLASSES) if task.startswith("1") else (3, TASK2_CLASSES)
    if cm.shape != (size, size):
        raise ShapeError(f"task {task} needs a {size}x{size} confusion matrix, got {cm.shape}")
    totals = cm.sum(axis=0)
    k = size - 1  # anomaly classes come first, the normal/healthy class last
    anomalies = list(range(k))
    den = totals[:k].sum()
    num = np.trace(cm[:k, :k]) if task.endswith("1") else cm[:k, :k].sum()
    sen = _ratio(num, den, classes, anomalies, totals)
    spec = _ratio(cm[k, k], totals[k], classes, [k], totals)
    return float(sen), float(spec), float((sen + spec) / 2.0)


def evaluate_hierarchy(meta_pred, fine_pred, meta_truth, fine_truth) -> dict:
    """Composite accuracy counts a sample only when both levels are right."""
    arrays = [np.asarray(a) for a in (meta_pred, fine_pred, meta_truth, fine_truth)]
    if len({len(a) for a in arrays}) != 1:
        raise ShapeError("hierarchy prediction lists are misaligned")
    mp, fp, mt, ft = arrays
    n = len(mp)
    meta_ok = mp == mt
    both = meta_ok & (fp == ft)
    return {
        "composite_accuracy": accuracy(int(both.sum()), n),
        "meta_accuracy": accuracy(int(meta_ok.sum()), n),
        "fine_accuracy": accuracy(int((fp == ft).sum()), n),
        "n": n,
    }
