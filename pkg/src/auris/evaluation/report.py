"""Early-decision curves and metric reports (CSV plus a text summary)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from ..dsp.patches import split_patches
from ..exceptions import ShapeError
from .metrics import accuracy, aggregate_patches, confusion_matrix, icbhi_metrics

log = logging.getLogger(__name__)


def early_curve(predict_fn, spectrogram, durations, width, overlap, hop, window_len, sample_rate,
                clip_duration):
    """Clip decision using only patches that end before each duration.

    ``predict_fn`` maps an (n, F, W) patch array to (n, C) probabilities;
    it runs once on every patch so each point reuses the exact rows of the
    full evaluation. Durations shorter than one patch are skipped.
    """
    ps = split_patches(spectrogram, width, overlap)
    probs = np.asarray(predict_fn(ps.patches))
    ends = ((ps.offsets + width - 1) * hop + window_len) / sample_rate
    out = []
    for t in durations:
        if t > clip_duration + 1e-9:
            raise ShapeError(f"duration {t} s exceeds the clip length {clip_duration} s")
        keep = np.ones(len(ends), bool) if t >= clip_duration - 1e-9 else ends <= t + 1e-9
        if not keep.any():
            log.info("skipping %.3f s: shorter than one patch", t)
            continue
        out.append((t, aggregate_patches(probs[keep])))
    return out


def round_half_up(x: float, digits: int) -> str:
    q = Decimal(1).scaleb(-digits)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


@dataclass
class MetricsReport:
    accuracy: float
    n: int
    class_names: list
    per_class: dict
    confusion: np.ndarray
    groups: dict = field(default_factory=dict)
    icbhi: dict = field(default_factory=dict)


def build_report(pred, truth, class_names, groups=None, icbhi_tasks=()) -> MetricsReport:
    """Overall, per-class and per-group accuracy plus optional ICBHI scores.

    ``groups`` maps a metadata key to one value per sample. Per-class
    accuracy is the share of each true class predicted correctly.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    c = len(class_names)
    cm = confusion_matrix(pred, truth, c)
    per_class = {}
    for k, name in enumerate(class_names):
        total = int(cm[:, k].sum())
        if total:
            per_class[name] = (accuracy(int(cm[k, k]), total), total)
    group_tables = {}
    for key, values in (groups or {}).items():
        values = np.asarray(values)
        if len(values) != len(pred):
            raise ShapeError(f"group key {key!r} has {len(values)} values for {len(pred)} samples")
        table = {}
        for v in sorted(set(values.tolist()), key=str):
            rows = values == v
            table[str(v)] = (accuracy(int((pred[rows] == truth[rows]).sum()), int(rows.sum())), int(rows.sum()))
        group_tables[key] = table
    icbhi = {task: icbhi_metrics(cm, task) for task in icbhi_tasks}
    return MetricsReport(accuracy(int((pred == truth).sum()), len(pred)), len(pred), list(class_names),
                         per_class, cm, group_tables, icbhi)


def write_report(report: MetricsReport, out_dir, config_hash: str = "", stem: str = "metrics") -> dict:
    """Write ``<stem>.csv``, ``<stem>_confusion.csv`` and ``<stem>.txt``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / f"{stem}.csv", "confusion": out / f"{stem}_confusion.csv",
             "summary": out / f"{stem}.txt"}
    with open(paths["metrics"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section", "name", "metric", "value", "n", "config_hash"])
        w.writerow(["overall", "all", "accuracy", f"{report.accuracy:.6f}", report.n, config_hash])
        for name, (acc, n) in report.per_class.items():
            w.writerow(["class", name, "accuracy", f"{acc:.6f}", n, config_hash])
        for key, table in report.groups.items():
            for value, (acc, n) in table.items():
                w.writerow([f"group:{key}", value, "accuracy", f"{acc:.6f}", n, config_hash])
        for task, (sen, spec, score) in report.icbhi.items():
            for metric, v in (("sensitivity", sen), ("specificity", spec), ("score", score)):
                w.writerow(["icbhi", task, metric, f"{v:.6f}", report.n, config_hash])
    with open(paths["confusion"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicted\\true"] + report.class_names)
        for name, row in zip(report.class_names, report.confusion):
            w.writerow([name] + [int(v) for v in row])
    lines = [f"samples: {report.n}", f"accuracy: {round_half_up(report.accuracy, 1)}%"]
    for name, (acc, n) in report.per_class.items():
        lines.append(f"  {name}: {round_half_up(acc, 1)}% of {n}")
    for key, table in report.groups.items():
        lines.append(f"by {key}:")
        lines += [f"  {v}: {round_half_up(acc, 1)}% of {n}" for v, (acc, n) in table.items()]
    for task, (sen, spec, score) in report.icbhi.items():
        lines.append(f"task {task}: sensitivity {round_half_up(sen, 2)}, specificity "
                     f"{round_half_up(spec, 2)}, score {round_half_up(score, 2)}")
    if config_hash:
        lines.append(f"config: {config_hash}")
    paths["summary"].write_text("\n".join(lines) + "\n")
    return paths
