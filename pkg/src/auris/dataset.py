"""Audio ingestion, manifests, splits and the synthetic desk corpus."""

from __future__ import annotations

import csv
import math
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from .exceptions import ConfigurationError, IngestionError, InputError, RangeError

CHANNEL_MODES = ("ch1", "ch2", "average", "side")
MANIFEST_HEADER = ["path", "label", "meta", "annotations"]


@dataclass(frozen=True)
class AudioClip:
    """Mono signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", samples)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise InputError(f"sample rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        if samples.size == 0:
            raise InputError("audio clip must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise InputError("audio clip contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


# --------------------------------------------------------------------------
# WAV I/O
# --------------------------------------------------------------------------

def _decode_pcm(raw: bytes, width: int) -> np.ndarray:
    if width == 1:
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if width == 2:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        return v.astype(np.float64) / float(1 << 23)
    if width == 4:
        return np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
    raise ValueError(width)


def load_clip(path, channel: str = "ch1") -> AudioClip:
    """Read a PCM WAV file into a mono clip with samples in [-1, 1).

    ``channel`` selects how stereo input is reduced: ``ch1``, ``ch2``,
    ``average`` or ``side`` ((ch1 - ch2) / 2). Mono files ignore it.
    """
    if channel not in CHANNEL_MODES:
        raise InputError(f"unknown channel selector {channel!r}; expected one of {CHANNEL_MODES}")
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (OSError, EOFError, wave.Error) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if width not in (1, 2, 3, 4):
        raise IngestionError(f"unsupported sample width {width} bytes in {path}")
    if n_channels not in (1, 2):
        raise IngestionError(f"unsupported channel count {n_channels} in {path}")
    data = _decode_pcm(raw, width).reshape(-1, n_channels)
    if data.shape[0] == 0:
        raise IngestionError(f"{path} contains no audio frames")
    if n_channels == 1:
        mono = data[:, 0]
    elif channel == "ch1":
        mono = data[:, 0]
    elif channel == "ch2":
        mono = data[:, 1]
    elif channel == "average":
        mono = data.mean(axis=1)
    else:
        mono = (data[:, 0] - data[:, 1]) / 2.0
    return AudioClip(np.ascontiguousarray(mono), rate)


def save_clip(path, clip: AudioClip | np.ndarray, sample_rate: int | None = None) -> Path:
    """Write 16-bit PCM. A 2-D array of shape (frames, channels) writes interleaved channels."""
    if isinstance(clip, AudioClip):
        data, rate = clip.samples[:, None], clip.sample_rate
    else:
        data = np.asarray(clip, dtype=np.float64)
        data = data[:, None] if data.ndim == 1 else data
        rate = sample_rate
    if rate is None:
        raise InputError("sample_rate is required when writing a raw array")
    pcm = np.clip(np.round(data * 32768.0), -32768, 32767).astype("<i2")
    path = Path(path)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(data.shape[1])
        wf.setsampwidth(2)
        wf.setframerate(int(rate))
        wf.writeframes(pcm.tobytes())
    return path


# --------------------------------------------------------------------------
# Signal-level operations
# --------------------------------------------------------------------------

def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Polyphase windowed-sinc (Kaiser) resampling.

    The output holds ``round(len * target / source)`` samples. Edges are
    extended linearly before filtering so that a constant signal stays constant.
    """
    if int(target_hz) != target_hz or target_hz <= 0:
        raise InputError(f"target rate must be a positive integer, got {target_hz}")
    target_hz = int(target_hz)
    if target_hz == clip.sample_rate:
        return clip
    g = math.gcd(target_hz, clip.sample_rate)
    up, down = target_hz // g, clip.sample_rate // g
    out = signal.resample_poly(clip.samples, up, down, window=("kaiser", 5.0), padtype="line")
    n_out = max(1, int(round(len(clip) * target_hz / clip.sample_rate)))
    if out.size >= n_out:
        out = out[:n_out]
    else:
        out = np.concatenate([out, np.full(n_out - out.size, out[-1])])
    return AudioClip(out, target_hz)


def extract_cycle(clip: AudioClip, onset: float, offset: float) -> AudioClip:
    """Return the samples in ``[onset, offset)`` seconds."""
    if not (0.0 <= onset < offset <= clip.duration + 1e-12):
        raise RangeError(
            f"cycle bounds [{onset}, {offset}) outside clip of {clip.duration:.6f} s"
        )
    start = int(round(onset * clip.sample_rate))
    stop = min(int(round(offset * clip.sample_rate)), len(clip))
    if stop <= start:
        raise RangeError(f"cycle [{onset}, {offset}) is shorter than one sample")
    return AudioClip(clip.samples[start:stop], clip.sample_rate)


def enforce_min_duration(clip: AudioClip, min_s: float) -> AudioClip:
    """Tile a short clip with whole repetitions until it lasts at least ``min_s``."""
    if min_s <= 0:
        raise InputError(f"minimum duration must be positive, got {min_s}")
    n = len(clip)
    need = min_s * clip.sample_rate
    if n >= need:
        return clip
    # guard against 5.0 * 16000 style products landing a hair above an integer
    reps = math.ceil(need / n - 1e-9)
    return AudioClip(np.tile(clip.samples, reps), clip.sample_rate)


# --------------------------------------------------------------------------
# Manifests
# --------------------------------------------------------------------------

@dataclass
class ManifestRecord:
    clip_path: str
    class_label: str
    group_labels: dict[str, str] = field(default_factory=dict)
    annotations: list[tuple[float, float, str]] = field(default_factory=list)

    def __post_init__(self):
        for onset, offset, _ in self.annotations:
            if not offset > onset:
                raise InputError(
                    f"annotation offset {offset} must exceed onset {onset} in {self.clip_path}"
                )


def _format_meta(meta: dict[str, str]) -> str:
    return ";".join(f"{k}={v}" for k, v in meta.items())


def _parse_meta(text: str) -> dict[str, str]:
    out = {}
    for item in filter(None, (t.strip() for t in text.split(";"))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"metadata item {item!r} is not key=value")
        out[key.strip()] = value.strip()
    return out


def _format_annotations(ann) -> str:
    return ";".join(f"{on:g}:{off:g}:{lab}" for on, off, lab in ann)


def _parse_annotations(text: str) -> list[tuple[float, float, str]]:
    out = []
    for item in filter(None, (t.strip() for t in text.split(";"))):
        parts = item.split(":", 2)
        if len(parts) != 3:
            raise InputError(f"annotation {item!r} is not onset:offset:label")
        out.append((float(parts[0]), float(parts[1]), parts[2]))
    return out


def write_manifest(path, records: Iterable[ManifestRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow([r.clip_path, r.class_label, _format_meta(r.group_labels),
                             _format_annotations(r.annotations)])
    return path


def read_manifest(path, labels: Sequence[str] | None = None) -> list[ManifestRecord]:
    """Parse a manifest CSV; relative clip paths resolve against the manifest's folder."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames[:2]) != MANIFEST_HEADER[:2]:
            raise IngestionError(f"{path}: header must start with {','.join(MANIFEST_HEADER)}")
        records = []
        for row in reader:
            clip_path = row["path"]
            if not Path(clip_path).is_absolute():
                clip_path = str(path.parent / clip_path)
            rec = ManifestRecord(
                clip_path,
                row["label"],
                _parse_meta(row.get("meta") or ""),
                _parse_annotations(row.get("annotations") or ""),
            )
            if labels is not None and rec.class_label not in labels:
                raise InputError(f"{path}: label {rec.class_label!r} not in declared label set")
            records.append(rec)
    if not records:
        raise InputError(f"manifest {path} has no records")
    return records


# --------------------------------------------------------------------------
# Splits
# --------------------------------------------------------------------------

@dataclass
class SplitSpec:
    """Fold assignment for every manifest record.

    ``assignments[i]`` is the fold index of record ``i``. For the fixed-fraction
    scheme fold 0 is the training subset and fold 1 the test subset, so
    ``train_test(1)`` returns (train, test).
    """

    scheme: str
    assignments: dict[int, int]
    group_disjoint_key: str | None = None
    n_folds: int = 2

    def fold_indices(self, fold: int) -> list[int]:
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def train_test(self, fold: int) -> tuple[list[int], list[int]]:
        test = self.fold_indices(fold)
        train = sorted(i for i, f in self.assignments.items() if f != fold)
        return train, test

    def folds(self):
        if self.scheme == "kfold":
            for k in range(self.n_folds):
                yield self.train_test(k)
        else:
            yield self.train_test(1)


def _units(manifest, group_key, stratify):
    """Group record indices into the units that are shuffled and assigned."""
    if group_key is None:
        units = [[i] for i in range(len(manifest))]
        labels = [manifest[i].class_label for i in range(len(manifest))]
    else:
        by_group: dict[str, list[int]] = {}
        for i, rec in enumerate(manifest):
            if group_key not in rec.group_labels:
                raise ConfigurationError(
                    f"record {rec.clip_path} lacks group key {group_key!r}"
                )
            by_group.setdefault(rec.group_labels[group_key], []).append(i)
        units = [by_group[g] for g in sorted(by_group)]
        labels = [manifest[u[0]].class_label for u in units]
    if not stratify:
        labels = [""] * len(units)
    return units, labels


def make_splits(
    manifest: Sequence[ManifestRecord],
    scheme: str = "kfold",
    k: int = 5,
    train_fraction: float = 0.6,
    group_key: str | None = None,
    seed: int = 0,
    stratify: bool = False,
) -> SplitSpec:
    """Assign every record to a fold.

    Schemes: ``kfold`` (k folds whose unit counts differ by at most one),
    ``fraction`` (train/test by ``train_fraction``) and ``predefined`` (reads
    ``subset=train|test`` from record metadata). With ``group_key`` the unit
    of assignment is the group, so no group straddles train and test.
    ``stratify`` orders units by label before the round-robin so classes
    spread evenly across folds.
    """
    if not manifest:
        raise InputError("manifest is empty")
    if scheme == "predefined":
        assign = {}
        for i, rec in enumerate(manifest):
            subset = rec.group_labels.get("subset")
            if subset not in ("train", "test"):
                raise ConfigurationError(f"record {rec.clip_path} lacks subset=train|test metadata")
            assign[i] = 0 if subset == "train" else 1
        return SplitSpec("predefined", assign, None, 2)

    rng = np.random.default_rng(seed)
    units, labels = _units(manifest, group_key, stratify)
    order = []
    for lab in sorted(set(labels)):
        members = [u for u, l in enumerate(labels) if l == lab]
        order.extend(members[j] for j in rng.permutation(len(members)))

    assign: dict[int, int] = {}
    if scheme == "kfold":
        if k < 2 or k > len(units):
            raise ConfigurationError(f"k={k} folds impossible with {len(units)} units")
        for pos, u in enumerate(order):
            for i in units[u]:
                assign[i] = pos % k
        return SplitSpec("kfold", assign, group_key, k)
    if scheme == "fraction":
        if not 0.0 < train_fraction < 1.0:
            raise ConfigurationError(f"train fraction must lie in (0, 1), got {train_fraction}")
        if len(units) < 2:
            raise ConfigurationError("fraction split needs at least two units")
        n_train = min(max(1, int(round(train_fraction * len(units)))), len(units) - 1)
        if stratify:
            # evenly spaced picks through the label-ordered list keep class ratios
            train_units = {order[int(j * len(units) / n_train)] for j in range(n_train)}
        else:
            train_units = set(order[:n_train])
        for u in order:
            for i in units[u]:
                assign[i] = 0 if u in train_units else 1
        return SplitSpec("fraction", assign, group_key, 2)
    raise ConfigurationError(f"unknown split scheme {scheme!r}")


# --------------------------------------------------------------------------
# Synthetic corpus
# --------------------------------------------------------------------------

def class_recipe(c: int) -> dict:
    """Generative parameters of synthetic class ``c``.

    Each class owns a harmonic tone set on its own fundamental, a band of
    filtered noise and an amplitude-modulation rate. Fundamentals step by
    a non-octave ratio so that no two classes share partials.
    """
    f0 = 160.0 * 2.0 ** ((c * 7 / 12) % 2.5)
    return {
        "f0": f0,
        "harmonics": (1.0, 2.0, 3.0) if c % 2 == 0 else (1.0, 1.5, 2.5),
        "weights": np.roll(np.array([1.0, 0.5, 0.25]), c % 3),
        "noise_band": (400.0 * 1.6 ** (c % 5), 400.0 * 1.6 ** (c % 5) * 2.0),
        "am_rate": 1.5 + 1.25 * c,
    }


def synth_clip(c: int, duration: float, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    recipe = class_recipe(c)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = recipe["f0"] * rng.uniform(0.96, 1.04)
    x = np.zeros(n)
    for h, w in zip(recipe["harmonics"], recipe["weights"]):
        x += w * np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi))
    lo, hi = recipe["noise_band"]
    hi = min(hi, 0.45 * sample_rate)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=sample_rate, output="sos")
    noise = signal.sosfilt(sos, rng.standard_normal(n))
    noise /= np.max(np.abs(noise)) + 1e-12
    x = x / np.max(np.abs(x)) + rng.uniform(0.15, 0.35) * noise
    depth = rng.uniform(0.3, 0.6)
    x *= 1.0 - depth * 0.5 * (1 + np.sin(2 * np.pi * recipe["am_rate"] * t + rng.uniform(0, 2 * np.pi)))
    # broadband floor shared by every class
    x += rng.uniform(0.02, 0.06) * rng.standard_normal(n)
    return x / np.max(np.abs(x)) * rng.uniform(0.4, 0.9)


def synth_corpus(
    out_dir,
    n_classes: int = 3,
    per_class: int = 20,
    duration: float = 3.0,
    sample_rate: int = 16000,
    seed: int = 7,
) -> tuple[list[ManifestRecord], Path]:
    """Write a balanced synthetic corpus and its manifest; return (records, manifest path).

    Records carry ``device`` (a/b/c round robin) and ``patient`` (pairs of
    clips) metadata so that per-device reports and group-disjoint splits
    can be exercised.
    """
    if n_classes < 1 or per_class < 1:
        raise InputError("class count and per-class count must be at least 1")
    if duration <= 0:
        raise InputError("duration must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for c in range(n_classes):
        for i in range(per_class):
            rng = np.random.default_rng([seed, c, i])
            x = synth_clip(c, duration, sample_rate, rng)
            name = f"class{c}_{i:03d}.wav"
            save_clip(out_dir / name, AudioClip(x, sample_rate))
            records.append(ManifestRecord(
                name, f"class{c}",
                {"device": "abc"[i % 3], "patient": f"p{c}_{i // 2:03d}"},
            ))
    manifest = write_manifest(out_dir / "manifest.csv", records)
    for r in records:
        r.clip_path = str(out_dir / r.clip_path)
    return records, manifest
