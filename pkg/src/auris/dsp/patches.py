"""Cut spectrograms into fixed-width tiles for the networks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..exceptions import InputError
from .spectral import Spectrogram


@dataclass(frozen=True)
class PatchSet:
    patches: np.ndarray  # (n, F, W)
    width: int
    overlap: float
    source_shape: tuple[int, int]
    offsets: np.ndarray

    def __len__(self):
        return self.patches.shape[0]


def patch_stride(width: int, overlap: float) -> int:
    if overlap not in (0, 0.0, 0.5):
        raise InputError(f"overlap must be 0 or 0.5, got {overlap}")
    stride = width * (1.0 - overlap)
    if stride != int(stride) or stride < 1:
        raise InputError(f"width {width} with overlap {overlap} gives a non-integer stride")
    return int(stride)


def split_patches(spec: Spectrogram | np.ndarray, width: int, overlap: float = 0.0) -> PatchSet:
    """Tile along time with stride ``width * (1 - overlap)``.

    Trailing frames that do not fill a patch are dropped. A spectrogram
    narrower than one patch is repeated along time to fill exactly one.
    """
    if width < 1:
        raise InputError("patch width must be >= 1")
    values = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
    n_freq, n_time = values.shape
    stride = patch_stride(width, overlap)
    if n_time < width:
        reps = -(-width // n_time)
        values = np.tile(values, (1, reps))[:, :width]
        offsets = np.array([0])
    else:
        offsets = np.arange((n_time - width) // stride + 1) * stride
    patches = np.stack([values[:, o:o + width] for o in offsets])
    return PatchSet(patches, width, float(overlap), (n_freq, n_time), offsets)


def patchify(specs: Sequence, width: int, overlap: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Patch a list of spectrograms; return (patches, index of the source spectrogram per patch)."""
    tiles, owner = [], []
    for i, s in enumerate(specs):
        ps = split_patches(s, width, overlap)
        tiles.append(ps.patches)
        owner.extend([i] * len(ps))
    return np.concatenate(tiles).astype(np.float32), np.asarray(owner)
