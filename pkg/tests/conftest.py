"""Shared fixtures: the synthetic corpus and its desk-scale features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from auris.dataset import load_clip, make_splits, synth_corpus
from auris.dsp import SpectrogramExtractor, patchify

DESK_BANDS = 32
DESK_WIDTH = 32
DESK_OVERLAP = 0.5
DESK_KINDS = ("log-mel", "gamma", "cqt")


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """3 classes x 20 clips x 3 s at 16 kHz, seed 7."""
    records, manifest = synth_corpus(tmp_path_factory.mktemp("corpus"), 3, 20, 3.0, 16000, seed=7)
    return records, manifest


@dataclass
class DeskData:
    records: list
    labels: np.ndarray
    train: np.ndarray
    test: np.ndarray
    specs: dict  # kind -> list of (F, T) arrays, one per clip

    def patches(self, kind, indices):
        """(patches, owner) where owner indexes into ``indices``."""
        return patchify([self.specs[kind][i] for i in indices], DESK_WIDTH, DESK_OVERLAP)


@pytest.fixture(scope="session")
def desk(corpus):
    records, _ = corpus
    classes = sorted({r.class_label for r in records})
    labels = np.array([classes.index(r.class_label) for r in records])
    clips = [load_clip(r.clip_path) for r in records]
    specs = {}
    for kind in DESK_KINDS:
        ex = SpectrogramExtractor(kind, n_bands=DESK_BANDS).fit()
        specs[kind] = [ex.extract(c) for c in clips]
    train, test = make_splits(records, "fraction", train_fraction=0.6, seed=0, stratify=True).train_test(1)
    return DeskData(records, labels, np.array(train), np.array(test), specs)
