"""Mixup augmentation on patches, embeddings or aligned multi-stream inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InputError, ShapeError

BETA_SHAPE = 0.4
DISTRIBUTIONS = ("beta", "uniform")


@dataclass(frozen=True)
class MixupPair:
    x_mp1: np.ndarray
    x_mp2: np.ndarray
    y_mp1: np.ndarray
    y_mp2: np.ndarray
    alpha: float
    distribution: str = "beta"


def mixup(x1, x2, y1, y2, alpha: float, distribution: str = "beta") -> MixupPair:
    """Two complementary convex combinations of a sample pair and their labels."""
    x1, x2, y1, y2 = (np.asarray(v) for v in (x1, x2, y1, y2))
    if x1.shape != x2.shape or y1.shape != y2.shape:
        raise ShapeError(f"mixup needs matching shapes, got {x1.shape}/{x2.shape} and {y1.shape}/{y2.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"mixing coefficient must lie in [0, 1], got {alpha}")
    a, b = alpha, 1.0 - alpha
    return MixupPair(a * x1 + b * x2, b * x1 + a * x2, a * y1 + b * y2, b * y1 + a * y2, alpha, distribution)


def draw_alphas(n: int, rng) -> np.ndarray:
    """Mixing coefficients alternating Beta(0.4, 0.4) (even rows) and Uniform(0, 1) (odd rows)."""
    alphas = np.empty(n)
    even = np.arange(0, n, 2)
    odd = np.arange(1, n, 2)
    alphas[even] = rng.beta(BETA_SHAPE, BETA_SHAPE, len(even))
    alphas[odd] = rng.uniform(0.0, 1.0, len(odd))
    return alphas


def constrained_partners(labels, anchor_class: int, rng) -> np.ndarray:
    """Partner indices pairing every ``anchor_class`` row with another class and vice versa.

    Rows fall back to a random partner when the batch lacks the other side.
    """
    labels = np.asarray(labels)
    is_anchor = labels == anchor_class
    anchors, others = np.flatnonzero(is_anchor), np.flatnonzero(~is_anchor)
    partners = rng.permutation(len(labels))
    if len(anchors) and len(others):
        partners[anchors] = rng.choice(others, len(anchors))
        partners[others] = rng.choice(anchors, len(others))
    return partners


def mixup_batch(xs, y, rng, partners=None):
    """Double a batch: every row i is mixed with partner j by both complementary formulas.

    ``xs`` may be one array or a tuple of row-aligned arrays (the streams are
    mixed with identical coefficients). Returns (mixed xs, mixed y), each of
    twice the source length; the first half holds the first combinations.
    """
    single = isinstance(xs, np.ndarray)
    streams = [xs] if single else list(xs)
    n = len(y)
    if any(len(s) != n for s in streams):
        raise ShapeError("all streams must have as many rows as the labels")
    if partners is None:
        partners = rng.permutation(n)
    alphas = draw_alphas(n, rng)

    def mix(v):
        a = alphas.reshape((-1,) + (1,) * (v.ndim - 1)).astype(v.dtype)
        other = v[partners]
        return np.concatenate([a * v + (1 - a) * other, (1 - a) * v + a * other])

    mixed = [mix(s) for s in streams]
    return (mixed[0] if single else tuple(mixed)), mix(np.asarray(y, dtype=np.float64))
