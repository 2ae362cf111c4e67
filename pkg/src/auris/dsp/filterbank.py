"""Mel and gammatone weighting matrices applied to STFT magnitudes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError


@dataclass(frozen=True)
class FilterBank:
    """``weights`` maps F_in STFT bins to F_out bands."""

    weights: np.ndarray
    kind: str
    center_freqs: np.ndarray

    @property
    def shape(self):
        return self.weights.shape


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def fft_frequencies(n_fft: int, sample_rate: int) -> np.ndarray:
    return np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)


def _ensure_nonempty_rows(weights, centers, freqs):
    # narrow low-frequency triangles can fall between two bins
    for row in np.flatnonzero(weights.max(axis=1) <= 0):
        weights[row, np.argmin(np.abs(freqs - centers[row]))] = 1.0
    return weights


def mel_filterbank(n_mels: int, f_min: float, f_max: float, n_fft: int, sample_rate: int) -> FilterBank:
    """Unit-peak triangular filters with centres equally spaced in mel."""
    if n_mels < 1:
        raise ConfigurationError(f"n_mels must be >= 1, got {n_mels}")
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ConfigurationError(
            f"band edges must satisfy 0 <= f_min < f_max <= {sample_rate / 2}, got ({f_min}, {f_max})"
        )
    freqs = fft_frequencies(n_fft, sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    centers = edges[1:-1]
    return FilterBank(_ensure_nonempty_rows(weights, centers, freqs), "mel", centers)


def erb(f):
    """Equivalent rectangular bandwidth in Hz of an auditory filter centred at ``f``."""
    return 24.7 * (4.37e-3 * np.asarray(f, dtype=np.float64) + 1.0)


def hz_to_erb_rate(f):
    return 21.4 * np.log10(1.0 + 4.37e-3 * np.asarray(f, dtype=np.float64))


def erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) / 4.37e-3


@dataclass(frozen=True)
class GammatoneConfig:
    n_filters: int = 64
    f_min: float = 50.0
    f_max: float | None = None
    order: int = 4
    bandwidth: float = 1.019
    phase: float = 0.0

    def centers(self, sample_rate: int) -> np.ndarray:
        f_max = self.f_max if self.f_max is not None else 0.45 * sample_rate
        if self.n_filters == 1:
            return np.array([self.f_min], dtype=np.float64)
        return erb_rate_to_hz(np.linspace(hz_to_erb_rate(self.f_min), hz_to_erb_rate(f_max), self.n_filters))


def gammatone_response(freqs, center: float, order: int = 4, bandwidth: float = 1.019):
    """Magnitude response of one gammatone filter, up to a constant.

    The continuous impulse response t^(P-1) exp(-2 pi B t) cos(2 pi fc t) has
    the positive-frequency spectrum (B + j(f - fc))^-P with B = bandwidth * ERB(fc).
    The mirrored negative-frequency lobe is omitted, which keeps the peak at fc.
    """
    b = bandwidth * erb(center)
    return (1.0 + ((np.asarray(freqs) - center) / b) ** 2) ** (-order / 2.0)


def gammatone_bank(cfg: GammatoneConfig, n_fft: int, sample_rate: int) -> FilterBank:
    if cfg.order < 1 or cfg.n_filters < 1:
        raise ConfigurationError("gammatone order and filter count must be >= 1")
    centers = cfg.centers(sample_rate)
    if np.any(centers >= sample_rate / 2) or np.any(centers <= 0):
        raise ConfigurationError(
            f"gammatone centres must lie in (0, {sample_rate / 2}) Hz; got max {centers.max():.1f}"
        )
    freqs = fft_frequencies(n_fft, sample_rate)
    weights = np.stack([gammatone_response(freqs, fc, cfg.order, cfg.bandwidth) for fc in centers])
    weights /= weights.max(axis=1, keepdims=True)
    return FilterBank(weights, "gammatone", centers)
