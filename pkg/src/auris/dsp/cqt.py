"""Constant-Q transform on a uniform frame grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..dataset import AudioClip
from ..exceptions import ConfigurationError, InputError
from .spectral import Spectrogram, frame_count


@dataclass(frozen=True)
class CQTConfig:
    """Geometric filter spacing; Q follows from ``bins_per_octave`` alone.

    Frames are centred at ``t * hop + frame_length // 2`` so that the CQT
    shares its time axis with an STFT of the same window and hop.
    """

    bins_per_octave: int = 12
    f_min: float = 32.70
    n_bins: int = 64
    alpha: float = 25.0 / 46.0
    hop: int = 256
    frame_length: int = 1024

    def __post_init__(self):
        if self.bins_per_octave < 1:
            raise ConfigurationError("bins_per_octave must be >= 1")
        if self.f_min <= 0 or self.n_bins < 1:
            raise ConfigurationError("f_min must be positive and n_bins >= 1")

    @property
    def Q(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    def center_freqs(self) -> np.ndarray:
        return self.f_min * (2.0 ** (1.0 / self.bins_per_octave)) ** np.arange(self.n_bins)

    def window_lengths(self, sample_rate: int) -> np.ndarray:
        return np.round(self.Q * sample_rate / self.center_freqs()).astype(int)


def cqt_kernel(n: int, Q: float, alpha: float) -> np.ndarray:
    """Windowed complex exponential of one bin, including the 1/N normalisation.

    The raised-cosine window is evaluated on an index centred in the frame,
    giving weight 1 at the centre and 2*alpha - 1 at both ends.
    """
    idx = np.arange(n)
    centred = idx - (n - 1) / 2.0
    w = alpha + (1.0 - alpha) * np.cos(2.0 * np.pi * centred / max(n - 1, 1))
    return w * np.exp(-2j * np.pi * idx * Q / n) / n


def cqt(clip: AudioClip, cfg: CQTConfig = CQTConfig()) -> Spectrogram:
    freqs = cfg.center_freqs()
    if freqs[-1] >= clip.sample_rate / 2:
        raise ConfigurationError(
            f"highest CQT bin {freqs[-1]:.1f} Hz reaches Nyquist {clip.sample_rate / 2} Hz"
        )
    if len(clip) < cfg.frame_length:
        raise InputError(f"clip of {len(clip)} samples is shorter than one frame ({cfg.frame_length})")
    n_frames = frame_count(len(clip), cfg.frame_length, cfg.hop)
    lengths = cfg.window_lengths(clip.sample_rate)
    pad = int(lengths.max())
    padded = np.pad(clip.samples, (pad, pad))
    centres = np.arange(n_frames) * cfg.hop + cfg.frame_length // 2 + pad
    out = np.empty((cfg.n_bins, n_frames))
    for k, n in enumerate(lengths):
        frames = sliding_window_view(padded, n)[centres - n // 2]
        out[k] = np.abs(frames @ cqt_kernel(n, cfg.Q, cfg.alpha))
    return Spectrogram(out, freqs, cfg.hop, "cqt")
