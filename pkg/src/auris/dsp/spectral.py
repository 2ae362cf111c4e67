"""STFT, log-mel, gammatone and MFCC spectrograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy.signal import get_window

from ..dataset import AudioClip
from ..exceptions import ConfigurationError, InputError, ShapeError
from .filterbank import FilterBank, fft_frequencies

LOG_FLOOR = 1e-10
TRANSFORM_KINDS = ("stft", "log-mel", "mfcc", "gamma", "cqt")


@dataclass(frozen=True)
class Spectrogram:
    """F x T matrix with its row axis (Hz or coefficient index)."""

    values: np.ndarray
    freq_axis: np.ndarray
    frame_hop: int
    kind: str

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise InputError(f"unknown transform kind {self.kind!r}")
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ShapeError(f"spectrogram must be a non-empty F x T matrix, got {self.values.shape}")

    @property
    def shape(self):
        return self.values.shape


def frame_count(n_samples: int, window_len: int, hop: int) -> int:
    return (n_samples - window_len) // hop + 1


def stft(clip: AudioClip, window_len: int = 1024, hop: int = 256, n_fft: int = 2048,
         window: str = "hamming") -> Spectrogram:
    """Magnitude STFT: each frame of ``window_len`` samples is windowed and zero-padded to ``n_fft``."""
    if window_len > n_fft:
        raise ConfigurationError(f"window_len {window_len} exceeds n_fft {n_fft}")
    if hop < 1:
        raise ConfigurationError("hop must be >= 1")
    if len(clip) < window_len:
        raise InputError(f"clip of {len(clip)} samples is shorter than one window ({window_len})")
    w = get_window(window, window_len, fftbins=True)
    frames = sliding_window_view(clip.samples, window_len)[::hop]
    mag = np.abs(np.fft.rfft(frames * w, n=n_fft, axis=1)).T
    return Spectrogram(np.ascontiguousarray(mag), fft_frequencies(n_fft, clip.sample_rate), hop, "stft")


def _apply_bank(spec: Spectrogram, fb: FilterBank) -> np.ndarray:
    if spec.kind != "stft":
        raise InputError(f"filterbanks apply to STFT magnitudes, got {spec.kind}")
    if fb.weights.shape[1] != spec.values.shape[0]:
        raise ShapeError(
            f"filterbank expects {fb.weights.shape[1]} bins, spectrogram has {spec.values.shape[0]}"
        )
    return fb.weights @ spec.values


def log_mel(spec: Spectrogram, fb: FilterBank, floor: float = LOG_FLOOR) -> Spectrogram:
    """log10 of the mel-weighted STFT, floored at ``floor`` before the log."""
    mel = _apply_bank(spec, fb)
    return Spectrogram(np.log10(np.maximum(mel, floor)), fb.center_freqs, spec.frame_hop, "log-mel")


def gamma_spec(spec: Spectrogram, fb: FilterBank, log: bool = True, floor: float = LOG_FLOOR) -> Spectrogram:
    """Gammatone-weighted STFT; log10 with the same floor as log-mel unless ``log=False``."""
    g = _apply_bank(spec, fb)
    if log:
        g = np.log10(np.maximum(g, floor))
    return Spectrogram(g, fb.center_freqs, spec.frame_hop, "gamma")


def mfcc(logmel: Spectrogram, keep: int) -> Spectrogram:
    """2-D orthonormal DCT-II of a log-mel matrix, keeping the first ``keep`` rows."""
    n_mel = logmel.values.shape[0]
    if not 1 <= keep <= n_mel:
        raise ConfigurationError(f"keep must lie in [1, {n_mel}], got {keep}")
    coeffs = sp_fft.dctn(logmel.values, type=2, norm="ortho")[:keep]
    return Spectrogram(coeffs, np.arange(keep, dtype=np.float64), logmel.frame_hop, "mfcc")


def inverse_mfcc(coeffs: Spectrogram) -> np.ndarray:
    """Inverse 2-D DCT; exact only when no rows were dropped."""
    return sp_fft.idctn(coeffs.values, type=2, norm="ortho")
