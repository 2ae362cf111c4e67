"""Estimator wrapper that turns clips into spectrogram matrices."""

from __future__ import annotations

import hashlib
import json

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..dataset import AudioClip
from ..exceptions import ConfigurationError
from .cqt import CQTConfig, cqt
from .filterbank import GammatoneConfig, gammatone_bank, mel_filterbank
from .spectral import LOG_FLOOR, gamma_spec, log_mel, mfcc, stft

FEATURE_KINDS = ("log-mel", "gamma", "cqt", "mfcc", "stft")


class SpectrogramExtractor(TransformerMixin, BaseEstimator):
    """Compute one kind of spectrogram for a list of clips.

    ``transform`` returns a list of float32 (n_bands, T) arrays; clips of
    equal length give equal T for every kind because the CQT frames share
    the STFT grid. CQT magnitudes are log10-compressed with the same floor
    as the other kinds. MFCC keeps ``n_bands`` coefficients computed from a
    log-mel with ``n_bands`` filters.
    """

    def __init__(self, kind="log-mel", sample_rate=16000, n_bands=64, window_len=1024,
                 hop=256, n_fft=2048, f_min=50.0, f_max=None, bins_per_octave=12):
        self.kind = kind
        self.sample_rate = sample_rate
        self.n_bands = n_bands
        self.window_len = window_len
        self.hop = hop
        self.n_fft = n_fft
        self.f_min = f_min
        self.f_max = f_max
        self.bins_per_octave = bins_per_octave

    def fit(self, X=None, y=None):
        if self.kind not in FEATURE_KINDS:
            raise ConfigurationError(f"unknown spectrogram kind {self.kind!r}")
        f_max = self.f_max if self.f_max is not None else self.sample_rate / 2
        self.bank_ = None
        if self.kind in ("log-mel", "mfcc"):
            self.bank_ = mel_filterbank(self.n_bands, self.f_min, f_max, self.n_fft, self.sample_rate)
        elif self.kind == "gamma":
            cfg = GammatoneConfig(self.n_bands, self.f_min, min(f_max, 0.45 * self.sample_rate))
            self.bank_ = gammatone_bank(cfg, self.n_fft, self.sample_rate)
        elif self.kind == "cqt":
            self.cqt_config_ = CQTConfig(self.bins_per_octave, self.f_min, self.n_bands,
                                         hop=self.hop, frame_length=self.window_len)
        return self

    def extract(self, clip: AudioClip) -> np.ndarray:
        if not hasattr(self, "bank_"):
            self.fit()
        if clip.sample_rate != self.sample_rate:
            raise ConfigurationError(
                f"clip rate {clip.sample_rate} differs from extractor rate {self.sample_rate}"
            )
        if self.kind == "cqt":
            values = np.log10(np.maximum(cqt(clip, self.cqt_config_).values, LOG_FLOOR))
        else:
            spec = stft(clip, self.window_len, self.hop, self.n_fft)
            if self.kind == "stft":
                values = spec.values
            elif self.kind == "gamma":
                values = gamma_spec(spec, self.bank_).values
            else:
                lm = log_mel(spec, self.bank_)
                values = lm.values if self.kind == "log-mel" else mfcc(lm, self.n_bands).values
        return values.astype(np.float32)

    def transform(self, X):
        clips = [x if isinstance(x, AudioClip) else AudioClip(x, self.sample_rate) for x in X]
        return [self.extract(c) for c in clips]

    def config_hash(self) -> str:
        blob = json.dumps(self.get_params(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
