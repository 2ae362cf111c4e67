from .cache import read_feature, write_feature
from .cqt import CQTConfig, cqt
from .extractor import FEATURE_KINDS, SpectrogramExtractor
from .filterbank import (
    FilterBank,
    GammatoneConfig,
    erb,
    gammatone_bank,
    hz_to_mel,
    mel_filterbank,
    mel_to_hz,
)
from .patches import PatchSet, patchify, split_patches
from .spectral import Spectrogram, gamma_spec, log_mel, mfcc, stft

__all__ = [
    "CQTConfig", "FEATURE_KINDS", "FilterBank", "GammatoneConfig", "PatchSet",
    "Spectrogram", "SpectrogramExtractor", "cqt", "erb", "gamma_spec", "gammatone_bank",
    "hz_to_mel", "log_mel", "mel_filterbank", "mel_to_hz", "mfcc", "patchify",
    "read_feature", "split_patches", "stft", "write_feature",
]
