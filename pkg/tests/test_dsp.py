"""Spectrogram transforms against independent oracles, patching and the feature cache."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from auris.dataset import AudioClip
from auris.dsp import (
    CQTConfig,
    FilterBank,
    GammatoneConfig,
    Spectrogram,
    SpectrogramExtractor,
    cqt,
    erb,
    gamma_spec,
    gammatone_bank,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mfcc,
    read_feature,
    split_patches,
    stft,
    write_feature,
)
from auris.dsp.cache import is_valid_cache
from auris.dsp.spectral import LOG_FLOOR, inverse_mfcc
from auris.exceptions import ConfigurationError, IngestionError, InputError, ShapeError
from auris.nn.gradcheck import rel_error


def naive_stft(x, window_len, hop, n_fft):
    """Direct O(N^2) DFT of each periodic-Hamming-windowed frame."""
    n = np.arange(window_len)
    w = 0.54 - 0.46 * np.cos(2 * np.pi * n / window_len)
    k = np.arange(n_fft // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, n) / n_fft)
    frames = [x[s:s + window_len] * w for s in range(0, len(x) - window_len + 1, hop)]
    return np.abs(np.stack([basis @ f for f in frames], axis=1))


def dct_quadruple_loop(f):
    """Orthonormal 2-D DCT-II evaluated term by term."""
    m, n = f.shape
    lam = lambda i, size: np.sqrt((1.0 if i == 0 else 2.0) / size)
    out = np.zeros((m, n))
    for u in range(m):
        for v in range(n):
            acc = 0.0
            for x in range(m):
                for y in range(n):
                    acc += (f[x, y] * np.cos(np.pi * (2 * x + 1) * u / (2 * m))
                            * np.cos(np.pi * (2 * y + 1) * v / (2 * n)))
            out[u, v] = lam(u, m) * lam(v, n) * acc
    return out


def _stft_spec(values):
    values = np.asarray(values, dtype=np.float64)
    return Spectrogram(values, np.arange(values.shape[0], dtype=float), 1, "stft")


# ---------------------------------------------------------------- STFT

def test_stft_matches_brute_force_dft():
    x = np.random.default_rng(0).standard_normal(4096)
    spec = stft(AudioClip(x, 16000), window_len=256, hop=128, n_fft=512)
    ref = naive_stft(x, 256, 128, 512)
    assert spec.values.shape == ref.shape == (257, (4096 - 256) // 128 + 1)
    assert rel_error(spec.values, ref) < 1e-6


@given(st.integers(300, 8192), st.sampled_from([(64, 32, 64), (128, 50, 256), (200, 100, 256)]))
@settings(max_examples=10, deadline=None)
def test_stft_matches_dft_for_any_length(n, geometry):
    window_len, hop, n_fft = geometry
    x = np.random.default_rng(n).standard_normal(n)
    ref = naive_stft(x, window_len, hop, n_fft)
    assert rel_error(stft(AudioClip(x, 16000), window_len, hop, n_fft).values, ref) < 1e-6


def test_stft_of_silence_is_zero():
    assert not stft(AudioClip(np.zeros(4096), 16000)).values.any()


def test_bin_centred_sine_dominates_by_20_db():
    # with window_len == n_fft a periodic Hamming window leaks only into bins k - 1 and k + 1
    n_fft, k = 1024, 100
    t = np.arange(16000)
    spec = stft(AudioClip(np.sin(2 * np.pi * k * t / n_fft), 16000), n_fft, 256, n_fft).values
    power_db = 20 * np.log10(spec.mean(axis=1) + 1e-20)
    others = np.delete(power_db, [k - 1, k, k + 1])
    assert np.argmax(power_db) == k
    assert power_db[k] - others.max() >= 20


def test_stft_rejects_short_clip_and_bad_window():
    with pytest.raises(InputError):
        stft(AudioClip(np.zeros(100), 16000), window_len=256)
    with pytest.raises(ConfigurationError):
        stft(AudioClip(np.zeros(4096), 16000), window_len=1024, n_fft=512)


# ---------------------------------------------------------------- mel and log-mel

def test_mel_warp_scalars():
    assert hz_to_mel(0.0) == 0.0
    assert abs(hz_to_mel(700.0) - 781.17) < 0.01
    assert abs(hz_to_mel(700.0) - 2595 * np.log10(2)) < 1e-9


def test_mel_centres_equally_spaced():
    fb = mel_filterbank(40, 50, 8000, 2048, 16000)
    steps = np.diff(hz_to_mel(fb.center_freqs))
    assert np.max(np.abs(steps - steps[0])) < 1e-9
    assert np.all(fb.weights.max(axis=1) > 0)
    assert np.all(fb.weights >= 0)


def test_mel_rejects_invalid_edges():
    with pytest.raises(ConfigurationError):
        mel_filterbank(40, 9000, 8000, 2048, 16000)
    with pytest.raises(ConfigurationError):
        mel_filterbank(40, 0, 9000, 2048, 16000)


def test_log_mel_identity_bank_and_log_law():
    fb = FilterBank(np.eye(5), "mel", np.arange(5.0))
    ones = _stft_spec(np.ones((5, 3)))
    assert np.array_equal(log_mel(ones, fb).values, np.zeros((5, 3)))
    x = np.random.default_rng(1).uniform(0.1, 2.0, (5, 3))
    diff = log_mel(_stft_spec(10 * x), fb).values - log_mel(_stft_spec(x), fb).values
    assert np.allclose(diff, 1.0, atol=1e-12)


def test_log_mel_matches_nested_loop_product():
    rng = np.random.default_rng(2)
    s, w = rng.uniform(0.1, 1, (8, 4)), rng.uniform(0, 1, (3, 8))
    ref = np.zeros((3, 4))
    for i in range(3):
        for t in range(4):
            ref[i, t] = np.log10(sum(w[i, f] * s[f, t] for f in range(8)))
    out = log_mel(_stft_spec(s), FilterBank(w, "mel", np.arange(3.0))).values
    assert rel_error(out, ref) < 1e-7


def test_log_mel_dimension_mismatch():
    with pytest.raises(ShapeError):
        log_mel(_stft_spec(np.ones((4, 2))), FilterBank(np.ones((2, 5)), "mel", np.arange(2.0)))


@given(arrays(np.float64, (6, 3), elements=st.floats(0, 10)), arrays(np.float64, (6, 3), elements=st.floats(0, 5)))
@settings(max_examples=40, deadline=None)
def test_log_mel_and_gamma_are_monotone(x, extra):
    fb = FilterBank(np.random.default_rng(3).uniform(0, 1, (4, 6)), "mel", np.arange(4.0))
    lo, hi = _stft_spec(x), _stft_spec(x + extra)
    assert np.all(log_mel(hi, fb).values >= log_mel(lo, fb).values)
    gb = FilterBank(fb.weights, "gammatone", fb.center_freqs)
    assert np.all(gamma_spec(hi, gb).values >= gamma_spec(lo, gb).values)


# ---------------------------------------------------------------- MFCC / DCT

def _logmel(values):
    return Spectrogram(np.asarray(values, dtype=float), np.arange(len(values), dtype=float), 1, "log-mel")


def test_dct_matches_quadruple_loop():
    f = np.random.default_rng(4).standard_normal((8, 8))
    assert rel_error(mfcc(_logmel(f), 8).values, dct_quadruple_loop(f)) < 1e-7


def test_dct_basis_gram_is_identity():
    # basis image (u, v) is the transform row for coefficient (u, v)
    size = 4
    rows = []
    for x in range(size):
        for y in range(size):
            impulse = np.zeros((size, size))
            impulse[x, y] = 1.0
            rows.append(mfcc(_logmel(impulse), size).values.ravel())
    basis = np.array(rows).T  # (coefficient, pixel)
    gram = np.array([[np.dot(a, b) for b in basis] for a in basis])
    assert np.max(np.abs(gram - np.eye(size * size))) < 1e-6


def test_dct_of_constant_has_only_dc():
    c = mfcc(_logmel(np.full((6, 5), 3.0)), 6).values
    assert abs(c[0, 0]) > 0
    c[0, 0] = 0
    assert np.max(np.abs(c)) < 1e-12


def test_inverse_dct_reconstructs():
    f = np.random.default_rng(5).standard_normal((12, 20))
    assert np.max(np.abs(inverse_mfcc(mfcc(_logmel(f), 12)) - f)) < 1e-5


def test_mfcc_keep_bounds():
    with pytest.raises(ConfigurationError):
        mfcc(_logmel(np.ones((4, 4))), 5)


# ---------------------------------------------------------------- gammatone

def test_erb_scalars():
    assert erb(0.0) == pytest.approx(24.7)
    assert abs(erb(1000.0) - 132.64) < 0.01


def test_gammatone_rows_peak_at_centre_bin():
    fb = gammatone_bank(GammatoneConfig(32, 50, 7000), 2048, 16000)
    freqs = np.arange(1025) * 16000 / 2048
    nearest = np.argmin(np.abs(freqs[None, :] - fb.center_freqs[:, None]), axis=1)
    assert np.array_equal(np.argmax(fb.weights, axis=1), nearest)
    assert np.allclose(fb.weights.max(axis=1), 1.0)


def test_gammatone_centre_at_nyquist_rejected():
    with pytest.raises(ConfigurationError):
        gammatone_bank(GammatoneConfig(8, 50, 8000), 2048, 16000)


def test_gamma_spec_identity_zero_and_product():
    x = np.random.default_rng(6).uniform(0, 1, (5, 4))
    eye = FilterBank(np.eye(5), "gammatone", np.arange(5.0))
    assert np.array_equal(gamma_spec(_stft_spec(x), eye, log=False).values, x)
    assert np.all(gamma_spec(_stft_spec(np.zeros((5, 4))), eye).values == np.log10(LOG_FLOOR))
    w = np.random.default_rng(7).uniform(0, 1, (3, 5))
    ref = np.log10(np.array([[sum(w[i, f] * x[f, t] for f in range(5)) for t in range(4)] for i in range(3)]))
    assert rel_error(gamma_spec(_stft_spec(x), FilterBank(w, "gammatone", np.arange(3.0))).values, ref) < 1e-7


# ---------------------------------------------------------------- CQT

@pytest.mark.parametrize("b", [12, 24, 48])
def test_cqt_q_constancy(b):
    cfg = CQTConfig(bins_per_octave=b, f_min=32.7, n_bins=64)
    f = cfg.center_freqs()
    ratio = f[:-1] / (f[1:] - f[:-1])
    assert np.max(np.abs(ratio - 1.0 / (2 ** (1.0 / b) - 1))) < 1e-9


def test_cqt_q_for_twelve_bins():
    assert abs(CQTConfig(12).Q - 1.0 / (2.0 ** (1.0 / 12.0) - 1.0)) < 1e-12
    # the quoted 16.8170 is the exact 16.81715 truncated, so it only holds to 5e-4
    assert abs(CQTConfig(12).Q - 16.8170) < 5e-4


def test_cqt_sine_at_bin_frequency_dominates():
    cfg = CQTConfig(12, 100.0, 36, hop=256, frame_length=1024)
    k = 20
    t = np.arange(16000) / 16000
    out = cqt(AudioClip(np.sin(2 * np.pi * cfg.center_freqs()[k] * t), 16000), cfg).values
    assert np.all(np.argmax(out, axis=0) == k)


def test_cqt_bin_at_nyquist_rejected():
    with pytest.raises(ConfigurationError):
        cqt(AudioClip(np.zeros(16000), 16000), CQTConfig(12, 1000.0, 64))


# ---------------------------------------------------------------- patches

def test_patch_counts():
    assert len(split_patches(np.zeros((128, 1728)), 128)) == 13
    single = np.random.default_rng(8).standard_normal((4, 64))
    ps = split_patches(single, 64)
    assert len(ps) == 1 and np.array_equal(ps.patches[0], single)
    ps = split_patches(np.zeros((4, 192)), 64, 0.5)
    assert list(ps.offsets) == [0, 32, 64, 96, 128]


def test_patches_reconstruct_leading_frames():
    spec = np.random.default_rng(9).standard_normal((8, 1728))
    ps = split_patches(spec, 128)
    assert np.array_equal(np.concatenate(list(ps.patches), axis=1), spec[:, :13 * 128])


def test_short_spectrogram_is_tiled():
    spec = np.arange(12.0).reshape(2, 6)
    ps = split_patches(spec, 16)
    assert ps.patches.shape == (1, 2, 16)
    assert np.array_equal(ps.patches[0][:, :6], spec)
    assert np.array_equal(ps.patches[0][:, 6:12], spec)


@given(st.integers(1, 300), st.sampled_from([4, 8, 16, 32]), st.sampled_from([0.0, 0.5]))
@settings(max_examples=60, deadline=None)
def test_patch_count_formula(t, width, overlap):
    ps = split_patches(np.zeros((3, t)), width, overlap)
    stride = int(width * (1 - overlap))
    assert len(ps) == (1 if t < width else (t - width) // stride + 1)
    assert ps.patches.shape[1:] == (3, width)


def test_overlap_outside_allowed_set():
    with pytest.raises(InputError):
        split_patches(np.zeros((3, 50)), 8, 0.25)


# ---------------------------------------------------------------- extractor and cache

def test_extractor_kinds_share_the_frame_grid():
    clip = AudioClip(np.random.default_rng(10).standard_normal(48000) * 0.1, 16000)
    shapes = {k: SpectrogramExtractor(k, n_bands=32).fit().extract(clip).shape
              for k in ("log-mel", "gamma", "cqt", "mfcc")}
    assert set(shapes.values()) == {(32, (48000 - 1024) // 256 + 1)}


def test_transforms_are_bit_deterministic():
    clip = AudioClip(np.random.default_rng(11).standard_normal(20000), 16000)
    for kind in ("log-mel", "gamma", "cqt"):
        ex = SpectrogramExtractor(kind, n_bands=16).fit()
        assert np.array_equal(ex.extract(clip), ex.extract(clip))


def test_config_hash_tracks_parameters():
    a = SpectrogramExtractor("log-mel", n_bands=32).config_hash()
    assert a == SpectrogramExtractor("log-mel", n_bands=32).config_hash()
    assert a != SpectrogramExtractor("log-mel", n_bands=64).config_hash()
    assert a != SpectrogramExtractor("gamma", n_bands=32).config_hash()


def test_cache_layout_and_round_trip(tmp_path):
    x = np.random.default_rng(12).standard_normal((3, 5)).astype(np.float32)
    path = write_feature(tmp_path / "sub" / "a.aurf", x)
    raw = path.read_bytes()
    assert raw[:4] == b"AURF"
    assert struct.unpack("<3I", raw[4:16]) == (2, 3, 5)
    assert np.array_equal(np.frombuffer(raw[16:], "<f4").reshape(3, 5), x)
    assert np.array_equal(read_feature(path), x)


def test_corrupt_cache_detected(tmp_path):
    path = write_feature(tmp_path / "a.aurf", np.ones((2, 2)))
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    assert not is_valid_cache(path)
    with pytest.raises(IngestionError, match="magic"):
        read_feature(path)
    path.write_bytes(b"AURF" + struct.pack("<3I", 2, 2, 2) + b"\0" * 4)
    assert not is_valid_cache(path)
