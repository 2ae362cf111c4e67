"""Audio I/O, resampling, cycle extraction, manifests, splits and the synthetic corpus."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auris.dataset import (
    AudioClip,
    ManifestRecord,
    enforce_min_duration,
    extract_cycle,
    load_clip,
    make_splits,
    read_manifest,
    resample,
    save_clip,
    synth_corpus,
    write_manifest,
)
from auris.exceptions import ConfigurationError, IngestionError, InputError, RangeError


def test_silence_round_trip(tmp_path):
    path = save_clip(tmp_path / "z.wav", AudioClip(np.zeros(16000), 16000))
    clip = load_clip(path)
    assert clip.sample_rate == 16000
    assert len(clip) == 16000
    assert not clip.samples.any()


def test_reload_within_one_lsb(tmp_path):
    x = np.random.default_rng(0).uniform(-0.9, 0.9, 4000)
    clip = load_clip(save_clip(tmp_path / "r.wav", AudioClip(x, 8000)))
    assert np.max(np.abs(clip.samples - x)) <= 1.0 / 32768


def test_stereo_channel_selection_matches_deinterleave(tmp_path):
    rng = np.random.default_rng(1)
    frames = rng.uniform(-0.5, 0.5, (300, 2))
    path = save_clip(tmp_path / "s.wav", frames, 16000)
    raw = np.frombuffer(path.read_bytes()[44:], dtype="<i2")
    # scalar de-interleaving oracle
    first = np.array([raw[2 * i] for i in range(len(raw) // 2)]) / 32768.0
    second = np.array([raw[2 * i + 1] for i in range(len(raw) // 2)]) / 32768.0
    assert np.array_equal(load_clip(path, "ch1").samples, first)
    assert np.array_equal(load_clip(path, "ch2").samples, second)
    assert np.allclose(load_clip(path, "average").samples, (first + second) / 2)
    assert np.allclose(load_clip(path, "side").samples, (first - second) / 2)


def test_unreadable_file_names_the_path(tmp_path):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not a wave file")
    with pytest.raises(IngestionError, match="bad.wav"):
        load_clip(bad)


def test_clip_rejects_empty_and_non_finite():
    with pytest.raises(InputError):
        AudioClip(np.zeros(0), 16000)
    with pytest.raises(InputError):
        AudioClip(np.array([0.0, np.nan]), 16000)


def test_resample_identity_is_exact():
    clip = AudioClip(np.random.default_rng(2).standard_normal(1000), 16000)
    assert np.array_equal(resample(clip, 16000).samples, clip.samples)


def test_resample_keeps_dc_level():
    out = resample(AudioClip(np.full(4800, 0.5), 48000), 16000)
    assert len(out) == 1600
    assert np.allclose(out.samples, 0.5, atol=1e-6)


def test_resample_sine_peak_stays_at_440_hz():
    n = 48000
    x = np.sin(2 * np.pi * 440 * np.arange(n) / 48000)
    out = resample(AudioClip(x, 48000), 16000)
    spectrum = np.abs(np.fft.rfft(out.samples))
    bin_hz = 16000 / len(out)
    assert abs(np.argmax(spectrum) * bin_hz - 440) <= bin_hz


@given(st.integers(100, 3000), st.sampled_from([8000, 11025, 22050, 44100]))
@settings(max_examples=20, deadline=None)
def test_resample_length_rule(n, target):
    out = resample(AudioClip(np.zeros(n), 16000), target)
    assert len(out) == round(n * target / 16000)


def test_extract_cycle_bounds():
    clip = AudioClip(np.arange(48000, dtype=float), 16000)
    assert np.array_equal(extract_cycle(clip, 0, clip.duration).samples, clip.samples)
    assert len(extract_cycle(clip, 1.0, 2.0)) == 16000
    with pytest.raises(RangeError):
        extract_cycle(clip, 2.0, 1.0)
    with pytest.raises(RangeError):
        extract_cycle(clip, 0.0, 3.5)


def test_adjacent_cycles_concatenate_to_source_span():
    clip = AudioClip(np.random.default_rng(3).standard_normal(32000), 16000)
    cuts = [0.0, 0.37, 0.81, 1.25, 2.0]
    parts = [extract_cycle(clip, a, b).samples for a, b in zip(cuts, cuts[1:])]
    assert np.array_equal(np.concatenate(parts), clip.samples)


@pytest.mark.parametrize("seconds, expected", [(6.0, 6.0), (2.0, 6.0), (5.0, 5.0)])
def test_enforce_min_duration_examples(seconds, expected):
    clip = AudioClip(np.ones(int(seconds * 1000)), 1000)
    assert enforce_min_duration(clip, 5.0).duration == expected


@given(st.integers(1, 400), st.floats(0.01, 1.0))
@settings(max_examples=50, deadline=None)
def test_min_duration_is_smallest_whole_multiple(n, min_s):
    clip = AudioClip(np.arange(1, n + 1, dtype=float), 1000)
    out = enforce_min_duration(clip, min_s)
    reps = max(1, math.ceil(min_s * 1000 / n - 1e-9))
    assert len(out) == reps * n
    assert np.array_equal(out.samples[:n], clip.samples)


def test_manifest_round_trip(tmp_path):
    recs = [ManifestRecord("a.wav", "x", {"device": "a"}, [(0.0, 1.5, "crackle"), (1.5, 2.0, "normal")]),
            ManifestRecord("b.wav", "y")]
    path = write_manifest(tmp_path / "m.csv", recs)
    assert path.read_text().splitlines()[0] == "path,label,meta,annotations"
    back = read_manifest(path)
    assert [r.class_label for r in back] == ["x", "y"]
    assert back[0].group_labels == {"device": "a"}
    assert back[0].annotations == [(0.0, 1.5, "crackle"), (1.5, 2.0, "normal")]
    assert back[0].clip_path == str(tmp_path / "a.wav")


def test_annotation_offset_must_follow_onset():
    with pytest.raises(InputError):
        ManifestRecord("a.wav", "x", annotations=[(1.0, 1.0, "n")])


def _records(n, groups=None):
    return [ManifestRecord(f"{i}.wav", f"c{i % 3}", {"patient": str(groups[i])} if groups else {})
            for i in range(n)]


def test_ten_records_five_folds():
    spec = make_splits(_records(10), "kfold", k=5, seed=0)
    folds = [spec.fold_indices(k) for k in range(5)]
    assert all(len(f) == 2 for f in folds)
    assert sorted(i for f in folds for i in f) == list(range(10))


def test_k_larger_than_population_is_rejected():
    with pytest.raises(ConfigurationError):
        make_splits(_records(3), "kfold", k=5)


@given(st.integers(4, 40), st.integers(2, 4), st.integers(0, 1000), st.booleans())
@settings(max_examples=40, deadline=None)
def test_kfold_partition_and_balance(n, k, seed, stratify):
    spec = make_splits(_records(n), "kfold", k=k, seed=seed, stratify=stratify)
    sizes = [len(spec.fold_indices(f)) for f in range(k)]
    assert sum(sizes) == n
    assert max(sizes) - min(sizes) <= 1
    for train, test in spec.folds():
        assert not set(train) & set(test)
        assert sorted(train + test) == list(range(n))


@given(st.lists(st.integers(0, 7), min_size=6, max_size=40), st.integers(0, 100))
@settings(max_examples=40, deadline=None)
def test_group_disjoint_fraction_split(groups, seed):
    if len(set(groups)) < 2:
        return
    recs = _records(len(groups), groups)
    train, test = make_splits(recs, "fraction", train_fraction=0.6, group_key="patient", seed=seed).train_test(1)
    assert not {groups[i] for i in train} & {groups[i] for i in test}
    assert sorted(train + test) == list(range(len(groups)))


def test_split_is_deterministic_per_seed():
    recs = _records(30)
    a = make_splits(recs, "kfold", k=3, seed=5).assignments
    assert a == make_splits(recs, "kfold", k=3, seed=5).assignments


def test_predefined_split_reads_subset_metadata():
    recs = [ManifestRecord("a.wav", "x", {"subset": "train"}), ManifestRecord("b.wav", "x", {"subset": "test"})]
    assert make_splits(recs, "predefined").train_test(1) == ([0], [1])


def test_synth_corpus_counts_and_determinism(tmp_path, corpus):
    records, manifest = corpus
    assert len(records) == 60
    labels = [r.class_label for r in records]
    assert {lab: labels.count(lab) for lab in set(labels)} == {"class0": 20, "class1": 20, "class2": 20}
    assert len(read_manifest(manifest)) == 60
    again, _ = synth_corpus(tmp_path, 3, 2, 3.0, 16000, seed=7)
    for a, b in zip(again, records[:2]):
        assert open(a.clip_path, "rb").read() == open(b.clip_path, "rb").read()


def test_synth_corpus_rejects_zero_classes(tmp_path):
    with pytest.raises(InputError):
        synth_corpus(tmp_path, 0, 20)


def test_synth_corpus_is_separable_by_nearest_centroid(desk):
    feats = np.array([s.mean(axis=1) for s in desk.specs["log-mel"]])
    y = desk.labels
    centroids = np.array([feats[desk.train][y[desk.train] == c].mean(axis=0) for c in range(3)])
    d = ((feats[desk.test][:, None, :] - centroids[None]) ** 2).sum(axis=2)
    assert np.mean(np.argmin(d, axis=1) == y[desk.test]) > 0.8
