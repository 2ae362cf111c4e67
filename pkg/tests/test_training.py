"""Losses, mixup, the training loop and the multi-stage pipelines."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auris.exceptions import ConfigurationError, InputError, ShapeError
from auris.models import HierarchySpec, build_encoder, build_student
from auris.nn import NetworkSpec, conv, fc, global_avg_pool, relu, softmax_layer
from auris.nn.gradcheck import numerical_grad, rel_error
from auris.training import (
    DecoderSpec,
    TrainConfig,
    batch_triplet,
    ce_objective,
    constrained_partners,
    distill,
    embedding_distance,
    joint_objective,
    kl_objective,
    l2_penalty,
    loss_ce_l2,
    loss_distill,
    loss_encoder,
    loss_joint,
    loss_kl,
    loss_triplet,
    mean_embedding_distance,
    mixup,
    mixup_batch,
    one_hot,
    train,
    train_decoder,
    train_encoder_then_decoder,
    train_hierarchy,
)
from auris.training.loop import embed, predict_proba


def test_cross_entropy_examples():
    assert loss_ce_l2([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert math.isclose(loss_ce_l2([0.5, 0.5], [1.0, 0.0]), math.log(2))
    assert math.isclose(l2_penalty([np.array([2.0])], 0.001), 0.002)


def test_kl_examples_and_entropy_identity():
    y = np.array([0.5, 0.5])
    assert loss_kl(y, y) == 0.0
    assert math.isclose(loss_kl([0.25, 0.75], y), 0.5 * math.log(2) + 0.5 * math.log(2 / 3), rel_tol=1e-12)
    assert abs(loss_kl([0.25, 0.75], y) - 0.1438) < 5e-5
    rng = np.random.default_rng(0)
    p, t = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    assert math.isclose(loss_kl(p, t) - loss_ce_l2(p, t), float(np.sum(t * np.log(t))), rel_tol=1e-9)


@given(st.integers(0, 10_000), st.floats(0, 0.1))
@settings(max_examples=40, deadline=None)
def test_loss_bounds_against_l2_term(seed, lam):
    rng = np.random.default_rng(seed)
    y = rng.dirichlet(np.ones(3))
    theta = {"w": rng.standard_normal(5)}
    l2 = l2_penalty(theta, lam)
    assert loss_kl(y, y, theta, lam) == l2
    assert loss_ce_l2(rng.dirichlet(np.ones(3)), y, theta, lam) >= l2


def test_triplet_examples():
    a = np.zeros(2)
    assert math.isclose(loss_triplet(a, np.array([1.0, 0.0]), np.array([0.0, 1.0])), 0.3)
    assert loss_triplet(a, np.array([math.sqrt(0.1), 0.0]), np.array([math.sqrt(0.5), 0.0])) == 0.0


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
@settings(max_examples=40, deadline=None)
def test_triplet_is_margin_when_positive_equals_negative(a, p):
    a, p = np.array(a), np.array(p)
    assert math.isclose(loss_triplet(a, p, p), 0.3)
    assert loss_triplet(a, p, -p) >= 0


def test_composite_loss_examples():
    assert loss_joint(1.0, 2.0, 1.0) == 1.0
    assert loss_joint(1.0, 2.0, 0.0) == 2.0
    assert math.isclose(loss_joint(1.0, 2.0, 0.2), 1.8)
    assert math.isclose(loss_encoder(0.7, 0.7, 0.7, 0.7), 1.4)
    assert loss_encoder(0.3, 0.6, 0.9, 0.5, alpha=0.0) == 0.5
    assert math.isclose(loss_encoder(0.3, 0.6, 0.9, 0.5), 1.1)
    assert math.isclose(loss_distill(0.4, 0.0), 0.2)
    assert loss_distill(0.4, 0.2, 0.0) == 0.4
    assert math.isclose(loss_distill(0.4, 0.2, 0.5), 0.3)


def test_composites_are_linear_in_their_parts():
    assert loss_joint(1.0, 0.0, 0.2) == 0.2 and loss_joint(0.0, 1.0, 0.2) == 0.8
    assert loss_encoder(1, 0, 0, 0) == 1 / 3 and loss_encoder(0, 0, 0, 1) == 1.0
    assert loss_distill(1.0, 0.0) == 0.5 and loss_distill(0.0, 1.0) == 0.5


def _soft(rng, n, c):
    return rng.dirichlet(np.ones(c), n)


@pytest.mark.parametrize("objective", [ce_objective, kl_objective, joint_objective])
def test_objective_gradients_match_finite_differences(objective):
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((6, 4))
    y = one_hot([0, 1, 2, 3, 0, 1], 4) if objective is joint_objective else _soft(rng, 6, 4)
    _, grad = objective(logits, y)
    num = numerical_grad(lambda: objective(logits, y)[0], logits, 1e-6)
    assert rel_error(grad, num) < 1e-5


def test_embedding_distance_gradient():
    rng = np.random.default_rng(2)
    s, t = rng.standard_normal((5, 7)), rng.standard_normal((5, 7))
    _, grad = embedding_distance(s, t)
    assert rel_error(grad, numerical_grad(lambda: embedding_distance(s, t)[0], s)) < 1e-5
    assert embedding_distance(t, t)[0] == 0.0


def test_triplet_mining_picks_hardest_pairs():
    y = one_hot([0, 0, 1], 2)
    probs = np.array([[0.9, 0.1], [0.6, 0.4], [0.7, 0.3]])
    loss, _ = batch_triplet(probs, y)
    d = lambda a, b: float(np.sum((a - b) ** 2))
    want = []
    for i in range(3):
        same = [j for j in range(3) if y[j].argmax() == y[i].argmax()]
        other = [j for j in range(3) if j not in same]
        pos = max(d(y[i], probs[j]) for j in same)
        neg = min(d(y[i], probs[j]) for j in other)
        want.append(max(pos - neg + 0.3, 0))
    assert math.isclose(loss, np.mean(want))
    assert math.isclose(loss, 0.48)


def test_mixup_examples():
    x1, x2 = np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0, 6.0], [7.0, 8.0]])
    y1, y2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    pair = mixup(x1, x2, y1, y2, 1.0)
    assert np.array_equal(pair.x_mp1, x1) and np.array_equal(pair.y_mp2, y2)
    half = mixup(x1, x2, y1, y2, 0.5)
    assert np.array_equal(half.y_mp1, [0.5, 0.5]) and np.array_equal(half.y_mp2, [0.5, 0.5])
    q = mixup(x1, x2, y1, y2, 0.25)
    want = [[0.25 * x1[i, j] + 0.75 * x2[i, j] for j in range(2)] for i in range(2)]
    assert np.allclose(q.x_mp1, want)
    with pytest.raises(ShapeError):
        mixup(x1, x2[:1], y1, y2, 0.5)
    with pytest.raises(InputError):
        mixup(x1, x2, y1, y2, 1.5)


@given(st.floats(0, 1), st.integers(0, 1), st.integers(0, 1))
@settings(max_examples=60, deadline=None)
def test_mixup_conserves_one_hot_label_mass(alpha, i, j):
    y1, y2 = np.eye(2)[i], np.eye(2)[j]
    pair = mixup(np.zeros(3), np.ones(3), y1, y2, alpha)
    assert np.array_equal(pair.y_mp1 + pair.y_mp2, y1 + y2)
    assert math.isclose(pair.y_mp1.sum(), 1.0) and math.isclose(pair.y_mp2.sum(), 1.0)


@given(st.floats(0, 1), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_mixup_conserves_soft_label_mass_to_rounding(alpha, seed):
    rng = np.random.default_rng(seed)
    y1, y2 = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    pair = mixup(y1, y2, y1, y2, alpha)
    assert np.allclose(pair.y_mp1 + pair.y_mp2, y1 + y2, rtol=0, atol=4e-16)


def test_mixup_batch_doubles_and_alternates():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((10, 2, 2, 1)).astype(np.float32)
    y = one_hot(np.arange(10) % 2, 2)
    mx, my = mixup_batch(x, y, np.random.default_rng(0))
    assert mx.shape == (20, 2, 2, 1) and my.shape == (20, 2)
    assert np.allclose(my.sum(axis=1), 1)
    streams, _ = mixup_batch((x, x * 2), y, np.random.default_rng(0))
    assert np.allclose(streams[1], 2 * streams[0], atol=1e-5)


def test_constrained_partners_pair_anchor_with_other_classes():
    labels = np.array([0, 1, 2, 0, 1, 2, 0])
    partners = constrained_partners(labels, 0, np.random.default_rng(0))
    assert np.all((labels == 0) != (labels[partners] == 0))


def _toy_net(seed=0):
    spec = NetworkSpec((4, 4, 1), (conv(4), relu(), global_avg_pool(), fc(2), softmax_layer()), embedding_index=2)
    return spec.build(seed)


def _toy_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = rng.standard_normal((n, 4, 4, 1)).astype(np.float32) * 0.3
    x[labels == 1] += 1.0
    return x, labels


def test_zero_learning_rate_leaves_parameters():
    net = _toy_net()
    before = {k: v.copy() for k, v in net.state().items()}
    x, labels = _toy_data()
    train(net, x, one_hot(labels, 2), TrainConfig(epochs=1, batch_size=8, lr=0.0, l2=0.0))
    assert all(np.array_equal(before[k], v) for k, v in net.state().items())


def test_mlp_decoder_loss_decreases_on_separable_embeddings():
    rng = np.random.default_rng(4)
    labels = np.arange(60) % 2
    H = rng.standard_normal((60, 16)).astype(np.float32) * 0.5
    H[:, 0] += np.where(labels == 1, 2.0, -2.0)
    config = TrainConfig(epochs=5, batch_size=20, lr=1e-3, mixup=False)
    _, history = train_decoder(DecoderSpec("mlp", 2, width=16), H, one_hot(labels, 2), config)
    assert all(b < a for a, b in zip(history.losses, history.losses[1:]))


def _blob_embeddings(n=150, width=256, classes=3, seed=6):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    H = np.abs(rng.standard_normal((n, width))).astype(np.float32)
    for k in range(classes):
        H[labels == k, 10 * k:10 * k + 10] += 3.0
    return H, labels


def test_decoder_trunk_keeps_activations_bounded():
    H, _ = _blob_embeddings()
    net = DecoderSpec("moe", 3).network().build(0, init_std=None)
    x = H
    for layer in net.layers[:-2]:
        x = layer.forward(x)
    assert 0.1 < np.abs(x).mean() < 10


def test_moe_decoder_learns_separable_embeddings():
    H, labels = _blob_embeddings()
    config = TrainConfig(epochs=10, batch_size=50, lr=1e-3, seed=1)
    net, _ = train_decoder(DecoderSpec("moe", 3, experts=10), H, one_hot(labels, 3), config)
    proba = predict_proba(net, H)
    assert np.mean(np.argmax(proba, axis=1) == labels) > 0.9
    assert np.ptp(proba, axis=1).max() > 0.5  # not collapsed onto a dead expert


def test_training_is_deterministic_per_seed():
    x, labels = _toy_data()
    states = []
    for _ in range(2):
        net = _toy_net(1)
        train(net, x, one_hot(labels, 2), TrainConfig(epochs=2, batch_size=8, lr=1e-2, seed=5))
        states.append(net.state())
    assert all(np.array_equal(states[0][k], states[1][k]) for k in states[0])


def test_unknown_objective_and_bad_config():
    with pytest.raises(ConfigurationError):
        train(_toy_net(), *_toy_data()[:1], one_hot(_toy_data()[1], 2), TrainConfig(epochs=1), objective="hinge")
    with pytest.raises(ConfigurationError):
        TrainConfig(gamma_joint=1.5)


def test_encoder_then_rfc_decoder_beats_twice_chance():
    rng = np.random.default_rng(5)
    labels = np.arange(60) % 3
    streams = []
    for k in range(3):
        x = rng.standard_normal((60, 8, 8, 1)).astype(np.float32)
        x[:, labels * 2 + k % 2] += 2.0
        streams.append(x)
    spec = build_encoder(3, "lin", (8, 8, 1))
    enc_cfg = TrainConfig(epochs=2, batch_size=20, lr=1e-3, mixup=False)
    encoder, forest, H, _ = train_encoder_then_decoder(streams, labels, 3, spec, DecoderSpec("rfc", 3, n_trees=10),
                                                       enc_cfg, TrainConfig(epochs=0, mixup=True))
    assert H.shape == (60, 256)
    from auris.models import rfc_predict
    acc = np.mean(np.argmax(rfc_predict(forest, H), axis=1) == labels)
    assert acc >= 2 / 3
    with pytest.raises(ConfigurationError):
        train_encoder_then_decoder(streams[:2], labels, 3, spec, DecoderSpec("rfc", 3), enc_cfg, enc_cfg)


def test_hierarchy_fine_classifiers_see_only_their_group():
    spec = HierarchySpec({"A": (0, 1), "B": (2,), "C": (3, 4)})
    rng = np.random.default_rng(6)
    labels = np.arange(50) % 5
    H = rng.standard_normal((50, 8)).astype(np.float32)
    H[np.arange(50), labels] += 3.0
    models = train_hierarchy(H, labels, spec, TrainConfig(epochs=3, batch_size=10, lr=1e-3, mixup=False), width=8)
    assert models.fine[1] is None
    assert models.fine[0].layers[-2].W.shape[0] == 2
    pred = models.predict(H)
    assert np.array_equal(spec.meta_index()[pred], np.argmax(models.predict_levels(H)[0], axis=1))
    with pytest.raises(ConfigurationError):
        train_hierarchy(H[labels < 2], labels[labels < 2], spec, TrainConfig(epochs=1))


def _tiny_student():
    return NetworkSpec((4, 4, 1), (conv(8), relu(), global_avg_pool(), fc(2), softmax_layer()), embedding_index=2)


def test_distill_with_zero_gamma_is_plain_training():
    x, labels = _toy_data()
    teacher = _toy_net(3)
    teacher_spec = NetworkSpec((4, 4, 1), (conv(8), relu(), global_avg_pool(), fc(2), softmax_layer()),
                               embedding_index=2)
    teacher = teacher_spec.build(9)
    config = TrainConfig(epochs=2, batch_size=8, lr=1e-2, gamma_distill=0.0, seed=2)
    student, _ = distill(teacher, _tiny_student(), x, labels, 2, config)
    from auris.training.loop import init_rng
    plain = _tiny_student().build(init_rng(2))
    train(plain, x, one_hot(labels, 2), config.replace(mixup=False), objective="ce")
    assert all(np.array_equal(plain.state()[k], v) for k, v in student.state().items())


def test_distill_keeps_teacher_frozen_and_pulls_embeddings_closer():
    x, labels = _toy_data(60)
    teacher = _tiny_student().build(11)
    train(teacher, x, one_hot(labels, 2), TrainConfig(epochs=3, batch_size=10, lr=1e-2))
    frozen = {k: v.copy() for k, v in teacher.state().items()}
    config = TrainConfig(epochs=0, seed=4)
    before_student, _ = distill(teacher, _tiny_student(), x, labels, 2, config)
    before = mean_embedding_distance(embed(before_student, x), embed(teacher, x))
    student, _ = distill(teacher, _tiny_student(), x, labels, 2, config.replace(epochs=10, lr=1e-2, batch_size=10))
    after = mean_embedding_distance(embed(student, x), embed(teacher, x))
    assert after < before
    assert all(np.array_equal(frozen[k], v) for k, v in teacher.state().items())
    wide = NetworkSpec((4, 4, 1), (conv(5), relu(), global_avg_pool(), fc(2), softmax_layer()), embedding_index=2)
    with pytest.raises(ConfigurationError):
        distill(teacher, wide, x, labels, 2, config)


def test_student_builds_at_patch_scale():
    net = build_student(3, (32, 32, 1)).build(0)
    assert predict_proba(net, np.zeros((2, 32, 32, 1), dtype=np.float32)).shape == (2, 3)
