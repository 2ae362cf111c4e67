"""Losses and their gradients.

Scalar functions (``loss_*``) follow the textbook definitions on
probability vectors. The ``*_objective`` functions take pre-softmax logits
for a batch and return (mean loss, dLoss/dLogits); fusing softmax with the
divergence keeps the gradient at ``softmax - target`` and avoids the
saturation of differentiating through a floored log.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ShapeError
from ..nn.layers import softmax, softmax_backward

LOG_FLOOR = 1e-12


def l2_penalty(params, lam: float) -> float:
    """(lam / 2) * squared norm of all parameters; its gradient is lam * theta."""
    if lam == 0 or not params:
        return 0.0
    arrays = params.values() if isinstance(params, dict) else params
    total = 0.0
    for p in arrays:
        data = getattr(p, "data", p)
        total += float(np.sum(np.square(data, dtype=np.float64)))
    return 0.5 * lam * total


def add_l2_grad(params: dict, lam: float):
    if lam == 0:
        return
    for p in params.values():
        p.grad = p.grad + lam * p.data


def _rows(p, y):
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {y.shape}")
    return p, y


def loss_ce_l2(y_hat, y, params=None, lam: float = 0.0) -> float:
    """Cross-entropy -sum y log y_hat (natural log, floored), averaged over rows, plus L2."""
    p, y = _rows(y_hat, y)
    ce = -np.sum(y * np.log(np.maximum(p, LOG_FLOOR)), axis=1).mean()
    return float(ce) + l2_penalty(params, lam)


def loss_kl(y_hat, y, params=None, lam: float = 0.0) -> float:
    """KL(y || y_hat) with 0 log 0 = 0, averaged over rows, plus L2."""
    p, y = _rows(y_hat, y)
    safe_y = np.where(y > 0, y, 1.0)
    kl = np.sum(np.where(y > 0, y * (np.log(safe_y) - np.log(np.maximum(p, LOG_FLOOR))), 0.0), axis=1)
    return float(kl.mean()) + l2_penalty(params, lam)


def sq_dist(a, b) -> np.ndarray:
    return np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=-1)


def loss_triplet(a, p, n, margin: float = 0.3) -> float:
    """max(d(a, p) - d(a, n) + margin, 0) with squared Euclidean d."""
    return float(np.maximum(sq_dist(a, p) - sq_dist(a, n) + margin, 0.0))


def loss_joint(kl: float, triplet: float, gamma: float = 0.2) -> float:
    return gamma * kl + (1.0 - gamma) * triplet


def loss_encoder(l_lm, l_ga, l_cq, l_com, alpha: float = 1.0 / 3.0, beta: float = 1.0) -> float:
    return alpha * (l_lm + l_ga + l_cq) + beta * l_com


def loss_distill(ce: float, embed_dist: float, gamma: float = 0.5) -> float:
    return (1.0 - gamma) * ce + gamma * embed_dist


def ce_objective(logits, y):
    """Mean cross-entropy of softmax(logits) against (soft) targets ``y``."""
    p = softmax(logits)
    b = len(logits)
    loss = -np.sum(y * np.log(np.maximum(p, LOG_FLOOR))) / b
    grad = (p * y.sum(axis=1, keepdims=True) - y) / b
    return float(loss), grad.astype(logits.dtype, copy=False)


def kl_objective(logits, y):
    """Mean KL(y || softmax(logits)); same gradient as cross-entropy."""
    loss, grad = ce_objective(logits, y)
    safe = np.where(y > 0, y, 1.0)
    neg_entropy = np.sum(np.where(y > 0, y * np.log(safe), 0.0)) / len(logits)
    return loss + float(neg_entropy), grad


def batch_triplet(probs, y, margin: float = 0.3):
    """In-batch triplet loss on predictions with hardest-pair mining.

    Each anchor is a target vector y_i. The positive is the prediction of a
    same-class sample (the sample itself included) farthest from the
    anchor, the negative the prediction of a different-class sample
    closest to it. Anchors without a different-class sample in the batch
    are skipped. Returns (mean loss, dLoss/dProbs).
    """
    probs = np.asarray(probs)
    b = len(probs)
    cls = np.argmax(y, axis=1)
    d = sq_dist(y[:, None, :], probs[None, :, :])  # anchor i vs prediction j
    same = cls[:, None] == cls[None, :]
    grad = np.zeros_like(probs, dtype=np.float64)
    total, used = 0.0, 0
    for i in range(b):
        if same[i].all():
            continue
        used += 1
        pos = int(np.argmax(np.where(same[i], d[i], -np.inf)))
        neg = int(np.argmin(np.where(same[i], np.inf, d[i])))
        val = d[i, pos] - d[i, neg] + margin
        if val > 0:
            total += val
            grad[pos] += 2.0 * (probs[pos] - y[i])
            grad[neg] -= 2.0 * (probs[neg] - y[i])
    if used == 0:
        return 0.0, grad
    return total / used, grad / used


def triplet_objective(logits, y, margin: float = 0.3):
    p = softmax(logits)
    loss, gp = batch_triplet(p, y, margin)
    return loss, softmax_backward(p, gp).astype(logits.dtype, copy=False)


def joint_objective(logits, y, gamma: float = 0.2, margin: float = 0.3):
    """gamma * KL + (1 - gamma) * triplet, both on softmax(logits)."""
    kl, gk = kl_objective(logits, y)
    tr, gt = triplet_objective(logits, y, margin)
    return loss_joint(kl, tr, gamma), gamma * gk + (1.0 - gamma) * gt


def embedding_distance(student, teacher):
    """Mean Euclidean distance between row embeddings and its gradient w.r.t. ``student``."""
    diff = np.asarray(student, dtype=np.float64) - teacher
    norm = np.sqrt(np.sum(diff * diff, axis=1, keepdims=True))
    grad = np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0) / len(diff)
    return float(norm.mean()), grad


OBJECTIVES = {"ce": ce_objective, "kl": kl_objective, "triplet": triplet_objective, "joint": joint_objective}
