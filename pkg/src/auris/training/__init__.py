"""Losses, mixup and the training loops."""

from .losses import (
    OBJECTIVES,
    batch_triplet,
    ce_objective,
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
    triplet_objective,
)
from .loop import History, TrainConfig, embed, init_rng, one_hot, predict_proba, rng_streams, train
from .mixup import MixupPair, constrained_partners, draw_alphas, mixup, mixup_batch
from .pipelines import (
    DECODER_KINDS,
    DecoderSpec,
    HierarchyModels,
    distill,
    mean_embedding_distance,
    train_decoder,
    train_encoder_then_decoder,
    train_hierarchy,
)

__all__ = [
    "OBJECTIVES", "batch_triplet", "ce_objective", "embedding_distance", "joint_objective",
    "kl_objective", "l2_penalty", "loss_ce_l2", "loss_distill", "loss_encoder", "loss_joint", "loss_kl",
    "loss_triplet", "triplet_objective", "History", "TrainConfig", "embed", "init_rng", "one_hot",
    "predict_proba", "rng_streams", "train", "MixupPair", "constrained_partners", "draw_alphas", "mixup",
    "mixup_batch", "DECODER_KINDS", "DecoderSpec", "HierarchyModels", "distill",
    "mean_embedding_distance", "train_decoder", "train_encoder_then_decoder", "train_hierarchy",
]
