"""Architecture builders, the encoder, decoders, forests and the scene hierarchy."""

from .architectures import (
    EMBEDDING_WIDTH,
    RESP_EMBEDDING_WIDTH,
    build_cdnn_baseline,
    build_dnn01,
    build_dnn02,
    build_encoder_branch,
    build_hierarchy_mlp,
    build_mlp_decoder,
    build_moe_decoder,
    build_resp_cnn_moe,
    build_student,
    count_spec_params,
)
from .encoder import BRANCH_KINDS, COMBINER_KINDS, Combiner, Encoder, EncoderSpec, build_encoder, combine
from .forest import ForestModel, Tree, best_split, rfc_predict, rfc_train
from .hierarchy import DCASE_GROUPS, HierarchySpec, hierarchical_predict
from .moe import gate_weights, moe_forward

__all__ = [
    "EMBEDDING_WIDTH", "RESP_EMBEDDING_WIDTH", "build_cdnn_baseline", "build_dnn01", "build_dnn02",
    "build_encoder_branch", "build_hierarchy_mlp", "build_mlp_decoder", "build_moe_decoder",
    "build_resp_cnn_moe", "build_student", "count_spec_params", "BRANCH_KINDS", "COMBINER_KINDS",
    "Combiner", "Encoder", "EncoderSpec", "build_encoder", "combine", "ForestModel", "Tree",
    "best_split", "rfc_predict", "rfc_train", "DCASE_GROUPS", "HierarchySpec",
    "hierarchical_predict", "gate_weights", "moe_forward",
]
