"""Builders for every network layout used by the pipelines.

Builders are pure: they return a ``NetworkSpec`` and never allocate
weights. Call ``spec.build(seed)`` to instantiate. Each spec records the
layer index that closes every architecture-table row in ``block_ends``.
"""

from __future__ import annotations

from ..exceptions import ConfigurationError
from ..nn.network import (
    NetworkSpec,
    avg_pool,
    bn,
    conv,
    dropout,
    fc,
    global_avg_pool,
    moe,
    relu,
    softmax_layer,
)

EMBEDDING_WIDTH = 256
RESP_EMBEDDING_WIDTH = 512


def _check_classes(n_classes):
    if n_classes < 2:
        raise ConfigurationError(f"class count must be >= 2, got {n_classes}")


def _check_input(shape, divisor, name):
    if len(shape) != 3 or shape[0] % divisor or shape[1] % divisor:
        raise ConfigurationError(
            f"{name} input must be F x T x C with F and T divisible by {divisor}, got {shape}"
        )


def _assemble(input_shape, blocks, embedding_block=None):
    layers, ends = [], []
    emb = None
    for i, block in enumerate(blocks):
        layers.extend(block)
        ends.append(len(layers) - 1)
        if i == embedding_block:
            emb = len(layers) - 1
    return NetworkSpec(tuple(input_shape), tuple(layers), emb, tuple(ends))


def _dense_rows(widths, rate):
    return [[fc(w), relu(), dropout(rate)] for w in widths]


def build_cdnn_baseline(n_classes, input_shape=(128, 128, 1)) -> NetworkSpec:
    """Four conv blocks (Conv-ReLU-BN-pool-dropout) then a three-layer dense head.

    The embedding is the 256-vector after global pooling and dropout.
    """
    _check_classes(n_classes)
    _check_input(input_shape, 8, "C-DNN")
    blocks = []
    for filters, rate in ((32, 0.10), (64, 0.15), (128, 0.20)):
        blocks.append([conv(filters), relu(), bn(), avg_pool(2), dropout(rate)])
    blocks.append([conv(256), relu(), bn(), global_avg_pool(), dropout(0.25)])
    blocks.append([fc(512), relu(), dropout(0.30)])
    blocks.append([fc(1024), relu(), dropout(0.35)])
    blocks.append([fc(n_classes), softmax_layer()])
    return _assemble(input_shape, blocks, embedding_block=3)


# (filters, pool after block, dropout); the last block ends in global pooling
_ENCODER_BLOCKS = ((32, True, 0.10), (64, True, 0.15), (128, False, 0.20),
                   (128, True, 0.20), (256, False, 0.25), (256, None, 0.25))
_RESP_BLOCKS = ((64, True, 0.10), (128, True, 0.15), (256, False, 0.20),
                (256, True, 0.20), (512, False, 0.25), (512, None, 0.25))


def _bn_first_blocks(table):
    blocks = []
    for filters, pool, rate in table:
        block = [bn(), conv(filters), relu(), bn()]
        if pool is None:
            block.append(global_avg_pool())
        elif pool:
            block.append(avg_pool(2))
        block.append(dropout(rate))
        blocks.append(block)
    return blocks


def build_encoder_branch(input_shape=(128, 128, 1)) -> NetworkSpec:
    """One spectrogram branch of the encoder; emits a 256-vector."""
    _check_input(input_shape, 8, "encoder branch")
    return _assemble(input_shape, _bn_first_blocks(_ENCODER_BLOCKS), embedding_block=5)


def build_dnn01(n_classes, width=EMBEDDING_WIDTH) -> NetworkSpec:
    _check_classes(n_classes)
    return _assemble((width,), [[fc(n_classes), softmax_layer()]])


def build_dnn02(n_classes, width=EMBEDDING_WIDTH) -> NetworkSpec:
    _check_classes(n_classes)
    blocks = _dense_rows((512, 1024), 0.30) + [[fc(n_classes), softmax_layer()]]
    return _assemble((width,), blocks)


def build_mlp_decoder(n_classes, width=EMBEDDING_WIDTH, rate=0.30) -> NetworkSpec:
    _check_classes(n_classes)
    blocks = _dense_rows((512, 1024, 1024), rate) + [[fc(n_classes), softmax_layer()]]
    return _assemble((width,), blocks)


def build_moe_decoder(n_classes, experts=10, width=EMBEDDING_WIDTH, rate=0.30) -> NetworkSpec:
    """MLP trunk whose output layer is replaced by a gated mixture of experts."""
    _check_classes(n_classes)
    if experts < 1:
        raise ConfigurationError(f"expert count must be >= 1, got {experts}")
    blocks = _dense_rows((512, 1024, 1024), rate) + [[moe(n_classes, experts), softmax_layer()]]
    return _assemble((width,), blocks)


def build_hierarchy_mlp(n_classes, width=EMBEDDING_WIDTH) -> NetworkSpec:
    """Classifier used at both levels of the scene hierarchy."""
    return build_mlp_decoder(n_classes, width)


def build_resp_cnn_moe(n_classes, experts=10, input_shape=(64, 64, 1)) -> NetworkSpec:
    """Six BN-first conv blocks (64..512 channels) and a mixture-of-experts head.

    The reference layouts use W in {64, 128}; any F and T divisible by 8 are accepted so
    the same layout can run on smaller desk-scale patches.
    """
    _check_classes(n_classes)
    _check_input(input_shape, 8, "CNN-MoE")
    if experts < 1:
        raise ConfigurationError(f"expert count must be >= 1, got {experts}")
    blocks = _bn_first_blocks(_RESP_BLOCKS) + [[moe(n_classes, experts), softmax_layer()]]
    return _assemble(input_shape, blocks, embedding_block=5)


def build_student(n_classes=3, input_shape=(64, 128, 1)) -> NetworkSpec:
    """Two conv blocks without normalisation or dropout, then FC-softmax."""
    _check_classes(n_classes)
    _check_input(input_shape, 4, "student")
    blocks = [
        [conv(128), relu(), avg_pool(4)],
        [conv(512), relu(), global_avg_pool()],
        [fc(n_classes), softmax_layer()],
    ]
    return _assemble(input_shape, blocks, embedding_block=1)


def count_spec_params(spec: NetworkSpec) -> int:
    """Trainable parameter count computed from shapes alone."""
    total, shape = 0, tuple(spec.input_shape)
    for layer, out in zip(spec.layers, spec.shapes()):
        if layer.kind == "conv":
            k, p = layer.params.get("kernel", (3, 3))
            total += k * p * shape[-1] * out[-1] + out[-1]
        elif layer.kind == "bn":
            total += 2 * shape[-1]
        elif layer.kind == "fc":
            total += shape[0] * out[0] + out[0]
        elif layer.kind == "moe":
            e = layer.params["experts"]
            total += e * (shape[0] * out[0] + out[0]) + e * shape[0] + e
        shape = out
    return total
