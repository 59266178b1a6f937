"""
The four-stage pyramid backbone, its classification path, and the columnar
ViT baseline.

Images and feature maps are channel-last grids (..., H, W, C); token
sequences are (..., n, C). Leading axes are batch axes and are optional.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from . import initializers as init
from .attention import LN_EPS, AttentionConfig, AttentionWeights, init_attention, sra_forward
from .config import ModelConfig, StageConfig, ViTConfig, check_divisible
from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor,
    bilinear_resize_grid,
    broadcast_to,
    concat,
    gelu,
    layer_norm,
    linear,
    mac_label,
    space_to_depth,
    take_slice,
)


@dataclasses.dataclass
class LinearWeights:
    weight: Tensor
    bias: Tensor


@dataclasses.dataclass
class NormWeights:
    gamma: Tensor
    beta: Tensor


@dataclasses.dataclass
class EncoderLayerWeights:
    norm1: NormWeights
    attn: AttentionWeights
    norm2: NormWeights
    ffn_in: LinearWeights
    ffn_out: LinearWeights


@dataclasses.dataclass
class StageWeights:
    patch: LinearWeights
    patch_norm: NormWeights
    pos_embed: Tensor
    layers: list[EncoderLayerWeights]
    norm: NormWeights


@dataclasses.dataclass
class BackboneWeights:
    stages: list[StageWeights]
    class_token: Tensor
    head: LinearWeights


@dataclasses.dataclass
class ViTWeights:
    patch: LinearWeights
    pos_embed: Tensor
    layers: list[EncoderLayerWeights]


@dataclasses.dataclass
class FeaturePyramid:
    """Backbone outputs F1..F4, channel-last grids at strides 4, 8, 16, 32."""

    levels: list[Tensor]
    strides: tuple[int, ...]

    @property
    def f1(self) -> Tensor:
        return self.levels[0]

    @property
    def f2(self) -> Tensor:
        return self.levels[1]

    @property
    def f3(self) -> Tensor:
        return self.levels[2]

    @property
    def f4(self) -> Tensor:
        return self.levels[3]

    def __iter__(self):
        return iter(self.levels)

    def __len__(self) -> int:
        return len(self.levels)


# -- initialization ------------------------------------------------------


def _linear(rng, fan_in: int, fan_out: int, dtype) -> LinearWeights:
    return LinearWeights(init.trunc_normal(rng, (fan_in, fan_out), dtype=dtype), init.zeros(fan_out, dtype))


def _norm(c: int, dtype) -> NormWeights:
    return NormWeights(init.ones(c, dtype), init.zeros(c, dtype))


def attention_config(stage: StageConfig, force_reduce: bool = False) -> AttentionConfig:
    return AttentionConfig(stage.channels, stage.heads, stage.reduction, force_reduce)


def init_encoder_layer(attn_cfg: AttentionConfig, expansion: int, rng, dtype) -> EncoderLayerWeights:
    c = attn_cfg.channels
    return EncoderLayerWeights(
        norm1=_norm(c, dtype),
        attn=init_attention(attn_cfg, rng, dtype),
        norm2=_norm(c, dtype),
        ffn_in=_linear(rng, c, expansion * c, dtype),
        ffn_out=_linear(rng, expansion * c, c, dtype),
    )


def init_weights(config: ModelConfig, seed: int = 0, dtype=np.float32) -> BackboneWeights:
    """Truncated-normal(0.02) projections and position embeddings; unit gammas, zero biases."""
    rng = np.random.default_rng(seed)
    stages = []
    c_in = 3
    last = len(config.stages) - 1
    for i, st in enumerate(config.stages):
        h, w = config.reference_grid(i)
        tokens = h * w + (1 if i == last else 0)
        stages.append(
            StageWeights(
                patch=_linear(rng, st.patch_size**2 * c_in, st.channels, dtype),
                patch_norm=_norm(st.channels, dtype),
                pos_embed=init.trunc_normal(rng, (tokens, st.channels), dtype=dtype),
                layers=[init_encoder_layer(attention_config(st), st.ffn_expansion, rng, dtype) for _ in range(st.depth)],
                norm=_norm(st.channels, dtype),
            )
        )
        c_in = st.channels
    c_last = config.stages[-1].channels
    return BackboneWeights(
        stages=stages,
        class_token=init.trunc_normal(rng, (1, c_last), dtype=dtype),
        head=_linear(rng, c_last, config.num_classes, dtype),
    )


def init_vit_weights(config: ViTConfig, seed: int = 0, dtype=np.float32) -> ViTWeights:
    rng = np.random.default_rng(seed)
    h, w = config.reference_grid()
    attn_cfg = AttentionConfig(config.channels, config.heads, 1)
    return ViTWeights(
        patch=_linear(rng, config.patch_size**2 * 3, config.channels, dtype),
        pos_embed=init.trunc_normal(rng, (h * w, config.channels), dtype=dtype),
        layers=[init_encoder_layer(attn_cfg, config.ffn_expansion, rng, dtype) for _ in range(config.depth)],
    )


# -- forward -------------------------------------------------------------


def patch_embed(x: Tensor, patch_size: int, weights: LinearWeights) -> tuple[Tensor, tuple[int, int]]:
    """Split (..., h, w, c) into P x P blocks and project each to a token."""
    h, w = x.shape[-3], x.shape[-2]
    blocks = space_to_depth(x, patch_size)
    if blocks.shape[-1] != weights.weight.shape[0]:
        raise ShapeError(
            f"patch of {blocks.shape[-1]} values does not match projection input {weights.weight.shape[0]}"
        )
    with mac_label("patch_embed"):
        tokens = linear(blocks, weights.weight, weights.bias)
    return tokens, (h // patch_size, w // patch_size)


def interpolate_pos_embed(
    pos_embed: Tensor, src_grid: tuple[int, int], dst_grid: tuple[int, int], has_class_token: bool = False
) -> Tensor:
    """Bilinearly resize the spatial rows of a position embedding; a leading class row passes through."""
    h0, w0 = src_grid
    extra = 1 if has_class_token else 0
    n, c = pos_embed.shape
    if n != h0 * w0 + extra:
        raise ShapeError(f"position embedding has {n} rows, expected {h0 * w0 + extra} for grid {h0}x{w0}")
    if tuple(dst_grid) == (h0, w0):
        return pos_embed
    spatial = take_slice(pos_embed, 0, extra, n).reshape(h0, w0, c)
    h1, w1 = dst_grid
    resized = bilinear_resize_grid(spatial, h1, w1).reshape(h1 * w1, c)
    if has_class_token:
        return concat([take_slice(pos_embed, 0, 0, 1), resized], axis=0)
    return resized


def encoder_layer_forward(
    tokens: Tensor,
    grid: tuple[int, int],
    attn_cfg: AttentionConfig,
    weights: EncoderLayerWeights,
    has_class_token: bool = False,
    bypass_sr_norm: bool = False,
) -> Tensor:
    """Pre-norm block: x + SRA(norm1(x)), then x + FFN(norm2(x))."""
    expected = grid[0] * grid[1] + (1 if has_class_token else 0)
    if tokens.shape[-2] != expected:
        raise ShapeError(f"{tokens.shape[-2]} tokens do not match grid {grid[0]}x{grid[1]}")
    if has_class_token and (attn_cfg.reduction > 1 or weights.attn.has_reduction):
        raise ConfigError("a class token cannot pass through spatial reduction; use reduction 1")
    x = tokens
    y = layer_norm(x, weights.norm1.gamma, weights.norm1.beta, LN_EPS)
    x = x + sra_forward(y, grid, attn_cfg, weights.attn, bypass_sr_norm)
    y = layer_norm(x, weights.norm2.gamma, weights.norm2.beta, LN_EPS)
    with mac_label("ffn"):
        hidden = gelu(linear(y, weights.ffn_in.weight, weights.ffn_in.bias))
        return x + linear(hidden, weights.ffn_out.weight, weights.ffn_out.bias)


def stage_forward(
    x: Tensor,
    stage: int,
    config: ModelConfig,
    weights: BackboneWeights,
    class_token: bool = False,
) -> tuple[Tensor, Optional[Tensor]]:
    """Run stage `stage` (0-based) on a (..., h, w, c) grid.

    Returns the output grid and, when `class_token` is set, the final-norm
    class-token vector (..., C).
    """
    st = config.stages[stage]
    sw = weights.stages[stage]
    last = stage == len(config.stages) - 1
    if class_token and not last:
        raise ConfigError("the class token only exists in the last stage")

    tokens, grid = patch_embed(x, st.patch_size, sw.patch)
    tokens = layer_norm(tokens, sw.patch_norm.gamma, sw.patch_norm.beta, LN_EPS)
    pos = interpolate_pos_embed(sw.pos_embed, config.reference_grid(stage), grid, has_class_token=last)
    if last:
        cls_pos = take_slice(pos, 0, 0, 1)
        pos = take_slice(pos, 0, 1, pos.shape[0])
    tokens = tokens + pos
    if class_token:
        lead = tokens.shape[:-2]
        cls = broadcast_to(weights.class_token + cls_pos, (*lead, 1, st.channels))
        tokens = concat([cls, tokens], axis=-2)

    attn_cfg = attention_config(st)
    for layer in sw.layers:
        tokens = encoder_layer_forward(tokens, grid, attn_cfg, layer, has_class_token=class_token)
    tokens = layer_norm(tokens, sw.norm.gamma, sw.norm.beta, LN_EPS)

    cls_out = None
    if class_token:
        cls_out = take_slice(tokens, -2, 0, 1).reshape(*tokens.shape[:-2], st.channels)
        tokens = take_slice(tokens, -2, 1, tokens.shape[-2])
    out = tokens.reshape(*tokens.shape[:-2], grid[0], grid[1], st.channels)
    return out, cls_out


def _check_image(image: Tensor, config: ModelConfig) -> None:
    if image.ndim < 3 or image.shape[-1] != 3:
        raise ShapeError(f"expected a (..., H, W, 3) image, got {image.shape}")
    check_divisible(image.shape[-3], image.shape[-2], config.total_stride)


def backbone_forward(image: Tensor, config: ModelConfig, weights: BackboneWeights) -> FeaturePyramid:
    _check_image(image, config)
    levels = []
    x = image
    for i in range(len(config.stages)):
        x, _ = stage_forward(x, i, config, weights)
        levels.append(x)
    return FeaturePyramid(levels, config.strides)


def classify_forward(image: Tensor, config: ModelConfig, weights: BackboneWeights) -> Tensor:
    """Logits (..., num_classes) from the class token appended to the last stage."""
    _check_image(image, config)
    x = image
    last = len(config.stages) - 1
    for i in range(last):
        x, _ = stage_forward(x, i, config, weights)
    _, cls = stage_forward(x, last, config, weights, class_token=True)
    with mac_label("head"):
        return linear(cls, weights.head.weight, weights.head.bias)


def vit_columnar_forward(image: Tensor, config: ViTConfig, weights: ViTWeights) -> Tensor:
    """Single-scale transformer: tokens (..., H/P * W/P, C) at every layer."""
    if image.ndim < 3 or image.shape[-1] != 3:
        raise ShapeError(f"expected a (..., H, W, 3) image, got {image.shape}")
    check_divisible(image.shape[-3], image.shape[-2], config.patch_size)
    tokens, grid = patch_embed(image, config.patch_size, weights.patch)
    tokens = tokens + interpolate_pos_embed(weights.pos_embed, config.reference_grid(), grid)
    attn_cfg = AttentionConfig(config.channels, config.heads, 1)
    for layer in weights.layers:
        tokens = encoder_layer_forward(tokens, grid, attn_cfg, layer)
    return tokens
