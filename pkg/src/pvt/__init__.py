"""Pyramid vision transformer backbone on a small numpy autodiff core."""

from .attention import AttentionConfig, AttentionWeights, attention_core, mha_forward, spatial_reduce, sra_forward
from .backbone import (
    BackboneWeights,
    FeaturePyramid,
    backbone_forward,
    classify_forward,
    init_vit_weights,
    init_weights,
    interpolate_pos_embed,
    patch_embed,
    vit_columnar_forward,
)
from .config import ModelConfig, StageConfig, ViTConfig, preset, vit_small
from .cost import CostReport, count_flops, count_params, estimate_activation_memory, flops_curve, widen_config
from .gradcheck import grad_check
from .tensor import Tensor, backward, no_grad

__all__ = [
    "AttentionConfig",
    "AttentionWeights",
    "BackboneWeights",
    "CostReport",
    "FeaturePyramid",
    "ModelConfig",
    "StageConfig",
    "Tensor",
    "ViTConfig",
    "attention_core",
    "backbone_forward",
    "backward",
    "classify_forward",
    "count_flops",
    "count_params",
    "estimate_activation_memory",
    "flops_curve",
    "grad_check",
    "init_vit_weights",
    "init_weights",
    "interpolate_pos_embed",
    "mha_forward",
    "no_grad",
    "patch_embed",
    "preset",
    "spatial_reduce",
    "sra_forward",
    "vit_columnar_forward",
    "vit_small",
    "widen_config",
]
