"""Convolution-free dense-prediction head over a FeaturePyramid.

Each level gets a per-position linear lateral map to a shared width D, is
bilinearly upsampled to the stride-4 grid, and the four maps are summed in
level order. A per-position classifier produces the logits.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .backbone import FeaturePyramid, LinearWeights, _linear
from .config import ModelConfig
from .errors import ShapeError
from .tensor import Tensor, bilinear_resize_grid, linear

DEFAULT_FUSION_WIDTH = 32


@dataclasses.dataclass
class SegHeadWeights:
    laterals: list[LinearWeights]
    classifier: LinearWeights

    @property
    def width(self) -> int:
        return self.classifier.weight.shape[0]

    @property
    def num_classes(self) -> int:
        return self.classifier.weight.shape[1]


def init_seg_head(
    config: ModelConfig, num_classes: int, width: int = DEFAULT_FUSION_WIDTH, seed: int = 0, dtype=np.float32
) -> SegHeadWeights:
    rng = np.random.default_rng(seed)
    laterals = [_linear(rng, c, width, dtype) for c in config.channels]
    return SegHeadWeights(laterals, _linear(rng, width, num_classes, dtype))


def upsample_sum_fuse(pyramid: FeaturePyramid, weights: SegHeadWeights) -> Tensor:
    if len(pyramid.levels) != len(weights.laterals):
        raise ShapeError(f"{len(pyramid.levels)} pyramid levels but {len(weights.laterals)} laterals")
    h, w = pyramid.f1.shape[-3], pyramid.f1.shape[-2]
    fused = None
    for level, lat in zip(pyramid.levels, weights.laterals):
        if level.shape[-1] != lat.weight.shape[0]:
            raise ShapeError(f"level width {level.shape[-1]} does not match lateral input {lat.weight.shape[0]}")
        y = bilinear_resize_grid(linear(level, lat.weight, lat.bias), h, w)
        fused = y if fused is None else fused + y
    return fused


def semantic_fpn_lite_forward(pyramid: FeaturePyramid, weights: SegHeadWeights) -> Tensor:
    """Per-position class logits (..., H/4, W/4, K)."""
    fused = upsample_sum_fuse(pyramid, weights)
    return linear(fused, weights.classifier.weight, weights.classifier.bias)
