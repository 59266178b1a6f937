"""
Multi-head attention and spatial-reduction attention (SRA).

Token sequences have shape (..., n, C); leading axes are batch axes. Head j
owns columns [j*d_head, (j+1)*d_head) of the fused projection matrices.
"""

from __future__ import annotations

import contextlib
import dataclasses
import math
from typing import Iterator, Optional

import numpy as np

from . import initializers as init
from .errors import ConfigError, ShapeError
from .tensor import Tensor, layer_norm, linear, mac_label, matmul, softmax, space_to_depth

LN_EPS = 1e-6

_probes: list["AttentionProbe"] = []


@dataclasses.dataclass(frozen=True)
class AttentionConfig:
    channels: int
    heads: int
    reduction: int = 1
    # Materialize the reduction projection even when reduction == 1.
    force_reduce: bool = False

    def __post_init__(self):
        if self.channels < 1 or self.heads < 1:
            raise ConfigError("channels and heads must be positive")
        if self.channels % self.heads:
            raise ConfigError(f"heads {self.heads} do not divide channels {self.channels}")
        if self.reduction < 1:
            raise ConfigError(f"reduction must be >= 1, got {self.reduction}")

    @property
    def d_head(self) -> int:
        return self.channels // self.heads

    @property
    def has_reduction(self) -> bool:
        return self.reduction > 1 or self.force_reduce


@dataclasses.dataclass
class AttentionWeights:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ws: Optional[Tensor] = None
    bs: Optional[Tensor] = None
    sr_gamma: Optional[Tensor] = None
    sr_beta: Optional[Tensor] = None

    def __post_init__(self):
        present = [t is not None for t in (self.ws, self.bs, self.sr_gamma, self.sr_beta)]
        if any(present) and not all(present):
            raise ConfigError("reduction projection and its norm must be present together")

    @property
    def has_reduction(self) -> bool:
        return self.ws is not None


def init_attention(config: AttentionConfig, rng: np.random.Generator, dtype=np.float32) -> AttentionWeights:
    c = config.channels
    kw = {}
    for name in ("q", "k", "v", "o"):
        kw[f"w{name}"] = init.trunc_normal(rng, (c, c), dtype=dtype)
        kw[f"b{name}"] = init.zeros(c, dtype)
    if config.has_reduction:
        r2 = config.reduction**2
        kw.update(
            ws=init.trunc_normal(rng, (r2 * c, c), dtype=dtype),
            bs=init.zeros(c, dtype),
            sr_gamma=init.ones(c, dtype),
            sr_beta=init.zeros(c, dtype),
        )
    return AttentionWeights(**kw)


@dataclasses.dataclass
class AttentionProbe:
    """Records the shape of every attention matrix computed while active."""

    shapes: list = dataclasses.field(default_factory=list)
    matrices: list = dataclasses.field(default_factory=list)
    keep_values: bool = False


@contextlib.contextmanager
def attention_probe(keep_values: bool = False) -> Iterator[AttentionProbe]:
    probe = AttentionProbe(keep_values=keep_values)
    _probes.append(probe)
    try:
        yield probe
    finally:
        _probes.remove(probe)


def _check_grid(n: int, grid: tuple[int, int]) -> None:
    h, w = grid
    if n != h * w:
        raise ShapeError(f"token count {n} does not match grid {h}x{w}")


def spatial_reduce(
    x: Tensor, grid: tuple[int, int], config: AttentionConfig, weights: AttentionWeights, bypass_norm: bool = False
) -> Tensor:
    """(..., h*w, C) -> (..., h*w/R^2, C) by merging R x R token blocks."""
    if weights.ws is None:
        raise ConfigError("spatial_reduce needs the reduction projection")
    h, w = grid
    r = config.reduction
    _check_grid(x.shape[-2], grid)
    if h % r:
        raise ShapeError(f"reduction {r} does not divide grid height {h}")
    if w % r:
        raise ShapeError(f"reduction {r} does not divide grid width {w}")
    c = x.shape[-1]
    blocks = space_to_depth(x.reshape(*x.shape[:-2], h, w, c), r)
    with mac_label("sr"):
        y = linear(blocks, weights.ws, weights.bs)
    if bypass_norm:
        return y
    return layer_norm(y, weights.sr_gamma, weights.sr_beta, LN_EPS)


def attention_core(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d)) v over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape[-1]} differs from key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key count {k.shape[-2]} differs from value count {v.shape[-2]}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    with mac_label("attn_core"):
        scores = matmul(q, k.swapaxes(-1, -2)) * scale
        attn = softmax(scores, -1)
        for probe in _probes:
            probe.shapes.append(attn.shape[-2:])
            if probe.keep_values:
                probe.matrices.append(attn.data.copy())
        return matmul(attn, v)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, c = x.shape
    return x.reshape(*lead, n, heads, c // heads).swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, heads, n, d = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, n, heads * d)


def _attend(x: Tensor, kv_src: Tensor, config: AttentionConfig, w: AttentionWeights) -> Tensor:
    with mac_label("attn_qkvo"):
        q = linear(x, w.wq, w.bq)
        k = linear(kv_src, w.wk, w.bk)
        v = linear(kv_src, w.wv, w.bv)
    heads = config.heads
    out = _merge_heads(attention_core(_split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)))
    with mac_label("attn_qkvo"):
        return linear(out, w.wo, w.bo)


def mha_forward(x: Tensor, config: AttentionConfig, weights: AttentionWeights) -> Tensor:
    """Standard multi-head self-attention; any reduction weights are ignored."""
    if x.shape[-1] != config.channels:
        raise ShapeError(f"input width {x.shape[-1]} does not match channels {config.channels}")
    return _attend(x, x, config, weights)


def sra_forward(
    x: Tensor, grid: tuple[int, int], config: AttentionConfig, weights: AttentionWeights, bypass_norm: bool = False
) -> Tensor:
    """Queries from every token; keys and values from the spatially reduced sequence."""
    if x.shape[-1] != config.channels:
        raise ShapeError(f"input width {x.shape[-1]} does not match channels {config.channels}")
    if weights.has_reduction:
        kv_src = spatial_reduce(x, grid, config, weights, bypass_norm)
    elif config.reduction > 1:
        raise ConfigError(f"reduction {config.reduction} requires the reduction projection")
    else:
        kv_src = x
    return _attend(x, kv_src, config, weights)
