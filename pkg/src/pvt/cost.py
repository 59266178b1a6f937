"""
Closed-form parameter, FLOP and activation-memory accounting.

FLOPs follow the multiply-accumulate convention: one multiply-add is one FLOP.
Matmul-backed terms are exact MAC counts of the forward pass as implemented in
`pvt.backbone`. Layer norm, softmax and GELU add a fixed cost per element
(NORM_COST, SOFTMAX_COST, GELU_COST); residual additions and position
embedding interpolation are not counted.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from typing import Iterable, Optional, Sequence, Union

from .config import ModelConfig, ViTConfig, check_divisible
from .errors import ConfigError, ShapeError

NORM_COST = 5
SOFTMAX_COST = 5
GELU_COST = 8

MATMUL_COMPONENTS = ("patch_embed", "attn_qkvo", "sr", "attn_core", "ffn", "head")

CSV_HEADER = ("variant", "height", "width", "params", "gflops", "act_bytes")

AnyConfig = Union[ModelConfig, ViTConfig]


@dataclasses.dataclass
class CostReport:
    params: Optional[int] = None
    flops: Optional[int] = None
    activation_bytes: Optional[int] = None
    param_breakdown: dict = dataclasses.field(default_factory=dict)
    flop_breakdown: dict = dataclasses.field(default_factory=dict)

    @property
    def gflops(self) -> Optional[float]:
        return None if self.flops is None else self.flops / 1e9

    def component_totals(self, which: str = "flops") -> dict:
        """Sum the per-stage breakdown over stages, keyed by component."""
        src = self.flop_breakdown if which == "flops" else self.param_breakdown
        out: dict = {}
        for key, v in src.items():
            comp = key.split(".", 1)[1]
            out[comp] = out.get(comp, 0) + v
        return out

    @property
    def matmul_flops(self) -> int:
        totals = self.component_totals("flops")
        return sum(totals.get(c, 0) for c in MATMUL_COMPONENTS)

    def merge(self, other: "CostReport") -> "CostReport":
        return CostReport(
            params=other.params if other.params is not None else self.params,
            flops=other.flops if other.flops is not None else self.flops,
            activation_bytes=other.activation_bytes if other.activation_bytes is not None else self.activation_bytes,
            param_breakdown={**self.param_breakdown, **other.param_breakdown},
            flop_breakdown={**self.flop_breakdown, **other.flop_breakdown},
        )


def _add(bd: dict, key: str, value: int) -> None:
    if value:
        bd[key] = bd.get(key, 0) + int(value)


def linear_params(fan_in: int, fan_out: int, bias: bool = True) -> int:
    return fan_in * fan_out + (fan_out if bias else 0)


def _layer_params(bd: dict, prefix: str, c: int, expansion: int, reduction: int, force_reduce: bool = False) -> None:
    _add(bd, f"{prefix}.norm", 2 * 2 * c)
    _add(bd, f"{prefix}.attn_qkvo", 4 * linear_params(c, c))
    if reduction > 1 or force_reduce:
        _add(bd, f"{prefix}.sr", linear_params(reduction**2 * c, c))
        _add(bd, f"{prefix}.norm", 2 * c)
    _add(bd, f"{prefix}.ffn", linear_params(c, expansion * c) + linear_params(expansion * c, c))


def count_params(config: AnyConfig, num_classes: Optional[int] = None, reference_size: Optional[int] = None) -> CostReport:
    """Exact element count of the weights built by `init_weights` / `init_vit_weights`."""
    if isinstance(config, ViTConfig):
        return _vit_params(config, reference_size)
    k = config.num_classes if num_classes is None else num_classes
    ref = config.reference_size if reference_size is None else reference_size
    if ref % config.total_stride:
        raise ConfigError(f"reference size {ref} not divisible by stride {config.total_stride}")
    bd: dict = {}
    c_in = 3
    last = len(config.stages) - 1
    for i, (st, stride) in enumerate(zip(config.stages, config.strides)):
        p = f"stage{i + 1}"
        c = st.channels
        tokens = (ref // stride) ** 2 + (1 if i == last else 0)
        _add(bd, f"{p}.patch_embed", linear_params(st.patch_size**2 * c_in, c))
        _add(bd, f"{p}.norm", 2 * c)
        _add(bd, f"{p}.pos_embed", tokens * c)
        for _ in range(st.depth):
            _layer_params(bd, p, c, st.ffn_expansion, st.reduction)
        _add(bd, f"{p}.norm", 2 * c)
        c_in = c
    c_last = config.stages[-1].channels
    _add(bd, "head.class_token", c_last)
    _add(bd, "head.head", linear_params(c_last, k))
    return CostReport(params=sum(bd.values()), param_breakdown=bd)


def _vit_params(config: ViTConfig, reference_size: Optional[int]) -> CostReport:
    ref = config.reference_size if reference_size is None else reference_size
    c = config.channels
    bd: dict = {}
    _add(bd, "vit.patch_embed", linear_params(config.patch_size**2 * 3, c))
    _add(bd, "vit.pos_embed", (ref // config.patch_size) ** 2 * c)
    for _ in range(config.depth):
        _layer_params(bd, "vit", c, config.ffn_expansion, 1)
    return CostReport(params=sum(bd.values()), param_breakdown=bd)


def attention_core_macs(n: int, channels: int, reduction: int = 1) -> int:
    """MACs of q k^T plus attn v for n queries against n / R^2 keys, summed over heads."""
    if n % (reduction * reduction):
        raise ShapeError(f"{n} tokens cannot be reduced by {reduction}^2")
    return 2 * n * (n // reduction**2) * channels


def _layer_flops(bd: dict, p: str, n: int, m: int, c: int, heads: int, expansion: int, reduce: bool, r: int) -> None:
    _add(bd, f"{p}.norm", NORM_COST * 2 * n * c)
    _add(bd, f"{p}.attn_qkvo", 2 * n * c * c + 2 * m * c * c)
    if reduce:
        _add(bd, f"{p}.sr", m * r * r * c * c)
        _add(bd, f"{p}.norm", NORM_COST * m * c)
    _add(bd, f"{p}.attn_core", 2 * n * m * c)
    _add(bd, f"{p}.softmax", SOFTMAX_COST * heads * n * m)
    _add(bd, f"{p}.ffn", 2 * n * expansion * c * c)
    _add(bd, f"{p}.gelu", GELU_COST * n * expansion * c)


def count_flops(config: AnyConfig, height: int, width: int, classification: bool = True) -> CostReport:
    """Forward-pass FLOPs for one image.

    With `classification`, the last stage carries the class token and the
    classifier is included; otherwise the dense backbone is counted.
    """
    if isinstance(config, ViTConfig):
        return _vit_flops(config, height, width)
    check_divisible(height, width, config.total_stride)
    bd: dict = {}
    c_in = 3
    last = len(config.stages) - 1
    for i, (st, stride) in enumerate(zip(config.stages, config.strides)):
        p = f"stage{i + 1}"
        c, r = st.channels, st.reduction
        n_sp = (height // stride) * (width // stride)
        _add(bd, f"{p}.patch_embed", n_sp * st.patch_size**2 * c_in * c)
        _add(bd, f"{p}.norm", NORM_COST * n_sp * c)
        cls = classification and i == last
        n = n_sp + (1 if cls else 0)
        m = n_sp // (r * r) if r > 1 else n
        for _ in range(st.depth):
            _layer_flops(bd, p, n, m, c, st.heads, st.ffn_expansion, r > 1, r)
        _add(bd, f"{p}.norm", NORM_COST * n * c)
        c_in = c
    if classification:
        _add(bd, "head.head", config.stages[-1].channels * config.num_classes)
    return CostReport(flops=sum(bd.values()), flop_breakdown=bd)


def _vit_flops(config: ViTConfig, height: int, width: int) -> CostReport:
    check_divisible(height, width, config.patch_size)
    c = config.channels
    n = (height // config.patch_size) * (width // config.patch_size)
    bd: dict = {}
    _add(bd, "vit.patch_embed", n * config.patch_size**2 * 3 * c)
    for _ in range(config.depth):
        _layer_flops(bd, "vit", n, n, c, config.heads, config.ffn_expansion, False, 1)
    return CostReport(flops=sum(bd.values()), flop_breakdown=bd)


def _layer_live(n: int, m: int, c: int, heads: int, expansion: int, reduce: bool) -> int:
    """Peak live elements inside one encoder layer, single image.

    Attention phase: residual, normed input, q, k, v, the reduced key/value
    source, pre-softmax scores and post-softmax weights (both heads x n x m)
    and the merged context. FFN phase: residual, normed input and the hidden
    activation before and after GELU.
    """
    attn = 3 * n * c + 2 * m * c + 2 * heads * n * m + n * c
    if reduce:
        attn += m * c
    ffn = 2 * n * c + 2 * n * expansion * c
    return max(attn, ffn)


def estimate_activation_memory(
    config: AnyConfig,
    height: int,
    width: int,
    batch: int = 1,
    bytes_per_element: int = 4,
    classification: bool = False,
) -> CostReport:
    """Peak forward activation bytes (no gradients, no optimizer state)."""
    if isinstance(config, ViTConfig):
        check_divisible(height, width, config.patch_size)
        n = (height // config.patch_size) * (width // config.patch_size)
        c = config.channels
        peak = n * config.patch_size**2 * 3 + 2 * n * c
        if config.depth:
            peak = max(peak, _layer_live(n, n, c, config.heads, config.ffn_expansion, False))
        return CostReport(activation_bytes=batch * bytes_per_element * peak)

    check_divisible(height, width, config.total_stride)
    peak = 0
    prev_elems = height * width * 3
    last = len(config.stages) - 1
    for i, (st, stride) in enumerate(zip(config.stages, config.strides)):
        c, r = st.channels, st.reduction
        n_sp = (height // stride) * (width // stride)
        n = n_sp + (1 if classification and i == last else 0)
        m = n_sp // (r * r) if r > 1 else n
        peak = max(peak, prev_elems + 2 * n_sp * c)
        if st.depth:
            peak = max(peak, _layer_live(n, m, c, st.heads, st.ffn_expansion, r > 1))
        prev_elems = n_sp * c
    return CostReport(activation_bytes=batch * bytes_per_element * peak)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def widen_config(config: ModelConfig, factor: float) -> ModelConfig:
    """Scale every stage width by `factor`, rounded up to a multiple of its head count."""
    if factor <= 0:
        raise ConfigError("widening factor must be positive")
    stages = []
    for st in config.stages:
        c = _round_half_up(st.channels * factor)
        c = -(-c // st.heads) * st.heads
        stages.append(dataclasses.replace(st, channels=c))
    name = config.name if factor == 1 else f"{config.name}-x{factor:g}"
    return dataclasses.replace(config, stages=tuple(stages), name=name)


@dataclasses.dataclass
class CurveRow:
    variant: str
    height: int
    width: int
    params: Optional[int]
    gflops: Optional[float]
    act_bytes: Optional[int]
    note: str = ""

    def as_csv(self) -> list:
        return [
            self.variant,
            self.height,
            self.width,
            "" if self.params is None else self.params,
            "" if self.gflops is None else repr(self.gflops),
            "" if self.act_bytes is None else self.act_bytes,
        ]


def cost_row(config: AnyConfig, height: int, width: int, batch: int = 1, bytes_per_element: int = 4) -> CurveRow:
    flops = count_flops(config, height, width)
    mem = estimate_activation_memory(config, height, width, batch, bytes_per_element)
    return CurveRow(config.name, height, width, count_params(config).params, flops.gflops, mem.activation_bytes)


def flops_curve(configs: Iterable[AnyConfig], scales: Sequence[int]) -> list[CurveRow]:
    """One row per (config, square scale); indivisible scales yield a warning row."""
    rows = []
    for cfg in configs:
        for s in scales:
            if s < cfg.total_stride or s % cfg.total_stride:
                msg = f"{cfg.name}: scale {s} not divisible by stride {cfg.total_stride}; skipped"
                warnings.warn(msg, stacklevel=2)
                rows.append(CurveRow(cfg.name, s, s, None, None, None, note=msg))
                continue
            rows.append(cost_row(cfg, s, s))
    return rows


def write_csv(rows: Iterable[CurveRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.as_csv())
