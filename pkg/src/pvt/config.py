"""Model hyperparameters and the named presets."""

from __future__ import annotations

import dataclasses
from typing import Optional

from .errors import ConfigError, ShapeError

REFERENCE_SIZE = 224


@dataclasses.dataclass(frozen=True)
class StageConfig:
    patch_size: int
    channels: int
    depth: int
    reduction: int
    heads: int
    ffn_expansion: int

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{f.name} must be a positive integer, got {v!r}")
        if self.channels % self.heads:
            raise ConfigError(f"heads {self.heads} do not divide channels {self.channels}")


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    stages: tuple[StageConfig, ...]
    num_classes: int = 1000
    name: str = "custom"
    reference_size: int = REFERENCE_SIZE

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if len(self.stages) != 4:
            raise ConfigError(f"a pyramid needs exactly 4 stages, got {len(self.stages)}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        if self.reference_size % self.total_stride:
            raise ConfigError(f"reference size {self.reference_size} not divisible by stride {self.total_stride}")

    @property
    def strides(self) -> tuple[int, ...]:
        out, s = [], 1
        for st in self.stages:
            s *= st.patch_size
            out.append(s)
        return tuple(out)

    @property
    def total_stride(self) -> int:
        return self.strides[-1]

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(s.channels for s in self.stages)

    def reference_grid(self, stage: int) -> tuple[int, int]:
        side = self.reference_size // self.strides[stage]
        return side, side

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_classes": self.num_classes,
            "reference_size": self.reference_size,
            "stages": [dataclasses.asdict(s) for s in self.stages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(
                stages=tuple(StageConfig(**s) for s in d["stages"]),
                num_classes=int(d["num_classes"]),
                name=str(d.get("name", "custom")),
                reference_size=int(d.get("reference_size", REFERENCE_SIZE)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None


def build_config(
    patch, channels, depths, reductions, heads, expansions, num_classes=1000, name="custom", reference_size=REFERENCE_SIZE
) -> ModelConfig:
    stages = tuple(StageConfig(*vals) for vals in zip(patch, channels, depths, reductions, heads, expansions))
    return ModelConfig(stages, num_classes=num_classes, name=name, reference_size=reference_size)


_PATCH = (4, 2, 2, 2)
_CHANNELS = (64, 128, 320, 512)
_REDUCTION = (8, 4, 2, 1)
_HEADS = (1, 2, 5, 8)
_EXPANSION = (8, 8, 4, 4)

# Stage-2 depth of small/medium is 4: the published parameter and FLOP totals
# are only reached with that depth (3 leaves both exactly one stage-2 layer short).
DEPTHS = {
    "pvt-tiny": (2, 2, 2, 2),
    "pvt-small": (3, 4, 6, 3),
    "pvt-medium": (3, 4, 18, 3),
    "pvt-large": (3, 8, 27, 3),
}


def preset(name: str, num_classes: int = 1000) -> ModelConfig:
    key = name.lower()
    if key == "pvt-micro":
        return build_config(
            _PATCH, (8, 16, 32, 64), (1, 1, 1, 1), _REDUCTION, (1, 2, 4, 8), (2, 2, 2, 2),
            num_classes=num_classes, name=key,
        )
    if key not in DEPTHS:
        raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return build_config(_PATCH, _CHANNELS, DEPTHS[key], _REDUCTION, _HEADS, _EXPANSION, num_classes, key)


PRESET_NAMES = ("pvt-tiny", "pvt-small", "pvt-medium", "pvt-large", "pvt-micro")


@dataclasses.dataclass(frozen=True)
class ViTConfig:
    """Single-scale (columnar) transformer: one patch embedding, constant width."""

    patch_size: int
    channels: int
    depth: int
    heads: int
    ffn_expansion: int = 4
    name: str = "vit"
    reference_size: int = REFERENCE_SIZE

    def __post_init__(self):
        if self.patch_size < 1 or self.channels < 1 or self.depth < 0 or self.heads < 1:
            raise ConfigError(f"invalid ViT config {self}")
        if self.channels % self.heads:
            raise ConfigError(f"heads {self.heads} do not divide channels {self.channels}")

    @property
    def total_stride(self) -> int:
        return self.patch_size

    def reference_grid(self) -> tuple[int, int]:
        side = self.reference_size // self.patch_size
        return side, side


def vit_small(patch_size: int) -> ViTConfig:
    """The ViT-Small baseline: width 768, 8 layers, 8 heads, FFN ratio 3."""
    return ViTConfig(patch_size, 768, 8, 8, 3, name=f"vit-small/{patch_size}")


def resolve_variant(name: str, num_classes: int = 1000) -> "ModelConfig | ViTConfig":
    key = name.lower()
    if key.startswith("vit-small/"):
        return vit_small(int(key.split("/", 1)[1]))
    return preset(key, num_classes)


def stage_table(config: ModelConfig) -> list[dict]:
    rows = []
    for i, (s, stride) in enumerate(zip(config.stages, config.strides), start=1):
        row = {"stage": i, "stride": stride}
        row.update(dataclasses.asdict(s))
        rows.append(row)
    return rows


def check_divisible(h: int, w: int, stride: int, what: Optional[str] = None) -> None:
    for axis, v in (("height", h), ("width", w)):
        if v < stride or v % stride:
            raise ShapeError(
                f"{axis} {v} is not a positive multiple of {stride}"
                + (f" ({what})" if what else "")
                + "; pad the input to a multiple of the total stride"
            )
