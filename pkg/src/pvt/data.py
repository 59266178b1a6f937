"""Synthetic two-class images: a bright horizontal stripe versus a bright blob."""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

IMAGE_SIZE = 32
MASK_STRIDE = 4
BRIGHT = 1.0
NOISE = 0.2


@dataclasses.dataclass
class ToyDataset:
    seed: int
    mode: str
    images: np.ndarray  # (N, 32, 32, 3)
    labels: np.ndarray  # (N,) class ids
    masks: Optional[np.ndarray] = None  # (N, 8, 8) in segmentation mode

    def __len__(self) -> int:
        return len(self.images)

    @property
    def targets(self) -> np.ndarray:
        return self.masks if self.mode == "seg" else self.labels


def _stripe(rng: np.random.Generator) -> np.ndarray:
    region = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=bool)
    thickness = int(rng.integers(3, 6))
    top = int(rng.integers(12, 20 - thickness + 1))
    region[top : top + thickness, :] = True
    return region


def _blob(rng: np.random.Generator) -> np.ndarray:
    radius = float(rng.uniform(3.0, 5.0))
    cy = float(rng.uniform(radius, IMAGE_SIZE - radius))
    cx = float(rng.uniform(radius, IMAGE_SIZE - radius))
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE] + 0.5
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


def make_toy_dataset(seed: int, n: int, mode: str = "cls") -> ToyDataset:
    """Deterministic per (seed, n, mode); labels alternate then get shuffled."""
    if n < 2:
        raise ValueError("toy dataset needs at least 2 samples")
    if mode not in ("cls", "seg"):
        raise ValueError(f"mode must be 'cls' or 'seg', got {mode!r}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    images = np.empty((n, IMAGE_SIZE, IMAGE_SIZE, 3))
    masks = np.empty((n, IMAGE_SIZE // MASK_STRIDE, IMAGE_SIZE // MASK_STRIDE), dtype=np.int64)
    for i, label in enumerate(labels):
        region = _stripe(rng) if label == 0 else _blob(rng)
        img = rng.uniform(0.0, NOISE, size=(IMAGE_SIZE, IMAGE_SIZE, 3))
        img[region] = BRIGHT
        images[i] = img
        s = MASK_STRIDE
        cover = region.reshape(IMAGE_SIZE // s, s, IMAGE_SIZE // s, s).mean(axis=(1, 3))
        masks[i] = cover >= 0.5
    return ToyDataset(seed, mode, images, labels, masks if mode == "seg" else None)


def center_row_detector(images: np.ndarray, threshold: float = 0.35) -> np.ndarray:
    """Predict class 0 (stripe) when the central eight rows are bright on average."""
    center = images[:, 12:20].mean(axis=(1, 2, 3))
    return np.where(center > threshold, 0, 1)
