"""Deterministic parameter initialization."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

INIT_STD = 0.02
# Truncation at 3 std keeps the sample std within ~1.5% of INIT_STD.
TRUNC_SIGMAS = 3.0


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD, dtype=np.float32) -> Tensor:
    limit = TRUNC_SIGMAS * std
    values = rng.normal(0.0, std, size=shape)
    bad = np.abs(values) > limit
    while bad.any():
        values[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(values) > limit
    return Tensor(values, dtype=dtype)


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape), dtype=dtype)


def ones(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape), dtype=dtype)
