"""Desk-scale training loop on the synthetic dataset."""

from __future__ import annotations

import dataclasses
import logging
from typing import Optional

import numpy as np

from .backbone import BackboneWeights, backbone_forward, classify_forward, init_weights
from .config import ModelConfig
from .data import ToyDataset
from .errors import ConfigError, NumericalError
from .heads import SegHeadWeights, init_seg_head, semantic_fpn_lite_forward
from .optim import AdamW
from .tensor import Tensor, backward, cross_entropy, no_grad, parameters

logger = logging.getLogger(__name__)

FULL_BATCH_LIMIT = 64
DEFAULT_BATCH = 8


@dataclasses.dataclass(frozen=True)
class LogEntry:
    step: int
    loss: float
    accuracy: float


@dataclasses.dataclass
class TrainResult:
    config: ModelConfig
    weights: BackboneWeights
    head: Optional[SegHeadWeights]
    log: list[LogEntry]
    final_loss: float
    final_accuracy: float

    def smoothed_losses(self, alpha: float = 0.1) -> list[float]:
        out, ema = [], None
        for entry in self.log:
            ema = entry.loss if ema is None else (1 - alpha) * ema + alpha * entry.loss
            out.append(ema)
        return out


def _forward(images: np.ndarray, mode, config, weights, head, dtype) -> Tensor:
    x = Tensor(images, dtype=dtype)
    if mode == "cls":
        return classify_forward(x, config, weights)
    return semantic_fpn_lite_forward(backbone_forward(x, config, weights), head)


def evaluate(dataset: ToyDataset, config, weights, head=None, dtype=np.float32) -> tuple[float, float]:
    """(mean loss, accuracy) over the whole dataset; pixel accuracy in seg mode."""
    with no_grad():
        logits = _forward(dataset.images, dataset.mode, config, weights, head, dtype)
        targets = dataset.targets
        loss = float(cross_entropy(logits, targets).data)
    acc = float(np.mean(logits.data.argmax(-1) == targets))
    return loss, acc


def constant_baseline_loss(dataset: ToyDataset) -> float:
    """Cross-entropy of always predicting the empirical class frequencies."""
    targets = dataset.targets.reshape(-1)
    freq = np.bincount(targets, minlength=2) / targets.size
    freq = freq[freq > 0]
    return float(-(freq * np.log(freq)).sum())


def train_toy(
    config: ModelConfig,
    dataset: ToyDataset,
    steps: int = 300,
    lr: float = 1e-3,
    seed: int = 0,
    mode: Optional[str] = None,
    batch_size: Optional[int] = None,
    weight_decay: float = 5e-2,
    dtype=np.float32,
    head_width: int = 32,
) -> TrainResult:
    """AdamW on cross-entropy. Datasets of at most 64 samples train full-batch by default."""
    mode = mode or dataset.mode
    if mode != dataset.mode:
        raise ConfigError(f"model mode {mode!r} does not match dataset mode {dataset.mode!r}")
    num_classes = 2
    if mode == "cls" and config.num_classes != num_classes:
        config = config.replace(num_classes=num_classes)
    weights = init_weights(config, seed, dtype)
    head = init_seg_head(config, num_classes, head_width, seed + 1, dtype) if mode == "seg" else None
    params = parameters(weights) + (parameters(head) if head is not None else [])
    for p in params:
        p.requires_grad = True
    opt = AdamW(params, lr=lr, weight_decay=weight_decay)

    n = len(dataset)
    if batch_size is None:
        batch_size = n if n <= FULL_BATCH_LIMIT else DEFAULT_BATCH
    rng = np.random.default_rng(seed)
    order = np.arange(n)
    cursor = n
    log: list[LogEntry] = []
    for step in range(steps):
        if batch_size >= n:
            idx = order
        else:
            if cursor + batch_size > n:
                order, cursor = rng.permutation(n), 0
            idx = order[cursor : cursor + batch_size]
            cursor += batch_size
        targets = dataset.targets[idx]
        opt.zero_grad()
        logits = _forward(dataset.images[idx], mode, config, weights, head, dtype)
        loss = cross_entropy(logits, targets)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericalError(f"loss became {value} at step {step}; lower the learning rate")
        backward(loss)
        opt.step()
        acc = float(np.mean(logits.data.argmax(-1) == targets))
        log.append(LogEntry(step, value, acc))
        if step % 50 == 0:
            logger.info("step %d loss %.4f acc %.3f", step, value, acc)

    final_loss, final_acc = evaluate(dataset, config, weights, head, dtype)
    return TrainResult(config, weights, head, log, final_loss, final_acc)
