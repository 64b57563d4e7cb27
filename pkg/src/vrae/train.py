"""Mini-batch MSE training for VRAE-k / AE-k."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .data import DegradationConfig, ManifestRecord, degrade, load_record
from .model import VraeConfig, VraeNetwork, build_network
from .nn.functional import mse_loss
from .nn.optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class ImageSource(Protocol):
    def __len__(self) -> int: ...

    def clean(self, i: int) -> np.ndarray: ...

    def key(self, i: int) -> str: ...


class ArraySource:
    """In-memory clean images, each (3, h, w) or (1, 3, h, w)."""

    def __init__(self, images: Sequence[np.ndarray], keys: Sequence[str] | None = None):
        self.images = [np.asarray(im, dtype=np.float32).reshape(3, *np.shape(im)[-2:]) for im in images]
        self.keys = list(keys) if keys is not None else [f"img{i}" for i in range(len(self.images))]

    def __len__(self):
        return len(self.images)

    def clean(self, i):
        return self.images[i]

    def key(self, i):
        return self.keys[i]


class ManifestSource:
    def __init__(self, records: Sequence[ManifestRecord], root: str | Path = ".", size: int = 256):
        self.records, self.root, self.size = list(records), Path(root), size

    def __len__(self):
        return len(self.records)

    def clean(self, i):
        return load_record(self.records[i], self.root, self.size)[0]

    def key(self, i):
        return self.records[i].key


def make_batch(source: ImageSource, indices: Sequence[int],
               degradation: DegradationConfig) -> tuple[np.ndarray, np.ndarray]:
    """(degraded, clean) stacked to (b, 3, h, w); noise is keyed by image id."""
    clean = np.stack([source.clean(i) for i in indices]).astype(np.float32)
    degraded = np.stack([degrade(clean[j], degradation, key=source.key(i)) for j, i in enumerate(indices)])
    return degraded, clean


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


@dataclass
class TrainConfig:
    model: VraeConfig = field(default_factory=VraeConfig)
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-4
    seed: int = 0
    eval_every: int = 1
    checkpoint_path: str | Path | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class EpochLog:
    epoch: int
    train_mse: float
    val_mse: float | None = None


@dataclass
class TrainResult:
    network: VraeNetwork
    checkpoint: Checkpoint
    epochs: list[EpochLog]
    step_losses: list[float]
    best_val: float | None = None


def loss_log_csv(epochs: Sequence[EpochLog]) -> str:
    lines = ["epoch,train_mse,val_mse"]
    for e in epochs:
        val = "" if e.val_mse is None else repr(e.val_mse)
        lines.append(f"{e.epoch},{e.train_mse!r},{val}")
    return "\n".join(lines) + "\n"


def validation_mse(net: VraeNetwork, source: ImageSource, degradation: DegradationConfig,
                   batch_size: int = 16) -> float:
    total, count = 0.0, 0
    for start in range(0, len(source), batch_size):
        idx = list(range(start, min(start + batch_size, len(source))))
        x, y = make_batch(source, idx, degradation)
        loss, _ = mse_loss(net(x, train=False), y)
        total += loss * len(idx)
        count += len(idx)
    return total / count


def train(config: TrainConfig, train_set: ImageSource, degradation: DegradationConfig = DegradationConfig(),
          val_set: ImageSource | None = None, network: VraeNetwork | None = None) -> TrainResult:
    if len(train_set) == 0:
        raise ValueError("training split is empty")
    net = network if network is not None else build_network(config.model, seed=config.seed)
    params = net.parameters()
    adam = AdamState(lr=config.lr)
    extra = {"degradation": degradation.to_dict(), "batch_size": config.batch_size, "lr": config.lr}
    ckpt_path = Path(config.checkpoint_path) if config.checkpoint_path else None
    best_path = ckpt_path.with_name(ckpt_path.stem + ".best" + ckpt_path.suffix) if ckpt_path else None

    history: list[EpochLog] = []
    step_losses: list[float] = []
    best_val = None
    n = len(train_set)
    batch_index = 0
    for epoch in range(1, config.epochs + 1):
        order = epoch_order(config.seed, epoch, n)
        epoch_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x, y = make_batch(train_set, idx, degradation)
            pred, backward = net.forward_backward(x, train=True)
            loss, g = mse_loss(pred, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}, batch {batch_index}")
            grads = backward(g)
            adam_step(params, grads, adam)
            step_losses.append(loss)
            epoch_sum += loss * len(idx)
            batch_index += 1
        entry = EpochLog(epoch, epoch_sum / n)
        if val_set is not None and len(val_set) and config.eval_every and epoch % config.eval_every == 0:
            entry.val_mse = validation_mse(net, val_set, degradation, config.batch_size)
            if best_val is None or entry.val_mse < best_val:
                best_val = entry.val_mse
                if best_path is not None:
                    save_checkpoint(Checkpoint.from_network(net, adam, adam.step, config.seed, extra), best_path)
        history.append(entry)
        log.info("epoch %d train_mse %.6f val_mse %s", epoch, entry.train_mse, entry.val_mse)

    ckpt = Checkpoint.from_network(net, adam, adam.step, config.seed, extra)
    if ckpt_path is not None:
        save_checkpoint(ckpt, ckpt_path)
    return TrainResult(net, ckpt, history, step_losses, best_val)
