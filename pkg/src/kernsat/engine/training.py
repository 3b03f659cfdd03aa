"""Training and evaluation loops."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..data import LabeledDataset, batches, normalize
from . import functional as F
from .network import Network
from .optim import AdamState, adam_step


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, detail: str = ""):
        self.epoch, self.batch = epoch, batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}{': ' + detail if detail else ''}")


class ProvenanceError(ValueError):
    """Raised when an evaluation set contains negated images."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    batch_size: int = 128
    lr: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class LossRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    val_accuracy: float | None


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1, np.uint64)[0])


def _loss_and_accuracy(network: Network, dataset: LabeledDataset, batch_size: int = 256):
    total_loss = 0.0
    correct = 0
    for x, y in batches(dataset, batch_size, shuffle=False):
        logits = network.forward(x)
        loss, _ = F.softmax_cross_entropy(logits, y)
        total_loss += loss * len(y)
        correct += int(np.count_nonzero(logits.argmax(axis=1) == y))
    return total_loss / len(dataset), 100.0 * correct / len(dataset)


def train(
    network: Network,
    train_set: LabeledDataset,
    val_set: LabeledDataset | None,
    config: TrainConfig,
    on_epoch: Callable[[int, Network, LossRecord | None], None] | None = None,
) -> tuple[list[LossRecord], Network]:
    """Run ADAM over ``config.epochs`` epochs.

    ``on_epoch`` is called once with epoch 0 before any update and then after
    every epoch with that epoch's record.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    state = AdamState(lr=config.lr)
    params = network.parameters()
    if on_epoch is not None:
        on_epoch(0, network, None)
    records = []
    for epoch in range(1, config.epochs + 1):
        seen = 0
        running = 0.0
        for b, (x, y) in enumerate(batches(train_set, config.batch_size, epoch_seed(config.seed, epoch))):
            loss = network.loss_and_grads(x, y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, b)
            adam_step(params, network.gradients(), state)
            running += loss * len(y)
            seen += len(y)
        if val_set is not None and len(val_set):
            vloss, vacc = _loss_and_accuracy(network, val_set)
        else:
            vloss = vacc = None
        rec = LossRecord(epoch, running / seen, vloss, vacc)
        records.append(rec)
        if on_epoch is not None:
            on_epoch(epoch, network, rec)
    return records, network


def evaluate(network: Network, test_set: LabeledDataset, allow_negative: bool = False) -> float:
    """Top-1 accuracy in percent.

    Refuses sets that contain negated images unless ``allow_negative``;
    reported accuracies always refer to the unmodified test images.
    """
    if len(test_set) == 0:
        raise ValueError("test set is empty")
    if not allow_negative and test_set.negative.any():
        raise ProvenanceError(
            f"{int(test_set.negative.sum())} negated images in the evaluation set"
        )
    return _loss_and_accuracy(network, test_set)[1]


def predict_labels(network: Network, images: np.ndarray) -> np.ndarray:
    return network.predict(normalize(images)).argmax(axis=1)
