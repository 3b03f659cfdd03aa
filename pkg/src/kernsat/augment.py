"""Negative images and the three training regimes built from them."""
from __future__ import annotations

import enum

import numpy as np

from .data import ImageU8, LabeledDataset


class AugmentationMode(str, enum.Enum):
    STANDARD = "Standard"
    SUPPLEMENTED = "Supplemented"
    NEGATIVES_ONLY = "NegativesOnly"

    @classmethod
    def parse(cls, value) -> "AugmentationMode":
        if isinstance(value, cls):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for mode in cls:
            if mode.value.lower() == key:
                return mode
        raise ValueError(
            f"unknown augmentation mode {value!r}; expected one of {[m.value for m in cls]}"
        )


def negate_image(image):
    """Bitwise NOT of every 8-bit value (``255 - v``), channels independently.

    Works on :class:`ImageU8` or on any uint8 array.
    """
    if isinstance(image, ImageU8):
        return ImageU8(np.bitwise_not(image.data))
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise TypeError(f"negation is defined on uint8 data, got {arr.dtype}")
    return np.bitwise_not(arr)


def negate_dataset(dataset: LabeledDataset) -> LabeledDataset:
    return LabeledDataset(
        np.bitwise_not(dataset.images),
        dataset.labels.copy(),
        dataset.num_classes,
        np.ones(len(dataset), dtype=bool),
        dataset.name,
    )


def build_training_set(dataset: LabeledDataset, mode) -> LabeledDataset:
    mode = AugmentationMode.parse(mode)
    if mode is AugmentationMode.STANDARD:
        return dataset.subset(np.arange(len(dataset)))
    negatives = negate_dataset(dataset)
    if mode is AugmentationMode.NEGATIVES_ONLY:
        return negatives
    # originals first, then negatives; presentation order comes from the epoch shuffle
    return LabeledDataset(
        np.concatenate([dataset.images, negatives.images]),
        np.concatenate([dataset.labels, negatives.labels]),
        dataset.num_classes,
        np.concatenate([dataset.negative, negatives.negative]),
        dataset.name,
    )
