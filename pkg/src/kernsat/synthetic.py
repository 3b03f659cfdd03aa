"""Deterministic toy image sets for smoke runs and tests."""
from __future__ import annotations

import numpy as np

from .data import LabeledDataset


def make_blobs(n: int = 200, num_classes: int = 2, channels: int = 1, size: int = 8,
               seed: int = 0, contrast: float = 110.0, noise: float = 25.0) -> LabeledDataset:
    """Class ``c`` brightens the ``c``-th vertical band of the image.

    Linearly separable for moderate noise; labels are balanced round-robin.
    """
    if num_classes < 2 or num_classes > size:
        raise ValueError("need 2 <= num_classes <= size")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    img = rng.normal(60.0, noise, size=(n, channels, size, size))
    bounds = np.linspace(0, size, num_classes + 1).astype(int)
    for c in range(num_classes):
        img[labels == c, :, :, bounds[c]:bounds[c + 1]] += contrast
    return LabeledDataset(np.clip(np.rint(img), 0, 255).astype(np.uint8), labels, num_classes, name="blobs")
