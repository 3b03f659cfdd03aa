"""Image containers, dataset readers/writers, normalization, splitting and batching.

All images are held channel-major, row-major (``C x H x W``) as unsigned
8-bit values. STL-10 stores its pixels column-major and is transposed at
load time, so every downstream consumer sees a single layout.
"""
from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

ORIGINAL = False
NEGATIVE = True

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
STL_SIDE = 96
STL_RECORD = 3 * STL_SIDE * STL_SIDE

DATA_DIR_ENV = "KERNSAT_DATA_DIR"


class DatasetFormatError(ValueError):
    """Raised when a dataset file does not match its binary layout."""


@dataclass(frozen=True)
class ImageU8:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise TypeError(f"ImageU8 needs uint8 data, got {arr.dtype}")
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValueError(f"expected (C, H, W) image, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ImageF32:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"expected (C, H, W) image, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class LabeledDataset:
    """Images ``(n, C, H, W)`` uint8 with one label and one provenance flag each.

    ``negative[i]`` is True when image ``i`` was produced by negation.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int = 10
    negative: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (n, C, H, W), got {self.images.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.labels) != len(self.images):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.negative is None:
            self.negative = np.zeros(len(self.labels), dtype=bool)
        else:
            self.negative = np.asarray(self.negative, dtype=bool).reshape(-1)
            if len(self.negative) != len(self.labels):
                raise ValueError("provenance flags and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> tuple[ImageU8, int]:
        return ImageU8(self.images[i]), int(self.labels[i])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            self.images[idx], self.labels[idx], self.num_classes, self.negative[idx], self.name
        )

    def head(self, n: int) -> "LabeledDataset":
        return self.subset(np.arange(min(n, len(self))))

    def image_hashes(self) -> list[str]:
        return [hashlib.blake2b(img.tobytes(), digest_size=16).hexdigest() for img in self.images]

    def content_hash(self) -> str:
        """Digest over shape, pixels, labels and provenance."""
        h = hashlib.blake2b(digest_size=16)
        h.update(struct.pack("<5q", len(self), *self.image_shape, self.num_classes))
        h.update(self.images.tobytes())
        h.update(self.labels.astype("<i8").tobytes())
        h.update(self.negative.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


# --------------------------------------------------------------------------- readers


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, path) -> np.ndarray:
    if len(raw) < 8:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DatasetFormatError(
            f"{path}: bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DatasetFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header != size:
        raise DatasetFormatError(
            f"{path}: payload is {len(raw) - header} bytes, header announces {size}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist(image_path, label_path) -> LabeledDataset:
    """Read an IDX image/label file pair (optionally gzipped)."""
    images = _parse_idx(_read_bytes(image_path), IDX_IMAGES_MAGIC, image_path)
    labels = _parse_idx(_read_bytes(label_path), IDX_LABELS_MAGIC, label_path)
    if len(images) != len(labels):
        raise DatasetFormatError(
            f"count mismatch: {len(images)} images in {image_path}, {len(labels)} labels in {label_path}"
        )
    if len(labels) and labels.max() > 9:
        raise DatasetFormatError(f"{label_path}: label {labels.max()} out of range 0-9")
    return LabeledDataset(images[:, None, :, :], labels, 10, name="mnist")


def _parse_cifar(raw: bytes, path) -> tuple[np.ndarray, np.ndarray]:
    if len(raw) % CIFAR_RECORD:
        raise DatasetFormatError(
            f"{path}: size {len(raw)} is not a multiple of the {CIFAR_RECORD}-byte record"
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0]
    if len(labels) and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DatasetFormatError(f"{path}: record {bad} has label byte {labels[bad]} > 9")
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


CIFAR_FILES = {
    "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "test": ["test_batch.bin"],
}


def _cifar_dir(directory: Path) -> Path:
    nested = directory / "cifar-10-batches-bin"
    return nested if nested.is_dir() else directory


def load_cifar10(directory, split: str = "train") -> LabeledDataset:
    """Read the CIFAR-10 binary batches (``data_batch_*.bin`` / ``test_batch.bin``)."""
    if split not in CIFAR_FILES:
        raise ValueError(f"unknown split {split!r}")
    d = _cifar_dir(Path(directory))
    parts = []
    for fname in CIFAR_FILES[split]:
        path = d / fname
        if not path.is_file():
            raise FileNotFoundError(f"missing CIFAR-10 batch file {path}")
        parts.append(_parse_cifar(path.read_bytes(), path))
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    return LabeledDataset(images, labels, 10, name="cifar10")


def load_cifar10_file(path) -> LabeledDataset:
    images, labels = _parse_cifar(Path(path).read_bytes(), path)
    return LabeledDataset(images, labels, 10, name="cifar10")


def _stl_dir(directory: Path) -> Path:
    nested = directory / "stl10_binary"
    return nested if nested.is_dir() else directory


def load_stl10(directory, split: str = "train") -> LabeledDataset:
    """Read ``{split}_X.bin`` / ``{split}_y.bin``.

    Source labels are 1-10 on disk and come back as 0-9.
    """
    d = _stl_dir(Path(directory))
    xpath, ypath = d / f"{split}_X.bin", d / f"{split}_y.bin"
    if not xpath.is_file():
        raise FileNotFoundError(f"missing STL-10 image file {xpath}")
    if not ypath.is_file():
        raise FileNotFoundError(f"missing STL-10 label file {ypath}")
    raw = xpath.read_bytes()
    if len(raw) % STL_RECORD:
        raise DatasetFormatError(
            f"{xpath}: size {len(raw)} is not a multiple of {STL_RECORD}"
        )
    # column-major within each channel: stored index is col * 96 + row
    images = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3, STL_SIDE, STL_SIDE)
    images = images.transpose(0, 1, 3, 2)
    labels = np.frombuffer(ypath.read_bytes(), dtype=np.uint8).astype(np.int64)
    if len(labels) != len(images):
        raise DatasetFormatError(f"{len(images)} images but {len(labels)} labels in {ypath}")
    if len(labels) and (labels.min() < 1 or labels.max() > 10):
        bad = labels[(labels < 1) | (labels > 10)][0]
        raise DatasetFormatError(f"{ypath}: label value {bad} outside 1-10")
    return LabeledDataset(images, labels - 1, 10, name="stl10")


# --------------------------------------------------------------------------- writers


def write_idx(dataset: LabeledDataset, image_path, label_path) -> None:
    n, c, h, w = dataset.images.shape
    if c != 1:
        raise ValueError("IDX output supports single-channel images only")
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(dataset.images.tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def cifar_records(dataset: LabeledDataset) -> bytes:
    if dataset.image_shape != (3, 32, 32):
        raise ValueError(f"CIFAR records need 3x32x32 images, got {dataset.image_shape}")
    rec = np.empty((len(dataset), CIFAR_RECORD), dtype=np.uint8)
    rec[:, 0] = dataset.labels
    rec[:, 1:] = dataset.images.reshape(len(dataset), -1)
    return rec.tobytes()


def write_cifar10(dataset: LabeledDataset, path) -> None:
    Path(path).write_bytes(cifar_records(dataset))


def write_stl10(dataset: LabeledDataset, directory, split: str = "train") -> None:
    if dataset.image_shape != (3, STL_SIDE, STL_SIDE):
        raise ValueError(f"STL-10 records need 3x96x96 images, got {dataset.image_shape}")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{split}_X.bin").write_bytes(
        np.ascontiguousarray(dataset.images.transpose(0, 1, 3, 2)).tobytes()
    )
    (d / f"{split}_y.bin").write_bytes((dataset.labels + 1).astype(np.uint8).tobytes())


# --------------------------------------------------------------------------- resolution

DATASETS = ("mnist", "cifar10", "stl10")


def data_root(flag=None) -> Path:
    root = flag or os.environ.get(DATA_DIR_ENV)
    if not root:
        raise FileNotFoundError(
            f"no dataset root given; pass --data-dir or set {DATA_DIR_ENV}"
        )
    return Path(root)


def _mnist_files(root: Path, split: str) -> tuple[Path, Path]:
    prefix = "train" if split == "train" else "t10k"
    for d in (root / "mnist", root / "MNIST" / "raw", root):
        for suffix in ("", ".gz"):
            img = d / f"{prefix}-images-idx3-ubyte{suffix}"
            lab = d / f"{prefix}-labels-idx1-ubyte{suffix}"
            if img.is_file() and lab.is_file():
                return img, lab
    raise FileNotFoundError(f"MNIST {split} files not found under {root}")


def load_dataset(name: str, split: str = "train", root=None) -> LabeledDataset:
    """Resolve ``name`` under the dataset root and load one split."""
    root = data_root(root)
    if name == "mnist":
        return load_mnist(*_mnist_files(root, split))
    if name == "cifar10":
        return load_cifar10(root, split)
    if name == "stl10":
        return load_stl10(root, split)
    raise ValueError(f"unknown dataset {name!r}; expected one of {DATASETS}")


# --------------------------------------------------------------------------- transforms


def normalize(image: ImageU8 | np.ndarray) -> ImageF32 | np.ndarray:
    """Map 8-bit values to ``[0, 1]`` by dividing by 255.

    Accepts a single :class:`ImageU8` or a raw uint8 array of any shape
    (returned as a float32 array).
    """
    if isinstance(image, ImageU8):
        return ImageF32(image.data.astype(np.float32) / np.float32(255.0))
    return np.asarray(image).astype(np.float32) / np.float32(255.0)


def split(dataset: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(np.floor(spec.train_fraction * n + 0.5))
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


def batch_order(n: int, seed: int, shuffle: bool) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng(seed).permutation(n)


def batches(
    dataset: LabeledDataset, batch_size: int, seed: int = 0, shuffle: bool = True
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(float32 images in [0, 1], labels)`` covering the dataset once."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = batch_order(len(dataset), seed, shuffle)
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield normalize(dataset.images[idx]), dataset.labels[idx]
