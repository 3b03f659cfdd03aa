"""Image information measures: Hartley capacity, histogram entropy and SNR.

Everything here operates on raw 8-bit pixel values (0-255), never on
normalized floats.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .data import ImageU8, LabeledDataset

# Published reference values for the three benchmark datasets (raw, then negated).
REFERENCE = {
    "cifar10": {"me_bits": 6.850, "snr": 2.39, "negated_me_bits": 6.850, "negated_snr": 2.73},
    "stl10": {"me_bits": 6.907, "snr": 1.99, "negated_me_bits": 6.907, "negated_snr": 2.66},
    "mnist": {"me_bits": 3.139, "snr": 0.44, "negated_me_bits": 3.452, "negated_snr": 3.02},
}


class DegenerateSignalError(ValueError):
    """Pixel values have zero spread, so SNR is undefined."""


class Pooling(str, enum.Enum):
    PER_IMAGE_MEAN = "per-image"
    GLOBAL_FLATTEN = "global"

    @classmethod
    def parse(cls, value) -> "Pooling":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        aliases = {
            "per-image": cls.PER_IMAGE_MEAN, "perimagemean": cls.PER_IMAGE_MEAN,
            "per-image-mean": cls.PER_IMAGE_MEAN, "global": cls.GLOBAL_FLATTEN,
            "globalflatten": cls.GLOBAL_FLATTEN, "global-flatten": cls.GLOBAL_FLATTEN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown pooling {value!r}") from None


def _pixels(image) -> np.ndarray:
    if isinstance(image, ImageU8):
        return image.data
    return np.asarray(image)


def hartley_capacity(num_symbols: int, num_choices: int) -> float:
    """``num_choices * log2(num_symbols)`` bits, i.e. ``log2(s ** i)`` without overflow."""
    if num_symbols < 1:
        raise ValueError(f"number of distinct symbols must be >= 1, got {num_symbols}")
    if num_choices < 1:
        raise ValueError(f"number of choices must be >= 1, got {num_choices}")
    return num_choices * math.log2(num_symbols)


def _entropy_from_counts(counts: np.ndarray) -> np.ndarray:
    """Shannon entropy (bits) along the last axis of a count array."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
    logp = np.log2(p, out=np.zeros_like(p), where=p > 0)
    # summing in sorted order makes the result exactly invariant to bin permutations
    # (negation reverses the histogram); +0.0 folds -0.0 into 0.0
    return -np.sort(p * logp, axis=-1).sum(axis=-1) + 0.0


def channel_entropies(images: np.ndarray) -> np.ndarray:
    """Per-image, per-channel histogram entropy for ``(n, C, H, W)`` uint8 images."""
    imgs = np.asarray(images, dtype=np.uint8)
    n, c = imgs.shape[:2]
    hist = kernels.channel_histograms(imgs.reshape(n, c, -1))
    return _entropy_from_counts(hist)


def image_entropy(image) -> float:
    """Mean over channels of the 256-bin histogram entropy, in bits."""
    px = _pixels(image)
    if px.ndim == 2:
        px = px[None]
    return float(channel_entropies(px[None])[0].mean())


def local_disk_entropy(image, radius: int | None = None) -> float:
    """Mean over pixels and channels of the local entropy inside a disk footprint.

    ``radius`` defaults to the image side. Requires scikit-image.
    """
    from skimage.filters.rank import entropy
    from skimage.morphology import disk

    px = _pixels(image)
    if px.ndim == 2:
        px = px[None]
    r = radius if radius is not None else max(px.shape[1:])
    fp = disk(r)
    return float(np.mean([entropy(ch, fp).mean() for ch in px]))


def _require_nonempty(dataset: LabeledDataset):
    if len(dataset) == 0:
        raise ValueError("dataset is empty")


def dataset_me(dataset: LabeledDataset, method: str = "histogram") -> float:
    """Dataset-averaged entropy; ``method`` is ``histogram`` or ``disk``."""
    _require_nonempty(dataset)
    if method == "histogram":
        return float(np.mean(_chunked_entropies(dataset.images).mean(axis=1)))
    if method == "disk":
        return float(np.mean([local_disk_entropy(img) for img in dataset.images]))
    raise ValueError(f"unknown entropy method {method!r}")


def signal_mean(image) -> float:
    return float(np.mean(_pixels(image), dtype=np.float64))


def noise_std(image) -> float:
    """Population standard deviation (divisor n) about the pixel mean."""
    return float(np.std(_pixels(image), dtype=np.float64))


def _snr(mean: float, std: float) -> float:
    if std <= 0.0:
        raise DegenerateSignalError("zero pixel standard deviation: SNR undefined")
    return mean / std


def image_snr(image) -> float:
    return _snr(signal_mean(image), noise_std(image))


_CHUNK = 4096


def _chunked_entropies(images: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [channel_entropies(images[s:s + _CHUNK]) for s in range(0, len(images), _CHUNK)]
    )


def _per_image_moments(images: np.ndarray, axes) -> tuple[np.ndarray, np.ndarray]:
    means, stds = [], []
    for s in range(0, len(images), _CHUNK):
        block = images[s:s + _CHUNK].astype(np.float64)
        m = block.mean(axis=axes)
        means.append(m)
        stds.append(np.sqrt(((block - np.expand_dims(m, axes)) ** 2).mean(axis=axes)))
    return np.concatenate(means), np.concatenate(stds)


def _global_moments(images: np.ndarray, channel: int | None = None) -> tuple[float, float]:
    # exact integer sums: deterministic and free of accumulation error
    px = images if channel is None else images[:, channel]
    n = px.size
    s1 = s2 = 0
    for s in range(0, len(px), _CHUNK):
        block = px[s:s + _CHUNK].astype(np.int64)
        s1 += int(block.sum())
        s2 += int((block * block).sum())
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    return mean, math.sqrt(var)


def dataset_snr(dataset: LabeledDataset, pooling=Pooling.PER_IMAGE_MEAN) -> float:
    """SNR pooled over a dataset.

    ``per-image`` averages each image's SNR; ``global`` computes a single SNR
    over every pixel of every image.
    """
    _require_nonempty(dataset)
    pooling = Pooling.parse(pooling)
    if pooling is Pooling.GLOBAL_FLATTEN:
        return _snr(*_global_moments(dataset.images))
    means, stds = _per_image_moments(dataset.images, (1, 2, 3))
    if np.any(stds <= 0):
        bad = int(np.argmax(stds <= 0))
        raise DegenerateSignalError(f"image {bad} is constant: SNR undefined")
    return float(np.mean(means / stds))


@dataclass
class ChannelMetrics:
    me_bits: float
    snr: float | None
    mean_signal: float
    noise_std: float


@dataclass
class MetricsReport:
    me_bits: float
    snr: float | None
    mean_signal: float
    noise_std: float
    pooling: str
    num_images: int = 0
    per_channel: list[ChannelMetrics] = field(default_factory=list)
    dataset: str = ""
    negated: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [("aggregate", self.me_bits, self.snr, self.mean_signal, self.noise_std)]
        rows += [
            (f"channel {i}", c.me_bits, c.snr, c.mean_signal, c.noise_std)
            for i, c in enumerate(self.per_channel)
        ]
        fmt = "{:<12}{:>10}{:>10}{:>12}{:>12}"
        out = [
            f"dataset={self.dataset or '-'} negated={self.negated} pooling={self.pooling} images={self.num_images}",
            fmt.format("", "ME bits", "SNR", "mean", "sigma"),
        ]
        for name, me, snr, mu, sd in rows:
            out.append(fmt.format(
                name, f"{me:.4f}", "n/a" if snr is None else f"{snr:.4f}", f"{mu:.4f}", f"{sd:.4f}"
            ))
        out.extend(f"note: {n}" for n in self.notes)
        return "\n".join(out)


def _safe_ratio(mean: float, std: float) -> float | None:
    return mean / std if std > 0 else None


def metrics_report(dataset: LabeledDataset, pooling=Pooling.PER_IMAGE_MEAN) -> MetricsReport:
    """ME, SNR, mean and sigma for a dataset plus the same per channel.

    With per-image pooling, ``mean_signal`` / ``noise_std`` are the averages
    of the per-image values and ``snr`` is the average per-image ratio, so the
    ratio identity holds per image rather than between the pooled fields.
    """
    _require_nonempty(dataset)
    pooling = Pooling.parse(pooling)
    imgs = dataset.images
    ent = _chunked_entropies(imgs)  # (n, C)
    channels = imgs.shape[1]
    per_channel = []
    if pooling is Pooling.GLOBAL_FLATTEN:
        mean, std = _global_moments(imgs)
        snr = _safe_ratio(mean, std)
        for c in range(channels):
            cm, cs = _global_moments(imgs, c)
            per_channel.append(ChannelMetrics(float(ent[:, c].mean()), _safe_ratio(cm, cs), cm, cs))
    else:
        means, stds = _per_image_moments(imgs, (1, 2, 3))
        snr = float(np.mean(means / stds)) if np.all(stds > 0) else None
        mean, std = float(means.mean()), float(stds.mean())
        cmeans, cstds = _per_image_moments(imgs, (2, 3))  # (n, C)
        for c in range(channels):
            ok = np.all(cstds[:, c] > 0)
            per_channel.append(ChannelMetrics(
                float(ent[:, c].mean()),
                float(np.mean(cmeans[:, c] / cstds[:, c])) if ok else None,
                float(cmeans[:, c].mean()),
                float(cstds[:, c].mean()),
            ))
    notes = []
    if snr is None:
        notes.append("SNR undefined: at least one constant image (zero sigma)")
    return MetricsReport(
        me_bits=float(ent.mean(axis=1).mean()),
        snr=snr,
        mean_signal=float(mean),
        noise_std=float(std),
        pooling=pooling.value,
        num_images=len(dataset),
        per_channel=per_channel,
        dataset=dataset.name,
        negated=bool(dataset.negative.all()),
        notes=notes,
    )


def reference_notes(name: str, negated: bool) -> list[str]:
    """Comments comparing a report against the published reference values."""
    ref = REFERENCE.get(name)
    if ref is None:
        return []
    notes = []
    if ref["me_bits"] != ref["negated_me_bits"]:
        notes.append(
            f"reference ME for {name} differs between original ({ref['me_bits']}) and negated "
            f"({ref['negated_me_bits']}) data; histogram entropy is exactly invariant under "
            "negation, so both are reported equal here"
        )
    key = "negated_" if negated else ""
    notes.append(f"reference values: ME {ref[key + 'me_bits']} bits, SNR {ref[key + 'snr']}")
    return notes
