"""Kernel snapshots, weight-update statistics and PGM/PPM rendering."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import ImageU8, normalize
from .engine.checkpoint import KIND_SNAPSHOT, encode, read_parameter_file
from .engine.network import Network

DEFAULT_EPS = 1e-7
MID_GRAY = 128


@dataclass(frozen=True)
class KernelSnapshot:
    epoch: int
    layer: str
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, copy=True)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class LayerSaturation:
    layer: str
    epochs: tuple[int, int]
    mean_abs_delta: float
    max_abs_delta: float
    saturated_fraction: float
    eps: float


@dataclass
class SaturationReport:
    layers: list[LayerSaturation] = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        return [asdict(r) for r in self.layers]


def snapshot_kernels(network: Network, epoch: int) -> list[KernelSnapshot]:
    """Deep copies of every convolution kernel tensor, in forward order."""
    return [KernelSnapshot(epoch, name, layer.weight) for name, layer in network.conv_layers().items()]


def delta_stats(a: KernelSnapshot, b: KernelSnapshot, eps: float = DEFAULT_EPS) -> LayerSaturation:
    """``|w_b - w_a|`` statistics; the saturated share counts entries strictly below ``eps``."""
    if a.layer != b.layer:
        raise ValueError(f"layer mismatch: {a.layer!r} vs {b.layer!r}")
    if a.weights.shape != b.weights.shape:
        raise ValueError(f"shape mismatch for {a.layer}: {a.weights.shape} vs {b.weights.shape}")
    d = np.abs(b.weights.astype(np.float64) - a.weights.astype(np.float64))
    return LayerSaturation(
        layer=a.layer,
        epochs=(min(a.epoch, b.epoch), max(a.epoch, b.epoch)),
        mean_abs_delta=float(d.mean()) if d.size else 0.0,
        max_abs_delta=float(d.max()) if d.size else 0.0,
        saturated_fraction=float(np.count_nonzero(d < eps) / d.size) if d.size else 1.0,
        eps=eps,
    )


def saturation_report(before: list[KernelSnapshot], after: list[KernelSnapshot],
                      eps: float = DEFAULT_EPS) -> SaturationReport:
    if len(before) != len(after):
        raise ValueError("snapshot lists cover different layers")
    return SaturationReport([delta_stats(a, b, eps) for a, b in zip(before, after)])


# --------------------------------------------------------------------------- rendering


def encode_pnm(pixels: np.ndarray) -> bytes:
    """Binary P5 for ``(H, W)`` or P6 for ``(H, W, 3)`` uint8 arrays."""
    px = np.ascontiguousarray(pixels, dtype=np.uint8)
    if px.ndim == 2:
        magic = b"P5"
    elif px.ndim == 3 and px.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode array of shape {px.shape} as PGM/PPM")
    h, w = px.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode() + px.tobytes()


def decode_pnm(raw: bytes) -> np.ndarray:
    magic, dims, maxval, body = raw.split(b"\n", 3)
    w, h = (int(v) for v in dims.split())
    if int(maxval) != 255:
        raise ValueError("only 8-bit PNM is supported")
    if magic == b"P5":
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    if magic == b"P6":
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    raise ValueError(f"unsupported PNM magic {magic!r}")


def minmax_u8(tile: np.ndarray) -> np.ndarray:
    """Scale to 0-255 by the tile's own range; a flat tile becomes mid-gray."""
    t = np.asarray(tile, dtype=np.float64)
    lo, hi = t.min(), t.max()
    if hi == lo:
        return np.full(t.shape, MID_GRAY, dtype=np.uint8)
    return np.rint((t - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def grid_shape(count: int) -> tuple[int, int]:
    cols = max(1, math.ceil(math.sqrt(count)))
    return math.ceil(count / cols), cols


def tile(tiles: list[np.ndarray]) -> np.ndarray:
    """Row-major grid of equally sized tiles with 1-pixel black separators."""
    rows, cols = grid_shape(len(tiles))
    th, tw = tiles[0].shape[:2]
    extra = tiles[0].shape[2:]
    out = np.zeros((rows * th + rows - 1, cols * tw + cols - 1, *extra), dtype=np.uint8)
    for i, t in enumerate(tiles):
        r, c = divmod(i, cols)
        out[r * (th + 1):r * (th + 1) + th, c * (tw + 1):c * (tw + 1) + tw] = t
    return out


def kernel_grid(snapshot: KernelSnapshot, color: bool | None = None) -> np.ndarray:
    """Tile every output kernel; RGB from input channels 0-2 when ``color``.

    ``color=None`` picks RGB whenever the layer has at least 3 input channels.
    """
    w = snapshot.weights
    if w.ndim != 4 or w.shape[2] < 1:
        raise ValueError(f"expected (out, in, k, k) kernels, got {w.shape}")
    if color is None:
        color = w.shape[1] >= 3
    if color:
        if w.shape[1] < 3:
            raise ValueError("colour rendering needs at least 3 input channels")
        tiles = [minmax_u8(k[:3].transpose(1, 2, 0)) for k in w]
    else:
        tiles = [minmax_u8(k[0]) for k in w]
    return tile(tiles)


def render_kernel_grid(snapshot: KernelSnapshot, path, color: bool | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_pnm(kernel_grid(snapshot, color)))
    return path


def feature_map_grid(maps: np.ndarray) -> np.ndarray:
    """``(C, H, W)`` feature maps tiled as grayscale, each scaled independently."""
    return tile([minmax_u8(m) for m in maps])


def activation_maps(network: Network, image, layer: str = "final") -> np.ndarray:
    """Forward one image and return the selected layer's ``(C, H, W)`` output.

    ``layer`` is any captured 4-D node (``stem``, ``block2``, ``block1.conv1``...)
    or ``final`` for the last residual stage.
    """
    data = image.data if isinstance(image, ImageU8) else np.asarray(image)
    if data.dtype == np.uint8:
        x = normalize(data)
    else:
        x = data.astype(np.float32)
    network.forward(x[None], capture=True)
    maps = {k: v for k, v in network.captured.items() if v.ndim == 4}
    if layer == "final":
        layer = f"block{len(network.blocks)}" if network.blocks else "stem"
    if layer not in maps:
        raise KeyError(f"unknown layer {layer!r}; choose from {['final', *maps]}")
    return maps[layer][0]


def capture_activation_maps(network: Network, image, layer: str = "final", path=None) -> np.ndarray:
    grid = feature_map_grid(activation_maps(network, image, layer))
    if path is not None:
        Path(path).write_bytes(encode_pnm(grid))
    return grid


# --------------------------------------------------------------------------- persistence


def encode_snapshots(snapshots: list[KernelSnapshot], descriptor: str, seed: int = 0) -> bytes:
    epochs = {s.epoch for s in snapshots}
    if len(epochs) != 1:
        raise ValueError("a snapshot file holds a single epoch")
    blocks = {f"{s.layer}.weight": s.weights for s in snapshots}
    return encode(blocks, descriptor, epochs.pop(), seed, KIND_SNAPSHOT)


def load_snapshots(path) -> list[KernelSnapshot]:
    pf = read_parameter_file(path)
    out = []
    for name, arr in pf.blocks.items():
        if arr.ndim == 4:
            out.append(KernelSnapshot(pf.epoch, name.removesuffix(".weight"), arr))
    return out


class SaturationTracker:
    """Per-epoch observer for :func:`kernsat.engine.train`.

    Snapshots every epoch and compares it with the previous one. Snapshots are
    written to ``out_dir`` (with ``manifest.json``) at epoch 0 and whenever
    validation accuracy improves; with ``render`` a kernel grid of the stem
    is written alongside.
    """

    def __init__(self, out_dir=None, eps: float = DEFAULT_EPS, seed: int = 0, render: bool = True):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.eps = eps
        self.seed = seed
        self.render = render
        self.previous: list[KernelSnapshot] | None = None
        self.history: list[LayerSaturation] = []
        self.manifest: list[dict] = []
        self.best = -math.inf

    def __call__(self, epoch: int, network: Network, record) -> None:
        snaps = snapshot_kernels(network, epoch)
        if self.previous is not None:
            self.history.extend(saturation_report(self.previous, snaps, self.eps).layers)
        self.previous = snaps
        acc = None if record is None else record.val_accuracy
        improved = epoch == 0 or (acc is not None and acc > self.best)
        if acc is not None and acc > self.best:
            self.best = acc
        if improved and self.out_dir is not None:
            self._persist(epoch, network, snaps, acc)

    def _persist(self, epoch, network, snaps, acc):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        fname = f"epoch{epoch:04d}.bin"
        (self.out_dir / fname).write_bytes(encode_snapshots(snaps, network.descriptor, self.seed))
        entry = {"epoch": epoch, "file": fname, "val_accuracy": acc}
        if self.render:
            grid = f"epoch{epoch:04d}_stem.pgm" if snaps[0].weights.shape[1] < 3 else f"epoch{epoch:04d}_stem.ppm"
            render_kernel_grid(snaps[0], self.out_dir / grid)
            entry["grid"] = grid
        self.manifest.append(entry)
        (self.out_dir / "manifest.json").write_text(json.dumps(self.manifest, indent=2) + "\n")
