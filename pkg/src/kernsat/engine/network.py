"""Small residual CNN: stem conv -> residual stages -> global average pool -> dense."""
from __future__ import annotations

import copy
import re
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .layers import Conv2D, Dense, ResidualBlock

_DESC = re.compile(
    r"^rescnn:in=(?P<inc>\d+),stem=(?P<stem>\d+)x(?P<k>\d+),"
    r"blocks=(?P<blocks>[\d/]*),classes=(?P<cls>\d+)$"
)


@dataclass(frozen=True)
class Architecture:
    """Layer sizes; the first stage keeps resolution, later stages use stride 2."""

    in_channels: int = 3
    stem_width: int = 16
    widths: tuple[int, ...] = (16, 32, 64)
    num_classes: int = 10
    stem_kernel: int = 3

    @property
    def descriptor(self) -> str:
        blocks = "/".join(str(w) for w in self.widths)
        return (f"rescnn:in={self.in_channels},stem={self.stem_width}x{self.stem_kernel},"
                f"blocks={blocks},classes={self.num_classes}")

    @classmethod
    def parse(cls, descriptor: str) -> "Architecture":
        m = _DESC.match(descriptor.strip())
        if not m:
            raise ValueError(f"bad architecture descriptor {descriptor!r}")
        widths = tuple(int(w) for w in m["blocks"].split("/") if w)
        return cls(int(m["inc"]), int(m["stem"]), widths, int(m["cls"]), int(m["k"]))


class Network:
    def __init__(self, arch: Architecture = Architecture(), seed: int = 0, dtype=np.float32):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        k = arch.stem_kernel
        self.stem = Conv2D(arch.in_channels, arch.stem_width, k, 1, k // 2, rng, dtype)
        self.blocks = []
        prev = arch.stem_width
        for i, width in enumerate(arch.widths):
            self.blocks.append(ResidualBlock(prev, width, 1 if i == 0 else 2, rng, dtype))
            prev = width
        self.dense = Dense(prev, arch.num_classes, rng, dtype)
        self._stem_mask = None
        self._pool_shape = None
        self.captured: dict[str, np.ndarray] = {}

    @property
    def descriptor(self) -> str:
        return self.arch.descriptor

    # ---------------------------------------------------------------- passes

    def forward(self, x, capture: bool = False):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.arch.in_channels:
            raise F.ShapeError(
                f"expected (n, {self.arch.in_channels}, H, W) input, got {x.shape}"
            )
        captured = {}
        h = self.stem.forward(x)
        h, self._stem_mask = F.relu_forward(h)
        if capture:
            captured["stem"] = h
        for i, block in enumerate(self.blocks, 1):
            h = block.forward(h, capture)
            if capture:
                captured[f"block{i}"] = h
                captured.update({f"block{i}.{k}": v for k, v in block.outputs.items()})
        self._pool_shape = h.shape
        pooled = F.global_avg_pool_forward(h)
        logits = self.dense.forward(pooled)
        if capture:
            captured["pool"] = pooled
            captured["logits"] = logits
            self.captured = captured
        return logits

    def backward(self, dlogits):
        d = self.dense.backward(dlogits)
        d = F.global_avg_pool_backward(d, self._pool_shape)
        for block in reversed(self.blocks):
            d = block.backward(d)
        d = F.relu_backward(d, self._stem_mask)
        return self.stem.backward(d)

    def loss_and_grads(self, x, labels):
        loss, dlogits = F.softmax_cross_entropy(self.forward(x), labels)
        self.backward(dlogits)
        return loss

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        out = [self.forward(x[s:s + batch_size]) for s in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.arch.num_classes), self.dtype)

    # ---------------------------------------------------------------- parameters

    def layers(self) -> dict:
        """Parameterised layers in forward order, keyed by dotted name."""
        out = {"stem": self.stem}
        for i, block in enumerate(self.blocks, 1):
            for name, conv in block.convs().items():
                out[f"block{i}.{name}"] = conv
        out["dense"] = self.dense
        return out

    def conv_layers(self) -> dict:
        return {k: v for k, v in self.layers().items() if isinstance(v, Conv2D)}

    def parameters(self) -> dict:
        return {f"{ln}.{pn}": p for ln, layer in self.layers().items() for pn, p in layer.params().items()}

    def gradients(self) -> dict:
        return {f"{ln}.{pn}": g for ln, layer in self.layers().items() for pn, g in layer.grads().items()}

    def load_parameters(self, params: dict) -> None:
        for ln, layer in self.layers().items():
            for pn in ("weight", "bias"):
                key = f"{ln}.{pn}"
                src = np.asarray(params[key])
                cur = getattr(layer, pn)
                if src.shape != cur.shape:
                    raise F.ShapeError(f"{key}: shape {src.shape} != {cur.shape}")
                setattr(layer, pn, src.astype(self.dtype, copy=True))

    def astype(self, dtype) -> "Network":
        net = copy.deepcopy(self)
        net.dtype = np.dtype(dtype)
        for layer in net.layers().values():
            layer.weight = layer.weight.astype(dtype)
            layer.bias = layer.bias.astype(dtype)
            layer.dweight = np.zeros_like(layer.weight)
            layer.dbias = np.zeros_like(layer.bias)
        return net

    def copy(self) -> "Network":
        return copy.deepcopy(self)
