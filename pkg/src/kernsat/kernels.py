"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``KERNSAT_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from ._ext import pure

try:
    from ._ext import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": pure}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_active = pure if os.environ.get("KERNSAT_PURE_PYTHON") == "1" or _ckernels is None else _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend() -> str:
    return "cython" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = _BACKENDS[name]


def im2col(x: np.ndarray, k: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return _active.im2col(x, int(k), int(stride), int(pad))


def col2im(cols: np.ndarray, shape, k: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    return _active.col2im(np.ascontiguousarray(cols), tuple(int(s) for s in shape), int(k), int(stride), int(pad))


def channel_histograms(pixels: np.ndarray) -> np.ndarray:
    px = np.ascontiguousarray(pixels, dtype=np.uint8)
    if px.ndim != 3:
        raise ValueError(f"expected (n, C, P) pixels, got shape {px.shape}")
    return _active.channel_histograms(px)
