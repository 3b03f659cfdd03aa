"""Numpy implementations of the hot kernels; used when the extension is absent."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """``(N, C, H, W)`` -> ``(N*OH*OW, C*k*k)``; rows ordered (n, oh, ow), columns (c, i, j)."""
    n, c, h, w = x.shape
    oh, ow = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * k * k)


def col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back to image layout."""
    n, c, h, w = shape
    oh, ow = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    if cols.shape != (n * oh * ow, c * k * k):
        raise ValueError("column matrix does not match the requested image shape")
    d = cols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += d[:, :, i, j]
    return out[:, :, pad:pad + h, pad:pad + w].copy()


def channel_histograms(px: np.ndarray) -> np.ndarray:
    """``(n, C, P)`` uint8 -> ``(n, C, 256)`` int64 value counts."""
    n, c, p = px.shape
    offsets = (np.arange(n * c, dtype=np.int64) * 256).reshape(n, c, 1)
    flat = (px.astype(np.int64) + offsets).ravel()
    return np.bincount(flat, minlength=n * c * 256).reshape(n, c, 256)
