"""Stateless forward/backward primitives. Arrays are NCHW; dtype follows the inputs."""
from __future__ import annotations

import numpy as np

from .. import kernels


class ShapeError(ValueError):
    pass


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - k) // stride + 1
    if k < 1 or out < 1:
        raise ShapeError(f"kernel {k} / stride {stride} / pad {pad} do not fit input size {size}")
    return out


def conv2d_forward(x, weight, bias, stride=1, pad=0, return_cols=False):
    """Cross-correlation of ``x (N, Cin, H, W)`` with ``weight (Cout, Cin, k, k)``."""
    n, c, h, w = x.shape
    cout, cin, k, k2 = weight.shape
    if c != cin or k != k2:
        raise ShapeError(f"input has {c} channels, kernel expects {cin} (kernel {weight.shape})")
    oh, ow = conv_output_size(h, k, stride, pad), conv_output_size(w, k, stride, pad)
    cols = kernels.im2col(x, k, stride, pad)
    out = cols @ weight.reshape(cout, -1).T
    out += bias
    out = out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    return (out, cols) if return_cols else out


def conv2d_backward(dout, x, weight, stride=1, pad=0, cols=None):
    """Returns ``(dx, dweight, dbias)``; pass the forward ``cols`` to skip recomputing them."""
    n, c, h, w = x.shape
    cout, cin, k, _ = weight.shape
    oh, ow = conv_output_size(h, k, stride, pad), conv_output_size(w, k, stride, pad)
    if dout.shape != (n, cout, oh, ow):
        raise ShapeError(f"grad_output shape {dout.shape} != forward output {(n, cout, oh, ow)}")
    if cols is None:
        cols = kernels.im2col(x, k, stride, pad)
    d = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dweight = (d.T @ cols).reshape(weight.shape)
    dbias = d.sum(axis=0)
    dcols = d @ weight.reshape(cout, -1)
    dx = kernels.col2im(dcols, x.shape, k, stride, pad)
    return dx, dweight, dbias


def relu_forward(x):
    """Returns ``(max(0, x), mask)`` where mask is the 0/1 derivative."""
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def global_avg_pool_forward(x):
    return x.mean(axis=(2, 3))


def global_avg_pool_backward(dy, shape):
    n, c, h, w = shape
    return np.broadcast_to((dy / (h * w))[:, :, None, None], shape).copy()


def dense_forward(x, weight, bias):
    """``weight`` is ``(out, in)``."""
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense layer expects width {weight.shape[1]}, got {x.shape[1]}")
    return x @ weight.T + bias


def dense_backward(dy, x, weight):
    return dy @ weight, dy.T @ x, dy.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if len(labels) != n:
        raise ShapeError(f"{n} logit rows but {len(labels)} labels")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = np.exp(z - logsum[:, None])
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad
