import numpy as np
import pytest

from kernsat import kernels
from kernsat._ext import pure

BACKENDS = kernels.available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    before = kernels.backend()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(before)


def naive_im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh, ow = (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1
    rows = []
    for a in range(n):
        for i in range(oh):
            for j in range(ow):
                rows.append(xp[a, :, i * stride:i * stride + k, j * stride:j * stride + k].ravel())
    return np.array(rows)


SHAPES = [((2, 3, 5, 5), 3, 1, 1), ((1, 2, 7, 6), 3, 2, 1), ((3, 1, 4, 4), 1, 1, 0),
          ((2, 4, 8, 8), 1, 2, 0), ((1, 2, 6, 6), 5, 1, 2), ((2, 2, 9, 7), 2, 3, 0)]


@pytest.mark.parametrize("shape,k,stride,pad", SHAPES)
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_im2col_matches_naive(backend, shape, k, stride, pad, dtype):
    x = np.random.default_rng(0).normal(size=shape).astype(dtype)
    cols = kernels.im2col(x, k, stride, pad)
    assert cols.dtype == dtype
    assert np.array_equal(cols, naive_im2col(x, k, stride, pad))


@pytest.mark.parametrize("shape,k,stride,pad", SHAPES)
def test_col2im_is_adjoint(backend, shape, k, stride, pad):
    # <im2col(x), c> == <x, col2im(c)>
    rng = np.random.default_rng(1)
    x = rng.normal(size=shape)
    cols = kernels.im2col(x, k, stride, pad)
    c = rng.normal(size=cols.shape)
    lhs = float(np.sum(cols * c))
    rhs = float(np.sum(x * kernels.col2im(c, shape, k, stride, pad)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_histograms(backend):
    px = np.random.default_rng(2).integers(0, 256, (4, 3, 50), dtype=np.uint8)
    h = kernels.channel_histograms(px)
    for a in range(4):
        for c in range(3):
            assert np.array_equal(h[a, c], np.bincount(px[a, c], minlength=256))


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")
def test_backends_agree():
    from kernsat._ext import _ckernels
    x = np.random.default_rng(3).normal(size=(4, 3, 11, 9)).astype(np.float32)
    a, b = pure.im2col(x, 3, 2, 1), _ckernels.im2col(x, 3, 2, 1)
    assert np.array_equal(a, b)
    g = np.random.default_rng(4).normal(size=a.shape).astype(np.float32)
    assert np.allclose(pure.col2im(g, x.shape, 3, 2, 1), _ckernels.col2im(g, x.shape, 3, 2, 1), atol=1e-5)


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
