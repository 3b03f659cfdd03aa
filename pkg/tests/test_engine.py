import math

import numpy as np
import pytest

from kernsat.data import LabeledDataset
from kernsat.engine import (AdamState, Architecture, Conv2D, Network, NonFiniteGradientError,
                            ProvenanceError, ResidualBlock, ShapeError, TrainConfig, adam_step,
                            evaluate, softmax, softmax_cross_entropy, train)
from kernsat.engine import functional as F
from kernsat.engine.checkpoint import (CheckpointError, decode, encode, load_checkpoint,
                                       save_checkpoint)
from kernsat.engine.gradcheck import numerical_gradient, relative_error
from kernsat.synthetic import make_blobs

GRAD_TOL = 1e-4


def naive_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    co, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh, ow = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, co, oh, ow))
    for a in range(n):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[a, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[a, o, i, j] = np.sum(patch * w[o]) + b[o]
    return out


# 24 (shape, cout, k, stride, pad) combinations, all drawn with fixed seeds below
CONV_CASES = [
    ((n, c, h, h + dw), co, k, s, p)
    for n, c, h, dw, co, k, s, p in [
        (1, 1, 5, 0, 1, 3, 1, 1), (2, 3, 6, 1, 2, 3, 1, 1), (1, 2, 7, 0, 3, 3, 2, 1),
        (2, 1, 4, 2, 2, 1, 1, 0), (1, 3, 8, 0, 4, 1, 2, 0), (3, 2, 5, 1, 2, 5, 1, 2),
        (1, 4, 6, 0, 2, 2, 2, 0), (2, 2, 9, 0, 1, 3, 3, 0), (1, 1, 3, 0, 2, 3, 1, 0),
        (2, 3, 5, 0, 3, 3, 2, 0), (1, 2, 6, 3, 2, 3, 1, 2), (1, 5, 4, 0, 2, 3, 1, 1),
        (2, 1, 7, 1, 1, 4, 1, 1), (1, 2, 5, 2, 4, 2, 1, 1), (3, 1, 6, 0, 2, 3, 2, 1),
        (1, 3, 5, 0, 1, 5, 1, 0), (2, 2, 4, 0, 2, 1, 2, 0), (1, 1, 8, 0, 3, 3, 1, 0),
        (1, 2, 7, 2, 2, 3, 2, 2), (2, 3, 4, 1, 3, 2, 1, 0), (1, 4, 5, 0, 4, 3, 1, 1),
        (1, 1, 9, 0, 2, 5, 2, 1), (2, 2, 6, 0, 1, 3, 3, 1), (1, 3, 3, 3, 2, 3, 1, 1),
    ]
]


class TestConv:
    @pytest.mark.parametrize("shape,co,k,s,p", CONV_CASES)
    def test_matches_naive(self, shape, co, k, s, p):
        rng = np.random.default_rng(sum(shape) + k)
        x = rng.normal(size=shape)
        w = rng.normal(size=(co, shape[1], k, k))
        b = rng.normal(size=co)
        np.testing.assert_allclose(F.conv2d_forward(x, w, b, s, p), naive_conv(x, w, b, s, p), atol=1e-6)

    def test_identity_1x1(self, rng):
        x = rng.normal(size=(2, 3, 4, 4))
        w = np.eye(3).reshape(3, 3, 1, 1)
        np.testing.assert_allclose(F.conv2d_forward(x, w, np.zeros(3)), x, atol=1e-12)

    def test_ones_kernel(self):
        out = F.conv2d_forward(np.ones((1, 1, 5, 5)), np.ones((1, 1, 3, 3)), np.zeros(1))
        assert out.shape == (1, 1, 3, 3) and np.all(out == 9.0)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            F.conv2d_forward(np.ones((1, 2, 5, 5)), np.ones((1, 3, 3, 3)), np.zeros(1))
        with pytest.raises(ShapeError):
            F.conv2d_forward(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)), np.zeros(1))
        with pytest.raises(ValueError):
            Conv2D(1, 1, 0)

    @pytest.mark.parametrize("shape,co,k,s,p", CONV_CASES)
    def test_gradients(self, shape, co, k, s, p):
        rng = np.random.default_rng(1000 + sum(shape) + k)
        x = rng.normal(size=shape)
        w = rng.normal(size=(co, shape[1], k, k))
        b = rng.normal(size=co)
        out = F.conv2d_forward(x, w, b, s, p)
        g = rng.normal(size=out.shape)
        f = lambda: float(np.sum(F.conv2d_forward(x, w, b, s, p) * g))  # noqa: E731
        dx, dw, db = F.conv2d_backward(g, x, w, s, p)
        assert relative_error(dx, numerical_gradient(f, x)) < GRAD_TOL
        assert relative_error(dw, numerical_gradient(f, w)) < GRAD_TOL
        assert relative_error(db, numerical_gradient(f, b)) < GRAD_TOL


def test_relu_gradient(rng):
    x = rng.normal(size=(3, 4, 5))
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    g = rng.normal(size=x.shape)
    y, mask = F.relu_forward(x)
    assert np.all(y >= 0)
    f = lambda: float(np.sum(F.relu_forward(x)[0] * g))  # noqa: E731
    assert relative_error(F.relu_backward(g, mask), numerical_gradient(f, x)) < GRAD_TOL


def test_pool_dense_gradient(rng):
    x = rng.normal(size=(3, 4, 5, 5))
    w, b = rng.normal(size=(6, 4)), rng.normal(size=6)
    g = rng.normal(size=(3, 6))
    f = lambda: float(np.sum(F.dense_forward(F.global_avg_pool_forward(x), w, b) * g))  # noqa: E731
    pooled = F.global_avg_pool_forward(x)
    dp, dw, db = F.dense_backward(g, pooled, w)
    dx = F.global_avg_pool_backward(dp, x.shape)
    assert relative_error(dx, numerical_gradient(f, x)) < GRAD_TOL
    assert relative_error(dw, numerical_gradient(f, w)) < GRAD_TOL
    assert relative_error(db, numerical_gradient(f, b)) < GRAD_TOL


@pytest.mark.parametrize("cin,cout,stride", [(2, 2, 1), (2, 3, 1), (3, 2, 2)])
def test_block_gradient(cin, cout, stride):
    rng = np.random.default_rng(cin * 10 + cout + stride)
    block = ResidualBlock(cin, cout, stride, rng, np.float64)
    x = rng.normal(size=(2, cin, 5, 5))
    out = block.forward(x)
    g = rng.normal(size=out.shape)
    f = lambda: float(np.sum(block.forward(x) * g))  # noqa: E731
    block.forward(x)
    dx = block.backward(g)
    assert relative_error(dx, numerical_gradient(f, x)) < GRAD_TOL
    block.forward(x)
    block.backward(g)
    for conv in block.convs().values():
        analytic = conv.dweight.copy()
        assert relative_error(analytic, numerical_gradient(f, conv.weight)) < GRAD_TOL


def test_zero_block_is_identity(rng):
    block = ResidualBlock(3, 3, 1)
    x = rng.normal(size=(2, 3, 6, 6)).astype(np.float32)
    assert np.array_equal(block.forward(x), x)
    assert np.array_equal(block.backward(np.ones_like(x)), np.ones_like(x))


def test_network_gradient():
    arch = Architecture(in_channels=2, stem_width=3, widths=(3, 4), num_classes=3)
    net = Network(arch, seed=7, dtype=np.float64)
    rng = np.random.default_rng(8)
    for layer in net.layers().values():  # keep pre-activations off the ReLU kink
        layer.bias[:] = rng.normal(scale=0.1, size=layer.bias.shape)
    x = rng.normal(size=(3, 2, 6, 6))
    y = np.array([0, 2, 1])
    f = lambda: softmax_cross_entropy(net.forward(x), y)[0]  # noqa: E731
    net.loss_and_grads(x, y)
    grads = {k: v.copy() for k, v in net.gradients().items()}
    for name, p in net.parameters().items():
        assert relative_error(grads[name], numerical_gradient(f, p)) < GRAD_TOL, name


class TestSoftmax:
    def test_rows_sum_to_one(self, rng):
        p = softmax(rng.normal(size=(5, 7)) * 50)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_uniform_logits(self):
        loss, grad = softmax_cross_entropy(np.zeros((4, 10)), np.arange(4))
        assert loss == pytest.approx(math.log(10), abs=1e-12)
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_large_logits_finite(self):
        loss, _ = softmax_cross_entropy(np.array([[1e4, -1e4]]), np.array([1]))
        assert np.isfinite(loss)

    def test_bad_label(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        adam_step(p, {"w": np.zeros(2)}, AdamState())
        assert np.array_equal(p["w"], [1.0, -2.0])

    def test_first_step_is_lr(self):
        p = {"w": np.array([0.5, 0.5])}
        adam_step(p, {"w": np.array([3.0, -0.2])}, AdamState(lr=0.001))
        np.testing.assert_allclose(p["w"], [0.499, 0.501], atol=1e-9)

    def test_matches_scalar_oracle(self):
        grads = [0.3, -1.2, 0.05, 2.0, -0.7, 0.0, 1.1, -0.4, 0.9, -2.5]
        p = {"w": np.array([0.25])}
        state = AdamState(lr=0.01)
        w, m, v = 0.25, 0.0, 0.0
        for t, g in enumerate(grads, 1):
            adam_step(p, {"w": np.array([g])}, state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert state.t == 10
        assert p["w"][0] == pytest.approx(w, abs=1e-9)

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite(self, bad):
        p = {"w": np.ones(2)}
        with pytest.raises(NonFiniteGradientError, match="w"):
            adam_step(p, {"w": np.array([1.0, bad])}, AdamState())
        assert np.array_equal(p["w"], np.ones(2))


SMALL = Architecture(in_channels=1, stem_width=4, widths=(4,), num_classes=2)


def _blobs(n=120, seed=0):
    return make_blobs(n, seed=seed)


class TestTraining:
    def test_deterministic(self):
        ds = _blobs()
        cfg = TrainConfig(epochs=2, batch_size=32, seed=3)
        r1, n1 = train(Network(SMALL, 1), ds, None, cfg)
        r2, n2 = train(Network(SMALL, 1), ds, None, cfg)
        assert [r.train_loss for r in r1] == [r.train_loss for r in r2]
        for k, v in n1.parameters().items():
            assert np.array_equal(v, n2.parameters()[k])

    def test_callback_order(self):
        seen = []
        train(Network(SMALL, 0), _blobs(40), _blobs(20, 1), TrainConfig(epochs=2, batch_size=16),
              lambda e, net, rec: seen.append((e, rec is None)))
        assert seen == [(0, True), (1, False), (2, False)]

    def test_loss_decreases(self):
        recs, net = train(Network(SMALL, 0), _blobs(), None, TrainConfig(epochs=5, batch_size=16, lr=0.01))
        losses = [r.train_loss for r in recs]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_empty(self):
        with pytest.raises(ValueError):
            train(Network(SMALL), _blobs().head(0), None, TrainConfig())


class TestEvaluate:
    def test_chance_and_perfect(self):
        ds = _blobs(40)
        net = Network(SMALL, 0)
        net.dense.weight[:] = 0
        net.dense.bias[:] = [1.0, 0.0]
        assert evaluate(net, ds) == pytest.approx(100.0 * np.mean(ds.labels == 0))
        ones = LabeledDataset(ds.images[ds.labels == 0], ds.labels[ds.labels == 0], 2)
        assert evaluate(net, ones) == 100.0

    def test_permutation_invariant(self):
        ds = _blobs(50)
        net = Network(SMALL, 4)
        perm = np.random.default_rng(0).permutation(50)
        assert evaluate(net, ds) == evaluate(net, ds.subset(perm))

    def test_refuses_negatives(self):
        from kernsat.augment import negate_dataset
        with pytest.raises(ProvenanceError):
            evaluate(Network(SMALL), negate_dataset(_blobs(4)))

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate(Network(SMALL), _blobs().head(0))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = Network(Architecture(3, 4, (4, 8), 10), seed=5)
        save_checkpoint(tmp_path / "c.bin", net, epoch=7, seed=5)
        loaded, meta = load_checkpoint(tmp_path / "c.bin")
        assert meta.epoch == 7 and meta.seed == 5
        assert loaded.descriptor == net.descriptor
        for k, v in net.parameters().items():
            assert np.array_equal(loaded.parameters()[k], v)
        x = np.random.default_rng(0).random((2, 3, 8, 8), dtype=np.float32)
        assert np.array_equal(loaded.forward(x), net.forward(x))

    def test_corruption(self):
        raw = encode({"a.weight": np.ones((2, 2), np.float32)}, "rescnn:x", 1, 0)
        assert decode(raw).blocks["a.weight"].shape == (2, 2)
        with pytest.raises(CheckpointError):
            decode(b"NOTMAGIC" + raw[8:])
        with pytest.raises(CheckpointError):
            decode(raw[:-3])
        with pytest.raises(CheckpointError):
            decode(raw + b"\0")

    def test_descriptor_round_trip(self):
        arch = Architecture(1, 8, (8, 16), 10, 5)
        assert Architecture.parse(arch.descriptor) == arch
        with pytest.raises(ValueError):
            Architecture.parse("resnet50")
