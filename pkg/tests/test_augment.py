import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra.numpy import arrays

from kernsat.augment import AugmentationMode, build_training_set, negate_image
from kernsat.data import ImageU8, LabeledDataset

from conftest import random_dataset


@pytest.mark.parametrize("v,expected", [(0, 255), (255, 0), (100, 155)])
def test_negate_values(v, expected):
    assert negate_image(ImageU8(np.full((3, 2, 2), v, np.uint8))).data.max() == expected


@given(arrays(np.uint8, (3, 6, 5)))
def test_involution(data):
    img = ImageU8(data)
    assert np.array_equal(negate_image(negate_image(img)).data, data)


@given(arrays(np.uint8, (3, 6, 5)))
def test_histogram_reversal(data):
    neg = negate_image(data)
    for c in range(3):
        h = np.bincount(data[c].ravel(), minlength=256)
        hn = np.bincount(neg[c].ravel(), minlength=256)
        assert np.array_equal(hn, h[::-1])


def test_negate_rejects_float():
    with pytest.raises(TypeError):
        negate_image(np.zeros(3, np.float32))


def test_standard_is_identity(rng):
    ds = random_dataset(rng, 12)
    out = build_training_set(ds, "Standard")
    assert out.content_hash() == ds.content_hash()
    assert out.images is not ds.images


def test_supplemented(rng):
    ds = random_dataset(rng, 10)
    out = build_training_set(ds, AugmentationMode.SUPPLEMENTED)
    assert len(out) == 20
    assert out.negative.tolist() == [False] * 10 + [True] * 10
    assert np.array_equal(out.images[:10], ds.images)
    assert np.array_equal(out.images[10:], 255 - ds.images)
    assert np.array_equal(out.labels[10:], ds.labels)


def test_supplemented_doubles_cifar_sized_set():
    ds = LabeledDataset(np.zeros((50000, 1, 1, 1), np.uint8), np.arange(50000) % 10)
    out = build_training_set(ds, "Supplemented")
    assert len(out) == 100000
    assert int(out.negative.sum()) == 50000


def test_negatives_only_single():
    ds = LabeledDataset(np.full((1, 3, 2, 2), 30, np.uint8), [6])
    out = build_training_set(ds, "negatives-only")
    assert out.images.max() == 225 and out.labels.tolist() == [6]
    assert out.negative.tolist() == [True]


def test_label_preservation(rng):
    ds = random_dataset(rng, 40)
    for mode in ("Supplemented", "NegativesOnly"):
        out = build_training_set(ds, mode)
        neg = out.labels[out.negative]
        assert np.array_equal(neg, ds.labels)


def test_unknown_mode():
    with pytest.raises(ValueError):
        AugmentationMode.parse("flip")
