import os

import numpy as np
import pytest

from kernsat.data import LabeledDataset

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance-criterion line; printed in the terminal summary."""

    def record(label: str, passed: bool, detail: str = ""):
        _CRITERIA.append((label, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=20, shape=(3, 8, 8), num_classes=10) -> LabeledDataset:
    images = rng.integers(0, 256, size=(n, *shape), dtype=np.uint8)
    labels = rng.integers(0, num_classes, size=n)
    return LabeledDataset(images, labels, num_classes)


@pytest.fixture
def data_root():
    return os.environ.get("KERNSAT_DATA_DIR")
