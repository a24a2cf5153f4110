import os
from pathlib import Path

import numpy as np
import pytest

from liprobust.data import MNIST_FILES, write_idx
from liprobust.network import MlpNetwork
from liprobust.rng import Rng


@pytest.fixture
def rng():
    return Rng(12345)


@pytest.fixture
def hand_net():
    """W1 = I2, W2 = [1, 1], zero biases, relu."""
    return MlpNetwork.from_layers([np.eye(2), [[1.0, 1.0]]])


def _mnist_from_mlxtend(directory: Path) -> Path:
    mlxtend_data = pytest.importorskip("mlxtend.data")
    images, labels = mlxtend_data.mnist_data()
    order = Rng(2024).permutation(labels.size)
    images = images[order].reshape(-1, 28, 28).astype(np.uint8)
    labels = labels[order].astype(np.uint8)
    cut = 4000
    write_idx(images[:cut], labels[:cut], *(directory / f for f in MNIST_FILES["train"]))
    write_idx(images[cut:], labels[cut:], *(directory / f for f in MNIST_FILES["test"]))
    return directory


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """Directory with the four MNIST IDX files.

    Uses $LIPROBUST_MNIST_DIR when set, otherwise writes the 5000 real MNIST
    digits bundled with mlxtend as a 4000/1000 train/test split.
    """
    env = os.environ.get("LIPROBUST_MNIST_DIR")
    if env:
        return Path(env)
    return _mnist_from_mlxtend(tmp_path_factory.mktemp("mnist"))


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
