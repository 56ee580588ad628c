import os
from pathlib import Path

import numpy as np
import pytest

from infoplane.data import find_mnist_split


def _has_mnist(path):
    try:
        find_mnist_split(path, "train")
        find_mnist_split(path, "test")
    except (FileNotFoundError, KeyError):
        return False
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """MNIST in IDX format: $INFOPLANE_DATA_DIR if usable, else the bundled 5000-image sample."""
    env = os.environ.get("INFOPLANE_DATA_DIR")
    if env and _has_mnist(env):
        return Path(env)
    mnist_subset = pytest.importorskip("infoplane.mnist_subset")
    pytest.importorskip("mlxtend")
    return mnist_subset.build(tmp_path_factory.mktemp("mnist"))


def pytest_terminal_summary(terminalreporter):
    from tests.acceptance_report import REPORT

    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in REPORT:
        terminalreporter.write_line(line)
