import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sleepnet.datasets import (
    DATA_ROOT_ENV,
    Dataset,
    find_mnist,
    stratified_split,
    write_idx_images,
    write_idx_labels,
)

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def _write_split(root: Path, train: Dataset, test: Dataset) -> None:
    for data, (img, lab) in (
        (train, ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")),
        (test, ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")),
    ):
        pixels = np.rint(data.inputs * 255).astype(np.uint8).reshape(-1, 28, 28)
        write_idx_images(root / img, pixels)
        write_idx_labels(root / lab, data.labels)


@pytest.fixture(scope="session")
def mnist_root(tmp_path_factory) -> Path:
    """Directory holding MNIST IDX files.

    Uses ``$SLEEPNET_DATA`` when it points at the full dataset. Otherwise the
    5,000-image sample bundled with mlxtend is split 80/20 per class and
    written out in IDX format.
    """
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        try:
            find_mnist(env)
            return Path(env)
        except FileNotFoundError:
            pass
    mlxtend_data = pytest.importorskip("mlxtend.data")
    x, y = mlxtend_data.mnist_data()
    full = Dataset(x / 255.0, y.astype(np.int64), 10, "mnist-5k", (28, 28))
    train, test = stratified_split(full, 0.2, seed=0)
    root = tmp_path_factory.mktemp("mnist")
    _write_split(root, train, test)
    return root
