"""Locating MNIST IDX files, with a fallback to the 5,000-digit sample bundled by mlxtend.

The full MNIST archives cannot be fetched from inside the sandbox this
package is tested in, so ``ensure_mnist`` materialises the bundled real-digit
sample as IDX files (4,000 train / 1,000 test, stratified) when no full copy
is found.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import numpy as np

from fedsim import data, seeding
from fedsim.errors import ConfigError

FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

REPO_DATA = Path(__file__).resolve().parents[2] / "data"


def _complete(d: Path) -> bool:
    return all((d / f).exists() for f in FILES.values())


def find_mnist() -> Optional[Path]:
    """Directory holding the four IDX files: $FEDSIM_MNIST_DIR, then data/mnist, then data/mnist-subset."""
    candidates = []
    if os.environ.get("FEDSIM_MNIST_DIR"):
        candidates.append(Path(os.environ["FEDSIM_MNIST_DIR"]))
    candidates += [REPO_DATA / "mnist", REPO_DATA / "mnist-subset"]
    for d in candidates:
        if _complete(d):
            return d
    return None


def write_bundled_subset(out_dir, test_per_class: int = 100, seed: int = 0) -> Path:
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ConfigError("install mlxtend (pip install mlxtend) to build the bundled MNIST subset") from exc
    X, y = mnist_data()
    X = X.astype(np.uint8)
    y = y.astype(np.uint8)
    rng = seeding.stream(seed, seeding.POOL, 99)
    test = np.sort(np.concatenate(
        [rng.choice(np.flatnonzero(y == c), test_per_class, replace=False) for c in range(10)]
    ))
    train = np.setdiff1d(np.arange(len(y)), test)
    train = train[rng.permutation(len(train))]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data.write_idx(out / FILES["train_images"], out / FILES["train_labels"], X[train].reshape(-1, 28, 28), y[train])
    data.write_idx(out / FILES["test_images"], out / FILES["test_labels"], X[test].reshape(-1, 28, 28), y[test])
    return out


def ensure_mnist() -> Path:
    found = find_mnist()
    if found is not None:
        return found
    return write_bundled_subset(REPO_DATA / "mnist-subset")


def load_mnist(directory=None) -> tuple[data.Dataset, data.Dataset]:
    d = Path(directory) if directory is not None else ensure_mnist()
    train = data.load_idx(d / FILES["train_images"], d / FILES["train_labels"])
    test = data.load_idx(d / FILES["test_images"], d / FILES["test_labels"])
    return train, test
