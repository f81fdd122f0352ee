"""Binarized handwritten-digit fixture.

The 5000-row MNIST subset shipped inside the ``mlxtend`` wheel (784 pixel
columns plus a label column, sorted by label) is read straight from disk;
the package itself is never imported.
"""

import gzip
import importlib.util
from pathlib import Path

import numpy as np

from tapgrbm.data_io import preprocess

N_HELD_OUT = 200


def mnist_5k_path():
    spec = importlib.util.find_spec("mlxtend")
    if spec is None or not spec.submodule_search_locations:
        return None
    path = Path(list(spec.submodule_search_locations)[0]) / "data" / "data" / "mnist_5k.csv.gz"
    return path if path.exists() else None


def mnist_5k():
    """``(X, labels)`` with pixels binarized by the strict ``> 0.5`` rule."""
    path = mnist_5k_path()
    if path is None:
        raise FileNotFoundError("mnist_5k.csv.gz not found; install the test extras")
    with gzip.open(path, "rt") as fh:
        raw = np.loadtxt(fh, delimiter=",")
    pixels = raw[:, :-1].astype(np.uint8)
    return preprocess(pixels, "binarize"), raw[:, -1].astype(int)


def train_test_split(X, seed=0, n_test=N_HELD_OUT):
    """Random held-out rows; training rows keep their file order."""
    perm = np.random.default_rng(seed).permutation(X.shape[0])
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    return X[train], X[test]
