import numpy as np
import pytest
import scipy.sparse as sp

from mlquant.dataset import MultiLabelDataset


def make_dataset(Y, X=None, seed=0, d=5):
    """Wrap a label matrix (and optional features) into a dataset."""
    Y = np.asarray(Y, dtype=np.uint8)
    if X is None:
        X = np.random.default_rng(seed).normal(size=(Y.shape[0], d))
    return MultiLabelDataset(sp.csr_matrix(np.asarray(X, dtype=np.float64)), Y,
                             tuple(f"y{i}" for i in range(Y.shape[1])), {})


def random_labels(n_rows, n_classes, density=0.3, seed=0):
    return (np.random.default_rng(seed).random((n_rows, n_classes)) < density).astype(np.uint8)


def signal_dataset(n_rows=600, n_classes=3, d=8, seed=0, noise=1.0):
    """Labels linearly predictable from the features."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, d))
    W = rng.normal(size=(d, n_classes))
    Y = (X @ W + noise * rng.normal(size=(n_rows, n_classes)) > 0.5).astype(np.uint8)
    return make_dataset(Y, X)


@pytest.fixture
def small_signal():
    return signal_dataset()
