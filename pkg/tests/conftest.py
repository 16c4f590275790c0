import numpy as np
import pytest

from gdm import CrossSubjectGraph, synth_dataset


@pytest.fixture
def small_dataset():
    """M=3, V=30, T=20, 4 classes, light noise: the workhorse instance."""
    dataset, _ = synth_dataset(3, 30, 20, 4, 4, 0.1, seed=7)
    return dataset


def random_symmetric_graph(size: int, seed: int) -> CrossSubjectGraph:
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((size, size))
    return CrossSubjectGraph((w + w.T) / 2.0)


def centered_gram_with_spectrum(eigenvalues, size: int, seed: int) -> np.ndarray:
    """Symmetric size x size matrix with the given positive spectrum, zero
    elsewhere, whose eigenvectors are orthogonal to the ones vector (so the
    matrix is a legitimate double-centered Gram)."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((size, len(eigenvalues)))
    raw -= raw.mean(axis=0)   # orthogonal to ones
    q, _ = np.linalg.qr(raw)
    return (q * eigenvalues) @ q.T
