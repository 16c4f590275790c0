"""Cross-subject graphs over the global sample index and their Laplacians.

The global ordering is subject-major throughout the package: all samples of
the first subject, then all samples of the second, and so on.  Graph weights
are unitless and may be negative (positive pulls a pair together in the
shared space, negative pushes it apart).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, InvalidGraphError, ParameterError

SYMMETRY_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class CrossSubjectGraph:
    """Dense symmetric T x T weight matrix over all samples of all subjects.

    ``index_map`` is set by :func:`build_subset_graph` and maps old global
    indices to their position in the restricted graph.
    """

    weights: np.ndarray
    index_map: dict[int, int] | None = field(default=None)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidGraphError(f"graph matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidGraphError("graph matrix contains non-finite entries")
        if w.size and np.max(np.abs(w - w.T)) > SYMMETRY_ATOL:
            raise InvalidGraphError(
                f"graph matrix asymmetric beyond {SYMMETRY_ATOL:g} absolute"
            )
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class Laplacian:
    """L = diag(degrees) - G with degrees[i] = sum_j G[i, j].

    Degrees may be negative for signed graphs; no absolute-value variant
    is offered.
    """

    matrix: np.ndarray
    degrees: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def build_category_graph(labels: Sequence[Sequence[int] | np.ndarray | None]) -> CrossSubjectGraph:
    """Build the +/-1 same-category graph from per-subject label sequences.

    ``G[i, j]`` is +1 when samples i and j carry the same label and -1
    otherwise, including the diagonal (+1).  The diagonal choice is
    irrelevant to the alignment objective because self-loops cancel in
    ``D - G``.

    Parameters
    ----------
    labels : sequence of per-subject integer label sequences, in subject-major
        order.  Every sample of every subject must be labeled.
    """
    flat: list[np.ndarray] = []
    for i, lab in enumerate(labels):
        if lab is None:
            raise DataError(f"subject {i} has no labels; the category graph needs labeled data")
        arr = np.asarray(lab)
        if arr.ndim != 1 or arr.size == 0:
            raise DataError(f"subject {i}: labels must be a non-empty 1-D sequence")
        if not np.issubdtype(arr.dtype, np.integer):
            raise DataError(f"subject {i}: labels must be integers, got dtype {arr.dtype}")
        flat.append(arr.astype(np.int64))
    if not flat:
        raise DataError("no subjects given")
    lab = np.concatenate(flat)
    same = lab[:, None] == lab[None, :]
    return CrossSubjectGraph(np.where(same, 1.0, -1.0))


def build_temporal_graph(subject_count: int, samples_per_subject: int,
                         weight: float | None = None) -> CrossSubjectGraph:
    """Build the temporally-aligned graph for M subjects with T0 samples each.

    Samples at the same within-subject time index (including a sample with
    itself) are connected with ``weight``; everything else is 0.  The default
    weight is 1/M, which makes every row sum to exactly 1.
    """
    if subject_count < 1 or samples_per_subject < 1:
        raise ParameterError("subject_count and samples_per_subject must be >= 1")
    if weight is None:
        weight = 1.0 / subject_count
    g = np.kron(np.ones((subject_count, subject_count)), np.eye(samples_per_subject))
    return CrossSubjectGraph(g * weight)


def build_subset_graph(base: CrossSubjectGraph,
                       keep: Sequence[Sequence[int] | np.ndarray] | Sequence[int] | np.ndarray,
                       counts: Sequence[int] | None = None) -> CrossSubjectGraph:
    """Restrict a graph to a subset of its nodes (principal submatrix).

    ``keep`` is either a flat sorted sequence of global indices, or, when
    ``counts`` (per-subject sample counts of the base graph) is given, a
    per-subject list of sorted local index sets.  The returned graph records
    the old -> new index map.
    """
    if counts is not None:
        if len(keep) != len(counts):
            raise ParameterError("keep must have one index set per subject")
        offsets = np.concatenate([[0], np.cumsum(counts)])
        if offsets[-1] != base.size:
            raise ParameterError(
                f"counts sum to {offsets[-1]} but the graph has {base.size} nodes")
        parts = []
        for i, (local, n) in enumerate(zip(keep, counts)):
            local = np.asarray(local, dtype=np.int64)
            if local.size and (local.min() < 0 or local.max() >= n):
                raise IndexError(f"subject {i}: keep index out of range [0, {n})")
            parts.append(local + offsets[i])
        idx = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    else:
        idx = np.asarray(keep, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= base.size):
            raise IndexError(f"keep index out of range [0, {base.size})")
    if idx.size > 1 and np.any(np.diff(idx) <= 0):
        raise ParameterError("keep indices must be strictly increasing")
    sub = base.weights[np.ix_(idx, idx)]
    return CrossSubjectGraph(sub, index_map={int(old): new for new, old in enumerate(idx)})


def laplacian(graph: CrossSubjectGraph) -> Laplacian:
    """Laplacian L = D - G of a cross-subject graph.

    Raises :class:`InvalidGraphError` when the matrix is asymmetric beyond
    1e-12 absolute.  Negative degrees are permitted (signed graphs).
    """
    g = graph.weights
    if g.size and np.max(np.abs(g - g.T)) > SYMMETRY_ATOL:
        raise InvalidGraphError("graph matrix asymmetric beyond 1e-12 absolute")
    degrees = g.sum(axis=1)
    lap = np.diag(degrees) - g
    return Laplacian(matrix=lap, degrees=degrees)
