"""Per-subject standardization, kernel evaluation and Gram centering.

All computation is Gram-only: kernels are evaluated column-pair-wise and
feature maps are never materialized, so kernels with infinite-dimensional
feature spaces (gaussian) are fully supported.

Data orientation is samples-in-columns (V x T) everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, ParameterError

# Per-voxel standard deviations below this are treated as constant voxels
# and clamped to 1 so dead voxels pass through as zeros.
STD_FLOOR = 1e-12

_KIND_ALIASES = {"linear": "linear", "poly": "polynomial", "rbf": "gaussian"}


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to evaluate between samples (columns).

    kinds: ``linear`` (x.y), ``polynomial`` ((x.y + offset)^degree),
    ``gaussian`` (exp(-gamma * |x - y|^2)).  Subject-specific kernels are
    allowed throughout the package.
    """

    kind: str = "linear"
    degree: int = 2
    offset: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian"):
            raise ParameterError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 1:
            raise ParameterError("polynomial degree must be >= 1")
        if self.kind == "gaussian" and not self.gamma > 0:
            raise ParameterError("gaussian gamma must be > 0")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(kind="linear")

    @classmethod
    def polynomial(cls, degree: int, offset: float = 1.0) -> "KernelSpec":
        return cls(kind="polynomial", degree=degree, offset=offset)

    @classmethod
    def gaussian(cls, gamma: float) -> "KernelSpec":
        return cls(kind="gaussian", gamma=gamma)

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse the string grammar: ``linear``, ``poly:degree=<d>,offset=<c>``,
        ``rbf:gamma=<g>``.  Omitted parameters take their defaults."""
        head, _, tail = text.strip().partition(":")
        kind = _KIND_ALIASES.get(head)
        if kind is None:
            raise ParameterError(f"unknown kernel {head!r} (expected linear, poly or rbf)")
        params: dict[str, str] = {}
        if tail:
            for item in tail.split(","):
                key, sep, value = item.partition("=")
                if not sep:
                    raise ParameterError(f"malformed kernel parameter {item!r}")
                params[key.strip()] = value.strip()
        try:
            if kind == "polynomial":
                spec = cls.polynomial(degree=int(params.pop("degree", 2)),
                                      offset=float(params.pop("offset", 1.0)))
            elif kind == "gaussian":
                spec = cls.gaussian(gamma=float(params.pop("gamma")))
            else:
                spec = cls.linear()
        except KeyError as exc:
            raise ParameterError(f"kernel {head!r} needs parameter {exc.args[0]}") from None
        except ValueError as exc:
            raise ParameterError(f"bad kernel parameter in {text!r}: {exc}") from None
        if params:
            raise ParameterError(f"unexpected kernel parameters {sorted(params)}")
        return spec

    def spec_string(self) -> str:
        """Canonical string form (inverse of :meth:`parse`); floats are
        written with repr so parameters round-trip exactly."""
        if self.kind == "linear":
            return "linear"
        if self.kind == "polynomial":
            return f"poly:degree={self.degree},offset={self.offset!r}"
        return f"rbf:gamma={self.gamma!r}"


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """Per-voxel means and standard deviations (population convention),
    kept so held-out data can be shifted onto the training scale."""

    means: np.ndarray
    stds: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.means.shape[0]:
            raise DimensionError(
                f"data has {X.shape[0]} voxels but stats were computed for {self.means.shape[0]}")
        return (X - self.means[:, None]) / self.stds[:, None]


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Dense symmetric matrix of kernel inner products with a centering flag."""

    entries: np.ndarray
    centered: bool = False

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def standardize(X: np.ndarray) -> tuple[np.ndarray, StandardizationStats]:
    """Zero-mean, unit-variance rows (voxels), population convention.

    Constant voxels get std clamped to 1 and come out as all zeros; real
    masked recordings contain dead voxels and erroring on them would be
    useless.  Requires T >= 2 so the variance is defined.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"expected a 2-D V x T matrix, got shape {X.shape}")
    if X.shape[1] < 2:
        raise DataError(f"need at least 2 samples to standardize, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise DataError("input matrix contains non-finite entries")
    means = X.mean(axis=1)
    stds = X.std(axis=1)
    stds = np.where(stds < STD_FLOOR, 1.0, stds)
    stats = StandardizationStats(means=means, stds=stds)
    return stats.apply(X), stats


def _pairwise(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """k(a_i, b_j) between columns of A (V x m) and B (V x n), no features."""
    inner = A.T @ B
    if spec.kind == "linear":
        return inner
    if spec.kind == "polynomial":
        return (inner + spec.offset) ** spec.degree
    sq_a = np.sum(A * A, axis=0)
    sq_b = np.sum(B * B, axis=0)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * inner
    np.clip(d2, 0.0, None, out=d2)
    return np.exp(-spec.gamma * d2)


def gram(X: np.ndarray, spec: KernelSpec) -> GramMatrix:
    """Uncentered Gram matrix of the columns of X under ``spec``.

    The result is symmetrized exactly so downstream eigendecompositions see
    a clean symmetric matrix regardless of summation order.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError("input matrix contains non-finite entries")
    k = _pairwise(spec, X, X)
    k = (k + k.T) / 2.0
    return GramMatrix(entries=k, centered=False)


def cross_gram(Z: np.ndarray, X: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """E x T matrix of k(z_a, x_b) between columns of Z (V x E) and X (V x T)."""
    Z = np.asarray(Z, dtype=float)
    X = np.asarray(X, dtype=float)
    if Z.shape[0] != X.shape[0]:
        raise DimensionError(
            f"voxel counts differ: new data has {Z.shape[0]}, training data {X.shape[0]}")
    return _pairwise(spec, Z, X)


def center_gram(K: GramMatrix) -> GramMatrix:
    """Double-center a Gram matrix: H K H with H = I - J/T.

    Equals K + T^-2 J K J - T^-1 J K - T^-1 K J and corresponds to shifting
    every feature vector by the feature-space mean of the training samples.
    """
    k = K.entries
    col_means = k.mean(axis=0)
    total_mean = k.mean()
    centered = k - col_means[None, :] - col_means[:, None] + total_mean
    centered = (centered + centered.T) / 2.0
    return GramMatrix(entries=centered, centered=True)


def center_cross_gram(K_zx: np.ndarray, K_xx: np.ndarray) -> np.ndarray:
    """Center kernel rows of new samples against the training mean.

    ``K_zx`` is the E x T matrix of k(z_a, x_b); ``K_xx`` must be the RAW
    (uncentered) training Gram evaluated with the same kernel and the same
    standardization.  Returns the inner products of the mean-shifted
    features:

        K_zx + T^-2 J K_xx J - T^-1 J K_xx - T^-1 K_zx J.

    With Z equal to the training set this reduces to double centering.
    """
    K_zx = np.asarray(K_zx, dtype=float)
    K_xx = np.asarray(K_xx, dtype=float)
    if K_xx.ndim != 2 or K_xx.shape[0] != K_xx.shape[1]:
        raise DimensionError(f"training Gram must be square, got shape {K_xx.shape}")
    if K_zx.ndim != 2 or K_zx.shape[1] != K_xx.shape[0]:
        raise DimensionError(
            f"cross Gram has {K_zx.shape[1]} training columns, expected {K_xx.shape[0]}")
    col_means = K_xx.mean(axis=0)
    row_means = K_zx.mean(axis=1) if K_zx.shape[1] else np.zeros(K_zx.shape[0])
    return K_zx - row_means[:, None] - col_means[None, :] + K_xx.mean()
