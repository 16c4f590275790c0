import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gdm import (DataError, DimensionError, GramMatrix, KernelSpec, ParameterError,
                 center_cross_gram, center_gram, cross_gram, gram, standardize)


# --- standardization --------------------------------------------------------

def test_standardize_two_samples():
    out, stats = standardize(np.array([[1.0, 3.0]]))
    assert_allclose(out, [[-1.0, 1.0]])
    assert_allclose(stats.means, [2.0])
    assert_allclose(stats.stds, [1.0])


def test_standardize_constant_voxel_passes_through_as_zeros():
    out, stats = standardize(np.array([[5.0, 5.0, 5.0]]))
    assert_array_equal(out, [[0.0, 0.0, 0.0]])
    assert stats.stds[0] == 1.0


def test_standardize_random_rows_have_zero_mean_unit_variance():
    rng = np.random.default_rng(3)
    out, _ = standardize(rng.standard_normal((4, 6)) * 5 + 2)
    assert np.max(np.abs(out.mean(axis=1))) <= 1e-12
    assert np.all(np.abs(out.var(axis=1) - 1) <= 1e-9)


def test_standardize_rejects_non_finite():
    with pytest.raises(DataError, match="non-finite"):
        standardize(np.array([[1.0, np.nan]]))


def test_standardize_rejects_single_sample():
    with pytest.raises(DataError, match="at least 2"):
        standardize(np.array([[1.0]]))


# --- kernels ----------------------------------------------------------------

def test_linear_gram_orthonormal_columns():
    k = gram(np.eye(2), KernelSpec.linear())
    assert_allclose(k.entries, np.eye(2))
    assert not k.centered


def test_gaussian_gram_identical_columns_all_ones():
    x = np.array([[1.0, 1.0], [2.0, 2.0]])
    k = gram(x, KernelSpec.gaussian(gamma=1.0))
    assert_allclose(k.entries, np.ones((2, 2)))


def test_polynomial_gram_single_column():
    x = np.array([[1.0], [1.0]])
    k = gram(x, KernelSpec.polynomial(degree=2, offset=1.0))
    assert_allclose(k.entries, [[9.0]])


def test_gram_is_symmetric_for_all_kernels():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 7))
    for spec in (KernelSpec.linear(), KernelSpec.polynomial(3, 0.5),
                 KernelSpec.gaussian(0.2)):
        k = gram(x, spec).entries
        assert np.max(np.abs(k - k.T)) <= 1e-12


def test_linear_gram_equals_explicit_product():
    rng = np.random.default_rng(8)
    xs, _ = standardize(rng.standard_normal((5, 9)))
    k = gram(xs, KernelSpec.linear()).entries
    assert np.max(np.abs(k - xs.T @ xs)) <= 1e-12


# --- centering --------------------------------------------------------------

def test_center_gram_annihilates_all_ones():
    k = center_gram(GramMatrix(np.ones((2, 2))))
    assert_allclose(k.entries, np.zeros((2, 2)), atol=1e-15)
    assert k.centered


def test_center_gram_fixes_zero_sum_input():
    # linear Gram of zero-mean features has K J = 0, so H K H = K
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 6))
    x -= x.mean(axis=1, keepdims=True)
    k = x.T @ x
    out = center_gram(GramMatrix(k))
    assert np.max(np.abs(out.entries - k)) <= 1e-12


def test_center_gram_matches_explicit_projection():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 3))
    k = (a + a.T) / 2
    h = np.eye(3) - np.ones((3, 3)) / 3
    assert np.max(np.abs(center_gram(GramMatrix(k)).entries - h @ k @ h)) <= 1e-12


def test_center_gram_idempotent():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((5, 5))
    k = (a + a.T) / 2
    once = center_gram(GramMatrix(k)).entries
    twice = center_gram(GramMatrix(once)).entries
    assert np.max(np.abs(once - twice)) <= 1e-12


def test_center_gram_preserves_psd():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((6, 4))
        k = b @ b.T
        evals = np.linalg.eigvalsh(center_gram(GramMatrix(k)).entries)
        assert evals.min() >= -1e-9 * np.abs(k).max()


def test_center_gram_near_zero_row_sums():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((6, 6))
    out = center_gram(GramMatrix((a + a.T) / 2)).entries
    bound = 1e-9 * 6 * np.abs(out).max()
    assert np.max(np.abs(out.sum(axis=0))) <= bound
    assert np.max(np.abs(out.sum(axis=1))) <= bound


def test_center_cross_gram_reduces_to_double_centering():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((4, 5))
    spec = KernelSpec.gaussian(0.3)
    raw = gram(x, spec).entries
    zx = cross_gram(x, x, spec)
    assert np.max(np.abs(center_cross_gram(zx, raw)
                         - center_gram(GramMatrix(raw)).entries)) <= 1e-12


def test_center_cross_gram_single_training_sample_is_zero():
    assert_allclose(center_cross_gram(np.array([[3.7]]), np.array([[2.2]])), [[0.0]])


def test_center_cross_gram_matches_feature_space_oracle():
    # linear kernel on a 3-voxel toy: compute (Z - m)^T (X - m) explicitly
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 6))
    z = rng.standard_normal((3, 4))
    m = x.mean(axis=1, keepdims=True)
    oracle = (z - m).T @ (x - m)
    got = center_cross_gram(cross_gram(z, x, KernelSpec.linear()), x.T @ x)
    assert np.max(np.abs(got - oracle)) <= 1e-12


def test_center_cross_gram_single_column_matches_centered_row():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((4, 5))
    spec = KernelSpec.polynomial(2, 1.0)
    raw = gram(x, spec).entries
    centered = center_gram(GramMatrix(raw)).entries
    for b in range(5):
        row = center_cross_gram(cross_gram(x[:, [b]], x, spec), raw)
        assert_allclose(row[0], centered[b], atol=1e-12)


def test_center_cross_gram_shape_mismatch():
    with pytest.raises(DimensionError):
        center_cross_gram(np.zeros((2, 3)), np.zeros((4, 4)))


# --- spec strings -----------------------------------------------------------

def test_kernel_spec_parse_round_trip():
    for text, spec in [
        ("linear", KernelSpec.linear()),
        ("poly:degree=3,offset=0.5", KernelSpec.polynomial(3, 0.5)),
        ("rbf:gamma=0.05", KernelSpec.gaussian(0.05)),
    ]:
        parsed = KernelSpec.parse(text)
        assert parsed == spec
        assert KernelSpec.parse(parsed.spec_string()) == parsed


def test_kernel_spec_parse_errors():
    for bad in ("sigmoid", "rbf", "rbf:gamma=zero", "poly:deg=2", "rbf:gamma=-1"):
        with pytest.raises(ParameterError):
            KernelSpec.parse(bad)


def test_kernel_spec_validation():
    with pytest.raises(ParameterError):
        KernelSpec.polynomial(degree=0)
    with pytest.raises(ParameterError):
        KernelSpec.gaussian(gamma=0.0)
