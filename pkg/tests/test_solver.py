import math

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

import gdm
from gdm import (CrossSubjectGraph, DegenerateSubjectError, DimensionError,
                 GramMatrix, InfeasibleError, KernelSpec, MultiSubjectDataset,
                 Subject, assemble_core, build_category_graph, build_temporal_graph,
                 center_gram, fit, gram, ha_objective_pair, laplacian, load_model,
                 naive_fit, objective, project, save_model, solve_reduced,
                 standardize, subject_basis, synth_dataset)
from gdm.solver import select_energy_dim

from conftest import centered_gram_with_spectrum, random_symmetric_graph


# --- energy rule and subject bases ------------------------------------------

def test_energy_rule_picks_smallest_sufficient_dim():
    # singular values 3, 2, 1 -> cumulative fractions 0.5, 0.8333, 1.0
    sv = np.array([3.0, 2.0, 1.0])
    assert select_energy_dim(sv, 82) == 2
    assert select_energy_dim(sv, 50) == 1
    assert select_energy_dim(sv, 84) == 3
    assert select_energy_dim(sv, 100) == 3


def test_subject_basis_energy_selection():
    k = centered_gram_with_spectrum([9.0, 4.0, 1.0], size=5, seed=0)
    basis = subject_basis(GramMatrix(k, centered=True), 82)
    assert basis.retained_dim == 2
    assert basis.total_rank == 3
    assert_allclose(basis.eigvals, [9.0, 4.0], atol=1e-12)
    assert_allclose(basis.energy_kept, 5.0 / 6.0, atol=1e-12)


def test_subject_basis_full_energy_reconstructs_gram():
    rng = np.random.default_rng(3)
    b = rng.standard_normal((6, 3))
    b -= b.mean(axis=0)
    k = b @ b.T
    basis = subject_basis(GramMatrix(k, centered=True), 100)
    assert basis.retained_dim == 3
    recon = (basis.eigvecs * basis.eigvals) @ basis.eigvecs.T
    assert np.max(np.abs(recon - k)) <= 1e-8


def test_subject_basis_orthonormal_descending():
    k = centered_gram_with_spectrum([7.0, 5.0, 2.0, 0.5], size=8, seed=4)
    basis = subject_basis(GramMatrix(k, centered=True), 100)
    assert np.max(np.abs(basis.eigvecs.T @ basis.eigvecs - np.eye(4))) <= 1e-9
    assert np.all(np.diff(basis.eigvals) < 0)
    assert np.all(basis.eigvals > 0)


def test_subject_basis_degenerate_subject():
    with pytest.raises(DegenerateSubjectError):
        subject_basis(GramMatrix(np.zeros((4, 4)), centered=True), 100)


# --- core assembly and the reduced problem ----------------------------------

def test_assemble_core_identity_basis_returns_laplacian():
    lap = laplacian(random_symmetric_graph(5, seed=1))
    basis = gdm.SubjectBasis(eigvecs=np.eye(5), eigvals=np.ones(5),
                             retained_dim=5, total_rank=5, energy_kept=1.0)
    assert_allclose(assemble_core([basis], lap), lap.matrix, atol=1e-12)


def test_assemble_core_zero_laplacian():
    lap = gdm.Laplacian(matrix=np.zeros((4, 4)), degrees=np.zeros(4))
    k = centered_gram_with_spectrum([2.0, 1.0], size=4, seed=2)
    basis = subject_basis(GramMatrix(k, centered=True), 100)
    assert_allclose(assemble_core([basis], lap), 0.0, atol=1e-15)


def test_assemble_core_matches_dense_block_diagonal():
    rng = np.random.default_rng(5)
    bases = []
    for t, seed in [(6, 10), (5, 11)]:
        k = centered_gram_with_spectrum(rng.uniform(1, 5, size=3), size=t, seed=seed)
        bases.append(subject_basis(GramMatrix(k, centered=True), 100))
    lap = laplacian(random_symmetric_graph(11, seed=12))
    v_star = scipy.linalg.block_diag(*[b.eigvecs for b in bases])
    dense = v_star.T @ lap.matrix @ v_star
    assert np.max(np.abs(assemble_core(bases, lap) - dense)) <= 1e-10


def test_assemble_core_dimension_mismatch():
    lap = laplacian(random_symmetric_graph(4, seed=0))
    basis = gdm.SubjectBasis(eigvecs=np.eye(3), eigvals=np.ones(3),
                             retained_dim=3, total_rank=3, energy_kept=1.0)
    with pytest.raises(DimensionError):
        assemble_core([basis], lap)


def test_solve_reduced_diagonal():
    e, evals = solve_reduced(np.diag([0.1, 0.5, 0.9]), 2)
    assert_allclose(evals, [0.1, 0.5, 0.9])
    assert_allclose(np.abs(e), np.eye(3)[:, :2], atol=1e-14)
    assert e[0, 0] > 0 and e[1, 1] > 0   # sign convention


def test_solve_reduced_infeasible():
    with pytest.raises(InfeasibleError):
        solve_reduced(np.diag([0.1, 0.5, 0.9]), 4)


def test_solve_reduced_matches_full_spectrum_oracle():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((6, 6))
    c = (a + a.T) / 2
    e, _ = solve_reduced(c, 3)
    got = np.trace(e.T @ c @ e)
    expected = np.sort(np.linalg.eigvalsh(c))[:3].sum()
    assert abs(got - expected) <= 1e-10
    assert np.max(np.abs(e.T @ e - np.eye(3))) <= 1e-12


# --- objective ---------------------------------------------------------------

def test_objective_simple_pair():
    lap = laplacian(CrossSubjectGraph(np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert_allclose(objective(np.array([[0.0, 1.0]]), lap), 1.0)


def test_objective_constant_columns_is_zero():
    lap = laplacian(random_symmetric_graph(5, seed=3))
    y = np.tile(np.array([[2.0], [-1.0]]), (1, 5))
    assert abs(objective(y, lap)) <= 1e-10


def test_objective_dimension_mismatch():
    lap = laplacian(random_symmetric_graph(5, seed=3))
    with pytest.raises(DimensionError):
        objective(np.zeros((2, 4)), lap)


# --- fit ----------------------------------------------------------------------

def make_dataset(matrices, labels=None):
    subs = []
    for i, x in enumerate(matrices):
        lab = None if labels is None else labels[i]
        subs.append(Subject(f"s{i:02d}", x, lab))
    return MultiSubjectDataset(tuple(subs))


def test_fit_identical_subjects_align_perfectly():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((12, 6))
    ds = make_dataset([x, x.copy()])
    g = build_temporal_graph(2, 6)
    model = fit(ds, g, "linear", energy_percent=100, n_shared=3)
    assert model.objective <= 1e-8
    y1, y2 = model.training_responses(0), model.training_responses(1)
    assert np.max(np.abs(y1 - y2)) <= 1e-6


def test_fit_constraint_sum_of_outer_products():
    ds, _ = synth_dataset(3, 20, 12, 3, 3, 0.2, seed=8)
    g = build_category_graph(ds.labels_per_subject())
    model = fit(ds, g, "linear", energy_percent=82, n_shared=3)
    total = sum(model.training_responses(i) @ model.training_responses(i).T
                for i in range(3))
    assert np.max(np.abs(total - np.eye(3))) <= 1e-8


def test_fit_objective_is_sum_of_smallest_eigenvalues():
    ds, _ = synth_dataset(2, 15, 10, 3, 2, 0.3, seed=9)
    g = build_category_graph(ds.labels_per_subject())
    model = fit(ds, g, "linear", energy_percent=100, n_shared=4)
    assert abs(model.objective - model.eigenvalues[:4].sum()) <= 1e-10
    y = model.training_matrix()
    assert abs(objective(y, laplacian(g)) - model.objective) <= 1e-8 * max(
        1.0, abs(model.objective))


def test_fit_matches_naive_objective(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    m_fit = fit(small_dataset, g, "linear", energy_percent=100, n_shared=4)
    m_naive = naive_fit(small_dataset, g, "linear", n_shared=4)
    assert abs(m_fit.objective - m_naive.objective) <= 1e-8 * abs(m_naive.objective)


def test_fit_naive_shared_space_agreement_with_eigengap():
    # random graphs break the spectral degeneracies of the category graph,
    # so the rotation-invariant Y^T Y comparison is exercised for real
    checked = 0
    for seed in range(8):
        ds, _ = synth_dataset(3, 30, 20, 4, 4, 0.1, seed=seed)
        g = random_symmetric_graph(ds.total_samples, seed=100 + seed)
        m_fit = fit(ds, g, "linear", energy_percent=100, n_shared=4)
        if m_fit.eigengap <= 1e-6:
            continue
        m_naive = naive_fit(ds, g, "linear", n_shared=4)
        y_f, y_n = m_fit.training_matrix(), m_naive.training_matrix()
        assert np.max(np.abs(y_f.T @ y_f - y_n.T @ y_n)) <= 1e-6
        checked += 1
    assert checked >= 5


def test_fit_objective_monotone_in_shared_dim():
    # partial sums of the ascending reduced spectrum; with a nonnegative
    # graph the Laplacian is PSD, so the objective never decreases in K
    ds, _ = synth_dataset(2, 20, 12, 3, 3, 0.2, seed=10)
    g = build_temporal_graph(2, 12)
    objectives = [fit(ds, g, "linear", 100, n_shared=k).objective for k in (1, 2, 3, 4)]
    assert np.all(np.diff(objectives) >= -1e-10)


def test_fit_subject_order_invariance():
    ds, _ = synth_dataset(3, 18, 10, 3, 2, 0.2, seed=11)
    g = random_symmetric_graph(30, seed=42)
    model = fit(ds, g, "linear", 100, n_shared=3)

    perm = [2, 0, 1]
    ds_p = MultiSubjectDataset(tuple(ds.subjects[i] for i in perm))
    counts = ds.sample_counts
    offsets = np.concatenate([[0], np.cumsum(counts)])
    order = np.concatenate([np.arange(offsets[i], offsets[i + 1]) for i in perm])
    g_p = CrossSubjectGraph(g.weights[np.ix_(order, order)])
    model_p = fit(ds_p, g_p, "linear", 100, n_shared=3)

    assert abs(model.objective - model_p.objective) <= 1e-10 * max(1, abs(model.objective))
    if model.eigengap > 1e-6:
        y = model.training_matrix()
        y_p = model_p.training_matrix()[:, np.argsort(order)]
        assert np.max(np.abs(y.T @ y - y_p.T @ y_p)) <= 1e-6


def test_fit_infeasible_shared_dim():
    ds, _ = synth_dataset(2, 10, 6, 2, 2, 0.2, seed=12)
    g = build_category_graph(ds.labels_per_subject())
    with pytest.raises(InfeasibleError):
        fit(ds, g, "linear", 100, n_shared=11)  # sum of ranks is 2*(6-1) = 10


def test_fit_graph_size_mismatch():
    ds, _ = synth_dataset(2, 10, 6, 2, 2, 0.2, seed=12)
    with pytest.raises(DimensionError):
        fit(ds, build_temporal_graph(2, 5), "linear", 100, n_shared=2)


def test_fit_threads_do_not_change_the_result(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    serial = fit(small_dataset, g, "linear", 82, n_shared=3, threads=1)
    parallel = fit(small_dataset, g, "linear", 82, n_shared=3, threads=3)
    assert serial.objective == parallel.objective
    for i in range(3):
        assert np.array_equal(serial.subjects[i].mixing, parallel.subjects[i].mixing)


def test_fit_per_subject_kernels_and_energies(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    model = fit(small_dataset, g,
                ["linear", "poly:degree=2,offset=1", "rbf:gamma=0.05"],
                energy_percent=[100, 82, 60], n_shared=2)
    kinds = [b.kernel.kind for b in model.subjects]
    assert kinds == ["linear", "polynomial", "gaussian"]
    assert [b.energy_percent for b in model.subjects] == [100, 82, 60]


# --- overfitting at full energy ----------------------------------------------

def test_full_energy_unit_graph_aligns_perfectly():
    # full-column-rank aligned data + unit aligned-pair graph + energy 100
    # reproduces the perfect (degenerate) alignment
    ds, _ = synth_dataset(3, 30, 16, 4, 4, sigma=0.3, seed=14)
    g = build_temporal_graph(3, 16, weight=1.0)
    model = fit(ds, g, "linear", energy_percent=100, n_shared=4)
    assert np.all(model.eigenvalues[:4] <= 1e-8)
    ys = [model.training_responses(i) for i in range(3)]
    for y in ys[1:]:
        assert np.max(np.abs(y - ys[0])) <= 1e-6


def test_truncation_breaks_perfect_alignment():
    # same data, energy 82: the truncated subspaces no longer intersect in
    # aligned directions, so the objective is genuinely positive
    ds, _ = synth_dataset(3, 30, 16, 4, 4, sigma=0.3, seed=14)
    g = build_temporal_graph(3, 16, weight=1.0)
    model = fit(ds, g, "linear", energy_percent=82, n_shared=4)
    assert model.objective > 1e-3


# --- projection ----------------------------------------------------------------

def test_project_training_columns_match_training_responses(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    for spec in ("linear", "rbf:gamma=0.05"):
        model = fit(small_dataset, g, spec, 82, n_shared=3)
        for i in range(small_dataset.n_subjects):
            got = project(model, i, small_dataset.subjects[i].data).matrix
            assert np.max(np.abs(got - model.training_responses(i))) <= 1e-10


def test_project_empty_input(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    model = fit(small_dataset, g, "linear", 82, n_shared=3)
    out = project(model, 0, np.empty((30, 0)))
    assert out.matrix.shape == (3, 0)


def test_project_matches_explicit_map_for_linear_kernel():
    # materialize W = X_c V D^-1 E for the linear kernel and compare (Eq.
    # of the optimal per-subject map applied to mean-shifted new data)
    ds, _ = synth_dataset(2, 12, 9, 3, 3, 0.4, seed=15)
    g = build_category_graph(ds.labels_per_subject())
    model = fit(ds, g, "linear", 100, n_shared=3)
    rng = np.random.default_rng(16)
    z = rng.standard_normal((12, 5))
    for i in range(2):
        b = model.subjects[i]
        xc = b.train_data - b.train_data.mean(axis=1, keepdims=True)
        w = xc @ b.basis.eigvecs @ np.diag(1.0 / b.basis.eigvals) @ b.mixing
        zc = b.stats.apply(z) - b.train_data.mean(axis=1, keepdims=True)
        expected = w.T @ zc
        got = project(model, i, z).matrix
        assert np.max(np.abs(got - expected)) <= 1e-10


def test_project_low_rank_projection_identity():
    # for the linear kernel the truncated-basis route equals projecting the
    # features onto the leading left singular subspace first
    rng = np.random.default_rng(17)
    x = rng.standard_normal((10, 7))
    xs, _ = standardize(x)
    xc = xs - xs.mean(axis=1, keepdims=True)
    basis = subject_basis(center_gram(gram(xs, KernelSpec.linear())), 70)
    u = xc @ basis.eigvecs / np.sqrt(basis.eigvals)   # left singular vectors
    z = rng.standard_normal((10, 4))
    lhs = z.T @ (u @ u.T) @ xc @ basis.eigvecs
    rhs = z.T @ xc @ basis.eigvecs
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_project_validates_input(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    model = fit(small_dataset, g, "linear", 82, n_shared=3)
    with pytest.raises(DimensionError):
        project(model, 0, np.zeros((29, 2)))
    with pytest.raises(KeyError):
        project(model, "nope", np.zeros((30, 2)))
    with pytest.raises(IndexError):
        project(model, 17, np.zeros((30, 2)))


# --- naive solver ---------------------------------------------------------------

def test_naive_fit_zero_laplacian_single_subject():
    rng = np.random.default_rng(18)
    ds = make_dataset([rng.standard_normal((10, 6))])
    g = CrossSubjectGraph(np.zeros((6, 6)))
    model = naive_fit(ds, g, "linear", n_shared=2)
    assert abs(model.objective) <= 1e-10
    m_fit = fit(ds, g, "linear", 100, n_shared=2)
    assert abs(m_fit.objective) <= 1e-10


def test_naive_fit_constraint_holds(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    model = naive_fit(small_dataset, g, "linear", n_shared=4)
    total = sum(model.training_responses(i) @ model.training_responses(i).T
                for i in range(3))
    assert np.max(np.abs(total - np.eye(4))) <= 1e-8


def test_naive_fit_projection_consistency(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    model = naive_fit(small_dataset, g, "linear", n_shared=3)
    got = project(model, 1, small_dataset.subjects[1].data).matrix
    assert np.max(np.abs(got - model.training_responses(1))) <= 1e-8


def test_naive_fit_guard(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    with pytest.raises(gdm.ParameterError, match="guard"):
        naive_fit(small_dataset, g, "linear", n_shared=2, max_samples=10)


def test_naive_fit_infeasible(small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    with pytest.raises(InfeasibleError):
        naive_fit(small_dataset, g, "linear", n_shared=58)


# --- hyperalignment identity ------------------------------------------------

def test_ha_identity_random_instances():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        w = [rng.standard_normal((5, 2)) for _ in range(3)]
        x = [rng.standard_normal((5, 4)) for _ in range(3)]
        lhs, rhs = ha_objective_pair(w, x)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_ha_identity_zero_maps():
    w = [np.zeros((5, 2)) for _ in range(3)]
    x = [np.ones((5, 4)) for _ in range(3)]
    assert ha_objective_pair(w, x) == (0.0, 0.0)


def test_ha_identity_single_subject_degenerates_to_zero():
    rng = np.random.default_rng(19)
    lhs, rhs = ha_objective_pair([rng.standard_normal((4, 2))],
                                 [rng.standard_normal((4, 3))])
    assert abs(lhs) <= 1e-12
    assert abs(rhs) <= 1e-12


def test_ha_identity_shape_mismatch():
    with pytest.raises(DimensionError):
        ha_objective_pair([np.zeros((5, 2))], [np.zeros((4, 3))])


# --- serialization ------------------------------------------------------------

def test_model_round_trip_bit_exact(tmp_path, small_dataset):
    g = build_category_graph(small_dataset.labels_per_subject())
    model = fit(small_dataset, g, ["linear", "rbf:gamma=0.05", "poly:degree=2,offset=1"],
                energy_percent=82, n_shared=3)
    save_model(model, tmp_path / "m1")
    back = load_model(tmp_path / "m1")
    save_model(back, tmp_path / "m2")

    for name in sorted(p.name for p in (tmp_path / "m1").iterdir()):
        a = (tmp_path / "m1" / name).read_bytes()
        b = (tmp_path / "m2" / name).read_bytes()
        assert a == b, name

    assert back.n_shared == model.n_shared
    assert back.solver == model.solver
    assert back.eigengap == model.eigengap
    assert np.array_equal(back.eigenvalues, model.eigenvalues)
    for b1, b2 in zip(model.subjects, back.subjects):
        assert b1.kernel == b2.kernel
        assert np.array_equal(b1.train_data, b2.train_data)
        assert np.array_equal(b1.mixing, b2.mixing)
        assert np.array_equal(b1.raw_gram, b2.raw_gram)

    rng = np.random.default_rng(20)
    z = rng.standard_normal((30, 4))
    assert np.array_equal(project(model, 1, z).matrix, project(back, 1, z).matrix)


def test_model_round_trip_infinite_eigengap(tmp_path):
    rng = np.random.default_rng(21)
    ds = make_dataset([rng.standard_normal((6, 4))])
    g = build_temporal_graph(1, 4)
    model = fit(ds, g, "linear", 100, n_shared=3)   # rank 3 = K, no gap defined
    assert math.isinf(model.eigengap)
    save_model(model, tmp_path / "m")
    assert math.isinf(load_model(tmp_path / "m").eigengap)


def test_load_model_missing_manifest(tmp_path):
    with pytest.raises(gdm.FormatError, match="manifest"):
        load_model(tmp_path)
