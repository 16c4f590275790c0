"""The alignment optimizer.

Fitting proceeds through per-subject spectral truncation of the centered
Gram matrices, assembly of the reduced core matrix, and one symmetric
eigendecomposition whose K smallest eigenpairs define the shared space.
Everything is Gram-only: per-subject feature maps act purely through their
Gram matrices, so any kernel works, including ones whose feature space is
infinite-dimensional.

A dense O(T^3) generalized-eigenproblem solver (:func:`naive_fit`) is kept
as a correctness oracle for the fast path.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .dataio import MultiSubjectDataset
from .errors import (DataError, DegenerateSubjectError, DimensionError, FormatError,
                     InfeasibleError, ParameterError)
from .graph import CrossSubjectGraph, Laplacian, build_temporal_graph, laplacian
from .kernels import (GramMatrix, KernelSpec, StandardizationStats, center_cross_gram,
                      center_gram, cross_gram, gram, standardize)

MODEL_FORMAT = 1


@dataclass(frozen=True, eq=False)
class SubjectBasis:
    """Truncated eigenpairs of a subject's centered Gram matrix.

    ``eigvecs`` is T_i x L_i with orthonormal columns, ``eigvals`` the
    matching positive eigenvalues in descending order.  ``total_rank`` is
    the count of positive eigenvalues above the rank cutoff and
    ``energy_kept`` the realized cumulative singular-value fraction.
    """

    eigvecs: np.ndarray
    eigvals: np.ndarray
    retained_dim: int
    total_rank: int
    energy_kept: float


@dataclass(frozen=True, eq=False)
class SubjectBlock:
    """Everything the model keeps per subject to map new samples."""

    subject_id: str
    train_data: np.ndarray          # standardized V x T_i
    stats: StandardizationStats
    kernel: KernelSpec
    raw_gram: np.ndarray            # uncentered T_i x T_i (new-data centering needs it)
    basis: SubjectBasis
    mixing: np.ndarray              # L_i x K block of the stacked eigenvector matrix
    energy_percent: float


@dataclass(frozen=True, eq=False)
class SharedResponses:
    """K x n coordinates of samples in the shared space."""

    matrix: np.ndarray
    subject_id: str
    sample_indices: tuple[int, ...] | None = None


@dataclass(frozen=True, eq=False)
class AlignmentModel:
    """A fitted alignment: per-subject kernel maps into a K-dimensional
    shared space plus the reduced-problem diagnostics.

    ``eigenvalues`` is the full ascending spectrum of the reduced core
    matrix; ``objective`` equals the sum of its K smallest entries;
    ``eigengap`` is the (K+1)-th minus the K-th eigenvalue (infinity when
    K exhausts the spectrum).  A zero eigengap means the shared space is
    not unique beyond rotation.
    """

    subjects: tuple[SubjectBlock, ...]
    n_shared: int
    eigenvalues: np.ndarray
    eigengap: float
    objective: float
    solver: str

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(b.subject_id for b in self.subjects)

    def block(self, subject: int | str) -> SubjectBlock:
        if isinstance(subject, str):
            for b in self.subjects:
                if b.subject_id == subject:
                    return b
            raise KeyError(f"unknown subject id {subject!r}")
        return self.subjects[subject]

    def training_responses(self, subject: int | str) -> np.ndarray:
        """Shared-space coordinates of the subject's training samples,
        K x T_i.  Equal to mixing.T @ eigvecs.T by the Gram eigenvalue
        identity, so no kernel evaluation is needed."""
        b = self.block(subject)
        return b.mixing.T @ b.basis.eigvecs.T

    def training_matrix(self) -> np.ndarray:
        """All training responses stacked subject-major, K x T."""
        return np.hstack([self.training_responses(i) for i in range(len(self.subjects))])

    def project(self, subject: int | str, Z: np.ndarray) -> SharedResponses:
        return project(self, subject, Z)


def select_energy_dim(singular_values: np.ndarray, energy_percent: float) -> int:
    """Smallest L whose cumulative singular-value fraction reaches the
    requested energy; at 100 every positive singular value is kept."""
    if not 0 < energy_percent <= 100:
        raise ParameterError(f"energy_percent must be in (0, 100], got {energy_percent}")
    if energy_percent == 100:
        return len(singular_values)
    fractions = np.cumsum(singular_values) / np.sum(singular_values)
    pos = int(np.searchsorted(fractions, energy_percent / 100.0, side="left"))
    return min(pos + 1, len(singular_values))


def subject_basis(K_centered: GramMatrix, energy_percent: float) -> SubjectBasis:
    """Spectral truncation of a centered Gram matrix.

    Eigenvalues at or below eps_rank = T * machine_eps * lambda_max count as
    rank deficiency and are discarded (their inverses would blow up in the
    projection algebra).  The retained dimension follows the energy rule on
    singular values, i.e. square roots of the Gram eigenvalues.
    """
    if not K_centered.centered:
        raise ParameterError("subject_basis needs a centered Gram matrix")
    k = K_centered.entries
    t = k.shape[0]
    evals, evecs = np.linalg.eigh(k)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if evals[0] <= 0:
        raise DegenerateSubjectError(
            "centered Gram matrix has no positive eigenvalue (all-constant data)")
    eps_rank = t * np.finfo(float).eps * evals[0]
    total_rank = int(np.count_nonzero(evals > eps_rank))
    if total_rank == 0:
        raise DegenerateSubjectError("centered Gram matrix is numerically zero")
    sv = np.sqrt(evals[:total_rank])
    retained = select_energy_dim(sv, energy_percent)
    return SubjectBasis(
        eigvecs=np.ascontiguousarray(evecs[:, :retained]),
        eigvals=evals[:retained].copy(),
        retained_dim=retained,
        total_rank=total_rank,
        energy_kept=float(sv[:retained].sum() / sv.sum()),
    )


def assemble_core(bases: Sequence[SubjectBasis], lap: Laplacian) -> np.ndarray:
    """Compress the Laplacian through the per-subject bases.

    Returns the L_total x L_total matrix whose (i, j) block is
    eigvecs_i.T @ L[block i, block j] @ eigvecs_j; the T x T block-diagonal
    basis matrix is never materialized.  Output is symmetrized exactly.
    """
    counts = [b.eigvecs.shape[0] for b in bases]
    if sum(counts) != lap.size:
        raise DimensionError(
            f"bases cover {sum(counts)} samples but the Laplacian has {lap.size}")
    sample_off = np.concatenate([[0], np.cumsum(counts)])
    ldims = [b.retained_dim for b in bases]
    dim_off = np.concatenate([[0], np.cumsum(ldims)])
    core = np.empty((dim_off[-1], dim_off[-1]))
    for j, bj in enumerate(bases):
        lv = lap.matrix[:, sample_off[j]:sample_off[j + 1]] @ bj.eigvecs
        for i, bi in enumerate(bases):
            core[dim_off[i]:dim_off[i + 1], dim_off[j]:dim_off[j + 1]] = (
                bi.eigvecs.T @ lv[sample_off[i]:sample_off[i + 1]])
    return (core + core.T) / 2.0


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column positive, for
    reproducible serialization (the model is only defined up to rotation)."""
    if vectors.shape[1] == 0:
        return vectors
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def solve_reduced(core: np.ndarray, n_shared: int) -> tuple[np.ndarray, np.ndarray]:
    """K smallest eigenpairs of the symmetric reduced matrix.

    Returns (first K eigenvectors with the deterministic sign convention,
    full ascending eigenvalue vector).  Infeasible when K exceeds the
    matrix size: the orthonormality constraint cannot be met.
    """
    core = np.asarray(core, dtype=float)
    if core.ndim != 2 or core.shape[0] != core.shape[1]:
        raise DimensionError(f"reduced matrix must be square, got {core.shape}")
    if n_shared > core.shape[0]:
        raise InfeasibleError(
            f"shared dimension {n_shared} exceeds the {core.shape[0]} available "
            "directions; no solution satisfies the orthonormality constraint")
    evals, evecs = np.linalg.eigh(core)
    return _fix_signs(evecs[:, :n_shared]), evals


def objective(Y: np.ndarray, lap: Laplacian) -> float:
    """Alignment objective tr(Y L Y^T): the graph-weighted sum of pairwise
    squared distances between shared-space samples."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[1] != lap.size:
        raise DimensionError(
            f"responses cover {Y.shape[1]} samples but the Laplacian has {lap.size}")
    return float(np.sum((Y @ lap.matrix) * Y))


def _normalize_kernels(kernels, n_subjects: int) -> list[KernelSpec]:
    if isinstance(kernels, (KernelSpec, str)):
        kernels = [kernels] * n_subjects
    specs = [KernelSpec.parse(k) if isinstance(k, str) else k for k in kernels]
    if len(specs) != n_subjects:
        raise ParameterError(f"{len(specs)} kernels for {n_subjects} subjects")
    return specs


def _normalize_energies(energy_percent, n_subjects: int) -> list[float]:
    if np.isscalar(energy_percent):
        energies = [float(energy_percent)] * n_subjects
    else:
        energies = [float(e) for e in energy_percent]
        if len(energies) != n_subjects:
            raise ParameterError(f"{len(energies)} energies for {n_subjects} subjects")
    for e in energies:
        if not 0 < e <= 100:
            raise ParameterError(f"energy_percent must be in (0, 100], got {e}")
    return energies


def _prepare_subject(data: np.ndarray, spec: KernelSpec, energy: float):
    xs, stats = standardize(data)
    raw = gram(xs, spec)
    basis = subject_basis(center_gram(raw), energy)
    return xs, stats, raw, basis


def fit(dataset: MultiSubjectDataset, graph: CrossSubjectGraph, kernels,
        energy_percent=82.0, n_shared: int = 10,
        threads: int | None = 1) -> AlignmentModel:
    """Fit the alignment model.

    Pipeline: standardize each subject, evaluate its Gram matrix, double
    center, truncate spectrally at the requested energy, assemble the
    reduced core against the graph Laplacian, and keep the K smallest
    eigenpairs.  ``kernels`` is one spec (or spec string) for all subjects
    or a per-subject sequence; likewise ``energy_percent`` may be global or
    per subject.

    Per-subject decompositions are independent; ``threads`` > 1 (or None
    for all cores) runs them concurrently with no effect on the result.
    """
    m = dataset.n_subjects
    specs = _normalize_kernels(kernels, m)
    energies = _normalize_energies(energy_percent, m)
    if graph.size != dataset.total_samples:
        raise DimensionError(
            f"graph has {graph.size} nodes but the dataset has {dataset.total_samples} samples")
    if n_shared < 1:
        raise ParameterError("n_shared must be >= 1")
    if threads is not None and threads < 1:
        raise ParameterError("threads must be >= 1")

    jobs = list(zip((s.data for s in dataset.subjects), specs, energies))
    if threads is None or threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            prepared = list(pool.map(lambda args: _prepare_subject(*args), jobs))
    else:
        prepared = [_prepare_subject(*args) for args in jobs]

    bases = [p[3] for p in prepared]
    core = assemble_core(bases, laplacian(graph))
    total_dim = core.shape[0]
    if n_shared > total_dim:
        raise InfeasibleError(
            f"shared dimension {n_shared} exceeds the {total_dim} retained directions")
    stacked, evals = solve_reduced(core, n_shared)

    dim_off = np.concatenate([[0], np.cumsum([b.retained_dim for b in bases])])
    blocks = []
    for i, (s, (xs, stats, raw, basis)) in enumerate(zip(dataset.subjects, prepared)):
        blocks.append(SubjectBlock(
            subject_id=s.subject_id, train_data=xs, stats=stats, kernel=specs[i],
            raw_gram=raw.entries, basis=basis,
            mixing=np.ascontiguousarray(stacked[dim_off[i]:dim_off[i + 1]]),
            energy_percent=energies[i]))
    eigengap = float(evals[n_shared] - evals[n_shared - 1]) if n_shared < total_dim else math.inf
    return AlignmentModel(
        subjects=tuple(blocks), n_shared=n_shared, eigenvalues=evals,
        eigengap=eigengap, objective=float(evals[:n_shared].sum()), solver="spectral")


def naive_fit(dataset: MultiSubjectDataset, graph: CrossSubjectGraph, kernels,
              n_shared: int = 10, max_samples: int = 3000) -> AlignmentModel:
    """Dense oracle solver: the generalized eigenproblem in expansion
    coefficients.

    Substituting per-subject maps written in their own feature samples turns
    the problem into minimizing tr(B^T K L K B) under B^T K K B = I over the
    block-diagonal centered Gram K.  The K K matrix is whitened by the
    pseudo-inverse square root restricted to its positive-eigenvalue range
    (components outside the range are redundant), one dense T x T
    eigendecomposition solves the whitened problem, and the result maps
    back to B.  Cost is O(T^3), which is why this is an oracle rather than
    the default: ``max_samples`` guards against accidental huge inputs.

    The returned model is equivalent to ``fit`` at energy 100 (same optimum,
    shared space equal up to rotation when the eigengap is positive).
    """
    m = dataset.n_subjects
    specs = _normalize_kernels(kernels, m)
    t_total = dataset.total_samples
    if t_total > max_samples:
        raise ParameterError(
            f"naive solver is dense O(T^3); {t_total} samples exceed the "
            f"{max_samples} guard")
    if graph.size != t_total:
        raise DimensionError(
            f"graph has {graph.size} nodes but the dataset has {t_total} samples")
    if n_shared < 1:
        raise ParameterError("n_shared must be >= 1")

    prepared = [_prepare_raw(s.data, spec) for s, spec in zip(dataset.subjects, specs)]
    centered = [p[2] for p in prepared]
    k_star = scipy.linalg.block_diag(*[c.entries for c in centered])
    lap = laplacian(graph)

    a = k_star @ lap.matrix @ k_star
    a = (a + a.T) / 2.0
    mm = k_star @ k_star
    mm = (mm + mm.T) / 2.0
    mu, p = np.linalg.eigh(mm)
    if mu[-1] <= 0:
        raise DegenerateSubjectError("block Gram matrix has no positive spectrum")
    cutoff = t_total * np.finfo(float).eps * mu[-1]
    keep = mu > cutoff
    rank = int(np.count_nonzero(keep))
    if n_shared > rank:
        raise InfeasibleError(
            f"shared dimension {n_shared} exceeds the rank {rank} of the block Gram")
    whiten = p[:, keep] / np.sqrt(mu[keep])
    reduced = whiten.T @ a @ whiten
    reduced = (reduced + reduced.T) / 2.0
    sig, f = np.linalg.eigh(reduced)
    coeffs = whiten @ _fix_signs(f[:, :n_shared])   # B, T x K

    # Re-encode the dense solution in the per-subject full-energy bases so the
    # model container (and projection) is uniform across solvers.
    blocks = []
    off = 0
    for s, spec, (xs, stats, cent, raw) in zip(dataset.subjects, specs, prepared):
        basis = subject_basis(cent, 100.0)
        b_i = coeffs[off:off + s.n_samples]
        mixing = (basis.eigvecs.T @ b_i) * basis.eigvals[:, None]
        blocks.append(SubjectBlock(
            subject_id=s.subject_id, train_data=xs, stats=stats, kernel=spec,
            raw_gram=raw, basis=basis, mixing=mixing, energy_percent=100.0))
        off += s.n_samples
    eigengap = float(sig[n_shared] - sig[n_shared - 1]) if n_shared < rank else math.inf
    return AlignmentModel(
        subjects=tuple(blocks), n_shared=n_shared, eigenvalues=sig,
        eigengap=eigengap, objective=float(sig[:n_shared].sum()), solver="naive")


def _prepare_raw(data: np.ndarray, spec: KernelSpec):
    xs, stats = standardize(data)
    raw = gram(xs, spec)
    return xs, stats, center_gram(raw), raw.entries


def project(model: AlignmentModel, subject: int | str, Z: np.ndarray) -> SharedResponses:
    """Map new samples of one subject into the shared space.

    Applies the stored standardization, evaluates the cross kernel against
    the stored training samples, centers it against the training mean, and
    contracts through the stored basis: Y = mixing^T D^-1 V^T K_zx^T.  The
    low-dimensional projection in feature space is implicit in the basis
    truncation, so no feature map is ever touched.
    """
    b = model.block(subject)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise DimensionError(f"expected a 2-D V x E matrix, got shape {Z.shape}")
    if Z.shape[0] != b.train_data.shape[0]:
        raise DimensionError(
            f"subject {b.subject_id} has {b.train_data.shape[0]} voxels, data has {Z.shape[0]}")
    if not np.all(np.isfinite(Z)):
        raise DataError("input matrix contains non-finite entries")
    zs = b.stats.apply(Z)
    k_zx = cross_gram(zs, b.train_data, b.kernel)
    k_c = center_cross_gram(k_zx, b.raw_gram)
    y = b.mixing.T @ (b.basis.eigvecs.T @ k_c.T / b.basis.eigvals[:, None])
    return SharedResponses(matrix=y, subject_id=b.subject_id)


def ha_objective_pair(W: Sequence[np.ndarray], X: Sequence[np.ndarray]) -> tuple[float, float]:
    """Both sides of the mean-anchored alignment identity.

    lhs: sum over subjects of |W_i^T X_i - S*|_F^2 with S* the average of
    the mapped responses.  rhs: the graph objective tr(Y (I - G) Y^T) for
    the temporally-aligned graph with weight 1/M.  The two are equal, which
    ties the classical formulation to the graph one.
    """
    if len(W) != len(X):
        raise DimensionError(f"{len(W)} maps for {len(X)} data matrices")
    ys = []
    for i, (w, x) in enumerate(zip(W, X)):
        w = np.asarray(w, dtype=float)
        x = np.asarray(x, dtype=float)
        if w.shape[0] != x.shape[0]:
            raise DimensionError(f"subject {i}: map has {w.shape[0]} rows, data {x.shape[0]}")
        ys.append(w.T @ x)
    t0 = ys[0].shape[1]
    if any(y.shape != ys[0].shape for y in ys):
        raise DimensionError("all subjects must share the same aligned shape")
    m = len(ys)
    s_star = sum(ys) / m
    lhs = float(sum(np.sum((y - s_star) ** 2) for y in ys))
    y_all = np.hstack(ys)
    g = build_temporal_graph(m, t0).weights
    rhs = float(np.sum((y_all @ (np.eye(m * t0) - g)) * y_all))
    return lhs, rhs


# ---------------------------------------------------------------------------
# model directory serialization (bit-exact)
# ---------------------------------------------------------------------------

def _write_bin(path: Path, array: np.ndarray) -> dict:
    arr = np.ascontiguousarray(np.atleast_2d(np.asarray(array, dtype="<f8")))
    path.write_bytes(arr.tobytes(order="C"))
    return {"rows": arr.shape[0], "cols": arr.shape[1]}


def save_model(model: AlignmentModel, out_dir: str | Path) -> Path:
    """Write a model directory: ``manifest.json`` plus one little-endian
    float64 row-major ``.bin`` file per stored array.  Round-trips
    bit-exactly."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = []

    def store(name: str, array: np.ndarray) -> None:
        filename = name.replace("/", "_") + ".bin"
        decl = _write_bin(out_dir / filename, array)
        arrays.append({"name": name, "file": filename, **decl})

    subjects = []
    for b in model.subjects:
        sid = b.subject_id
        store(f"{sid}/train_data", b.train_data)
        store(f"{sid}/means", b.stats.means)
        store(f"{sid}/stds", b.stats.stds)
        store(f"{sid}/raw_gram", b.raw_gram)
        store(f"{sid}/basis_vectors", b.basis.eigvecs)
        store(f"{sid}/basis_values", b.basis.eigvals)
        store(f"{sid}/mixing", b.mixing)
        subjects.append({
            "id": sid,
            "voxels": b.train_data.shape[0],
            "samples": b.train_data.shape[1],
            "kernel": b.kernel.spec_string(),
            "energy_percent": b.energy_percent,
            "retained_dim": b.basis.retained_dim,
            "total_rank": b.basis.total_rank,
            "energy_kept": b.basis.energy_kept,
        })
    manifest = {
        "format": MODEL_FORMAT,
        "kind": "gdm-alignment-model",
        "solver": model.solver,
        "n_shared": model.n_shared,
        "eigenvalues": model.eigenvalues.tolist(),
        "eigengap": None if math.isinf(model.eigengap) else model.eigengap,
        "objective": model.objective,
        "subjects": subjects,
        "arrays": arrays,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_model(model_dir: str | Path) -> AlignmentModel:
    model_dir = Path(model_dir)
    manifest_path = model_dir / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{model_dir}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: malformed JSON: {exc}") from None
    if manifest.get("format") != MODEL_FORMAT:
        raise FormatError(f"unsupported model format {manifest.get('format')!r}")

    loaded: dict[str, np.ndarray] = {}
    for decl in manifest["arrays"]:
        path = model_dir / decl["file"]
        if not path.exists():
            raise FormatError(f"missing array file {path}")
        blob = path.read_bytes()
        expected = decl["rows"] * decl["cols"] * 8
        if len(blob) != expected:
            raise FormatError(
                f"{path}: expected {expected} bytes for {decl['rows']}x{decl['cols']}, "
                f"found {len(blob)}")
        loaded[decl["name"]] = np.frombuffer(blob, dtype="<f8").reshape(
            decl["rows"], decl["cols"]).copy()

    blocks = []
    for entry in manifest["subjects"]:
        sid = entry["id"]
        try:
            basis = SubjectBasis(
                eigvecs=loaded[f"{sid}/basis_vectors"],
                eigvals=loaded[f"{sid}/basis_values"].ravel(),
                retained_dim=entry["retained_dim"],
                total_rank=entry["total_rank"],
                energy_kept=entry["energy_kept"])
            blocks.append(SubjectBlock(
                subject_id=sid,
                train_data=loaded[f"{sid}/train_data"],
                stats=StandardizationStats(means=loaded[f"{sid}/means"].ravel(),
                                           stds=loaded[f"{sid}/stds"].ravel()),
                kernel=KernelSpec.parse(entry["kernel"]),
                raw_gram=loaded[f"{sid}/raw_gram"],
                basis=basis,
                mixing=loaded[f"{sid}/mixing"],
                energy_percent=entry["energy_percent"]))
        except KeyError as exc:
            raise FormatError(f"subject {sid}: array {exc.args[0]!r} not declared") from None
    eigengap = manifest["eigengap"]
    return AlignmentModel(
        subjects=tuple(blocks),
        n_shared=manifest["n_shared"],
        eigenvalues=np.asarray(manifest["eigenvalues"], dtype=float),
        eigengap=math.inf if eigengap is None else float(eigengap),
        objective=float(manifest["objective"]),
        solver=manifest["solver"])
