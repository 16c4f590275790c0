"""Dataset model, file formats, synthetic data and incompleteness simulation.

Orientation: every data matrix is V x T with SAMPLES IN COLUMNS.  This is
the single most common integration mistake; transpose on the way in if your
matrices are samples-in-rows.

Randomness: everything random is a pure function of (inputs, seed), built on
numpy's SeedSequence/PCG64.  Derivation rules (documented so ports can match
the structure, not the bit streams):

* synth_dataset(seed):   shared signal from SeedSequence([seed, 0]);
                         subject i's mixing and noise from SeedSequence([seed, 1 + i]).
* remove_fraction(seed): subject i's removal draw from SeedSequence([seed, i]).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, FormatError, ParameterError
from .graph import CrossSubjectGraph

MAGIC = b"GDM1"

# Synthetic-signal scales: class means at 2.0 keep categories well separated
# relative to the 0.3 within-class jitter, and the jitter keeps the shared
# signal at full rank K_true.
CLASS_MEAN_SCALE = 2.0
CLASS_JITTER = 0.3


@dataclass(frozen=True, eq=False)
class Subject:
    subject_id: str
    data: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DataError(f"subject {self.subject_id}: data must be 2-D, got shape {data.shape}")
        if data.shape[1] < 1:
            raise DataError(f"subject {self.subject_id}: needs at least one sample")
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (data.shape[1],):
                raise DataError(
                    f"subject {self.subject_id}: {lab.size} labels for {data.shape[1]} samples")
            object.__setattr__(self, "labels", lab)

    @property
    def n_voxels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class MultiSubjectDataset:
    """Ordered per-subject V_i x T_i matrices with optional labels.

    Voxel counts may differ across subjects.  The global sample index is
    subject-major: subject 0's samples first, then subject 1's, and so on.
    """

    subjects: tuple[Subject, ...]

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        if not self.subjects:
            raise DataError("dataset needs at least one subject")

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def sample_counts(self) -> tuple[int, ...]:
        return tuple(s.n_samples for s in self.subjects)

    @property
    def total_samples(self) -> int:
        return sum(self.sample_counts)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.subjects:
            out.append(acc)
            acc += s.n_samples
        return tuple(out)

    @property
    def has_labels(self) -> bool:
        return all(s.labels is not None for s in self.subjects)

    def labels_per_subject(self) -> list[np.ndarray | None]:
        return [s.labels for s in self.subjects]

    def global_index(self, subject: int, local: int) -> int:
        return self.offsets[subject] + local

    def subject_of(self, global_idx: int) -> tuple[int, int]:
        if not 0 <= global_idx < self.total_samples:
            raise IndexError(f"global index {global_idx} out of range")
        for i, off in enumerate(self.offsets):
            if global_idx < off + self.subjects[i].n_samples:
                return i, global_idx - off
        raise IndexError(global_idx)  # unreachable

    def subset(self, keep: Sequence[np.ndarray | Sequence[int]]) -> "MultiSubjectDataset":
        """New dataset restricted to the given per-subject local indices
        (sorted); labels follow their samples."""
        if len(keep) != self.n_subjects:
            raise ParameterError("keep must have one index set per subject")
        subs = []
        for s, idx in zip(self.subjects, keep):
            idx = np.asarray(idx, dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= s.n_samples):
                raise IndexError(f"subject {s.subject_id}: keep index out of range")
            labels = s.labels[idx] if s.labels is not None else None
            subs.append(Subject(s.subject_id, s.data[:, idx], labels))
        return MultiSubjectDataset(tuple(subs))


@dataclass(frozen=True, eq=False)
class SynthGroundTruth:
    """What generated a synthetic dataset: K_true x T0 shared signal,
    per-subject orthonormal mixings, noise level and seed."""

    shared: np.ndarray
    mixings: tuple[np.ndarray, ...]
    noise_sigma: float
    seed: int


def synth_dataset(n_subjects: int, n_voxels: int, n_samples: int, n_latent: int,
                  n_classes: int, sigma: float, seed: int,
                  ) -> tuple[MultiSubjectDataset, SynthGroundTruth]:
    """Generate a labeled multi-subject dataset from a shared latent signal.

    The shared signal S (n_latent x n_samples) is built from n_classes
    category mean vectors plus Gaussian jitter; labels are assigned
    block-wise.  Each subject observes X_i = A_i S + sigma * N_i with a
    subject-specific random orthonormal mixing A_i, so the data are
    temporally aligned across subjects by construction.
    """
    if n_latent > min(n_voxels, n_samples):
        raise ParameterError(
            f"n_latent={n_latent} must not exceed min(n_voxels, n_samples)="
            f"{min(n_voxels, n_samples)}")
    if n_classes < 1 or n_samples % n_classes != 0:
        raise ParameterError(f"n_classes={n_classes} must divide n_samples={n_samples}")
    if n_subjects < 1:
        raise ParameterError("n_subjects must be >= 1")
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    per_class = n_samples // n_classes
    means = CLASS_MEAN_SCALE * rng.standard_normal((n_classes, n_latent))
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    shared = means[labels].T + CLASS_JITTER * rng.standard_normal((n_latent, n_samples))

    subjects, mixings = [], []
    for i in range(n_subjects):
        sub_rng = np.random.default_rng(np.random.SeedSequence([seed, 1 + i]))
        a = sub_rng.standard_normal((n_voxels, n_latent))
        mixing, _ = np.linalg.qr(a)
        noise = sub_rng.standard_normal((n_voxels, n_samples))
        data = mixing @ shared + sigma * noise
        subjects.append(Subject(f"s{i:02d}", data, labels.copy()))
        mixings.append(mixing)
    truth = SynthGroundTruth(shared=shared, mixings=tuple(mixings),
                             noise_sigma=float(sigma), seed=int(seed))
    return MultiSubjectDataset(tuple(subjects)), truth


def remove_fraction(dataset: MultiSubjectDataset, q_percent: float,
                    seed: int) -> MultiSubjectDataset:
    """Randomly remove floor(q/100 * T_i) samples per subject.

    Removal is independent across subjects, which destroys temporal
    alignment by construction; labels follow their samples.  Raises
    :class:`DataError` when a subject would be left with fewer than 2
    samples or a labeled category would become empty.
    """
    if not 0 <= q_percent < 100:
        raise ParameterError(f"q_percent must be in [0, 100), got {q_percent}")
    keep_sets = []
    for i, s in enumerate(dataset.subjects):
        n_remove = int(np.floor(q_percent / 100.0 * s.n_samples))
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        removed = rng.choice(s.n_samples, size=n_remove, replace=False)
        keep = np.setdiff1d(np.arange(s.n_samples), removed)
        if keep.size < 2:
            raise DataError(
                f"subject {s.subject_id}: removal would leave {keep.size} samples")
        if s.labels is not None:
            before = set(np.unique(s.labels).tolist())
            after = set(np.unique(s.labels[keep]).tolist())
            if after != before:
                missing = sorted(before - after)
                raise DataError(
                    f"subject {s.subject_id}: removal empties categories {missing}")
        keep_sets.append(keep)
    return dataset.subset(keep_sets)


# ---------------------------------------------------------------------------
# matrix files: .csv (decimal text) and .gdm (binary, bit-exact)
# ---------------------------------------------------------------------------

def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    """Write a matrix, format chosen by extension.

    ``.csv``: one row per line, comma-separated, 17 significant digits.
    ``.gdm``: magic ``GDM1``, rows and cols as u64 little-endian, then the
    row-major float64 little-endian payload; round-trips bit-exactly.
    """
    path = Path(path)
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype="<f8"))
    if matrix.ndim != 2:
        raise FormatError(f"can only write 2-D matrices, got shape {matrix.shape}")
    if path.suffix == ".csv":
        if 0 in matrix.shape:
            raise FormatError("CSV cannot represent empty matrices; use .gdm")
        np.savetxt(path, matrix, fmt="%.17g", delimiter=",")
    elif path.suffix == ".gdm":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQ", matrix.shape[0], matrix.shape[1]))
            fh.write(matrix.tobytes(order="C"))
    else:
        raise FormatError(f"unknown matrix extension {path.suffix!r} (use .csv or .gdm)")


def read_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".csv":
        try:
            return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
        except ValueError as exc:
            raise FormatError(f"{path}: malformed CSV matrix: {exc}") from None
    if path.suffix != ".gdm":
        raise FormatError(f"unknown matrix extension {path.suffix!r} (use .csv or .gdm)")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic at byte offset 0: {blob[:4]!r}")
    if len(blob) < 20:
        raise FormatError(f"{path}: truncated header at byte offset {len(blob)} (need 20 bytes)")
    rows, cols = struct.unpack("<QQ", blob[4:20])
    expected = 20 + rows * cols * 8
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size mismatch at byte offset 20: header declares "
            f"{rows}x{cols} ({expected - 20} bytes) but file has {len(blob) - 20}")
    return np.frombuffer(blob, dtype="<f8", offset=20).reshape(rows, cols).copy()


def write_graph(path: str | Path, graph: CrossSubjectGraph) -> None:
    """Export a graph as CSV: one row per node, comma-separated weights."""
    write_matrix(Path(path), graph.weights)


def read_graph(path: str | Path) -> CrossSubjectGraph:
    return CrossSubjectGraph(read_matrix(Path(path)))


# ---------------------------------------------------------------------------
# dataset directories: manifest JSON + per-subject matrix and label files
# ---------------------------------------------------------------------------

def _read_labels_file(path: Path) -> np.ndarray:
    values = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: label {line!r} is not an integer") from None
    return np.asarray(values, dtype=np.int64)


def read_dataset(manifest_path: str | Path) -> MultiSubjectDataset:
    """Load a dataset from a JSON manifest.

    Schema (``format: 1``): ``{"format": 1, "subjects": [{"id", "data",
    "labels"?}]}`` with paths relative to the manifest's directory.  Subject
    order is manifest order.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: malformed JSON: {exc}") from None
    if manifest.get("format") != 1:
        raise FormatError(f"{manifest_path}: unsupported manifest format {manifest.get('format')!r}")
    base = manifest_path.parent
    subjects = []
    for entry in manifest.get("subjects", []):
        sid = entry.get("id")
        if not sid or "data" not in entry:
            raise FormatError(f"{manifest_path}: every subject needs 'id' and 'data'")
        data_path = base / entry["data"]
        if not data_path.exists():
            raise FormatError(f"subject {sid}: data file {data_path} does not exist")
        data = read_matrix(data_path)
        labels = None
        if entry.get("labels"):
            labels_path = base / entry["labels"]
            if not labels_path.exists():
                raise FormatError(f"subject {sid}: labels file {labels_path} does not exist")
            labels = _read_labels_file(labels_path)
            if labels.shape != (data.shape[1],):
                raise DataError(
                    f"subject {sid}: {labels.size} labels for {data.shape[1]} samples")
        subjects.append(Subject(sid, data, labels))
    if not subjects:
        raise FormatError(f"{manifest_path}: manifest lists no subjects")
    return MultiSubjectDataset(tuple(subjects))


def write_dataset(dataset: MultiSubjectDataset, out_dir: str | Path,
                  truth: SynthGroundTruth | None = None) -> Path:
    """Write a dataset directory (binary matrices + labels + manifest);
    returns the manifest path.  When ground truth is given it is stored
    alongside for inspection (not referenced by the manifest)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in dataset.subjects:
        data_name = f"{s.subject_id}.gdm"
        write_matrix(out_dir / data_name, s.data)
        entry = {"id": s.subject_id, "data": data_name}
        if s.labels is not None:
            labels_name = f"{s.subject_id}_labels.txt"
            (out_dir / labels_name).write_text(
                "".join(f"{v}\n" for v in s.labels.tolist()))
            entry["labels"] = labels_name
        entries.append(entry)
    manifest_path = out_dir / "dataset.json"
    manifest_path.write_text(json.dumps({"format": 1, "subjects": entries}, indent=2) + "\n")
    if truth is not None:
        write_matrix(out_dir / "truth_shared.gdm", truth.shared)
        for s, mixing in zip(dataset.subjects, truth.mixings):
            write_matrix(out_dir / f"truth_mixing_{s.subject_id}.gdm", mixing)
        (out_dir / "truth.json").write_text(json.dumps(
            {"noise_sigma": truth.noise_sigma, "seed": truth.seed,
             "n_latent": truth.shared.shape[0]}, indent=2) + "\n")
    return manifest_path
