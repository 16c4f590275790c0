"""Between-subject classification (BSC): fold protocol, a deterministic
one-vs-rest ridge classifier, and accuracy reporting.

The protocol splits each subject's samples into two category-balanced
halves; one half of every subject aligns the model, the other half is
projected and used to train a classifier on the training subjects and test
it on the held-out subjects.  Switching the halves doubles the fold count,
so leave-k-out gives (M/k) * 2 folds.  Samples used for alignment are never
used for classification; the split makes that structural.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dataio import MultiSubjectDataset
from .errors import DataError, DimensionError, GdmError, ParameterError, ProtocolError
from .graph import CrossSubjectGraph, build_category_graph, build_temporal_graph
from .kernels import standardize
from .solver import _normalize_kernels, fit, project

DEFAULT_LAMBDA = 1e-3


@dataclass(frozen=True, eq=False)
class Fold:
    align_part: tuple[np.ndarray, ...]
    classify_part: tuple[np.ndarray, ...]
    train_subjects: tuple[int, ...]
    test_subjects: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class FoldPlan:
    folds: tuple[Fold, ...]
    scheme: str
    seed: int


def _split_two_halves(labels: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Category-balanced two-way split; the shuffle inside each category is
    a function of (seed, category rank) only, so subjects with identical
    label layouts receive identical halves and temporally aligned datasets
    stay index-aligned inside a fold."""
    first, second = [], []
    for rank, cat in enumerate(np.unique(labels)):
        pos = np.flatnonzero(labels == cat)
        if pos.size < 2:
            raise ProtocolError(
                f"category {cat} has {pos.size} sample(s); need at least 2 to split")
        rng = np.random.default_rng(np.random.SeedSequence([seed, rank]))
        perm = rng.permutation(pos.size)
        half = (pos.size + 1) // 2
        first.append(pos[perm[:half]])
        second.append(pos[perm[half:]])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def make_folds(dataset: MultiSubjectDataset, leave_out: int, seed: int = 0) -> FoldPlan:
    """Two-half x leave-k-subject-out fold plan: (M/k) * 2 folds.

    Each subject's samples are split into two halves with every category
    divided between them (counts differing by at most 1, deterministic
    seeded shuffle within a category).  Each fold aligns on one half of all
    subjects, classifies on the other half, and holds out one group of k
    subjects for testing.
    """
    m = dataset.n_subjects
    if leave_out < 1 or m % leave_out != 0:
        raise ProtocolError(
            f"{m} subjects are not divisible into leave-{leave_out}-out groups")
    if not dataset.has_labels:
        raise DataError("the fold protocol needs labels for every subject")
    halves = [_split_two_halves(s.labels, seed) for s in dataset.subjects]
    groups = [tuple(range(g, g + leave_out)) for g in range(0, m, leave_out)]
    folds = []
    for group in groups:
        train = tuple(i for i in range(m) if i not in group)
        for h in (0, 1):
            folds.append(Fold(
                align_part=tuple(halves[i][h] for i in range(m)),
                classify_part=tuple(halves[i][1 - h] for i in range(m)),
                train_subjects=train,
                test_subjects=group))
    return FoldPlan(folds=tuple(folds), scheme=f"two-half-leave-{leave_out}-out", seed=seed)


@dataclass(frozen=True, eq=False)
class RidgeOvrClassifier:
    """One-vs-rest regularized least squares on +/-1 targets.

    Closed-form normal-equations solve; the bias is not penalized, so in
    the infinite-regularization limit prediction falls back to the majority
    class.  Ties in the argmax go to the lowest class id.
    """

    weights: np.ndarray     # K x C
    bias: np.ndarray        # C
    lam: float
    classes: np.ndarray     # C, ascending

    def scores(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.shape[0] != self.weights.shape[0]:
            raise DimensionError(
                f"classifier expects {self.weights.shape[0]} features, got {features.shape[0]}")
        return self.weights.T @ features + self.bias[:, None]

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.scores(features), axis=0)]


def train_classifier(features: np.ndarray, labels, lam: float = DEFAULT_LAMBDA,
                     ) -> RidgeOvrClassifier:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[1] != labels.shape[0]:
        raise DimensionError(
            f"features are {features.shape} for {labels.shape[0]} labels")
    if lam <= 0:
        raise ParameterError("lambda must be > 0")
    classes = np.unique(labels)
    n_classes = classes.size
    if n_classes < 2:
        raise DataError(f"degenerate labels: {n_classes} class(es), need at least 2")
    n = labels.shape[0]
    if n < n_classes:
        raise ParameterError(f"{n} samples cannot cover {n_classes} classes")
    targets = np.where(labels[:, None] == classes[None, :], 1.0, -1.0)
    k = features.shape[0]
    aug = np.vstack([features, np.ones((1, n))])
    penalty = lam * np.diag(np.append(np.ones(k), 0.0))
    solution = np.linalg.solve(aug @ aug.T + penalty, aug @ targets)
    return RidgeOvrClassifier(weights=solution[:k], bias=solution[k],
                              lam=float(lam), classes=classes)


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Per-fold BSC accuracies with their mean and (population) standard
    deviation, plus an echo of the configuration that produced them."""

    fold_accuracies: tuple[float, ...]
    mean: float
    std: float
    config: dict

    @classmethod
    def from_accuracies(cls, accuracies: Sequence[float], config: dict) -> "EvalReport":
        accs = tuple(float(a) for a in accuracies)
        return cls(fold_accuracies=accs, mean=float(np.mean(accs)),
                   std=float(np.std(accs)), config=dict(config))

    def to_json(self) -> str:
        return json.dumps({"fold_accuracies": list(self.fold_accuracies),
                           "mean": self.mean, "std": self.std, "config": self.config})

    TSV_COLUMNS = ("graph", "kernel", "n_shared", "energy_percent", "leave_out",
                   "lambda", "seed", "q_percent", "n_folds", "mean", "std")

    @classmethod
    def tsv_header(cls) -> str:
        return "\t".join(cls.TSV_COLUMNS)

    def to_tsv_row(self) -> str:
        values = dict(self.config)
        values["n_folds"] = len(self.fold_accuracies)
        values["mean"] = f"{self.mean:.6f}"
        values["std"] = f"{self.std:.6f}"
        return "\t".join(str(values.get(c, "")) for c in self.TSV_COLUMNS)


def category_graph_builder(dataset: MultiSubjectDataset) -> CrossSubjectGraph:
    return build_category_graph(dataset.labels_per_subject())


def temporal_graph_builder(dataset: MultiSubjectDataset) -> CrossSubjectGraph:
    counts = set(dataset.sample_counts)
    if len(counts) != 1:
        raise DimensionError("temporal graph needs equal sample counts per subject")
    return build_temporal_graph(dataset.n_subjects, counts.pop())


def bsc_evaluate(dataset: MultiSubjectDataset,
                 graph_builder: Callable[[MultiSubjectDataset], CrossSubjectGraph],
                 kernels, energy_percent: float, n_shared: int, leave_out: int,
                 lam: float = DEFAULT_LAMBDA, seed: int = 0, threads: int | None = 1,
                 extra_config: dict | None = None) -> EvalReport:
    """Between-subject classification over the two-half fold plan.

    Per fold: the model is fitted on the align halves of ALL subjects (the
    graph is rebuilt on those samples only), the classify halves are
    projected into the shared space, the classifier is trained on the
    training subjects' projections and tested on the held-out subjects'.
    A failing fold aborts the run as a protocol error; folds are never
    silently skipped.
    """
    plan = make_folds(dataset, leave_out, seed)
    m = dataset.n_subjects
    accuracies = []
    for fold_no, fold in enumerate(plan.folds):
        try:
            align_ds = dataset.subset(fold.align_part)
            graph = graph_builder(align_ds)
            model = fit(align_ds, graph, kernels, energy_percent, n_shared, threads=threads)
            feats, labs = [], []
            for i, subject in enumerate(dataset.subjects):
                idx = fold.classify_part[i]
                feats.append(project(model, i, subject.data[:, idx]).matrix)
                labs.append(subject.labels[idx])
            train_f = np.hstack([feats[i] for i in fold.train_subjects])
            train_l = np.concatenate([labs[i] for i in fold.train_subjects])
            test_f = np.hstack([feats[i] for i in fold.test_subjects])
            test_l = np.concatenate([labs[i] for i in fold.test_subjects])
            clf = train_classifier(train_f, train_l, lam)
            accuracies.append(float(np.mean(clf.predict(test_f) == test_l)))
        except GdmError as exc:
            raise ProtocolError(f"fold {fold_no} failed: {exc}") from exc
    kernel_echo = ",".join(s.spec_string() for s in _normalize_kernels(kernels, m))
    config = {
        "graph": getattr(graph_builder, "__name__", str(graph_builder)),
        "kernel": kernel_echo,
        "n_shared": n_shared,
        "energy_percent": energy_percent,
        "leave_out": leave_out,
        "lambda": lam,
        "seed": seed,
        "scheme": plan.scheme,
    }
    config.update(extra_config or {})
    return EvalReport.from_accuracies(accuracies, config)


def raw_voxel_bsc(dataset: MultiSubjectDataset, leave_out: int,
                  lam: float = DEFAULT_LAMBDA, seed: int = 0) -> EvalReport:
    """No-alignment baseline: the classifier runs directly on per-subject
    standardized voxels of the classify halves.  Needs matching voxel
    counts across subjects.  Uses the same fold plan as the aligned run."""
    if len(set(s.n_voxels for s in dataset.subjects)) != 1:
        raise DimensionError("raw-voxel baseline needs equal voxel counts across subjects")
    plan = make_folds(dataset, leave_out, seed)
    accuracies = []
    for fold_no, fold in enumerate(plan.folds):
        try:
            feats, labs = [], []
            for i, subject in enumerate(dataset.subjects):
                idx = fold.classify_part[i]
                xs, _ = standardize(subject.data[:, idx])
                feats.append(xs)
                labs.append(subject.labels[idx])
            train_f = np.hstack([feats[i] for i in fold.train_subjects])
            train_l = np.concatenate([labs[i] for i in fold.train_subjects])
            test_f = np.hstack([feats[i] for i in fold.test_subjects])
            test_l = np.concatenate([labs[i] for i in fold.test_subjects])
            clf = train_classifier(train_f, train_l, lam)
            accuracies.append(float(np.mean(clf.predict(test_f) == test_l)))
        except GdmError as exc:
            raise ProtocolError(f"fold {fold_no} failed: {exc}") from exc
    config = {"graph": "none", "kernel": "raw-voxels", "leave_out": leave_out,
              "lambda": lam, "seed": seed, "scheme": plan.scheme}
    return EvalReport.from_accuracies(accuracies, config)
