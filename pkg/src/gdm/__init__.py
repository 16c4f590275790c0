"""gdm: functional alignment of multi-subject recordings driven by a
cross-subject similarity graph.

Each subject's samples are mapped through a kernel into a shared
K-dimensional space so that graph-similar samples land close together and
graph-dissimilar samples far apart, without requiring the subjects to be
temporally aligned.  Data matrices are V x T with samples in columns.
"""

from .dataio import (MultiSubjectDataset, Subject, SynthGroundTruth, read_dataset,
                     read_graph, read_matrix, remove_fraction, synth_dataset,
                     write_dataset, write_graph, write_matrix)
from .errors import (DataError, DegenerateSubjectError, DimensionError, FormatError,
                     GdmError, InfeasibleError, InvalidGraphError, ParameterError,
                     ProtocolError)
from .evaluate import (EvalReport, FoldPlan, RidgeOvrClassifier, bsc_evaluate,
                       category_graph_builder, make_folds, raw_voxel_bsc,
                       temporal_graph_builder, train_classifier)
from .graph import (CrossSubjectGraph, Laplacian, build_category_graph,
                    build_subset_graph, build_temporal_graph, laplacian)
from .kernels import (GramMatrix, KernelSpec, StandardizationStats, center_cross_gram,
                      center_gram, cross_gram, gram, standardize)
from .solver import (AlignmentModel, SharedResponses, SubjectBasis, assemble_core,
                     fit, ha_objective_pair, load_model, naive_fit, objective,
                     project, save_model, solve_reduced, subject_basis)

__version__ = "0.1.0"

__all__ = [
    "AlignmentModel", "CrossSubjectGraph", "DataError", "DegenerateSubjectError",
    "DimensionError", "EvalReport", "FoldPlan", "FormatError", "GdmError",
    "GramMatrix", "InfeasibleError", "InvalidGraphError", "KernelSpec", "Laplacian",
    "MultiSubjectDataset", "ParameterError", "ProtocolError", "RidgeOvrClassifier",
    "SharedResponses", "StandardizationStats", "Subject", "SubjectBasis",
    "SynthGroundTruth", "assemble_core", "bsc_evaluate", "build_category_graph",
    "build_subset_graph", "build_temporal_graph", "category_graph_builder",
    "center_cross_gram", "center_gram", "cross_gram", "fit", "gram",
    "ha_objective_pair", "laplacian", "load_model", "make_folds", "naive_fit",
    "objective", "project", "raw_voxel_bsc", "read_dataset", "read_graph",
    "read_matrix", "remove_fraction", "save_model", "solve_reduced", "standardize",
    "subject_basis", "synth_dataset", "temporal_graph_builder", "train_classifier",
    "write_dataset", "write_graph", "write_matrix",
]
