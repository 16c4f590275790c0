"""Batch command-line frontend.

Machine-readable output (JSON lines, or TSV with ``--tsv``) goes to stdout
or ``--out``; diagnostics and warnings go to stderr; the exit code is 0 iff
no error.  Every command is deterministic given its full flag set including
``--seed``.  Parameter precedence: flags > ``--config`` JSON file > defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._svg import svg_line_chart
from .dataio import (read_dataset, read_graph, read_matrix, remove_fraction,
                     synth_dataset, write_dataset, write_graph, write_matrix)
from .errors import GdmError, ParameterError
from .evaluate import (EvalReport, bsc_evaluate, category_graph_builder,
                       raw_voxel_bsc, temporal_graph_builder)
from .graph import build_category_graph, build_temporal_graph
from .kernels import KernelSpec
from .solver import fit, load_model, naive_fit, project, save_model

DEFAULTS = {
    "kernel": "linear",
    "k": 10,
    "energy": 82.0,
    "leave_out": 1,
    "lam": 1e-3,
    "seed": 0,
    "solver": "spectral",
}

EIGENGAP_WARN = 1e-10


class Settings:
    """Resolve each parameter as: explicit flag, then config file, then default."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.exists():
                raise ParameterError(f"config file {path} does not exist")
            self.config = json.loads(path.read_text())

    def get(self, name: str, default=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            return self.config[name]
        return DEFAULTS.get(name, default)


def _emit(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _build_graph(kind: str, dataset):
    if kind == "category":
        return build_category_graph(dataset.labels_per_subject())
    if kind == "temporal":
        counts = set(dataset.sample_counts)
        if len(counts) != 1:
            raise ParameterError("temporal graph needs equal sample counts per subject")
        return build_temporal_graph(dataset.n_subjects, counts.pop())
    if kind.startswith("file:"):
        graph = read_graph(kind[len("file:"):])
        if graph.size != dataset.total_samples:
            raise ParameterError(
                f"graph file has {graph.size} nodes for {dataset.total_samples} samples")
        return graph
    raise ParameterError(f"unknown graph kind {kind!r} (category, temporal or file:<path>)")


# --- commands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = Settings(args)
    dataset, truth = synth_dataset(
        args.subjects, args.voxels, args.samples, args.latent, args.classes,
        args.sigma, int(cfg.get("seed")))
    manifest = write_dataset(dataset, args.out, truth=truth)
    _emit([json.dumps({
        "manifest": str(manifest), "subjects": dataset.n_subjects,
        "voxels": args.voxels, "samples_per_subject": args.samples,
        "classes": args.classes, "sigma": args.sigma, "seed": int(cfg.get("seed")),
    })], None)
    return 0


def cmd_graph(args) -> int:
    dataset = read_dataset(args.dataset)
    graph = _build_graph(args.kind, dataset)
    write_graph(args.out, graph)
    _emit([json.dumps({"out": str(args.out), "size": graph.size, "kind": args.kind})], None)
    return 0


def cmd_align(args) -> int:
    cfg = Settings(args)
    dataset = read_dataset(args.dataset)
    graph = _build_graph(cfg.get("graph", "category"), dataset)
    kernel = str(cfg.get("kernel"))
    n_shared = int(cfg.get("k"))
    energy = float(cfg.get("energy"))
    solver_kind = cfg.get("solver")
    if solver_kind == "naive":
        model = naive_fit(dataset, graph, kernel, n_shared=n_shared)
    elif solver_kind == "spectral":
        model = fit(dataset, graph, kernel, energy_percent=energy,
                    n_shared=n_shared, threads=cfg.get("threads"))
    else:
        raise ParameterError(f"unknown solver {solver_kind!r} (spectral or naive)")
    if model.eigengap <= EIGENGAP_WARN:
        print("warning: zero eigengap at the shared-dimension cut; "
              "the shared space is not unique beyond rotation", file=sys.stderr)
    save_model(model, args.out)
    head = model.eigenvalues[:min(n_shared + 3, len(model.eigenvalues))]
    _emit([json.dumps({
        "out": str(args.out),
        "solver": model.solver,
        "objective": model.objective,
        "eigenvalues_head": [float(v) for v in head],
        "eigengap": None if model.eigengap == float("inf") else model.eigengap,
        "n_shared": n_shared,
        "energy_percent": energy,
        "kernel": kernel,
        "retained_dims": [b.basis.retained_dim for b in model.subjects],
        "energy_kept": [b.basis.energy_kept for b in model.subjects],
    })], None)
    return 0


def cmd_transform(args) -> int:
    model = load_model(args.model)
    data = read_matrix(args.input)
    responses = project(model, args.subject, data)
    write_matrix(args.out, responses.matrix)
    _emit([json.dumps({"out": str(args.out), "rows": responses.matrix.shape[0],
                       "cols": responses.matrix.shape[1],
                       "subject": responses.subject_id})], None)
    return 0


def cmd_evaluate(args) -> int:
    cfg = Settings(args)
    dataset = read_dataset(args.dataset)
    seed = int(cfg.get("seed"))
    q = args.incomplete_q
    if q:
        dataset = remove_fraction(dataset, q, seed)
    graph_kind = cfg.get("graph", "category")
    if graph_kind == "category":
        builder = category_graph_builder
    elif graph_kind == "temporal":
        builder = temporal_graph_builder
    else:
        raise ParameterError(
            f"evaluation rebuilds the graph per fold; {graph_kind!r} is not supported "
            "(use category or temporal)")
    kernel = str(cfg.get("kernel"))
    n_shared = int(cfg.get("k"))
    leave_out = int(cfg.get("leave_out"))
    lam = float(cfg.get("lam"))
    energies = ([float(e) for e in args.energy_sweep.split(",")]
                if args.energy_sweep else [float(cfg.get("energy"))])

    reports = []
    for energy in energies:
        reports.append(bsc_evaluate(
            dataset, builder, kernel, energy_percent=energy, n_shared=n_shared,
            leave_out=leave_out, lam=lam, seed=seed, threads=cfg.get("threads"),
            extra_config={"q_percent": q or 0}))
    baseline = None
    if args.baseline:
        baseline = raw_voxel_bsc(dataset, leave_out=leave_out, lam=lam, seed=seed)

    if args.tsv:
        lines = [EvalReport.tsv_header()]
        lines += [r.to_tsv_row() for r in reports]
        if baseline:
            lines.append(baseline.to_tsv_row())
    else:
        lines = [r.to_json() for r in reports]
        if baseline:
            lines.append(baseline.to_json())
    _emit(lines, args.out)

    if args.plot:
        if len(reports) > 1:
            series = [("aligned", energies, [r.mean for r in reports])]
            if baseline:
                series.append(("no alignment", energies,
                               [baseline.mean] * len(energies)))
            svg_line_chart(series, args.plot, title="BSC accuracy vs retained energy",
                           x_label="energy (%)", y_label="accuracy")
        else:
            folds = list(range(len(reports[0].fold_accuracies)))
            series = [("aligned", folds, list(reports[0].fold_accuracies))]
            if baseline:
                series.append(("no alignment", folds, list(baseline.fold_accuracies)))
            svg_line_chart(series, args.plot, title="BSC accuracy per fold",
                           x_label="fold", y_label="accuracy")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdm",
        description="Graph-driven functional alignment: learn per-subject kernel "
                    "maps into a shared space and evaluate them by "
                    "between-subject classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labeled dataset")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--voxels", type=int, required=True)
    p.add_argument("--samples", type=int, required=True, help="samples per subject")
    p.add_argument("--latent", type=int, required=True, help="latent dimension")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.1, help="noise level")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("graph", help="build a cross-subject graph as CSV")
    p.add_argument("kind", choices=["category", "temporal"])
    p.add_argument("--dataset", required=True, help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("align", help="fit an alignment model")
    p.add_argument("--dataset", required=True, help="dataset manifest JSON")
    p.add_argument("--graph", help="category | temporal | file:<csv>")
    p.add_argument("--kernel", help="linear | poly:degree=<d>,offset=<c> | rbf:gamma=<g>")
    p.add_argument("--k", type=int, help="shared dimensions (default 10)")
    p.add_argument("--energy", type=float, help="energy percent to keep (default 82)")
    p.add_argument("--solver", choices=["spectral", "naive"])
    p.add_argument("--threads", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="model output directory")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("transform", help="project one subject's data into the shared space")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--subject", required=True, help="subject id")
    p.add_argument("--input", required=True, help="V x E matrix file (.gdm or .csv)")
    p.add_argument("--out", required=True, help="K x E output matrix file")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("evaluate", help="between-subject classification accuracy")
    p.add_argument("--dataset", required=True, help="dataset manifest JSON")
    p.add_argument("--graph", help="category | temporal (rebuilt per fold)")
    p.add_argument("--kernel")
    p.add_argument("--k", type=int)
    p.add_argument("--energy", type=float)
    p.add_argument("--energy-sweep", help="comma-separated energies, one report each")
    p.add_argument("--leave-out", type=int, dest="leave_out")
    p.add_argument("--lambda", type=float, dest="lam", help="ridge strength (default 1e-3)")
    p.add_argument("--seed", type=int)
    p.add_argument("--incomplete-q", type=float, dest="incomplete_q",
                   help="remove q%% of samples per subject before folding")
    p.add_argument("--baseline", action="store_true",
                   help="also report the raw-voxel no-alignment baseline")
    p.add_argument("--tsv", action="store_true", help="TSV rows instead of JSON lines")
    p.add_argument("--plot", help="write an SVG accuracy chart here")
    p.add_argument("--threads", type=int)
    p.add_argument("--config")
    p.add_argument("--out", help="write report lines here instead of stdout")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GdmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
