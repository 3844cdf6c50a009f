"""Command-line entry point.

Subcommands: render (PNG previews of the projected views), embed
(populate the feature cache), evaluate (run the protocol and write
report files), ablate (parameter sweeps), report (pretty-print a stored
summary), failures (per-trial misclassification listing). Progress goes
to stderr; data goes to files or stdout only.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import geometry
from .datastore import EmbeddingStore, load_manifest
from .encoder import load_model_backend, make_mock_backend
from .evaluation import (DEFAULT_N_REFS, DEFAULT_SEEDS, SWEEPS, TrialSpec,
                         list_failures, run_ablation, run_protocol, run_trial)
from .projection import ProjectionParams, render_all_views, save_png
from .report import (format_summary_doc, load_summary, render_ablation_figure,
                     render_figures, write_ablation_csv, write_report_csv,
                     write_summary)
from .viewgrid import SUPPORTED_VIEW_COUNTS, grid_from_id

MOCK_SEED = 0
MOCK_DIM = 64


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def _int_list(text: str):
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmp3dad",
        description="Training-free point-cloud anomaly detection via "
                    "multi-view depth projections and a frozen image encoder.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False,
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common.add_argument("--manifest", required=True, help="dataset manifest (TSV)")
    common.add_argument("--cache", default=None,
                        help="feature cache root (default: $DMP3DAD_CACHE or memory only)")
    common.add_argument("--backend", choices=("mock", "model"), default="model",
                        help="encoder backend kind")
    common.add_argument("--model", default=None, help="model file for --backend model")
    common.add_argument("--views", type=int, choices=SUPPORTED_VIEW_COUNTS,
                        default=10, help="number of projected views")
    common.add_argument("--gamma", type=float, default=0.2,
                        help="validity threshold for view weighting")
    common.add_argument("--metric", choices=("euclidean", "cosine", "manhattan"),
                        default="euclidean", help="view-wise distance metric")
    common.add_argument("--agg", choices=("sum", "min", "mean"), default="sum",
                        help="aggregation over references")
    common.add_argument("--refs", type=_int_list, default=DEFAULT_N_REFS,
                        help="comma-separated reference counts")
    common.add_argument("--seeds", type=int, default=len(DEFAULT_SEEDS),
                        help="number of seeds (runs seeds 1..n)")
    common.add_argument("--category", default="all",
                        help="restrict to one category (default: all)")
    common.add_argument("--workers", type=int, default=1, help="worker threads")

    p_render = sub.add_parser("render", parents=[common],
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                              help="write PNG previews of projected views")
    p_render.add_argument("--out", required=True, help="output directory")
    p_render.add_argument("--split", choices=("train", "test", "all"), default="all")

    sub.add_parser("embed", parents=[common],
                   formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                   help="populate the feature cache for every manifest entry")

    p_eval = sub.add_parser("evaluate", parents=[common],
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                            help="run the evaluation protocol and write reports")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--force", action="store_true",
                        help="overwrite existing report files")
    p_eval.add_argument("--keep-trials", action="store_true",
                        help="also write per-trial score tables (trials.csv)")

    p_abl = sub.add_parser("ablate", parents=[common],
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                           help="run a parameter sweep")
    p_abl.add_argument("--sweep", choices=SWEEPS, required=True)
    p_abl.add_argument("--models", nargs="*", default=(),
                       help="model files for the backbone sweep")
    p_abl.add_argument("--out", required=True, help="output directory")
    p_abl.add_argument("--force", action="store_true",
                       help="overwrite existing report files")

    p_rep = sub.add_parser("report", help="pretty-print a stored report summary")
    p_rep.add_argument("--in", dest="in_path", required=True,
                       help="report.summary file or the directory holding it")

    p_fail = sub.add_parser("failures", parents=[common],
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                            help="list misclassification candidates for one trial")
    p_fail.add_argument("--seed", type=int, default=1, help="trial seed")
    p_fail.add_argument("--k", type=int, default=5, help="listing size per side")

    return parser


def _make_backend(args):
    if args.backend == "mock":
        if args.model:
            raise ValueError("--model conflicts with --backend mock")
        return make_mock_backend(seed=MOCK_SEED, embed_dim=MOCK_DIM)
    if not args.model:
        raise ValueError("--backend model requires --model <path>")
    return load_model_backend(args.model)


def _select_categories(manifest, arg):
    if arg == "all":
        return list(manifest.categories)
    if arg not in manifest.categories:
        raise ValueError(f"unknown category {arg!r}; manifest has "
                         f"{', '.join(manifest.categories)}")
    return [arg]


def _check_overwrite(outdir, force):
    for name in ("report.csv", "report.summary"):
        path = os.path.join(outdir, name)
        if os.path.exists(path) and not force:
            raise ValueError(f"{path} exists; pass --force to overwrite")


def _protocol_kwargs(args, store):
    return dict(
        n_refs_list=args.refs,
        seeds=tuple(range(1, args.seeds + 1)),
        grid_id=f"grid-v{args.views}",
        gamma=args.gamma,
        metric=args.metric,
        aggregation=args.agg,
        store=store,
        workers=args.workers,
    )


def cmd_render(args) -> int:
    manifest = load_manifest(args.manifest)
    grid = grid_from_id(f"grid-v{args.views}")
    params = ProjectionParams()
    categories = set(_select_categories(manifest, args.category))
    os.makedirs(args.out, exist_ok=True)
    count = 0
    for entry in manifest.entries:
        if entry.category not in categories:
            continue
        if args.split != "all" and entry.split != args.split:
            continue
        cloud = geometry.normalize_to_unit_cube(
            geometry.load_point_cloud(entry.path, entry.fmt))
        images = render_all_views(cloud, grid, params)
        for img in images:
            save_png(img, os.path.join(args.out,
                                       f"{entry.sample_id}_view{img.view_index:02d}.png"))
        count += 1
        _progress(f"rendered {entry.sample_id} ({grid.V} views)")
    _progress(f"wrote previews for {count} samples to {args.out}")
    return 0


def cmd_embed(args) -> int:
    manifest = load_manifest(args.manifest)
    backend = _make_backend(args)
    store = EmbeddingStore(root=args.cache)
    grid = grid_from_id(f"grid-v{args.views}")
    params = ProjectionParams()
    categories = set(_select_categories(manifest, args.category))
    entries = [e for e in manifest.entries if e.category in categories]
    for i, entry in enumerate(entries, 1):
        store.get_or_compute(entry, grid, params, backend)
        if i % 25 == 0 or i == len(entries):
            _progress(f"embedded {i}/{len(entries)}")
    stats = store.stats
    _progress(f"done: {stats['computed']} computed, {stats['disk_hits']} disk hits, "
              f"{stats['memory_hits']} memory hits")
    return 0


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    backend = _make_backend(args)
    store = EmbeddingStore(root=args.cache)
    categories = _select_categories(manifest, args.category)
    os.makedirs(args.out, exist_ok=True)
    _check_overwrite(args.out, args.force)

    _progress(f"evaluating {len(categories)} categories x {args.refs} refs x "
              f"{args.seeds} seeds")
    report = run_protocol(manifest, backend, categories=categories,
                          keep_trials=args.keep_trials,
                          **_protocol_kwargs(args, store))

    csv_path = os.path.join(args.out, "report.csv")
    write_report_csv(report, csv_path)
    write_summary(report, os.path.join(args.out, "report.summary"))
    figures = render_figures(report, os.path.join(args.out, "figures"))
    if args.keep_trials:
        _write_trials_csv(report, os.path.join(args.out, "trials.csv"))
    _progress(f"wrote {csv_path} and {len(figures)} figures")
    return 0


def _write_trials_csv(report, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("category", "n_refs", "seed", "sample_id", "label", "score"))
        for trial in report.trials:
            spec = trial.spec
            for sample_id, label, score in trial.scores:
                writer.writerow((spec.target_category, spec.n_refs, spec.seed,
                                 sample_id, label, "%.9g" % score))


def cmd_ablate(args) -> int:
    manifest = load_manifest(args.manifest)
    store = EmbeddingStore(root=args.cache)
    categories = _select_categories(manifest, args.category)
    os.makedirs(args.out, exist_ok=True)
    _check_overwrite(args.out, args.force)

    kwargs = _protocol_kwargs(args, store)
    kwargs["categories"] = categories
    if args.sweep == "backbone":
        backend = None
        reports = run_ablation("backbone", manifest, backbone_models=args.models,
                               **kwargs)
    else:
        backend = _make_backend(args)
        reports = run_ablation(args.sweep, manifest, backend, **kwargs)
    if not reports:
        raise ValueError("sweep produced no reports (no usable sweep values)")

    csv_path = os.path.join(args.out, "report.csv")
    write_ablation_csv(reports, csv_path)
    write_summary(reports, os.path.join(args.out, "report.summary"))
    fig = render_ablation_figure(reports, os.path.join(args.out, "figures"),
                                 args.sweep)
    _progress(f"wrote {csv_path} ({len(reports)} sweep values) and {fig}")
    return 0


def cmd_report(args) -> int:
    path = args.in_path
    if os.path.isdir(path):
        path = os.path.join(path, "report.summary")
    print(format_summary_doc(load_summary(path)))
    return 0


def cmd_failures(args) -> int:
    manifest = load_manifest(args.manifest)
    backend = _make_backend(args)
    store = EmbeddingStore(root=args.cache)
    if args.category == "all":
        raise ValueError("failures needs a single --category")
    if args.category not in manifest.categories:
        raise ValueError(f"unknown category {args.category!r}")
    spec = TrialSpec(target_category=args.category, n_refs=args.refs[0],
                     seed=args.seed, grid_id=f"grid-v{args.views}",
                     gamma=args.gamma, metric=args.metric,
                     aggregation=args.agg, backend_id=backend.backend_id)
    result = run_trial(spec, manifest, backend, store=store)
    listing = list_failures(result, args.k)
    print(f"trial: category={args.category} n_refs={spec.n_refs} seed={spec.seed} "
          f"auroc={result.auroc:.4f}")
    print("false-negative candidates (lowest-scoring anomalies):")
    for sample_id, score in listing.false_negative_candidates:
        print(f"  {sample_id}\t{score:.6f}")
    print("false-positive candidates (highest-scoring normals):")
    for sample_id, score in listing.false_positive_candidates:
        print(f"  {sample_id}\t{score:.6f}")
    return 0


COMMANDS = {
    "render": cmd_render,
    "embed": cmd_embed,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "report": cmd_report,
    "failures": cmd_failures,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
