"""Report serialization: CSV tables, a JSON summary, and PNG figures.

AUROC values are written as fractions in [0, 1], formatted with six
decimals so reruns of the same configuration produce byte-identical
files. Figures are rendered with the Agg backend and never open a
display.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import CategoryStats, ProtocolReport  # noqa: E402

CSV_HEADER = ("category", "n_refs", "mean_auroc", "std_auroc", "n_seeds")
OVERALL = "OVERALL"


def _stat_row(stats: CategoryStats):
    return (stats.category, str(stats.n_refs), "%.6f" % stats.mean,
            "%.6f" % stats.std, str(len(stats.aurocs)))


def write_report_csv(report: ProtocolReport, path) -> None:
    """Per-category rows followed by one OVERALL row per n_refs."""
    n_seeds = len(report.config["seeds"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in report.rows:
            writer.writerow(_stat_row(row))
        for n, agg in report.overall().items():
            writer.writerow((OVERALL, str(n), "%.6f" % agg["mean_auroc"],
                             "%.6f" % agg["mean_std"], str(n_seeds)))


def write_ablation_csv(reports: dict, path) -> None:
    """Same layout as write_report_csv with a leading sweep-value column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("sweep",) + CSV_HEADER)
        for label, report in reports.items():
            n_seeds = len(report.config["seeds"])
            for row in report.rows:
                writer.writerow((label,) + _stat_row(row))
            for n, agg in report.overall().items():
                writer.writerow((label, OVERALL, str(n),
                                 "%.6f" % agg["mean_auroc"],
                                 "%.6f" % agg["mean_std"], str(n_seeds)))


def _report_dict(report: ProtocolReport) -> dict:
    return {
        "config": report.config,
        "rows": [
            {"category": r.category, "n_refs": r.n_refs,
             "aurocs": [round(a, 10) for a in r.aurocs],
             "mean": round(r.mean, 10), "std": round(r.std, 10)}
            for r in report.rows
        ],
        "overall": {str(n): {k: round(v, 10) for k, v in agg.items()}
                    for n, agg in report.overall().items()},
    }


def write_summary(report, path) -> None:
    """JSON summary; accepts one report or an ablation dict of reports."""
    if isinstance(report, ProtocolReport):
        doc = _report_dict(report)
    else:
        doc = {"sweeps": {label: _report_dict(r) for label, r in report.items()}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_summary(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def format_report(report: ProtocolReport) -> str:
    """Fixed-width text table for terminal output."""
    lines = ["category              n_refs  mean    std     seeds"]
    for row in report.rows:
        lines.append("%-20s  %6d  %.4f  %.4f  %5d"
                     % (row.category, row.n_refs, row.mean, row.std,
                        len(row.aurocs)))
    for n, agg in report.overall().items():
        lines.append("%-20s  %6d  %.4f  %.4f  %5d"
                     % (OVERALL, n, agg["mean_auroc"], agg["mean_std"],
                        len(report.config["seeds"])))
    return "\n".join(lines)


def format_summary_doc(doc: dict) -> str:
    """Text rendering of a loaded summary document (plain or ablation)."""
    if "sweeps" in doc:
        parts = []
        for label, sub in doc["sweeps"].items():
            parts.append(f"[{label}]")
            parts.append(_format_doc_table(sub))
        return "\n".join(parts)
    return _format_doc_table(doc)


def _format_doc_table(doc: dict) -> str:
    lines = ["category              n_refs  mean    std"]
    for row in doc["rows"]:
        lines.append("%-20s  %6d  %.4f  %.4f"
                     % (row["category"], row["n_refs"], row["mean"], row["std"]))
    for n in sorted(doc["overall"], key=int):
        agg = doc["overall"][n]
        lines.append("%-20s  %6s  %.4f  %.4f"
                     % (OVERALL, n, agg["mean_auroc"], agg["mean_std"]))
    return "\n".join(lines)


def _category_order(report):
    return list(dict.fromkeys(r.category for r in report.rows))


def render_figures(report: ProtocolReport, outdir) -> list:
    """Write the three standard evaluation figures, return their paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = [
        _figure_auroc_by_category(report, os.path.join(outdir, "auroc_by_category.png")),
        _figure_vs_refs(report, os.path.join(outdir, "auroc_vs_refs.png"),
                        value=lambda r: r.mean, err=lambda r: r.std,
                        ylabel="mean AUROC"),
        _figure_vs_refs(report, os.path.join(outdir, "std_vs_refs.png"),
                        value=lambda r: r.std, err=None,
                        ylabel="AUROC std over seeds"),
    ]
    return paths


def _figure_auroc_by_category(report, path):
    categories = _category_order(report)
    n_refs_list = sorted({r.n_refs for r in report.rows})
    by_key = {(r.category, r.n_refs): r for r in report.rows}
    x = np.arange(len(categories))
    width = 0.8 / max(len(n_refs_list), 1)

    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(categories)), 4))
    for i, n in enumerate(n_refs_list):
        means = [by_key[(c, n)].mean for c in categories]
        stds = [by_key[(c, n)].std for c in categories]
        ax.bar(x + (i - (len(n_refs_list) - 1) / 2) * width, means, width,
               yerr=stds, capsize=2, label=f"{n} refs")
    ax.set_xticks(x)
    ax.set_xticklabels(categories, rotation=45, ha="right")
    ax.set_ylabel("mean AUROC")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _figure_vs_refs(report, path, value, err, ylabel):
    categories = _category_order(report)
    n_refs_list = sorted({r.n_refs for r in report.rows})
    by_key = {(r.category, r.n_refs): r for r in report.rows}

    fig, ax = plt.subplots(figsize=(5, 4))
    for c in categories:
        ax.plot(n_refs_list, [value(by_key[(c, n)]) for n in n_refs_list],
                color="gray", alpha=0.5, linewidth=0.8)
    overall = [float(np.mean([value(by_key[(c, n)]) for c in categories]))
               for n in n_refs_list]
    if err is not None:
        spread = [float(np.mean([err(by_key[(c, n)]) for c in categories]))
                  for n in n_refs_list]
        ax.errorbar(n_refs_list, overall, yerr=spread, color="C0",
                    linewidth=2.0, marker="o", capsize=3, label="mean")
    else:
        ax.plot(n_refs_list, overall, color="C0", linewidth=2.0, marker="o",
                label="mean")
    ax.set_xlabel("references")
    ax.set_ylabel(ylabel)
    ax.set_xticks(n_refs_list)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_ablation_figure(reports: dict, outdir, sweep: str) -> str:
    """Overall mean AUROC against the sweep value, one line per n_refs."""
    os.makedirs(outdir, exist_ok=True)
    labels = list(reports.keys())
    short = [lab.split("=", 1)[1] for lab in labels]
    n_refs_list = sorted({r.n_refs for rep in reports.values() for r in rep.rows})

    fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(labels)), 4))
    x = np.arange(len(labels))
    for n in n_refs_list:
        ys = [reports[lab].overall()[n]["mean_auroc"] for lab in labels]
        ax.plot(x, ys, marker="o", label=f"{n} refs")
    ax.set_xticks(x)
    ax.set_xticklabels(short, rotation=30, ha="right")
    ax.set_xlabel(sweep)
    ax.set_ylabel("overall mean AUROC")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(outdir, f"ablation_{sweep}.png")
    fig.savefig(path)
    plt.close(fig)
    return path
