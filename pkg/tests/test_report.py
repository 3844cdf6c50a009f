import csv
import json

import pytest

import dmp3dad as dm
from dmp3dad.evaluation import run_ablation, run_protocol
from dmp3dad.report import (CSV_HEADER, OVERALL, format_report,
                            format_summary_doc, load_summary,
                            render_ablation_figure, render_figures,
                            write_ablation_csv, write_report_csv,
                            write_summary)


@pytest.fixture(scope="module")
def small_report(toy_manifest, mock_backend):
    return run_protocol(toy_manifest, mock_backend, n_refs_list=(1, 3),
                        seeds=(1, 2, 3))


@pytest.fixture(scope="module")
def metric_reports(toy_manifest, mock_backend):
    return run_ablation("metric", toy_manifest, mock_backend,
                        n_refs_list=(1,), seeds=(1,))


def test_csv_layout(small_report, tmp_path):
    path = tmp_path / "report.csv"
    write_report_csv(small_report, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(CSV_HEADER)
    body = rows[1:]
    categories = [r[0] for r in body]
    assert categories == ["cube", "cube", "sphere", "sphere",
                          OVERALL, OVERALL]
    assert [r[1] for r in body] == ["1", "3"] * 3
    for r in body:
        # six-decimal fixed point, value in [0, 1]
        assert len(r[2].split(".")[1]) == 6
        assert 0.0 <= float(r[2]) <= 1.0
        assert float(r[3]) >= 0.0
        assert r[4] == "3"


def test_csv_overall_matches_report(small_report, tmp_path):
    path = tmp_path / "report.csv"
    write_report_csv(small_report, path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r[0] == OVERALL]
    overall = small_report.overall()
    for row in rows:
        n = int(row[1])
        assert row[2] == "%.6f" % overall[n]["mean_auroc"]
        assert row[3] == "%.6f" % overall[n]["mean_std"]


def test_csv_rewrite_is_byte_identical(small_report, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_report_csv(small_report, a)
    write_report_csv(small_report, b)
    assert a.read_bytes() == b.read_bytes()


def test_summary_roundtrip(small_report, tmp_path):
    path = tmp_path / "report.summary"
    write_summary(small_report, path)
    doc = load_summary(path)
    assert doc["config"]["grid_id"] == "grid-v10"
    assert doc["config"]["gamma"] == 0.2
    assert {r["category"] for r in doc["rows"]} == {"cube", "sphere"}
    for row in doc["rows"]:
        match = [s for s in small_report.rows
                 if s.category == row["category"] and s.n_refs == row["n_refs"]]
        assert row["mean"] == pytest.approx(match[0].mean, abs=1e-9)
        assert len(row["aurocs"]) == 3
    assert str(doc["overall"]["1"]["mean_auroc"])  # keys are strings in JSON

    text = path.read_text()
    assert text.endswith("\n")
    json.loads(text)  # valid JSON document


def test_summary_rewrite_is_byte_identical(small_report, tmp_path):
    a, b = tmp_path / "a.summary", tmp_path / "b.summary"
    write_summary(small_report, a)
    write_summary(small_report, b)
    assert a.read_bytes() == b.read_bytes()


def test_ablation_summary_nests_by_label(metric_reports, tmp_path):
    path = tmp_path / "ablation.summary"
    write_summary(metric_reports, path)
    doc = load_summary(path)
    assert set(doc["sweeps"]) == {"metric=euclidean", "metric=cosine",
                                  "metric=manhattan"}
    for label, sub in doc["sweeps"].items():
        assert sub["config"]["metric"] == label.split("=")[1]


def test_ablation_csv_layout(metric_reports, tmp_path):
    path = tmp_path / "ablation.csv"
    write_ablation_csv(metric_reports, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sweep", *CSV_HEADER]
    labels = [r[0] for r in rows[1:]]
    assert labels == sorted(labels, key=labels.index)  # grouped by sweep
    assert set(labels) == {"metric=euclidean", "metric=cosine",
                           "metric=manhattan"}
    per_label = len(rows[1:]) // 3
    assert per_label == 3  # two categories + one OVERALL at a single n_refs


def test_figures_are_rendered(small_report, tmp_path):
    outdir = tmp_path / "figures"
    paths = render_figures(small_report, outdir)
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == ["auroc_by_category.png", "auroc_vs_refs.png",
                     "std_vs_refs.png"]
    for p in paths:
        data = open(p, "rb").read()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000


def test_ablation_figure(metric_reports, tmp_path):
    path = render_ablation_figure(metric_reports, tmp_path, "metric")
    assert path.endswith("ablation_metric.png")
    assert open(path, "rb").read()[:8] == b"\x89PNG\r\n\x1a\n"


def test_format_report_is_readable(small_report):
    text = format_report(small_report)
    assert "cube" in text and "sphere" in text and OVERALL in text
    assert "n_refs" in text
    lines = [ln for ln in text.splitlines() if ln.strip()]
    assert len(lines) >= 7  # header + 4 category rows + 2 overall rows


def test_format_summary_doc_roundtrips_from_disk(small_report, tmp_path):
    path = tmp_path / "report.summary"
    write_summary(small_report, path)
    text = format_summary_doc(load_summary(path))
    assert "cube" in text and OVERALL in text
