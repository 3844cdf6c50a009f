import json
import logging

import numpy as np
import pytest

import dmp3dad as dm
from dmp3dad.evaluation import (Xoshiro256StarStar, compute_auroc,
                                reference_rng, run_ablation, run_protocol,
                                run_trial, sample_without_replacement)


def pair_counting_auroc(labeled_scores):
    """O(n^2) oracle: anomaly>normal counts 1, tie counts 0.5."""
    pos = [s for lab, s in labeled_scores if lab == 1]
    neg = [s for lab, s in labeled_scores if lab == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_generator_reference_outputs():
    # For state (1,2,3,4) the first output is rotl(2*5, 7)*9 = 1280*9 = 11520;
    # the update then zeroes word 1, so the second output is rotl(0,7)*9 = 0.
    # The third value is frozen from the same hand-stepped recurrence.
    gen = Xoshiro256StarStar([1, 2, 3, 4])
    assert [gen.next_u64() for _ in range(3)] == [11520, 0, 1509978240]


def test_generator_rejects_bad_state():
    with pytest.raises(ValueError):
        Xoshiro256StarStar([1, 2, 3])
    gen = Xoshiro256StarStar([0, 0, 0, 0])  # all-zero state is patched
    assert any(gen.next_u64() for _ in range(4))


def test_bounded_draws_are_in_range():
    gen = Xoshiro256StarStar([9, 8, 7, 6])
    for n in (1, 2, 3, 10, 1000):
        for _ in range(200):
            assert 0 <= gen.below(n) < n
    assert all(Xoshiro256StarStar([5, 5, 5, 5]).below(1) == 0 for _ in range(3))
    with pytest.raises(ValueError):
        gen.below(0)


def test_bounded_draws_cover_all_values():
    gen = Xoshiro256StarStar([4, 3, 2, 1])
    seen = {gen.below(5) for _ in range(200)}
    assert seen == {0, 1, 2, 3, 4}


def test_reference_rng_is_reproducible():
    a = [reference_rng("chair", 3).next_u64() for _ in range(5)]
    b = [reference_rng("chair", 3).next_u64() for _ in range(5)]
    assert a == b
    c = [reference_rng("chair", 4).next_u64() for _ in range(5)]
    d = [reference_rng("table", 3).next_u64() for _ in range(5)]
    assert a != c and a != d


def test_sampling_without_replacement():
    rng = reference_rng("cat", 1)
    picks = sample_without_replacement(10, 4, rng)
    assert len(picks) == len(set(picks)) == 4
    assert all(0 <= i < 10 for i in picks)
    again = sample_without_replacement(10, 4, reference_rng("cat", 1))
    assert picks == again
    full = sample_without_replacement(6, 6, reference_rng("cat", 2))
    assert sorted(full) == list(range(6))
    with pytest.raises(ValueError):
        sample_without_replacement(3, 4, reference_rng("cat", 3))


def test_distinct_seeds_give_distinct_draws():
    draws = {tuple(sample_without_replacement(50, 5, reference_rng("lamp", s)))
             for s in range(1, 21)}
    assert len(draws) > 15  # collisions are astronomically unlikely


def test_auroc_hand_computed_cases():
    assert compute_auroc([(0, 0.1), (1, 0.5), (1, 0.9)]) == 1.0
    assert compute_auroc([(0, 0.9), (1, 0.1)]) == 0.0
    assert compute_auroc([(0, 0.5), (1, 0.5)]) == 0.5
    # pairs: (.5>.1)=1, (.5=.5)=.5, (.9>.1)=1, (.9>.5)=1 -> 3.5/4
    got = compute_auroc([(0, 0.1), (0, 0.5), (1, 0.5), (1, 0.9)])
    assert got == 3.5 / 4


def test_auroc_equals_pair_counting_oracle():
    rng = np.random.default_rng(61)
    for _ in range(40):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.standard_normal(n), 1)  # many exact ties
        table = list(zip(labels.tolist(), scores.tolist()))
        assert compute_auroc(table) == pair_counting_auroc(table)


def test_auroc_invariant_under_monotone_transforms():
    rng = np.random.default_rng(62)
    labels = rng.integers(0, 2, 50)
    labels[0], labels[1] = 0, 1
    scores = rng.standard_normal(50)
    base = compute_auroc(list(zip(labels, scores)))
    assert compute_auroc(list(zip(labels, np.exp(scores)))) == base
    assert compute_auroc(list(zip(labels, 3.0 * scores + 7.0))) == base


def test_auroc_needs_both_classes():
    with pytest.raises(ValueError):
        compute_auroc([(1, 0.5), (1, 0.7)])
    with pytest.raises(ValueError):
        compute_auroc([(0, 0.5)])


def test_trial_is_deterministic(toy_manifest, mock_backend):
    spec = dm.TrialSpec(target_category="sphere", n_refs=3, seed=5,
                        backend_id=mock_backend.backend_id)
    a = run_trial(spec, toy_manifest, mock_backend)
    b = run_trial(spec, toy_manifest, mock_backend)
    assert a.reference_ids == b.reference_ids
    assert a.scores == b.scores
    assert a.auroc == b.auroc


def test_trial_uses_all_training_samples_at_capacity(toy_manifest, mock_backend):
    train = toy_manifest.split_entries("train", "sphere")
    spec = dm.TrialSpec(target_category="sphere", n_refs=len(train), seed=1,
                        backend_id=mock_backend.backend_id)
    result = run_trial(spec, toy_manifest, mock_backend)
    assert sorted(result.reference_ids) == sorted(e.sample_id for e in train)


def test_trial_rejects_oversized_reference_request(toy_manifest, mock_backend):
    spec = dm.TrialSpec(target_category="sphere", n_refs=99, seed=1)
    with pytest.raises(ValueError):
        run_trial(spec, toy_manifest, mock_backend)


def test_trial_labels_other_categories_as_anomalies(toy_manifest, mock_backend):
    spec = dm.TrialSpec(target_category="cube", n_refs=2, seed=2)
    result = run_trial(spec, toy_manifest, mock_backend)
    by_id = {e.sample_id: e.category for e in toy_manifest.split_entries("test")}
    for sample_id, label, _ in result.scores:
        assert label == (0 if by_id[sample_id] == "cube" else 1)
    assert len(result.scores) == len(by_id)


def test_protocol_row_cardinality(toy_manifest, mock_backend):
    report = run_protocol(toy_manifest, mock_backend, n_refs_list=(1,),
                          seeds=(1,))
    assert [(r.category, r.n_refs) for r in report.rows] == \
        [("cube", 1), ("sphere", 1)]


def test_protocol_overall_is_unweighted_category_mean(toy_manifest, mock_backend):
    report = run_protocol(toy_manifest, mock_backend, n_refs_list=(1, 3),
                          seeds=(1, 2, 3))
    overall = report.overall()
    for n in (1, 3):
        means = [r.mean for r in report.rows if r.n_refs == n]
        stds = [r.std for r in report.rows if r.n_refs == n]
        assert overall[n]["mean_auroc"] == pytest.approx(np.mean(means), abs=1e-12)
        assert overall[n]["mean_std"] == pytest.approx(np.mean(stds), abs=1e-12)


def test_protocol_stats_match_recomputation(toy_manifest, mock_backend):
    report = run_protocol(toy_manifest, mock_backend, n_refs_list=(2,),
                          seeds=(1, 2, 3, 4))
    for row in report.rows:
        assert row.mean == pytest.approx(np.mean(row.aurocs), abs=1e-15)
        assert row.std == pytest.approx(np.std(row.aurocs), abs=1e-15)  # population


def test_protocol_worker_count_does_not_change_results(toy_manifest, mock_backend):
    kwargs = dict(n_refs_list=(1, 2), seeds=(1, 2))
    serial = run_protocol(toy_manifest, mock_backend, workers=1, **kwargs)
    threaded = run_protocol(toy_manifest, mock_backend, workers=4, **kwargs)
    for a, b in zip(serial.rows, threaded.rows):
        assert a.aurocs == b.aurocs


def test_protocol_keeps_trials_when_asked(toy_manifest, mock_backend):
    report = run_protocol(toy_manifest, mock_backend, n_refs_list=(1,),
                          seeds=(1, 2), keep_trials=True)
    assert len(report.trials) == 2 * 2  # categories x seeds
    assert all(t.scores for t in report.trials)


def test_protocol_requires_two_categories(tmp_path, mock_backend):
    from synthetic import build_dataset
    path = build_dataset(tmp_path, ("sphere",), n_train=2, n_test=2,
                         n_points=64)
    manifest = dm.load_manifest(path)
    with pytest.raises(ValueError):
        run_protocol(manifest, mock_backend, n_refs_list=(1,), seeds=(1,))


def test_components_ablation_rows_in_order(toy_manifest, mock_backend):
    reports = run_ablation("components", toy_manifest, mock_backend,
                           n_refs_list=(2,), seeds=(1,))
    assert list(reports) == ["components=off-off-off", "components=on-off-off",
                             "components=on-on-off", "components=on-on-on"]
    off = reports["components=off-off-off"].config
    assert off["grid_id"] == "grid-front"
    assert not off["view_similarity"] and not off["view_weighting"]
    full = reports["components=on-on-on"].config
    assert full["grid_id"] == "grid-v10"
    assert full["view_similarity"] and full["view_weighting"]


def test_gamma_ablation_covers_the_grid(toy_manifest, mock_backend):
    reports = run_ablation("gamma", toy_manifest, mock_backend,
                           n_refs_list=(1,), seeds=(1,))
    assert list(reports) == [f"gamma={round(0.1 * i, 1)}" for i in range(1, 11)]
    for label, report in reports.items():
        assert report.config["gamma"] == float(label.split("=")[1])


def test_metric_ablation_keys(toy_manifest, mock_backend):
    reports = run_ablation("metric", toy_manifest, mock_backend,
                           n_refs_list=(1,), seeds=(1,))
    assert list(reports) == ["metric=euclidean", "metric=cosine",
                             "metric=manhattan"]


def test_unknown_sweep_rejected(toy_manifest, mock_backend):
    with pytest.raises(ValueError):
        run_ablation("resolution", toy_manifest, mock_backend)


def test_backbone_ablation_skips_missing_files(toy_manifest, tmp_path, caplog):
    torch = pytest.importorskip("torch")

    class Tiny(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.conv = torch.nn.Conv2d(3, 16, kernel_size=8, stride=8)

        def forward(self, x):
            return self.conv(x).mean(dim=(2, 3))

    torch.manual_seed(0)
    good = tmp_path / "tiny.pt"
    meta = {"input_size": 32, "mean": [0.5, 0.5, 0.5],
            "std": [0.25, 0.25, 0.25], "backbone_name": "tiny-a"}
    torch.jit.save(torch.jit.script(Tiny()), str(good),
                   _extra_files={"backend.json": json.dumps(meta)})

    with caplog.at_level(logging.WARNING, logger="dmp3dad.evaluation"):
        reports = run_ablation("backbone", toy_manifest,
                               backbone_models=[good, tmp_path / "absent.pt"],
                               n_refs_list=(1,), seeds=(1,))
    assert list(reports) == ["backbone=tiny-a"]
    assert any("absent.pt" in rec.message for rec in caplog.records)
    with pytest.raises(ValueError):
        run_ablation("backbone", toy_manifest, backbone_models=[])


def test_failure_listing_orders_by_score(toy_manifest, mock_backend):
    spec = dm.TrialSpec(target_category="sphere", n_refs=3, seed=1,
                        backend_id=mock_backend.backend_id)
    result = run_trial(spec, toy_manifest, mock_backend)
    listing = dm.list_failures(result, 3)

    anomalies = sorted(((s, sid) for sid, lab, s in result.scores if lab == 1))
    normals = sorted(((-s, sid) for sid, lab, s in result.scores if lab == 0))
    assert [sid for sid, _ in listing.false_negative_candidates] == \
        [sid for _, sid in anomalies[:3]]
    assert [sid for sid, _ in listing.false_positive_candidates] == \
        [sid for _, sid in normals[:3]]


def test_failure_listing_on_perfect_separation(toy_manifest, mock_backend):
    spec = dm.TrialSpec(target_category="sphere", n_refs=5, seed=1,
                        backend_id=mock_backend.backend_id)
    result = run_trial(spec, toy_manifest, mock_backend)
    if result.auroc == 1.0:
        listing = dm.list_failures(result, 2)
        worst_anomaly = min(s for _, lab, s in result.scores if lab == 1)
        best_normal = max(s for _, lab, s in result.scores if lab == 0)
        assert worst_anomaly > best_normal
        assert listing.false_negative_candidates[0][1] == worst_anomaly


def test_failure_listing_sizes(toy_manifest, mock_backend):
    spec = dm.TrialSpec(target_category="cube", n_refs=1, seed=1)
    result = run_trial(spec, toy_manifest, mock_backend)
    empty = dm.list_failures(result, 0)
    assert empty.false_negative_candidates == []
    assert empty.false_positive_candidates == []
    huge = dm.list_failures(result, 10_000)
    n_anom = sum(1 for _, lab, _ in result.scores if lab == 1)
    n_norm = len(result.scores) - n_anom
    assert len(huge.false_negative_candidates) == n_anom
    assert len(huge.false_positive_candidates) == n_norm
    with pytest.raises(ValueError):
        dm.list_failures(result, -1)
