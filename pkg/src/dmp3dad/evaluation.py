"""Few-shot cross-category evaluation protocol and ablation sweeps.

One trial fixes a target category, draws n_refs normal references from its
training split with a seeded generator, weights views by reference
reliability, scores every test sample of every category (other categories
are the anomalies), and computes AUROC. The protocol repeats trials over
seeds and categories and reports per-category mean/std plus the unweighted
cross-category averages.

Reference selection uses xoshiro256** seeded from SHA-256(category, seed)
so draws are reproducible across platforms and runtimes, independent of any
library's default PRNG. Trials are independent and may run on a worker
pool; results are folded in a fixed order, so worker count never changes
any reported number.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .datastore import EmbeddingStore, Manifest
from .encoder import FeatureMatrix
from .projection import ProjectionParams, render_all_views
from .scoring import ReferenceSet, anomaly_score
from .viewgrid import grid_from_id
from .weighting import ViewWeights, compute_reliability, effective_weights, uniform_weights
from . import geometry

logger = logging.getLogger(__name__)

DEFAULT_N_REFS = (1, 3, 5)
DEFAULT_SEEDS = tuple(range(1, 11))

_U64 = (1 << 64) - 1


class Xoshiro256StarStar:
    """xoshiro256** (public-domain reference update rule), 64-bit output."""

    def __init__(self, state):
        s = [int(x) & _U64 for x in state]
        if len(s) != 4:
            raise ValueError("state must be four 64-bit words")
        if not any(s):
            s[0] = 1  # the all-zero state is invalid
        self._s = s

    @staticmethod
    def _rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & _U64

    def next_u64(self) -> int:
        s = self._s
        result = (self._rotl((s[1] * 5) & _U64, 7) * 9) & _U64
        t = (s[1] << 17) & _U64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self._rotl(s[3], 45)
        return result

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), rejection-sampled (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n


def reference_rng(category: str, seed: int) -> Xoshiro256StarStar:
    digest = hashlib.sha256(f"{category}|{seed}".encode("utf-8")).digest()
    state = [int.from_bytes(digest[i:i + 8], "little") for i in range(0, 32, 8)]
    return Xoshiro256StarStar(state)


def sample_without_replacement(n: int, k: int, rng: Xoshiro256StarStar) -> list:
    """k distinct indices from range(n), partial Fisher-Yates draw order."""
    if k > n:
        raise ValueError(f"cannot draw {k} from {n}")
    pool = list(range(n))
    for i in range(k):
        j = i + rng.below(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def compute_auroc(labeled_scores) -> float:
    """Rank-based AUROC with 0.5 credit for ties.

    Input is (label, score) pairs, label 1 = anomaly. Equals the
    probability that a uniformly random anomaly outscores a uniformly
    random normal sample.
    """
    labels = np.asarray([int(lab) for lab, _ in labeled_scores])
    scores = np.asarray([float(s) for _, s in labeled_scores])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs at least one anomaly and one normal sample")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class TrialSpec:
    target_category: str
    n_refs: int
    seed: int
    grid_id: str = "grid-v10"
    gamma: float = 0.2
    metric: str = "euclidean"
    aggregation: str = "sum"
    backend_id: str = ""


@dataclass(eq=False)
class TrialResult:
    spec: TrialSpec
    reference_ids: tuple
    scores: list  # (sample_id, label, score) per test sample, manifest order
    auroc: float


@dataclass(frozen=True)
class CategoryStats:
    category: str
    n_refs: int
    aurocs: tuple  # per seed, ascending seed order
    mean: float
    std: float  # population std over seeds


@dataclass(eq=False)
class ProtocolReport:
    config: dict
    rows: list  # CategoryStats, ordered by (category, n_refs)
    trials: list = field(default_factory=list)  # TrialResult, only if kept

    def overall(self) -> dict:
        """Unweighted cross-category averages, one entry per n_refs."""
        out = {}
        for n in sorted({r.n_refs for r in self.rows}):
            rows = [r for r in self.rows if r.n_refs == n]
            out[n] = {
                "mean_auroc": float(np.mean([r.mean for r in rows])),
                "mean_std": float(np.mean([r.std for r in rows])),
            }
        return out


class _ReliabilityCache:
    """Per-run memo of reference reliability vectors keyed by sample and
    gamma; duplicate concurrent computes are allowed (identical results)."""

    def __init__(self):
        self._data = {}

    def get(self, entry, grid, params, gamma) -> np.ndarray:
        key = (entry.sample_id, grid.grid_id, params.key_string(), gamma)
        hit = self._data.get(key)
        if hit is not None:
            return hit
        cloud = geometry.normalize_to_unit_cube(
            geometry.load_point_cloud(entry.path, entry.fmt))
        images = render_all_views(cloud, grid, params)
        rel = np.array([compute_reliability(img, gamma) for img in images])
        self._data[key] = rel
        return rel


def _pool_rows(fm: FeatureMatrix) -> FeatureMatrix:
    """Across-view mean feature (the view-similarity-disabled baseline)."""
    pooled = fm.rows.astype(np.float64).mean(axis=0, keepdims=True).astype(np.float32)
    return FeatureMatrix(rows=pooled, backend_id=fm.backend_id, grid_id=fm.grid_id)


def run_trial(spec: TrialSpec, manifest: Manifest, backend,
              params: ProjectionParams | None = None,
              store: EmbeddingStore | None = None,
              reliability_cache: _ReliabilityCache | None = None,
              view_similarity: bool = True,
              view_weighting: bool = True) -> TrialResult:
    """Execute one (category, n_refs, seed) trial end to end."""
    params = params or ProjectionParams()
    store = store if store is not None else EmbeddingStore(root=None)
    reliability_cache = reliability_cache or _ReliabilityCache()
    grid = grid_from_id(spec.grid_id)

    train = manifest.split_entries("train", spec.target_category)
    if not train:
        raise ValueError(f"no training samples for category {spec.target_category!r}")
    if spec.n_refs > len(train):
        raise ValueError(f"requested {spec.n_refs} references but category "
                         f"{spec.target_category!r} has {len(train)} training samples")
    rng = reference_rng(spec.target_category, spec.seed)
    ref_entries = [train[i] for i in
                   sample_without_replacement(len(train), spec.n_refs, rng)]

    ref_features = [(e.sample_id, store.get_or_compute(e, grid, params, backend))
                    for e in ref_entries]

    if view_weighting:
        rel = np.stack([reliability_cache.get(e, grid, params, spec.gamma)
                        for e in ref_entries])
        weights = ViewWeights(weights=rel.mean(axis=0), gamma=spec.gamma)
        weight_vec = effective_weights(weights)
    else:
        weight_vec = uniform_weights(grid.V, spec.gamma).weights

    refs = ReferenceSet(members=ref_features)
    if not view_similarity:
        refs = ReferenceSet(members=[(sid, _pool_rows(fm)) for sid, fm in refs.members])
        weight_vec = np.array([1.0])

    scores = []
    for entry in manifest.split_entries("test"):
        fm = store.get_or_compute(entry, grid, params, backend)
        if not view_similarity:
            fm = _pool_rows(fm)
        label = 0 if entry.category == spec.target_category else 1
        s = anomaly_score(fm, refs, weight_vec, spec.metric, spec.aggregation)
        scores.append((entry.sample_id, label, s))

    auroc = compute_auroc([(lab, s) for _, lab, s in scores])
    return TrialResult(spec=spec, reference_ids=tuple(e.sample_id for e in ref_entries),
                       scores=scores, auroc=auroc)


def run_protocol(manifest: Manifest, backend, *, categories=None,
                 n_refs_list=DEFAULT_N_REFS, seeds=DEFAULT_SEEDS,
                 grid_id: str = "grid-v10", gamma: float = 0.2,
                 metric: str = "euclidean", aggregation: str = "sum",
                 params: ProjectionParams | None = None,
                 store: EmbeddingStore | None = None, workers: int = 1,
                 view_similarity: bool = True, view_weighting: bool = True,
                 keep_trials: bool = False) -> ProtocolReport:
    """Full cross product of categories x n_refs x seeds."""
    params = params or ProjectionParams()
    store = store if store is not None else EmbeddingStore(root=None)
    if categories is None:
        categories = manifest.categories
    if len(manifest.categories) < 2:
        raise ValueError("protocol needs at least 2 categories in the dataset")
    seeds = tuple(seeds)
    n_refs_list = tuple(n_refs_list)
    reliability_cache = _ReliabilityCache()

    specs = [TrialSpec(target_category=cat, n_refs=n, seed=seed, grid_id=grid_id,
                       gamma=gamma, metric=metric, aggregation=aggregation,
                       backend_id=backend.backend_id)
             for cat in categories for n in n_refs_list for seed in seeds]

    def execute(spec):
        return run_trial(spec, manifest, backend, params=params, store=store,
                         reliability_cache=reliability_cache,
                         view_similarity=view_similarity,
                         view_weighting=view_weighting)

    results = {}
    if workers <= 1:
        for spec in specs:
            results[spec] = execute(spec)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for spec, result in zip(specs, pool.map(execute, specs)):
                results[spec] = result

    rows = []
    for cat in categories:
        for n in n_refs_list:
            aurocs = tuple(results[TrialSpec(cat, n, seed, grid_id, gamma, metric,
                                             aggregation, backend.backend_id)].auroc
                           for seed in seeds)
            rows.append(CategoryStats(category=cat, n_refs=n, aurocs=aurocs,
                                      mean=float(np.mean(aurocs)),
                                      std=float(np.std(aurocs))))
    config = {
        "grid_id": grid_id, "gamma": gamma, "metric": metric,
        "aggregation": aggregation, "backend_id": backend.backend_id,
        "seeds": list(seeds), "n_refs_list": list(n_refs_list),
        "categories": list(categories),
        "view_similarity": view_similarity, "view_weighting": view_weighting,
        "projection": params.key_string(),
    }
    trials = [results[s] for s in specs] if keep_trials else []
    return ProtocolReport(config=config, rows=rows, trials=trials)


GAMMA_SWEEP = tuple(round(0.1 * i, 1) for i in range(1, 11))
VIEW_SWEEP = (5, 10, 20, 30)
METRIC_SWEEP = ("euclidean", "cosine", "manhattan")
COMPONENT_SWEEP = ("off-off-off", "on-off-off", "on-on-off", "on-on-on")
SWEEPS = ("gamma", "views", "metric", "backbone", "components")


def run_ablation(sweep: str, manifest: Manifest, backend=None, *,
                 backbone_models=(), **protocol_kwargs) -> dict:
    """One ProtocolReport per sweep value, keyed by a printable label.

    The components sweep toggles, in order, multi-view projection (off =
    single front view), view-wise similarity (off = distance on the
    across-view mean feature) and view weighting (off = uniform weights).
    """
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}, expected one of {SWEEPS}")
    reports = {}
    if sweep == "gamma":
        for g in GAMMA_SWEEP:
            reports[f"gamma={g}"] = run_protocol(manifest, backend,
                                                 **{**protocol_kwargs, "gamma": g})
    elif sweep == "views":
        for v in VIEW_SWEEP:
            reports[f"views={v}"] = run_protocol(
                manifest, backend, **{**protocol_kwargs, "grid_id": f"grid-v{v}"})
    elif sweep == "metric":
        for m in METRIC_SWEEP:
            reports[f"metric={m}"] = run_protocol(manifest, backend,
                                                  **{**protocol_kwargs, "metric": m})
    elif sweep == "backbone":
        from .encoder import load_model_backend

        if not backbone_models:
            raise ValueError("backbone sweep needs at least one model file")
        for model_path in backbone_models:
            try:
                candidate = load_model_backend(model_path)
            except (FileNotFoundError, ValueError, RuntimeError) as exc:
                logger.warning("skipping backbone %s: %s", model_path, exc)
                continue
            label = getattr(candidate, "backbone_name", None) or str(model_path)
            reports[f"backbone={label}"] = run_protocol(manifest, candidate,
                                                        **protocol_kwargs)
    else:  # components
        base_grid = protocol_kwargs.pop("grid_id", "grid-v10")
        toggles = {
            "off-off-off": ("grid-front", False, False),
            "on-off-off": (base_grid, False, False),
            "on-on-off": (base_grid, True, False),
            "on-on-on": (base_grid, True, True),
        }
        for label in COMPONENT_SWEEP:
            grid_id, vs, vw = toggles[label]
            reports[f"components={label}"] = run_protocol(
                manifest, backend, **{**protocol_kwargs, "grid_id": grid_id,
                                      "view_similarity": vs, "view_weighting": vw})
    return reports


@dataclass(eq=False)
class FailureListing:
    """Lowest-scoring anomalies and highest-scoring normals of one trial."""

    false_negative_candidates: list  # (sample_id, score), ascending score
    false_positive_candidates: list  # (sample_id, score), descending score


def list_failures(result: TrialResult, k: int) -> FailureListing:
    """Top-k misclassification candidates on each side; ties break by id."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    anomalies = sorted(((sid, s) for sid, lab, s in result.scores if lab == 1),
                       key=lambda t: (t[1], t[0]))
    normals = sorted(((sid, s) for sid, lab, s in result.scores if lab == 0),
                     key=lambda t: (-t[1], t[0]))
    return FailureListing(false_negative_candidates=anomalies[:k],
                          false_positive_candidates=normals[:k])
