"""Weighted view-wise distances, reference aggregation, and the decision rule.

The distance between two objects is the weight-scaled sum over views of a
per-view feature distance; the anomaly score of a test object aggregates
those distances over the whole reference set (summation by default, for
robustness in few-shot settings). Larger scores mean more anomalous. All
reductions run in a fixed order (view index, then reference index) so
repeated evaluation is bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import FeatureMatrix

METRICS = ("euclidean", "cosine", "manhattan")
AGGREGATIONS = ("sum", "min", "mean")

DEFAULT_METRIC = "euclidean"
DEFAULT_AGGREGATION = "sum"

NORMAL = "normal"
ANOMALOUS = "anomalous"


@dataclass(eq=False)
class ReferenceSet:
    """Normal reference objects: (source_id, feature matrix) pairs sharing
    one grid and one backend."""

    members: list

    def __post_init__(self):
        if not self.members:
            raise ValueError("reference set must contain at least one member")
        v0, c0 = self.members[0][1].rows.shape
        for sid, fm in self.members[1:]:
            if fm.rows.shape != (v0, c0):
                raise ValueError(f"reference {sid!r} has shape {fm.rows.shape}, "
                                 f"expected {(v0, c0)}")

    @property
    def n_refs(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str = "none"  # "none" | "loo_mean_plus_k_std"
    k: float = 2.0


def view_distance(a: np.ndarray, b: np.ndarray, metric: str = DEFAULT_METRIC) -> float:
    """Nonnegative per-view feature distance; 0 for identical unit vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    if metric == "euclidean":
        return float(np.linalg.norm(a - b))
    if metric == "cosine":
        # unit rows stored as float32 can make the dot exceed 1 by an ulp;
        # clamp so the distance never goes negative
        return float(max(0.0, 1.0 - np.dot(a, b)))
    if metric == "manhattan":
        return float(np.abs(a - b).sum())
    raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")


def sample_distance(test: FeatureMatrix, ref: FeatureMatrix,
                    weights: np.ndarray, metric: str = DEFAULT_METRIC) -> float:
    """Sum over views of weight * per-view distance, ascending view order."""
    if test.rows.shape != ref.rows.shape:
        raise ValueError(f"feature matrix shape mismatch: "
                         f"{test.rows.shape} vs {ref.rows.shape}")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (test.V,):
        raise ValueError(f"got {weights.shape[0] if weights.ndim == 1 else weights.shape} "
                         f"weights for {test.V} views")
    total = 0.0
    for v in range(test.V):
        total += weights[v] * view_distance(test.rows[v], ref.rows[v], metric)
    return total


def anomaly_score(test: FeatureMatrix, refs: ReferenceSet, weights: np.ndarray,
                  metric: str = DEFAULT_METRIC, agg: str = DEFAULT_AGGREGATION) -> float:
    """Aggregate the test object's distances to every reference."""
    distances = [sample_distance(test, fm, weights, metric) for _, fm in refs.members]
    if agg == "sum":
        total = 0.0
        for d in distances:
            total += d
        return total
    if agg == "min":
        return min(distances)
    if agg == "mean":
        total = 0.0
        for d in distances:
            total += d
        return total / len(distances)
    raise ValueError(f"unknown aggregation {agg!r}, expected one of {AGGREGATIONS}")


def decide(score: float, tau: float) -> str:
    """Anomalous iff score strictly exceeds the threshold."""
    if not math.isfinite(tau):
        raise ValueError(f"threshold must be finite, got {tau}")
    return ANOMALOUS if score > tau else NORMAL


def derive_threshold(refs: ReferenceSet, weights: np.ndarray,
                     metric: str = DEFAULT_METRIC, agg: str = DEFAULT_AGGREGATION,
                     policy: ThresholdPolicy = ThresholdPolicy("loo_mean_plus_k_std")) -> float:
    """Leave-one-out threshold: each reference scored against the others,
    tau = mean + k * population std of those scores."""
    if policy.kind == "none":
        raise ValueError("threshold policy 'none' derives no threshold")
    if policy.kind != "loo_mean_plus_k_std":
        raise ValueError(f"unknown threshold policy {policy.kind!r}")
    if refs.n_refs < 2:
        raise ValueError("leave-one-out threshold needs at least 2 references")
    loo_scores = []
    for i, (_, fm) in enumerate(refs.members):
        rest = ReferenceSet(members=refs.members[:i] + refs.members[i + 1:])
        loo_scores.append(anomaly_score(fm, rest, weights, metric, agg))
    loo = np.asarray(loo_scores)
    return float(loo.mean() + policy.k * loo.std())
