"""Training-free 3D point-cloud anomaly detection.

Clouds are normalized, projected into multi-view depth images, embedded
with a frozen image encoder, and scored against a handful of normal
references with reliability-weighted view distances. No training loop
anywhere; the encoder is used strictly as-is.
"""

from .datastore import (CACHE_ENV_VAR, EmbeddingStore, Manifest, ManifestEntry,
                        ManifestError, compute_cache_key, compute_embedding,
                        load_manifest, write_manifest)
from .encoder import (FeatureMatrix, MockBackend, encode_views,
                      load_model_backend, make_mock_backend)
from .evaluation import (FailureListing, ProtocolReport, TrialResult, TrialSpec,
                         compute_auroc, list_failures, run_ablation,
                         run_protocol, run_trial)
from .geometry import (PointCloud, load_point_cloud, normalize_to_unit_cube,
                       save_point_cloud)
from .projection import (DepthImage, ProjectionParams, render_all_views,
                         render_view, save_png, voxelize)
from .scoring import (ReferenceSet, ThresholdPolicy, anomaly_score, decide,
                      derive_threshold, sample_distance, view_distance)
from .viewgrid import (SUPPORTED_VIEW_COUNTS, CameraPose, ViewGrid,
                       generate_view_grid, grid_from_id, single_front_view_grid)
from .weighting import (ViewWeights, compute_mask, compute_reliability,
                        compute_view_weights, effective_weights, uniform_weights)

__version__ = "0.1.0"

__all__ = [
    "CACHE_ENV_VAR", "CameraPose", "DepthImage", "EmbeddingStore", "FailureListing",
    "FeatureMatrix", "Manifest", "ManifestEntry", "ManifestError",
    "MockBackend", "PointCloud", "ProjectionParams", "ProtocolReport",
    "ReferenceSet", "SUPPORTED_VIEW_COUNTS", "ThresholdPolicy", "TrialResult",
    "TrialSpec", "ViewGrid", "ViewWeights", "anomaly_score",
    "compute_auroc", "compute_cache_key", "compute_embedding", "compute_mask",
    "compute_reliability", "compute_view_weights", "decide",
    "derive_threshold", "effective_weights", "encode_views",
    "generate_view_grid", "grid_from_id", "list_failures",
    "load_manifest", "load_model_backend", "load_point_cloud",
    "make_mock_backend", "normalize_to_unit_cube", "render_all_views",
    "render_view", "run_ablation", "run_protocol", "run_trial",
    "sample_distance", "save_png", "save_point_cloud",
    "single_front_view_grid", "uniform_weights", "view_distance", "voxelize",
]
