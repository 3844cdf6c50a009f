"""Validity masks, per-view reliability, and global view weights.

A pixel is valid when its intensity is strictly below the threshold gamma;
background (exactly 1.0) is never valid for gamma <= 1. A view's
reliability is its valid-pixel fraction, and the global weight of a view is
the mean reliability over the reference renders of that view. Weights stay
raw means in [0, 1] (no renormalization): scoring sums are scale-free for
ranking purposes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .projection import DepthImage

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.2


@dataclass(eq=False)
class ViewWeights:
    weights: np.ndarray  # (V,) floats in [0, 1]
    gamma: float

    @property
    def V(self) -> int:
        return self.weights.shape[0]


def _check_gamma(gamma: float) -> float:
    # (0, 1]: 1.0 is a meaningful sweep value (all non-background is valid).
    gamma = float(gamma)
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return gamma


def compute_mask(image: DepthImage, gamma: float) -> np.ndarray:
    """Boolean validity mask: intensity strictly less than gamma."""
    gamma = _check_gamma(gamma)
    return image.intensities < gamma


def compute_reliability(image: DepthImage, gamma: float) -> float:
    """Valid-pixel fraction of one view, in [0, 1]."""
    mask = compute_mask(image, gamma)
    return float(mask.sum()) / mask.size


def compute_view_weights(reference_images, gamma: float) -> ViewWeights:
    """Mean per-view reliability across the reference set.

    ``reference_images`` is one list of V depth images per reference, all
    rendered on the same grid.
    """
    gamma = _check_gamma(gamma)
    if not reference_images:
        raise ValueError("need at least one reference")
    n_views = len(reference_images[0])
    rel = np.zeros((len(reference_images), n_views))
    for i, views in enumerate(reference_images):
        if len(views) != n_views:
            raise ValueError(
                f"reference {i} has {len(views)} views, expected {n_views}")
        for v, img in enumerate(views):
            rel[i, v] = compute_reliability(img, gamma)
    return ViewWeights(weights=rel.mean(axis=0), gamma=gamma)


def effective_weights(vw: ViewWeights) -> np.ndarray:
    """Weights as used by scoring; all-zero weights (pathological: every
    reference view empty) fall back to uniform 1/V so scores stay defined."""
    if np.all(vw.weights == 0.0):
        logger.warning("all view weights are zero; falling back to uniform 1/V")
        return np.full(vw.V, 1.0 / vw.V)
    return vw.weights


def uniform_weights(n_views: int, gamma: float = DEFAULT_GAMMA) -> ViewWeights:
    """Uniform 1/V weights (the weighting-disabled baseline)."""
    return ViewWeights(weights=np.full(n_views, 1.0 / n_views), gamma=gamma)
