"""Procedural shape clouds and a toy-dataset writer.

Shapes are sampled uniformly by surface area with optional Gaussian
surface noise, so categories differ in geometry but not in point count
or scale conventions. `build_dataset` writes a ready-to-use manifest plus
binary clouds, which is enough to exercise the whole pipeline (and the
CLI) without any real scan data.
"""

from __future__ import annotations

import os

import numpy as np

from .datastore import ManifestEntry, write_manifest
from .geometry import PointCloud, save_point_cloud


def sphere_points(rng, n=2048, noise=0.01) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v + rng.normal(0.0, noise, (n, 3))


def cube_points(rng, n=2048, noise=0.01) -> np.ndarray:
    # uniform over the surface: pick a face, then a point on it
    pts = rng.uniform(-1.0, 1.0, (n, 3))
    axis = rng.integers(0, 3, n)
    sign = rng.choice(np.array([-1.0, 1.0]), n)
    pts[np.arange(n), axis] = sign
    return pts + rng.normal(0.0, noise, (n, 3))


def cylinder_points(rng, n=2048, noise=0.01) -> np.ndarray:
    """Capped cylinder with height:diameter = 4:1 (height 2, radius 0.25)."""
    radius, height = 0.25, 2.0
    lateral = 2.0 * np.pi * radius * height
    cap = np.pi * radius ** 2
    p_lateral = lateral / (lateral + 2.0 * cap)
    pts = np.empty((n, 3))
    on_side = rng.uniform(0.0, 1.0, n) < p_lateral
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    k = int(on_side.sum())
    pts[on_side, 0] = radius * np.cos(theta[on_side])
    pts[on_side, 1] = radius * np.sin(theta[on_side])
    pts[on_side, 2] = rng.uniform(-height / 2, height / 2, k)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, n - k))
    pts[~on_side, 0] = r * np.cos(theta[~on_side])
    pts[~on_side, 1] = r * np.sin(theta[~on_side])
    pts[~on_side, 2] = rng.choice(np.array([-1.0, 1.0]), n - k) * (height / 2)
    return pts + rng.normal(0.0, noise, (n, 3))


GENERATORS = {
    "sphere": sphere_points,
    "cube": cube_points,
    "cylinder": cylinder_points,
}


def build_dataset(root, categories, n_train, n_test, n_points=512,
                  noise=0.01, seed=1234) -> str:
    """Write clouds + manifest under root, return the manifest path."""
    os.makedirs(root, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for cat in categories:
        gen = GENERATORS[cat]
        for split, count in (("train", n_train), ("test", n_test)):
            for i in range(count):
                sid = f"{cat}-{split}-{i:03d}"
                fname = sid + ".xyz"
                cloud = PointCloud(points=gen(rng, n_points, noise),
                                   source_id=sid)
                save_point_cloud(cloud, os.path.join(root, fname), "xyz_binary")
                # manifest paths resolve against the manifest's directory,
                # so bare filenames keep the dataset relocatable
                entries.append(ManifestEntry(sample_id=sid, category=cat,
                                             split=split, path=fname,
                                             fmt="xyz_binary"))
    manifest_path = os.path.join(root, "manifest.tsv")
    write_manifest(entries, manifest_path)
    return manifest_path
