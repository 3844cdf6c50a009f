"""Point cloud loading and canonical normalization.

Clouds are ordered (N, 3) coordinate arrays in dimensionless object units.
Two on-disk formats are supported: whitespace-separated ASCII text (one
``x y z`` record per line, ``.pts`` style) and a little-endian binary layout
(uint64 point count followed by float32 xyz triples).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

PTS_TEXT = "pts_text"
XYZ_BINARY = "xyz_binary"
FORMATS = (PTS_TEXT, XYZ_BINARY)

_BINARY_COUNT = struct.Struct("<Q")


@dataclass(eq=False)
class PointCloud:
    """Ordered 3D points plus an opaque source identifier.

    ``degenerate`` marks clouds whose extent collapsed to zero during
    normalization (all points identical); such clouds are all-zeros.
    """

    points: np.ndarray
    source_id: str = ""
    degenerate: bool = field(default=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        self.points = pts

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def _canonical_source_id(path) -> str:
    return os.path.normpath(str(path)).replace(os.sep, "/")


def _load_pts_text(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise ValueError(f"{path}: malformed record at line {lineno}: "
                                 f"expected 3 coordinates, got {len(parts)}")
            try:
                rows.append([float(parts[0]), float(parts[1]), float(parts[2])])
            except ValueError:
                raise ValueError(f"{path}: malformed record at line {lineno}: "
                                 f"non-numeric coordinate") from None
    if not rows:
        raise ValueError(f"{path}: file contains zero points")
    return np.asarray(rows, dtype=np.float64)


def _load_xyz_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_BINARY_COUNT.size)
        if len(header) != _BINARY_COUNT.size:
            raise ValueError(f"{path}: truncated header")
        (count,) = _BINARY_COUNT.unpack(header)
        if count < 1:
            raise ValueError(f"{path}: file contains zero points")
        payload = fh.read(count * 12)
        if len(payload) != count * 12:
            raise ValueError(f"{path}: truncated payload, expected {count} points")
    pts = np.frombuffer(payload, dtype="<f4").reshape(count, 3)
    return pts.astype(np.float64)


def load_point_cloud(path, fmt: str = PTS_TEXT) -> PointCloud:
    """Load a cloud from disk, one point per record, order preserved."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown point cloud format {fmt!r}, expected one of {FORMATS}")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"point cloud file not found: {path}")
    if fmt == PTS_TEXT:
        pts = _load_pts_text(path)
    else:
        pts = _load_xyz_binary(path)
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{path}: non-finite coordinate in file")
    return PointCloud(points=pts, source_id=_canonical_source_id(path))


def save_point_cloud(cloud: PointCloud, path, fmt: str = PTS_TEXT) -> None:
    """Write a cloud in one of the supported formats (inverse of load)."""
    if fmt == PTS_TEXT:
        with open(path, "w", encoding="ascii") as fh:
            for x, y, z in cloud.points:
                fh.write(f"{x:.8g} {y:.8g} {z:.8g}\n")
    elif fmt == XYZ_BINARY:
        with open(path, "wb") as fh:
            fh.write(_BINARY_COUNT.pack(cloud.points.shape[0]))
            fh.write(cloud.points.astype("<f4").tobytes())
    else:
        raise ValueError(f"unknown point cloud format {fmt!r}")


def normalize_to_unit_cube(cloud: PointCloud) -> PointCloud:
    """Center the cloud on its centroid and scale max|coordinate| to 1.

    The result lies in [-1, 1]^3 with centroid at the origin. A zero-extent
    cloud (all points identical) maps to all-zeros with ``degenerate=True``
    so downstream rendering still functions.
    """
    pts = cloud.points
    centered = pts - pts.mean(axis=0)
    extent = np.abs(centered).max()
    # centering identical points leaves accumulation round-off, not zeros;
    # an extent below that noise floor would be amplified to the full cube
    if extent <= 1e-12 * max(1.0, float(np.abs(pts).max())):
        return replace(cloud, points=np.zeros_like(pts), degenerate=True)
    return replace(cloud, points=centered / extent, degenerate=False)
