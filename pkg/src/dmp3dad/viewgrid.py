"""Fixed multi-view camera grids.

Every pose looks at the origin from a sphere of radius 2.2, far enough that
a [-1, 1]^3 object always stays inside the orthographic frustum. Grids are
deterministic compositions of a horizontal-or-tilted azimuth ring, optional
elevated rings, and polar views; supported sizes are 5, 10, 20 and 30.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CAMERA_RADIUS = 2.2
SUPPORTED_VIEW_COUNTS = (5, 10, 20, 30)


@dataclass(frozen=True)
class CameraPose:
    azimuth_deg: float
    elevation_deg: float
    radius: float = CAMERA_RADIUS

    def position(self) -> np.ndarray:
        az = math.radians(self.azimuth_deg)
        el = math.radians(self.elevation_deg)
        return self.radius * np.array(
            [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
        )

    def view_direction(self) -> np.ndarray:
        """Unit vector from the camera toward the origin."""
        pos = self.position()
        return -pos / np.linalg.norm(pos)


@dataclass(frozen=True)
class ViewGrid:
    grid_id: str
    views: tuple

    @property
    def V(self) -> int:
        return len(self.views)


def _ring(elevation_deg: float, azimuths) -> list:
    return [CameraPose(float(az), float(elevation_deg)) for az in azimuths]


def _poles(top=True, bottom=True) -> list:
    # Azimuth 0 by convention: breaks the gimbal ambiguity at +-90 elevation.
    poses = []
    if top:
        poses.append(CameraPose(0.0, 90.0))
    if bottom:
        poses.append(CameraPose(0.0, -90.0))
    return poses


def generate_view_grid(V: int) -> ViewGrid:
    """Return the fixed camera grid with V views.

    Ordering is deterministic: primary ring by ascending azimuth, then
    elevated rings, then polar views.
    """
    if V == 5:
        poses = _ring(30.0, range(0, 360, 90)) + _poles(top=True, bottom=False)
    elif V == 10:
        poses = _ring(30.0, range(0, 360, 45)) + _poles()
    elif V == 20:
        poses = (_ring(0.0, range(0, 360, 45))
                 + _ring(45.0, range(0, 360, 45))
                 + _ring(-45.0, (0, 180))
                 + _poles())
    elif V == 30:
        poses = (_ring(0.0, range(0, 360, 30))
                 + _ring(45.0, range(0, 360, 45))
                 + _ring(-45.0, range(0, 360, 45))
                 + _poles())
    else:
        raise ValueError(
            f"unsupported view count {V}; supported: {SUPPORTED_VIEW_COUNTS}")
    assert len(poses) == V
    return ViewGrid(grid_id=f"grid-v{V}", views=tuple(poses))


def single_front_view_grid() -> ViewGrid:
    """One frontal view (azimuth 0, elevation 0); used by the components
    ablation as the no-multi-view baseline, not part of the public sizes."""
    return ViewGrid(grid_id="grid-front", views=(CameraPose(0.0, 0.0),))


def grid_from_id(grid_id: str) -> ViewGrid:
    if grid_id == "grid-front":
        return single_front_view_grid()
    if grid_id.startswith("grid-v"):
        try:
            return generate_view_grid(int(grid_id[len("grid-v"):]))
        except ValueError:
            pass
    raise ValueError(f"unknown view grid id {grid_id!r}")
