"""Planar similarity alignment between a sparse reconstruction and a
georeferenced satellite mosaic.

The alignment acts on the reconstruction's (x, y) ground-plane coordinates:
scale to meters, rotate by theta, convert to mosaic pixels through the
mosaic resolution, then translate. z is dropped (orthographic top-down
view). Exporting inverts the mosaic georeference to produce the reference
camera's GeoPose plus the metric scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geodesy import GeoPose, latlon_to_mercator, mercator_to_latlon
from .sat_tiles import SatMosaic


@dataclass(frozen=True)
class Sim2Alignment:
    """tx, ty: satellite-pixel translation; theta_deg: rotation; scale:
    reconstruction units -> meters."""

    tx: float = 0.0
    ty: float = 0.0
    theta_deg: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("alignment scale must be positive")

    def rotation(self) -> np.ndarray:
        t = math.radians(self.theta_deg)
        return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])

    def to_dict(self) -> dict:
        return {"tx": self.tx, "ty": self.ty, "theta_deg": self.theta_deg,
                "scale": self.scale}

    @staticmethod
    def from_dict(d: dict) -> "Sim2Alignment":
        return Sim2Alignment(float(d.get("tx", 0.0)), float(d.get("ty", 0.0)),
                             float(d.get("theta_deg", 0.0)), float(d.get("scale", 1.0)))

    def compose(self, inner: "Sim2Alignment") -> "Sim2Alignment":
        """Alignment equivalent to applying `inner`'s planar map first.

        Composition of the underlying similarity maps p -> s R p + t (pixel
        units); mosaic centering and resolution cancel in the group law
        except for a resolution factor on the inner translation.
        """
        r = self.rotation()
        t = r @ np.array([inner.tx, inner.ty]) * self.scale + np.array([self.tx, self.ty])
        return Sim2Alignment(float(t[0]), float(t[1]),
                             (self.theta_deg + inner.theta_deg) % 360.0,
                             self.scale * inner.scale)


def apply_sim2(alignment: Sim2Alignment, points: np.ndarray, mosaic: SatMosaic) -> np.ndarray:
    """Project 3D reconstruction points to satellite pixels; (N, 2)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    xy = points[:, :2] * alignment.scale
    px = xy @ alignment.rotation().T * mosaic.resolution
    center = np.array([mosaic.size / 2.0, mosaic.size / 2.0])
    return px + np.array([alignment.tx, alignment.ty]) + center


def export_alignment(alignment: Sim2Alignment, mosaic: SatMosaic,
                     ref_camera_center: np.ndarray) -> tuple[GeoPose, float]:
    """GeoPose of the reference camera plus the metric scale.

    The camera center (reconstruction coordinates) projects to a mosaic
    pixel; the pixel offset from the mosaic center converts to meters and
    then to lat/lon through the mosaic's georeference. Heading is theta
    plus the mosaic orientation. Positions outside the mosaic still export
    (with a warning).
    """
    px = apply_sim2(alignment, np.asarray(ref_camera_center, dtype=np.float64), mosaic)[0]
    if not (0 <= px[0] < mosaic.size and 0 <= px[1] < mosaic.size):
        import warnings
        warnings.warn(f"reference camera projects outside the mosaic at {px}")
    east = (px[0] - mosaic.size / 2.0) / mosaic.resolution
    north = -(px[1] - mosaic.size / 2.0) / mosaic.resolution
    # ground meters -> Mercator meters at the mosaic latitude, then invert
    mx, my = latlon_to_mercator(mosaic.center)
    stretch = 1.0 / math.cos(math.radians(mosaic.center.latitude))
    heading = (alignment.theta_deg + mosaic.center.heading) % 360.0
    pose = mercator_to_latlon(mx + east * stretch, my + north * stretch, heading)
    return pose, alignment.scale


def alignment_from_geopose(pose: GeoPose, scale: float, mosaic: SatMosaic,
                           ref_camera_center: np.ndarray) -> Sim2Alignment:
    """Inverse of export_alignment: rebuild the pixel-space alignment."""
    mx, my = latlon_to_mercator(mosaic.center)
    px_m, py_m = latlon_to_mercator(pose)
    shrink = math.cos(math.radians(mosaic.center.latitude))
    east = (px_m - mx) * shrink
    north = (py_m - my) * shrink
    px = np.array([mosaic.size / 2.0 + east * mosaic.resolution,
                   mosaic.size / 2.0 - north * mosaic.resolution])
    theta = (pose.heading - mosaic.center.heading) % 360.0
    partial = Sim2Alignment(0.0, 0.0, theta, scale)
    projected = apply_sim2(partial, np.asarray(ref_camera_center, dtype=np.float64), mosaic)[0]
    t = px - projected
    return Sim2Alignment(float(t[0]), float(t[1]), theta, scale)


def save_alignment(alignment: Sim2Alignment, path) -> None:
    import os
    import tempfile
    path = str(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(alignment.to_dict(), fh, indent=2)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_alignment(path) -> Sim2Alignment:
    with open(path) as fh:
        return Sim2Alignment.from_dict(json.load(fh))
