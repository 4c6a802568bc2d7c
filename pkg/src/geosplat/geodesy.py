"""GPS <-> local metric frame conversions and spherical Web Mercator math.

The toolkit's world frame is anchored at a reference ground camera:

* origin at the reference camera's optical center (which also defines zero
  altitude),
* ``+x`` to the reference camera's right, ``+y`` along its horizontal
  look-at direction, ``+z`` up,
* the satellite/BEV image is centered on the origin with the look-at
  direction pointing toward decreasing pixel row ("up" in the image).

Cameras follow the pinhole convention (x right, y down, z forward), so the
reference camera's camera-to-world rotation is the constant ``R_REF`` below,
not the identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, rot_z

EARTH_RADIUS_M = 6378137.0
MERCATOR_MAX_LAT = 85.05112878
# meters per degree of latitude on the sphere (also longitude at the equator)
_M_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0
# max separation for the local tangent-plane approximation
MAX_LOCAL_SEPARATION_M = 10_000.0

# Camera-to-world rotation of the reference camera: columns are the camera's
# x (right), y (down), z (forward) axes expressed in the world frame.
R_REF = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, -1.0, 0.0],
])


def _wrap_lon(lon: float) -> float:
    return (lon + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class GeoPose:
    """3DoF georeference: latitude/longitude in degrees, heading clockwise
    from true north in degrees."""

    latitude: float
    longitude: float
    heading: float = 0.0

    def __post_init__(self):
        for name in ("latitude", "longitude", "heading"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"GeoPose.{name} must be finite")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        object.__setattr__(self, "longitude", _wrap_lon(self.longitude))
        object.__setattr__(self, "heading", self.heading % 360.0)

    def to_json(self) -> str:
        return json.dumps({"lat": self.latitude, "lon": self.longitude,
                           "heading": self.heading})

    @staticmethod
    def from_json(text: str) -> "GeoPose":
        d = json.loads(text)
        return GeoPose(d["lat"], d["lon"], d.get("heading", 0.0))


@dataclass(frozen=True)
class LocalFrame:
    """World-frame anchor: the reference image's geopose plus the modeled
    camera height above terrain (the camera itself sits at zero altitude)."""

    origin: GeoPose
    zero_altitude: float = 0.0
    camera_height: float = 2.0

    def __post_init__(self):
        if not self.camera_height > 0:
            raise ValueError("camera_height must be positive")


def latlon_to_mercator(pose: GeoPose) -> tuple[float, float]:
    """Spherical Web Mercator (EPSG:3857) coordinates in meters."""
    if abs(pose.latitude) > MERCATOR_MAX_LAT:
        raise ValueError(
            f"latitude {pose.latitude} outside Web Mercator band +-{MERCATOR_MAX_LAT}")
    x = EARTH_RADIUS_M * math.radians(pose.longitude)
    # asinh(tan(lat)) == ln(tan(pi/4 + lat/2)), exact at the equator
    y = EARTH_RADIUS_M * math.asinh(math.tan(math.radians(pose.latitude)))
    return x, y


def mercator_to_latlon(x: float, y: float, heading: float = 0.0) -> GeoPose:
    lon = math.degrees(x / EARTH_RADIUS_M)
    lat = math.degrees(2.0 * math.atan(math.exp(y / EARTH_RADIUS_M)) - math.pi / 2)
    return GeoPose(lat, lon, heading)


def geo_to_local(origin: GeoPose, other: GeoPose) -> tuple[float, float, float]:
    """Planar offsets of `other` in the heading-aligned frame of `origin`.

    Returns (east, north, rel_heading): "north" is the component along the
    origin's heading (its forward direction), "east" the component to its
    right, rel_heading = other.heading - origin.heading mod 360.

    Uses an equirectangular tangent-plane approximation with the longitude
    scale taken at the midpoint latitude, which keeps the op exactly
    antisymmetric in translation. Valid below 10 km separation.
    """
    dlat = other.latitude - origin.latitude
    dlon = _wrap_lon(other.longitude - origin.longitude)
    mid_lat = math.radians(origin.latitude + 0.5 * dlat)
    north_tn = dlat * _M_PER_DEG
    east_tn = dlon * _M_PER_DEG * math.cos(mid_lat)
    sep = math.hypot(north_tn, east_tn)
    if sep > MAX_LOCAL_SEPARATION_M:
        raise ValueError(
            f"separation {sep:.0f} m exceeds {MAX_LOCAL_SEPARATION_M:.0f} m; "
            "tangent-plane approximation invalid")
    h = math.radians(origin.heading)
    east = east_tn * math.cos(h) - north_tn * math.sin(h)
    north = east_tn * math.sin(h) + north_tn * math.cos(h)
    rel_heading = (other.heading - origin.heading) % 360.0
    return east, north, rel_heading


def local_to_geo(origin: GeoPose, east: float, north: float,
                 heading: float | None = None) -> GeoPose:
    """Inverse of :func:`geo_to_local` for the translation part."""
    h = math.radians(origin.heading)
    east_tn = east * math.cos(h) + north * math.sin(h)
    north_tn = -east * math.sin(h) + north * math.cos(h)
    dlat = north_tn / _M_PER_DEG
    mid_lat = math.radians(origin.latitude + 0.5 * dlat)
    dlon = east_tn / (_M_PER_DEG * math.cos(mid_lat))
    if heading is None:
        heading = origin.heading
    return GeoPose(origin.latitude + dlat, origin.longitude + dlon, heading)


def camera_pose(east: float, north: float, rel_heading: float,
                altitude: float = 0.0, frame: str = "world") -> Pose:
    """Camera-to-world pose of a level ground camera from its local offsets.

    frame="world": pose in the z-up world frame (for rendering); the
    reference camera (0, 0, 0) maps to rotation R_REF at the origin.
    frame="reference": the same pose expressed in the reference camera's
    own pinhole frame, where the reference camera is the identity and a
    camera straight ahead has its displacement along +z.
    """
    h = math.radians(rel_heading)
    # level camera yawed clockwise (seen from above) by rel_heading
    rotation = rot_z(-h) @ R_REF
    t = np.array([east, north, altitude], dtype=np.float64)
    world = Pose(rotation, t)
    if frame == "world":
        return world
    if frame == "reference":
        return Pose(R_REF, np.zeros(3)).inverse().compose(world)
    raise ValueError(f"unknown frame {frame!r}")
