"""Camera models: pinhole perspective and top-down orthographic (BEV).

Pixel (row v, col u) has continuous image coordinates (u, v); the principal
point and projected splat means live in the same coordinate system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose


@dataclass
class PerspectiveCamera:
    """Pinhole camera: intrinsics in pixels, pose = camera-to-world."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        r = self.pose.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("pose rotation is not orthonormal")

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def intrinsics_vector(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy])

    def backproject(self, depth: np.ndarray, valid=None) -> np.ndarray:
        """World-frame points of a per-pixel z-depth map. Returns (M, 3) for
        the `valid` pixels (default: finite and positive)."""
        depth = np.asarray(depth, dtype=np.float64)
        if valid is None:
            valid = np.isfinite(depth) & (depth > 0)
        v, u = np.nonzero(valid)
        d = depth[v, u]
        x = (u - self.cx) / self.fx * d
        y = (v - self.cy) / self.fy * d
        cam = np.stack([x, y, d], axis=1)
        return self.pose.apply(cam)

    def project(self, points_world: np.ndarray) -> np.ndarray:
        """Pixel coordinates of world points (no culling); (M, 2)."""
        cam = np.asarray(points_world) @ self.pose.rotation - (
            self.pose.rotation.T @ self.pose.translation)
        z = cam[:, 2]
        return np.stack([self.fx * cam[:, 0] / z + self.cx,
                         self.fy * cam[:, 1] / z + self.cy], axis=1)


@dataclass
class OrthoCamera:
    """Top-down orthographic camera in satellite pixel space.

    resolution is in pixels per meter; world (0, 0) maps to center_offset
    (default: image center), world +y (the reference look-at direction) maps
    to decreasing row.
    """

    resolution: float
    width: int
    height: int
    center_offset: np.ndarray | None = None

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.center_offset is None:
            self.center_offset = np.array([self.width / 2.0, self.height / 2.0])
        else:
            self.center_offset = np.asarray(self.center_offset, dtype=np.float64).reshape(2)


@dataclass
class RenderOutput:
    """color (H,W,3) in [0,1]; depth (H,W) alpha-weighted expected depth;
    alpha (H,W) accumulated opacity; n_skipped counts degenerate splats."""

    color: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray
    n_skipped: int = 0
