"""Cross-view glue: height-map backprojection to splats, scene scale
normalization, and combined ground+satellite rendering.

Satellite height maps are per-pixel heights relative to the reference
camera (zero altitude). Backprojection assumes the orthographic model: the
pixel grid maps to world x/y through the mosaic resolution (pixels per
meter), centered on the mosaic center, with image "up" along the reference
look-at direction; the height becomes world z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .cameras import OrthoCamera, RenderOutput
from .gaussians import GaussianSet, opacity_to_logit, sh_from_color
from .geometry import Pose
from .rendering import DEFAULT_CONFIG, RenderConfig, render


@dataclass
class HeightMap:
    """heights: (H, W) meters relative to zero altitude; confidence:
    optional positive per-pixel weights; resolution: pixels per meter."""

    heights: np.ndarray
    resolution: float
    confidence: np.ndarray | None = None

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=np.float64)
        if self.heights.ndim != 2 or self.heights.shape[0] != self.heights.shape[1]:
            raise ValueError("height map must be square (H == W)")
        if not np.all(np.isfinite(self.heights)):
            raise ValueError("height map contains non-finite values")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=np.float64)
            if self.confidence.shape != self.heights.shape:
                raise ValueError("confidence shape mismatch")
            if np.any(self.confidence <= 0):
                raise ValueError("confidence must be positive")

    @property
    def size(self) -> int:
        return self.heights.shape[0]

    def save(self, path, center=None) -> None:
        """Write heights as .npy or 32-bit float TIFF, plus a JSON sidecar
        describing resolution/extent (and optionally the georeference)."""
        path = str(path)
        if path.endswith(".npy"):
            np.save(path, self.heights.astype(np.float32))
        elif path.endswith((".tif", ".tiff")):
            from PIL import Image
            Image.fromarray(self.heights.astype(np.float32), mode="F").save(path)
        else:
            raise ValueError("height map path must end in .npy or .tif(f)")
        sidecar = {"resolution_ppm": self.resolution,
                   "extent_m": self.size / self.resolution}
        if center is not None:
            sidecar["center"] = {"lat": center.latitude, "lon": center.longitude,
                                 "heading": center.heading}
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2)

    @staticmethod
    def load(path) -> "HeightMap":
        path = str(path)
        if path.endswith(".npy"):
            heights = np.load(path)
        elif path.endswith((".tif", ".tiff")):
            from PIL import Image
            heights = np.asarray(Image.open(path), dtype=np.float64)
        else:
            raise ValueError("height map path must end in .npy or .tif(f)")
        with open(path + ".json") as fh:
            sidecar = json.load(fh)
        return HeightMap(heights, sidecar["resolution_ppm"])


@dataclass(frozen=True)
class SceneScale:
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("scene scale must be positive")


@dataclass(frozen=True)
class SplatDefaults:
    """Per-pixel splat parameters for height-map conversion: isotropic
    footprint of scale_factor mosaic pixels and a fixed opacity."""

    scale_factor: float = 0.7
    opacity: float = 0.9


def grid_world_xy(size: int, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    """World x/y of each mosaic pixel center: columns right of center map to
    +x, rows above center to +y (image up = reference look-at)."""
    u = np.arange(size, dtype=np.float64)
    x = (u - size / 2.0) / resolution
    y = -(u - size / 2.0) / resolution
    return np.meshgrid(x, y, indexing="xy")


def heightmap_to_gaussians(heightmap: HeightMap, colors, defaults: SplatDefaults = SplatDefaults()) -> GaussianSet:
    """One isotropic splat per mosaic pixel, colored by the mosaic.

    `colors` is an (H, W, 3) array in [0, 1] or a SatMosaic. The DC SH term
    reproduces the pixel color exactly; degree-1 terms are zero.
    """
    pixels = getattr(colors, "pixels", colors)
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[:2] != heightmap.heights.shape:
        raise ValueError(f"color image {pixels.shape[:2]} does not match "
                         f"height map {heightmap.heights.shape}")
    size = heightmap.size
    r = heightmap.resolution
    gx, gy = grid_world_xy(size, r)
    means = np.stack([gx.ravel(), gy.ravel(), heightmap.heights.ravel()], axis=1)
    n = len(means)
    scale = defaults.scale_factor / r
    return GaussianSet(
        means=means,
        log_scales=np.full((n, 3), np.log(scale)),
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        opacity_logits=np.full(n, opacity_to_logit(defaults.opacity)),
        sh=sh_from_color(pixels.reshape(n, 3)),
    )


def heights_from_gaussians(gaussians: GaussianSet, size: int, resolution: float) -> np.ndarray:
    """Inverse of the mean layout in heightmap_to_gaussians (grid order)."""
    if len(gaussians) != size * size:
        raise ValueError("gaussian count does not match grid")
    return gaussians.means[:, 2].reshape(size, size)


def compute_scene_scale(depths, cameras) -> SceneScale:
    """Mean L2 norm of all backprojected world points across the views."""
    norms = []
    for depth, cam in zip(depths, cameras):
        pts = cam.backproject(depth)
        if len(pts):
            norms.append(np.linalg.norm(pts, axis=1))
    if not norms:
        raise ValueError("no valid depth pixels to compute scene scale")
    return SceneScale(float(np.mean(np.concatenate(norms))))


def normalize_scene(scale: SceneScale, poses=None, depths=None, heightmap=None,
                    resolution=None, gaussians=None):
    """Divide metric quantities by the scene scale; multiply satellite
    resolution by it. Returns normalized copies in the argument order,
    skipping arguments left as None.

    Pose rotations are untouched; only translations scale. Gaussian means
    and scales divide by s so BEV pixel coordinates are invariant.
    """
    s = scale.s
    out = []
    if poses is not None:
        out.append([Pose(p.rotation, p.translation / s) for p in poses])
    if depths is not None:
        out.append([np.asarray(d, dtype=np.float64) / s for d in depths])
    if heightmap is not None:
        out.append(HeightMap(heightmap.heights / s, heightmap.resolution * s,
                             heightmap.confidence))
    if resolution is not None:
        out.append(resolution * s)
    if gaussians is not None:
        g = gaussians.copy()
        g.means = g.means / s
        g.log_scales = g.log_scales - np.log(s)
        out.append(g)
    return out[0] if len(out) == 1 else tuple(out)


def render_combined_exact(ground: GaussianSet, sat: GaussianSet, camera,
                          background=(0.0, 0.0, 0.0),
                          config: RenderConfig = DEFAULT_CONFIG) -> RenderOutput:
    """Render the union of both sets with a single globally sorted blend."""
    return render(GaussianSet.concatenate(ground, sat), camera,
                  background=background, config=config)


def render_combined_two_pass(ground: GaussianSet, sat: GaussianSet, camera,
                             background=(0.0, 0.0, 0.0),
                             config: RenderConfig = DEFAULT_CONFIG) -> RenderOutput:
    """Two-pass approximation: C = C_ground + (1 - alpha_ground) * C_sat.

    Both sets render independently (premultiplied, no background); the
    satellite pass composites behind the ground pass and the background
    applies once at the end. Exact whenever no satellite splat lies in
    front of a ground splat along a ray; otherwise such occluders are
    implicitly dropped.
    """
    background = np.asarray(background, dtype=np.float64).reshape(3)
    g = render(ground, camera, background=(0, 0, 0), config=config)
    s = render(sat, camera, background=(0, 0, 0), config=config)
    t_ground = 1.0 - g.alpha
    color = g.color + t_ground[:, :, None] * s.color
    alpha = 1.0 - t_ground * (1.0 - s.alpha)
    color += (1.0 - alpha)[:, :, None] * background
    depth_raw = g.depth * g.alpha + t_ground * s.depth * s.alpha
    depth = depth_raw / np.maximum(alpha, config.depth_alpha_floor)
    return RenderOutput(color, depth, alpha, g.n_skipped + s.n_skipped)


def render_bev_combined(ground: GaussianSet, sat: GaussianSet, camera: OrthoCamera,
                        background=(0.0, 0.0, 0.0),
                        config: RenderConfig = DEFAULT_CONFIG) -> RenderOutput:
    """Exact-union orthographic render of both sets (the BEV loss input)."""
    if not isinstance(camera, OrthoCamera):
        raise TypeError("render_bev_combined requires an OrthoCamera")
    return render_combined_exact(ground, sat, camera, background, config)
