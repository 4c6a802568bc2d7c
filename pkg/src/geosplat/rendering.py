"""Forward splat rasterization: projection + depth-sorted alpha blending.

Perspective projection uses the local-affine (EWA-style) approximation: the
2D covariance is J W Sigma W^T J^T with J the pinhole Jacobian at the mean,
so footprints shrink with inverse depth. Orthographic projection maps world
(x, y) straight to satellite pixels with the constant Jacobian
[[r, 0, 0], [0, -r, 0]] and no depth-dependent scaling; splats are ordered
by altitude (highest first).

Blending runs front to back per pixel: alpha_i = o_i * exp(-q_i/2) clamped
to [0, alpha_clamp], color = sum alpha_i c_i T_i + background * T_final with
T_i the accumulated transmittance. A splat contributes only where its alpha
reaches `alpha_threshold`; the rasterized footprint is the ellipse that
exactly contains that region, so the output is identical to a cull-free
per-pixel evaluation of the same blending rule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cameras import OrthoCamera, PerspectiveCamera, RenderOutput
from .gaussians import GaussianSet, eval_sh


@dataclass(frozen=True)
class RenderConfig:
    # low-pass regularizer added to the 2D covariance diagonal, px^2
    eps_2d: float = 0.3
    # per-splat alpha ceiling; keeps 1 - alpha bounded away from zero
    alpha_clamp: float = 0.999
    # contributions below this alpha are dropped (0 disables culling)
    alpha_threshold: float = 1.0 / 255.0
    near_plane: float = 0.01
    # floor for the expected-depth normalization max(alpha, floor)
    depth_alpha_floor: float = 1e-8


DEFAULT_CONFIG = RenderConfig()
# cull-free configuration: exact, everywhere-differentiable blending model
EXACT_CONFIG = replace(DEFAULT_CONFIG, alpha_threshold=0.0)

ORTHO_VIEW_DIR = np.array([0.0, 0.0, -1.0])


@dataclass
class Splat2D:
    """Projected splats: 2D means/covariances in pixels plus sort keys.

    `depth` is the value blended into the depth map (camera z for
    perspective, -mean_z for orthographic); `sort_key` orders the blend.
    `valid` is False for culled (behind-camera) splats, `skipped` for
    degenerate 2D covariances.
    """

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: np.ndarray
    sort_key: np.ndarray
    valid: np.ndarray
    skipped: np.ndarray


def project_perspective(gaussians: GaussianSet, camera: PerspectiveCamera,
                        config: RenderConfig = DEFAULT_CONFIG) -> Splat2D:
    w = camera.pose.rotation.T  # world-to-camera
    p_cam = (gaussians.means - camera.pose.translation) @ w.T
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    valid = z > config.near_plane
    zs = np.where(valid, z, 1.0)  # placeholder depth for culled splats

    mean2d = np.stack([camera.fx * x / zs + camera.cx,
                       camera.fy * y / zs + camera.cy], axis=1)

    jac = np.zeros((len(gaussians), 2, 3))
    jac[:, 0, 0] = camera.fx / zs
    jac[:, 0, 2] = -camera.fx * x / zs**2
    jac[:, 1, 1] = camera.fy / zs
    jac[:, 1, 2] = -camera.fy * y / zs**2

    cov_cam = np.einsum("ij,njk,lk->nil", w, gaussians.covariances(), w)
    cov2d = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac)
    cov2d[:, 0, 0] += config.eps_2d
    cov2d[:, 1, 1] += config.eps_2d

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    skipped = valid & ((det <= 0) | (cov2d[:, 0, 0] <= 0) | (cov2d[:, 1, 1] <= 0))
    return Splat2D(mean2d, cov2d, z.copy(), z.copy(), valid & ~skipped, skipped)


def project_orthographic(gaussians: GaussianSet, camera: OrthoCamera,
                         config: RenderConfig = DEFAULT_CONFIG) -> Splat2D:
    r = camera.resolution
    cx, cy = camera.center_offset
    mean2d = np.stack([cx + r * gaussians.means[:, 0],
                       cy - r * gaussians.means[:, 1]], axis=1)

    cov = gaussians.covariances()
    cov2d = np.empty((len(gaussians), 2, 2))
    cov2d[:, 0, 0] = r * r * cov[:, 0, 0] + config.eps_2d
    cov2d[:, 0, 1] = -r * r * cov[:, 0, 1]
    cov2d[:, 1, 0] = -r * r * cov[:, 1, 0]
    cov2d[:, 1, 1] = r * r * cov[:, 1, 1] + config.eps_2d

    depth = -gaussians.means[:, 2]  # higher altitude = smaller depth
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    skipped = det <= 0
    valid = ~skipped
    return Splat2D(mean2d, cov2d, depth.copy(), depth.copy(), valid, skipped)


def project(gaussians: GaussianSet, camera, config: RenderConfig = DEFAULT_CONFIG) -> Splat2D:
    if isinstance(camera, PerspectiveCamera):
        return project_perspective(gaussians, camera, config)
    if isinstance(camera, OrthoCamera):
        return project_orthographic(gaussians, camera, config)
    raise TypeError(f"unsupported camera type {type(camera).__name__}")


def view_directions(gaussians: GaussianSet, camera) -> np.ndarray:
    """Unit camera-to-splat directions used for SH evaluation."""
    if isinstance(camera, OrthoCamera):
        return np.broadcast_to(ORTHO_VIEW_DIR, (len(gaussians), 3))
    d = gaussians.means - camera.pose.translation
    n = np.linalg.norm(d, axis=1, keepdims=True)
    return d / np.maximum(n, 1e-12)


def footprint_radius_sigma(opacities: np.ndarray, config: RenderConfig) -> np.ndarray:
    """Mahalanobis radius beyond which alpha falls under the threshold."""
    if config.alpha_threshold <= 0:
        return np.full(len(opacities), np.inf)
    ratio = np.maximum(opacities / config.alpha_threshold, 1.0)
    return np.sqrt(2.0 * np.log(ratio))


def _footprint_bounds(mean2d, cov2d, radius_sigma, width, height):
    """Inclusive-exclusive pixel bounds of the splat's contributing ellipse."""
    if np.isinf(radius_sigma):
        return 0, width, 0, height
    rx = radius_sigma * np.sqrt(cov2d[0, 0])
    ry = radius_sigma * np.sqrt(cov2d[1, 1])
    x0 = max(int(np.ceil(mean2d[0] - rx)), 0)
    x1 = min(int(np.floor(mean2d[0] + rx)) + 1, width)
    y0 = max(int(np.ceil(mean2d[1] - ry)), 0)
    y1 = min(int(np.floor(mean2d[1] + ry)) + 1, height)
    return x0, x1, y0, y1


def render(gaussians: GaussianSet, camera, background=(0.0, 0.0, 0.0),
           config: RenderConfig = DEFAULT_CONFIG) -> RenderOutput:
    """Depth-sorted alpha-blended render; see the module docstring.

    GaussianSet is treated as immutable for the duration of the call;
    concurrent renders of the same set are safe.
    """
    h, w = camera.height, camera.width
    background = np.asarray(background, dtype=np.float64).reshape(3)
    color = np.zeros((h, w, 3))
    depth_raw = np.zeros((h, w))
    transmittance = np.ones((h, w))

    splats = project(gaussians, camera, config)
    n_skipped = int(np.count_nonzero(splats.skipped))
    if np.any(splats.valid):
        colors = eval_sh(gaussians.sh, view_directions(gaussians, camera))
        opacities = gaussians.opacities()
        radii = footprint_radius_sigma(opacities, config)

        # stable sort: ties in the depth key break by splat index
        order = np.argsort(splats.sort_key, kind="stable")
        order = order[splats.valid[order]]

        inv_cov = np.linalg.inv(splats.cov2d[order])
        for inv, i in zip(inv_cov, order):
            m = splats.mean2d[i]
            x0, x1, y0, y1 = _footprint_bounds(m, splats.cov2d[i], radii[i], w, h)
            if x0 >= x1 or y0 >= y1:
                continue
            dx = np.arange(x0, x1) - m[0]
            dy = np.arange(y0, y1) - m[1]
            q = (inv[0, 0] * dx**2)[None, :] \
                + (inv[1, 1] * dy**2)[:, None] \
                + (2.0 * inv[0, 1]) * dy[:, None] * dx[None, :]
            alpha = opacities[i] * np.exp(-0.5 * q)
            if config.alpha_threshold > 0:
                alpha[alpha < config.alpha_threshold] = 0.0
            np.minimum(alpha, config.alpha_clamp, out=alpha)

            sl = (slice(y0, y1), slice(x0, x1))
            weight = transmittance[sl] * alpha
            color[sl] += weight[:, :, None] * colors[i]
            depth_raw[sl] += weight * splats.depth[i]
            transmittance[sl] *= 1.0 - alpha

    alpha_map = 1.0 - transmittance
    color += transmittance[:, :, None] * background
    depth = depth_raw / np.maximum(alpha_map, config.depth_alpha_floor)
    return RenderOutput(color, depth, alpha_map, n_skipped)
