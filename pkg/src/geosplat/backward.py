"""Reverse-mode gradients of the forward render, plus a finite-difference
gradient checker.

The backward pass mirrors the forward blend exactly: it replays the splats
in depth order to recover per-pixel transmittance, then walks them back to
front, maintaining suffix sums of the downstream contributions so each
splat's alpha gradient is exact. Projection Jacobians (including the
perspective Jacobian's own dependence on the mean), SH colors, opacity
sigmoid, and the covariance factorization R diag(exp(2s)) R^T are all
differentiated analytically. Rotation gradients live in the tangent space
at the current quaternion: a tangent vector delta corresponds to the
perturbation q * quat(delta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import OrthoCamera, PerspectiveCamera
from .gaussians import SH_C1, GaussianSet, eval_sh
from .geometry import quat_from_axis_angle, quat_multiply, quat_normalize
from .rendering import (DEFAULT_CONFIG, RenderConfig, _footprint_bounds,
                        footprint_radius_sigma, project, render, view_directions)

# hat(e_k) generators used for tangent-space rotation gradients
_GENERATORS = np.array([
    [[0.0, 0, 0], [0, 0, -1], [0, 1, 0]],
    [[0.0, 0, 1], [0, 0, 0], [-1, 0, 0]],
    [[0.0, -1, 0], [1, 0, 0], [0, 0, 0]],
])


@dataclass
class GradientSet:
    """Per-splat partials; same leading dimension as the GaussianSet."""

    means: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray  # tangent 3-vectors
    opacity_logits: np.ndarray
    sh: np.ndarray

    @staticmethod
    def zeros(n: int) -> "GradientSet":
        return GradientSet(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)),
                           np.zeros(n), np.zeros((n, 3, 4)))

    def as_dict(self) -> dict:
        return {"means": self.means, "log_scales": self.log_scales,
                "rotations": self.rotations, "opacity_logits": self.opacity_logits,
                "sh": self.sh}


def _check_finite(name: str, arr: np.ndarray) -> None:
    bad = ~np.isfinite(arr)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise ValueError(f"non-finite value in {name} at pixel "
                         f"(row={idx[0]}, col={idx[1]})")


def render_backward(gaussians: GaussianSet, camera, grad_color=None,
                    grad_depth=None, grad_alpha=None, background=(0.0, 0.0, 0.0),
                    config: RenderConfig = DEFAULT_CONFIG) -> GradientSet:
    """Gradient of L wrt all splat parameters, where the caller supplies
    dL/dColor, dL/dDepth, dL/dAlpha of the forward render."""
    h, w = camera.height, camera.width
    n = len(gaussians)
    grads = GradientSet.zeros(n)

    g_c = np.zeros((h, w, 3)) if grad_color is None else np.asarray(grad_color, dtype=np.float64)
    g_d = np.zeros((h, w)) if grad_depth is None else np.asarray(grad_depth, dtype=np.float64)
    g_a = np.zeros((h, w)) if grad_alpha is None else np.asarray(grad_alpha, dtype=np.float64)
    _check_finite("grad_color", g_c)
    _check_finite("grad_depth", g_d)
    _check_finite("grad_alpha", g_a)
    if n == 0:
        return grads

    background = np.asarray(background, dtype=np.float64).reshape(3)
    splats = project(gaussians, camera, config)
    dirs = view_directions(gaussians, camera)
    colors = eval_sh(gaussians.sh, dirs)
    opacities = gaussians.opacities()
    radii = footprint_radius_sigma(opacities, config)

    order = np.argsort(splats.sort_key, kind="stable")
    order = order[splats.valid[order]]
    inv_cov = np.linalg.inv(splats.cov2d[order]) if len(order) else np.zeros((0, 2, 2))

    # forward replay for final transmittance and the raw depth sum
    transmittance = np.ones((h, w))
    depth_raw = np.zeros((h, w))
    bounds = []
    for inv, i in zip(inv_cov, order):
        m = splats.mean2d[i]
        x0, x1, y0, y1 = _footprint_bounds(m, splats.cov2d[i], radii[i], w, h)
        bounds.append((x0, x1, y0, y1))
        if x0 >= x1 or y0 >= y1:
            continue
        dx = np.arange(x0, x1) - m[0]
        dy = np.arange(y0, y1) - m[1]
        q = (inv[0, 0] * dx**2)[None, :] + (inv[1, 1] * dy**2)[:, None] \
            + (2.0 * inv[0, 1]) * dy[:, None] * dx[None, :]
        alpha = opacities[i] * np.exp(-0.5 * q)
        if config.alpha_threshold > 0:
            alpha[alpha < config.alpha_threshold] = 0.0
        np.minimum(alpha, config.alpha_clamp, out=alpha)
        sl = (slice(y0, y1), slice(x0, x1))
        depth_raw[sl] += transmittance[sl] * alpha * splats.depth[i]
        transmittance[sl] *= 1.0 - alpha

    t_final = transmittance
    alpha_map = 1.0 - t_final
    denom = np.maximum(alpha_map, config.depth_alpha_floor)
    gd_raw = g_d / denom
    ga_eff = g_a - np.where(alpha_map > config.depth_alpha_floor,
                            g_d * depth_raw / denom**2, 0.0)
    bg_dot = g_c @ background  # (H, W)

    # accumulators for the blended quantities, per splat
    d_mean2d = np.zeros((n, 2))
    d_cov2d = np.zeros((n, 2, 2))
    d_depthval = np.zeros(n)
    d_color = np.zeros((n, 3))
    d_opacity = np.zeros(n)

    # suffix sums of downstream contributions (back to front)
    s_color = np.zeros((h, w))   # sum_{k>i} (g_c . c_k) alpha_k T_k
    s_depth = np.zeros((h, w))   # sum_{k>i} gd_raw z_k alpha_k T_k
    t_run = t_final.copy()

    for (inv, i, (x0, x1, y0, y1)) in zip(inv_cov[::-1], order[::-1], bounds[::-1]):
        if x0 >= x1 or y0 >= y1:
            continue
        m = splats.mean2d[i]
        dx = np.arange(x0, x1) - m[0]
        dy = np.arange(y0, y1) - m[1]
        q = (inv[0, 0] * dx**2)[None, :] + (inv[1, 1] * dy**2)[:, None] \
            + (2.0 * inv[0, 1]) * dy[:, None] * dx[None, :]
        g_gauss = np.exp(-0.5 * q)
        alpha_raw = opacities[i] * g_gauss
        live = alpha_raw >= config.alpha_threshold if config.alpha_threshold > 0 \
            else np.ones_like(alpha_raw, dtype=bool)
        alpha = np.where(live, np.minimum(alpha_raw, config.alpha_clamp), 0.0)
        one_minus = 1.0 - alpha

        sl = (slice(y0, y1), slice(x0, x1))
        t_i = t_run[sl] / one_minus
        weight = alpha * t_i

        term_color = g_c[sl] @ colors[i]  # (h', w')
        d_alpha = (term_color * t_i
                   - (s_color[sl] + bg_dot[sl] * t_final[sl]) / one_minus
                   + gd_raw[sl] * splats.depth[i] * t_i
                   - s_depth[sl] / one_minus
                   + ga_eff[sl] * t_final[sl] / one_minus)
        # clamped or culled alphas are locally constant
        d_alpha = np.where(live & (alpha_raw < config.alpha_clamp), d_alpha, 0.0)

        d_color[i] += np.einsum("yxc,yx->c", g_c[sl], weight)
        d_depthval[i] += np.sum(gd_raw[sl] * weight)
        d_opacity[i] += np.sum(d_alpha * g_gauss)

        d_q = -0.5 * d_alpha * alpha_raw
        vx = inv[0, 0] * dx[None, :] + inv[0, 1] * dy[:, None]
        vy = inv[1, 0] * dx[None, :] + inv[1, 1] * dy[:, None]
        d_mean2d[i, 0] += np.sum(d_q * (-2.0) * vx)
        d_mean2d[i, 1] += np.sum(d_q * (-2.0) * vy)
        # dq/dP = d d^T, then P = inv(cov) gives dcov = -P dP P
        dp = np.empty((2, 2))
        dp[0, 0] = np.sum(d_q * dx[None, :]**2)
        dp[1, 1] = np.sum(d_q * dy[:, None]**2)
        dp[0, 1] = dp[1, 0] = np.sum(d_q * dx[None, :] * dy[:, None])
        d_cov2d[i] += -inv @ dp @ inv

        s_color[sl] += term_color * weight
        s_depth[sl] += gd_raw[sl] * splats.depth[i] * weight
        t_run[sl] = t_i

    # ---- projection + appearance backward (vectorized over splats) ----
    live = splats.valid
    d_mean = np.zeros((n, 3))
    d_sigma = np.zeros((n, 3, 3))

    # SH and view-direction chain
    basis = np.stack([np.full(n, 0.28209479177387814),
                      -SH_C1 * dirs[:, 1], SH_C1 * dirs[:, 2], -SH_C1 * dirs[:, 0]],
                     axis=1)
    pre = np.einsum("nck,nk->nc", gaussians.sh, basis)
    active = (pre + 0.5) > 0
    gma = np.where(active, d_color, 0.0) * live[:, None]
    grads.sh = np.einsum("nc,nk->nck", gma, basis)
    d_dir = np.stack([
        np.sum(gma * (-SH_C1 * gaussians.sh[:, :, 3]), axis=1),
        np.sum(gma * (-SH_C1 * gaussians.sh[:, :, 1]), axis=1),
        np.sum(gma * (SH_C1 * gaussians.sh[:, :, 2]), axis=1),
    ], axis=1)

    if isinstance(camera, PerspectiveCamera):
        wmat = camera.pose.rotation.T
        p_cam = (gaussians.means - camera.pose.translation) @ wmat.T
        x, y, z = p_cam[:, 0], p_cam[:, 1], np.where(live, p_cam[:, 2], 1.0)
        fx, fy = camera.fx, camera.fy

        jac = np.zeros((n, 2, 3))
        jac[:, 0, 0] = fx / z
        jac[:, 0, 2] = -fx * x / z**2
        jac[:, 1, 1] = fy / z
        jac[:, 1, 2] = -fy * y / z**2
        cov_cam = np.einsum("ij,njk,lk->nil", wmat, gaussians.covariances(), wmat)

        d_sigma_cam = np.einsum("nji,njk,nkl->nil", jac, d_cov2d, jac)
        d_sigma = np.einsum("ji,njk,kl->nil", wmat, d_sigma_cam, wmat)
        d_jac = 2.0 * np.einsum("nij,njk,nkl->nil", d_cov2d, jac, cov_cam)

        d_pcam = np.zeros((n, 3))
        d_pcam[:, 0] = d_jac[:, 0, 2] * (-fx / z**2) + d_mean2d[:, 0] * fx / z
        d_pcam[:, 1] = d_jac[:, 1, 2] * (-fy / z**2) + d_mean2d[:, 1] * fy / z
        d_pcam[:, 2] = (d_jac[:, 0, 0] * (-fx / z**2)
                        + d_jac[:, 1, 1] * (-fy / z**2)
                        + d_jac[:, 0, 2] * (2 * fx * x / z**3)
                        + d_jac[:, 1, 2] * (2 * fy * y / z**3)
                        - d_mean2d[:, 0] * fx * x / z**2
                        - d_mean2d[:, 1] * fy * y / z**2
                        + d_depthval)
        d_mean = d_pcam @ wmat

        # view direction depends on the mean for perspective cameras
        u = gaussians.means - camera.pose.translation
        norm = np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
        d_mean += (d_dir - dirs * np.sum(d_dir * dirs, axis=1, keepdims=True)) / norm
    elif isinstance(camera, OrthoCamera):
        r = camera.resolution
        d_mean[:, 0] = r * d_mean2d[:, 0]
        d_mean[:, 1] = -r * d_mean2d[:, 1]
        d_mean[:, 2] = -d_depthval  # blended depth value is -mean_z
        flip = np.array([[r, 0.0, 0.0], [0.0, -r, 0.0]])
        d_sigma = np.einsum("ji,njk,kl->nil", flip, d_cov2d, flip)
    else:
        raise TypeError(f"unsupported camera type {type(camera).__name__}")

    grads.means = np.where(live[:, None], d_mean, 0.0)

    # covariance factorization backward
    rot = gaussians.rotation_matrices()
    s2 = np.exp(2.0 * gaussians.log_scales)
    b = np.einsum("nji,njk,nkl->nil", rot, d_sigma, rot)
    grads.log_scales = 2.0 * s2 * np.einsum("nkk->nk", b) * live[:, None]
    diff = s2[:, None, :] - s2[:, :, None]  # (n, i, j): s2_j - s2_i
    grads.rotations = np.einsum("nij,kij->nk", b * diff, _GENERATORS) * live[:, None]

    o = opacities
    grads.opacity_logits = d_opacity * o * (1.0 - o) * live
    return grads


# ---------------------------------------------------------------------------
# finite-difference oracle


def _scalar_loss(gaussians, camera, g_c, g_d, g_a, background, config) -> float:
    out = render(gaussians, camera, background=background, config=config)
    return float(np.sum(g_c * out.color) + np.sum(g_d * out.depth)
                 + np.sum(g_a * out.alpha))


def finite_difference_gradients(gaussians: GaussianSet, camera, grad_color,
                                grad_depth=None, grad_alpha=None,
                                background=(0.0, 0.0, 0.0),
                                config: RenderConfig = DEFAULT_CONFIG,
                                step: float = 1e-4) -> GradientSet:
    """Central-difference gradients of the same scalar loss the backward pass
    differentiates. Rotation differences are taken in the tangent space."""
    h, w = camera.height, camera.width
    g_c = np.zeros((h, w, 3)) if grad_color is None else np.asarray(grad_color)
    g_d = np.zeros((h, w)) if grad_depth is None else np.asarray(grad_depth)
    g_a = np.zeros((h, w)) if grad_alpha is None else np.asarray(grad_alpha)

    def loss(gs):
        return _scalar_loss(gs, camera, g_c, g_d, g_a, background, config)

    n = len(gaussians)
    fd = GradientSet.zeros(n)

    def central(apply_step):
        plus = gaussians.copy()
        apply_step(plus, +step)
        minus = gaussians.copy()
        apply_step(minus, -step)
        return (loss(plus) - loss(minus)) / (2 * step)

    for i in range(n):
        for k in range(3):
            def bump_mean(gs, s, i=i, k=k):
                gs.means[i, k] += s
            fd.means[i, k] = central(bump_mean)
            def bump_scale(gs, s, i=i, k=k):
                gs.log_scales[i, k] += s
            fd.log_scales[i, k] = central(bump_scale)
            def bump_rot(gs, s, i=i, k=k):
                delta = np.zeros(3)
                delta[k] = s
                gs.rotations[i] = quat_normalize(
                    quat_multiply(gs.rotations[i], quat_from_axis_angle(delta)))
            fd.rotations[i, k] = central(bump_rot)
        def bump_opacity(gs, s, i=i):
            gs.opacity_logits[i] += s
        fd.opacity_logits[i] = central(bump_opacity)
        for c in range(3):
            for k in range(4):
                def bump_sh(gs, s, i=i, c=c, k=k):
                    gs.sh[i, c, k] += s
                fd.sh[i, c, k] = central(bump_sh)
    return fd


def check_gradients(gaussians: GaussianSet, camera, grad_color,
                    grad_depth=None, grad_alpha=None,
                    background=(0.0, 0.0, 0.0),
                    config: RenderConfig = DEFAULT_CONFIG,
                    step: float = 1e-4) -> dict:
    """Max relative error per parameter group, analytic vs finite differences.

    The error is |a - f| / max(|a|, |f|, 1e-3 * gmax, 1e-8) with gmax the
    largest gradient magnitude over all parameters, so near-zero entries of
    an otherwise healthy gradient do not dominate the report.
    """
    analytic = render_backward(gaussians, camera, grad_color, grad_depth,
                               grad_alpha, background, config)
    fd = finite_difference_gradients(gaussians, camera, grad_color, grad_depth,
                                     grad_alpha, background, config, step)
    a_dict, f_dict = analytic.as_dict(), fd.as_dict()
    gmax = max(max(np.max(np.abs(a)) for a in a_dict.values()),
               max(np.max(np.abs(f)) for f in f_dict.values()), 1e-12)
    report = {}
    for key in a_dict:
        a, f = a_dict[key], f_dict[key]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), max(1e-3 * gmax, 1e-8))
        report[key] = float(np.max(np.abs(a - f) / denom)) if a.size else 0.0
    report["max"] = max(report.values()) if report else 0.0
    return report
