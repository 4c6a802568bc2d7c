"""Supervision terms over renders, depths, heights, masks, and cameras.

Pixel reductions are sums over valid pixels unless noted; the RGB terms use
mean squared error. Confidence-weighted terms follow the standard
confidence-regression form sum(C * |r| - alpha * log C), whose optimum over
C for a fixed residual r is C* = alpha / r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cameras import PerspectiveCamera
from .geometry import Pose, matrix_to_quat, quat_normalize, quat_to_matrix
from .metrics import ssim_proxy_loss


@dataclass(frozen=True)
class LossWeights:
    """Weights of the combined training loss. Defaults follow the reference
    recipe: every geometry/RGB term at 1.0, sky at 0.1, BEV at 0.5."""

    cam: float = 1.0
    depth: float = 1.0
    consistency: float = 1.0
    height: float = 1.0
    rgb_ground: float = 1.0
    rgb_combined: float = 1.0
    rgb_sat: float = 1.0
    sky: float = 0.1
    bev: float = 0.5
    # confidence regularizer alpha in C*|r| - alpha*log(C)
    conf_alpha: float = 0.2
    # perceptual-term weight gamma in the ground RGB loss
    perceptual_gamma: float = 0.05
    # sky depth threshold tau, in normalized scene units
    sky_tau: float = 10.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "cam", "depth", "consistency", "height", "rgb_ground",
            "rgb_combined", "rgb_sat", "sky", "bev")}


@dataclass(frozen=True)
class SkyMask:
    """Binary sky mask (1 = sky). Masks are ingested, never computed here."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("sky mask must be binary")
        object.__setattr__(self, "mask", m.astype(np.float64))


def _valid_mask(gt, valid):
    gt = np.asarray(gt, dtype=np.float64)
    v = np.isfinite(gt)
    if valid is not None:
        v &= np.asarray(valid, dtype=bool)
    return gt, v


def depth_loss(pred, gt, confidence=None, conf_alpha: float = 0.2, valid=None):
    """Confidence-weighted sum of absolute depth residuals.

    sum_j C_j |pred_j - gt_j| - conf_alpha * log C_j over valid pixels
    (finite ground truth, optional extra mask). confidence defaults to ones.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt, v = _valid_mask(gt, valid)
    if not np.any(v):
        raise ValueError("depth_loss: no valid pixels")
    c = np.ones_like(pred) if confidence is None else np.asarray(confidence, dtype=np.float64)
    if np.any(c[v] <= 0):
        raise ValueError("depth_loss: confidence must be positive")
    r = np.abs(pred - gt)
    return float(np.sum(c[v] * r[v] - conf_alpha * np.log(c[v])))


def depth_loss_gradients(pred, gt, confidence=None, conf_alpha: float = 0.2, valid=None):
    """(loss, d/d_pred, d/d_confidence)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt, v = _valid_mask(gt, valid)
    c = np.ones_like(pred) if confidence is None else np.asarray(confidence, dtype=np.float64)
    loss = depth_loss(pred, gt, confidence, conf_alpha, valid)
    r = pred - gt
    d_pred = np.where(v, c * np.sign(r), 0.0)
    d_conf = np.where(v, np.abs(r) - conf_alpha / c, 0.0)
    return loss, d_pred, d_conf


# height grids share the depth functional form
height_loss = depth_loss
height_loss_gradients = depth_loss_gradients


def camera_params_vector(pose: Pose, intrinsics) -> np.ndarray:
    """Flat [translation, quaternion (w >= 0), fx fy cx cy] vector."""
    q = matrix_to_quat(pose.rotation)
    return np.concatenate([pose.translation, q, np.asarray(intrinsics, dtype=np.float64).ravel()])


def camera_loss(pred_pose: Pose, pred_intrinsics, gt_pose: Pose, gt_intrinsics) -> float:
    """L1 distance between camera parameterizations."""
    a = camera_params_vector(pred_pose, pred_intrinsics)
    b = camera_params_vector(gt_pose, gt_intrinsics)
    return float(np.sum(np.abs(a - b)))


def consistency_loss(pred_depth, rendered_depth, alpha=None, alpha_min: float = 0.5):
    """sum |pred - rendered| over valid pixels (accumulated alpha > alpha_min)."""
    pred = np.asarray(pred_depth, dtype=np.float64)
    rend = np.asarray(rendered_depth, dtype=np.float64)
    v = np.isfinite(pred)
    if alpha is not None:
        v &= np.asarray(alpha) > alpha_min
    return float(np.sum(np.abs(pred[v] - rend[v])))


def consistency_loss_gradient(pred_depth, rendered_depth, alpha=None, alpha_min: float = 0.5):
    """(loss, d/d_rendered_depth)."""
    pred = np.asarray(pred_depth, dtype=np.float64)
    rend = np.asarray(rendered_depth, dtype=np.float64)
    v = np.isfinite(pred)
    if alpha is not None:
        v &= np.asarray(alpha) > alpha_min
    loss = float(np.sum(np.abs(pred[v] - rend[v])))
    grad = np.where(v, np.sign(rend - pred), 0.0)
    return loss, grad


def mse(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def mse_gradient(a, b):
    """(mse, d/da)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return mse(a, b), 2.0 * (a - b) / a.size


def rgb_loss(render, target, perceptual_gamma: float = 0.0, perceptual_hook=None) -> float:
    """MSE plus an optional weighted perceptual term.

    The default hook is the (1 - SSIM)/2 proxy; pass a callable taking
    (render, target) to plug in a real perceptual metric.
    """
    value = mse(render, target)
    if perceptual_gamma > 0.0:
        hook = ssim_proxy_loss if perceptual_hook is None else perceptual_hook
        value += perceptual_gamma * float(hook(render, target))
    return value


def sat_rgb_loss(input_renders, input_targets, novel_renders=(), novel_targets=()) -> float:
    """Sum of per-view MSE over input views plus interpolated novel views."""
    if len(input_renders) != len(input_targets) or len(novel_renders) != len(novel_targets):
        raise ValueError("renders/targets length mismatch")
    total = sum(mse(r, t) for r, t in zip(input_renders, input_targets))
    total += sum(mse(r, t) for r, t in zip(novel_renders, novel_targets))
    return float(total)


def sky_losses(depth, alpha_map, mask: SkyMask, tau: float = 10.0):
    """(sky depth loss, sky alpha loss).

    Depth: sum_j M_j relu(tau - d_j) pushes sky pixels beyond tau.
    Alpha: sum_j M_j |1 - alpha_j| promotes opaque sky coverage.
    """
    d = np.asarray(depth, dtype=np.float64)
    a = np.asarray(alpha_map, dtype=np.float64)
    m = mask.mask
    if d.shape != m.shape or a.shape != m.shape:
        raise ValueError("sky mask shape mismatch")
    l_depth = float(np.sum(m * np.maximum(tau - d, 0.0)))
    l_alpha = float(np.sum(m * np.abs(1.0 - a)))
    return l_depth, l_alpha


def sky_loss_gradients(depth, alpha_map, mask: SkyMask, tau: float = 10.0):
    """((l_depth, l_alpha), d/d_depth, d/d_alpha)."""
    d = np.asarray(depth, dtype=np.float64)
    a = np.asarray(alpha_map, dtype=np.float64)
    m = mask.mask
    values = sky_losses(depth, alpha_map, mask, tau)
    d_depth = np.where((m > 0) & (d < tau), -m, 0.0)
    d_alpha = m * np.sign(a - 1.0)
    return values, d_depth, d_alpha


def total_loss(terms: dict, weights: LossWeights = LossWeights()):
    """Weighted total with an itemized breakdown.

    `terms` maps raw term values by name: cam, depth, consistency, height,
    rgb_ground, rgb_combined, rgb_sat, sky_depth, sky_alpha, bev. Missing
    terms count as disabled (zero). The sky weight applies to
    sky_depth + sky_alpha.
    """
    known = {"cam", "depth", "consistency", "height", "rgb_ground",
             "rgb_combined", "rgb_sat", "sky_depth", "sky_alpha", "bev"}
    unknown = set(terms) - known
    if unknown:
        raise ValueError(f"unknown loss terms: {sorted(unknown)}")
    sky_value = terms.get("sky_depth", 0.0) + terms.get("sky_alpha", 0.0)
    breakdown = {}
    for name, w in weights.as_dict().items():
        raw = sky_value if name == "sky" else terms.get(name, 0.0)
        breakdown[name] = {"value": float(raw), "weight": w, "weighted": float(w * raw)}
    total = sum(item["weighted"] for item in breakdown.values())
    return float(total), breakdown


# ---------------------------------------------------------------------------
# novel-view cameras for the satellite RGB loss


def _slerp(qa: np.ndarray, qb: np.ndarray, t: float) -> np.ndarray:
    qa, qb = quat_normalize(qa), quat_normalize(qb)
    dot = float(np.dot(qa, qb))
    if dot < 0:
        qb, dot = -qb, -dot
    if dot > 1.0 - 1e-10:
        return quat_normalize(qa + t * (qb - qa))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    return (np.sin((1 - t) * theta) * qa + np.sin(t * theta) * qb) / np.sin(theta)


def interpolated_novel_cameras(cameras: list, count: int = 2) -> list:
    """`count` cameras interpolated between the two most separated inputs.

    Translations are lerped, rotations slerped, intrinsics lerped; the
    interpolation parameters are interior points of [0, 1].
    """
    if count <= 0 or len(cameras) < 2:
        return []
    best = (0, 1)
    best_d = -1.0
    for i in range(len(cameras)):
        for j in range(i + 1, len(cameras)):
            d = float(np.linalg.norm(cameras[i].pose.translation - cameras[j].pose.translation))
            if d > best_d:
                best_d, best = d, (i, j)
    a, b = cameras[best[0]], cameras[best[1]]
    qa, qb = matrix_to_quat(a.pose.rotation), matrix_to_quat(b.pose.rotation)
    ka, kb = a.intrinsics_vector(), b.intrinsics_vector()
    out = []
    for t in np.linspace(0.0, 1.0, count + 2)[1:-1]:
        q = _slerp(qa, qb, float(t))
        tr = (1 - t) * a.pose.translation + t * b.pose.translation
        k = (1 - t) * ka + t * kb
        out.append(PerspectiveCamera(fx=float(k[0]), fy=float(k[1]), cx=float(k[2]),
                                     cy=float(k[3]), width=a.width, height=a.height,
                                     pose=Pose(quat_to_matrix(q), tr)))
    return out


__all__ = [
    "LossWeights", "SkyMask", "depth_loss", "depth_loss_gradients",
    "height_loss", "height_loss_gradients", "camera_loss", "camera_params_vector",
    "consistency_loss", "consistency_loss_gradient", "mse", "mse_gradient",
    "rgb_loss", "sat_rgb_loss", "sky_losses", "sky_loss_gradients",
    "total_loss", "interpolated_novel_cameras",
]
