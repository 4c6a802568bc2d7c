"""Co-visibility IoU, context/target evaluation splits, and GPS perturbation.

Frame overlap is the IoU of tracked sparse-point id sets (track length >= 2;
single-view points carry no co-visibility signal). Split selection is
greedy and deterministic: the first context view is the first image in
name order, later context views chase a target IoU against it, and target
views chase target values of the mean IoU to all context views.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .colmap import SparseScene
from .geodesy import GeoPose, local_to_geo

# per-dataset protocol constants
DL3DV_CONTEXT_IOU = 0.15
TANDT_CONTEXT_IOU = 0.25
DL3DV_TARGET_IOUS = (0.02, 0.05, 0.07, 0.1)
TANDT_TARGET_IOUS = (0.03, 0.07, 0.1, 0.15)


@dataclass
class ViewSplit:
    """context: ordered image indices (into the name-sorted sequence);
    targets: (index, achieved mean IoU) pairs, disjoint from context."""

    context: list
    targets: list
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"context": list(self.context),
                "targets": [{"index": int(i), "iou": float(v)} for i, v in self.targets],
                "config": self.config}

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def pair_iou(scene: SparseScene, image_a: int, image_b: int,
             min_track_length: int = 2) -> float:
    """IoU of the tracked point3D ids visible in two images."""
    a = scene.visible_point_ids(image_a, min_track_length)
    b = scene.visible_point_ids(image_b, min_track_length)
    if not a or not b:
        warnings.warn(f"image {image_a if not a else image_b} has no tracked points; IoU = 0")
        return 0.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def _argmin_score(scores: dict) -> int:
    """Index with the smallest score; ties go to the lower index."""
    best, best_score = None, None
    for idx in sorted(scores):
        if best_score is None or scores[idx] < best_score:
            best, best_score = idx, scores[idx]
    return best


def select_splits(scene: SparseScene, n_context: int, context_target_iou: float,
                  target_ious, greedy_against_first: bool = True) -> ViewSplit:
    """Greedy context/target split per the evaluation protocol.

    greedy_against_first selects each added context frame by its IoU to the
    first context frame (default); False measures against the mean IoU to
    all previously selected context frames.
    """
    if n_context < 1:
        raise ValueError("n_context must be >= 1")
    ids = scene.image_ids_by_name()
    n_targets = len(tuple(target_ious))
    if len(ids) < n_context + n_targets:
        raise ValueError(f"scene has {len(ids)} images; need {n_context + n_targets}")

    visible = {i: scene.visible_point_ids(ids[i]) for i in range(len(ids))}

    def iou(i, j):
        a, b = visible[i], visible[j]
        if not a or not b:
            return 0.0
        union = len(a | b)
        return len(a & b) / union if union else 0.0

    context = [0]
    for _ in range(n_context - 1):
        remaining = [i for i in range(len(ids)) if i not in context]
        if greedy_against_first:
            scores = {i: abs(iou(i, context[0]) - context_target_iou) for i in remaining}
        else:
            scores = {i: abs(np.mean([iou(i, c) for c in context]) - context_target_iou)
                      for i in remaining}
        context.append(_argmin_score(scores))

    selected = set(context)
    targets = []
    for t in target_ious:
        remaining = [i for i in range(len(ids)) if i not in selected]
        mean_iou = {i: float(np.mean([iou(i, c) for c in context])) for i in remaining}
        scores = {i: abs(mean_iou[i] - t) for i in remaining}
        pick = _argmin_score(scores)
        selected.add(pick)
        targets.append((pick, mean_iou[pick]))

    return ViewSplit(context, targets,
                     {"n_context": n_context, "context_target_iou": context_target_iou,
                      "target_ious": list(target_ious),
                      "greedy_against_first": greedy_against_first})


def perturb_geopose(pose: GeoPose, sigma_trans_m: float, sigma_rot_deg: float,
                    seed) -> GeoPose:
    """GPS noise injection: independent Gaussian noise on the local
    east/north offsets (meters) and on the heading (degrees). Deterministic
    for a given seed; sigma = 0 is the identity."""
    if sigma_trans_m < 0 or sigma_rot_deg < 0:
        raise ValueError("noise sigmas must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    east, north = rng.normal(0.0, sigma_trans_m, 2)
    delta_heading = rng.normal(0.0, sigma_rot_deg)
    return local_to_geo(pose, east, north, heading=pose.heading + delta_heading)
