"""Per-scene gradient-descent fitting of a fixed splat set to target views.

First-order Adam updates on all five parameter groups; quaternions update
through the tangent space and are renormalized every step. The Gaussian
count is fixed for the whole fit (no densification or pruning).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backward import GradientSet, render_backward
from .gaussians import GaussianSet
from .geometry import quat_from_axis_angle, quat_multiply, quat_normalize
from .losses import LossWeights, SkyMask, consistency_loss_gradient, mse_gradient, sky_loss_gradients
from .rendering import DEFAULT_CONFIG, RenderConfig, render


@dataclass(frozen=True)
class LearningRates:
    means: float = 1.6e-3
    sh: float = 2.5e-3
    opacity_logits: float = 5e-2
    log_scales: float = 5e-3
    rotations: float = 1e-3


@dataclass(frozen=True)
class FitConfig:
    steps: int = 500
    learning_rates: LearningRates = field(default_factory=LearningRates)
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    background: tuple = (0.0, 0.0, 0.0)
    render_config: RenderConfig = DEFAULT_CONFIG
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        for name in ("means", "sh", "opacity_logits", "log_scales", "rotations"):
            if getattr(self.learning_rates, name) < 0:
                raise ValueError(f"learning rate {name} must be >= 0")


@dataclass
class FitTarget:
    """One supervised view: image in [0,1], plus optional sky mask and
    depth supervision (valid where the rendered alpha exceeds 0.5)."""

    camera: object
    image: np.ndarray
    sky_mask: SkyMask | None = None
    depth: np.ndarray | None = None


@dataclass
class FitResult:
    gaussians: GaussianSet
    trace: np.ndarray          # per-step total loss
    term_trace: dict           # per-step raw values by term name
    diverged: bool = False


class FitDivergedError(RuntimeError):
    def __init__(self, trace):
        super().__init__(f"fit diverged at step {len(trace)} (loss {trace[-1]:.3e})")
        self.trace = np.asarray(trace)


class _Adam:
    def __init__(self, shape, lr, betas, eps):
        self.lr, self.eps = lr, eps
        self.b1, self.b2 = betas
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _accumulate(total: GradientSet, part: GradientSet) -> None:
    total.means += part.means
    total.log_scales += part.log_scales
    total.rotations += part.rotations
    total.opacity_logits += part.opacity_logits
    total.sh += part.sh


def evaluate_targets(gaussians: GaussianSet, targets, config: FitConfig,
                     with_grads: bool = True):
    """Weighted loss over all targets; optionally its parameter gradients.

    RGB uses per-view MSE weighted by the ground RGB weight; optional depth
    supervision uses the depth-consistency form; sky masks add the sky
    depth/alpha terms.
    """
    w = config.weights
    grads = GradientSet.zeros(len(gaussians)) if with_grads else None
    total = 0.0
    terms = {"rgb": 0.0, "depth": 0.0, "sky": 0.0}
    for target in targets:
        out = render(gaussians, target.camera, background=config.background,
                     config=config.render_config)
        g_c = np.zeros_like(out.color)
        g_d = np.zeros_like(out.depth)
        g_a = np.zeros_like(out.alpha)

        value, grad = mse_gradient(out.color, target.image)
        terms["rgb"] += value
        total += w.rgb_ground * value
        g_c += w.rgb_ground * grad

        if target.depth is not None:
            value, grad = consistency_loss_gradient(target.depth, out.depth, out.alpha)
            terms["depth"] += value
            total += w.consistency * value
            g_d += w.consistency * grad

        if target.sky_mask is not None:
            (l_sd, l_sa), d_depth, d_alpha = sky_loss_gradients(
                out.depth, out.alpha, target.sky_mask, w.sky_tau)
            terms["sky"] += l_sd + l_sa
            total += w.sky * (l_sd + l_sa)
            g_d += w.sky * d_depth
            g_a += w.sky * d_alpha

        if with_grads:
            part = render_backward(gaussians, target.camera, g_c, g_d, g_a,
                                   background=config.background,
                                   config=config.render_config)
            _accumulate(grads, part)
    return total, terms, grads


def fit_scene(targets, init: GaussianSet, config: FitConfig) -> FitResult:
    """Adam-fit `init` to the targets; deterministic for a given config.

    Returns the fitted set plus the per-step loss trace. Raises
    FitDivergedError when the loss exceeds the divergence threshold.
    """
    if not targets:
        raise ValueError("fit_scene needs at least one target")
    for t in targets:
        img = np.asarray(t.image)
        if img.min() < 0 or img.max() > 1:
            raise ValueError("target images must be in [0, 1]")

    gaussians = init.copy()
    lr = config.learning_rates
    betas, eps = config.adam_betas, config.adam_eps
    n = len(gaussians)
    opt = {
        "means": _Adam((n, 3), lr.means, betas, eps),
        "log_scales": _Adam((n, 3), lr.log_scales, betas, eps),
        "rotations": _Adam((n, 3), lr.rotations, betas, eps),
        "opacity_logits": _Adam((n,), lr.opacity_logits, betas, eps),
        "sh": _Adam((n, 3, 4), lr.sh, betas, eps),
    }

    trace = []
    term_trace = {"rgb": [], "depth": [], "sky": []}
    for _ in range(config.steps):
        total, terms, grads = evaluate_targets(gaussians, targets, config)
        trace.append(total)
        for k in term_trace:
            term_trace[k].append(terms[k])
        if not np.isfinite(total) or total > config.divergence_threshold:
            raise FitDivergedError(trace)

        gaussians.means += opt["means"].step(grads.means)
        gaussians.log_scales += opt["log_scales"].step(grads.log_scales)
        gaussians.opacity_logits += opt["opacity_logits"].step(grads.opacity_logits)
        gaussians.sh += opt["sh"].step(grads.sh)
        delta = opt["rotations"].step(grads.rotations)
        for i in range(n):
            gaussians.rotations[i] = quat_multiply(
                gaussians.rotations[i], quat_from_axis_angle(delta[i]))
        gaussians.rotations = quat_normalize(gaussians.rotations)

    return FitResult(gaussians, np.asarray(trace),
                     {k: np.asarray(v) for k, v in term_trace.items()})
