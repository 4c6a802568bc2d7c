"""Image-quality metrics for the evaluation tables: PSNR and SSIM.

LPIPS needs a pretrained perceptual network and is deliberately absent;
reports mark it "n/a". Images are float arrays in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class MetricReport:
    psnr: float  # dB; math.inf for identical images
    ssim: float

    def to_dict(self) -> dict:
        return {"psnr": "inf" if math.isinf(self.psnr) else self.psnr,
                "ssim": self.ssim, "lpips": "n/a"}


def _as_image(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    return a


def psnr(a, b) -> float:
    """10 log10(1 / MSE) for [0, 1] images; +inf when identical."""
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-x**2 / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _window_filter(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """'valid'-mode correlation with an odd square window."""
    k = window.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("yxij,ij->yx", view, window)


def ssim(a, b, window_size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
         k1: float = SSIM_K1, k2: float = SSIM_K2, data_range: float = 1.0) -> float:
    """Mean windowed SSIM over valid (fully interior) windows.

    Multichannel images are converted to grayscale by channel mean first.
    """
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    a, b = a.mean(axis=2), b.mean(axis=2)
    if min(a.shape) < window_size:
        raise ValueError(f"image {a.shape} smaller than {window_size}x{window_size} window")

    w = _gaussian_window(window_size, sigma)
    mu_a = _window_filter(a, w)
    mu_b = _window_filter(b, w)
    var_a = _window_filter(a * a, w) - mu_a**2
    var_b = _window_filter(b * b, w) - mu_b**2
    cov = _window_filter(a * b, w) - mu_a * mu_b

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_proxy_loss(a, b) -> float:
    """(1 - SSIM) / 2: the default stand-in for a perceptual loss hook."""
    return (1.0 - ssim(a, b)) / 2.0


def evaluate_pair(pred, gt) -> MetricReport:
    return MetricReport(psnr=psnr(pred, gt), ssim=ssim(pred, gt))
