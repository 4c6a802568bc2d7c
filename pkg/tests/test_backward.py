import numpy as np
import pytest

from geosplat.backward import GradientSet, check_gradients, render_backward
from geosplat.rendering import EXACT_CONFIG, render

from conftest import random_gaussians, random_ortho_camera, random_perspective_camera, reference_camera

GRAD_TOL = 5e-3


def test_zero_grad_output_gives_zero_gradients(rng):
    gs = random_gaussians(rng, 6)
    cam = reference_camera(16, 16)
    grads = render_backward(gs, cam, np.zeros((16, 16, 3)), np.zeros((16, 16)),
                            np.zeros((16, 16)))
    for arr in grads.as_dict().values():
        assert np.all(arr == 0.0)


def test_nan_in_grad_output_names_pixel(rng):
    gs = random_gaussians(rng, 2)
    cam = reference_camera(8, 8)
    bad = np.zeros((8, 8, 3))
    bad[3, 5, 1] = np.nan
    with pytest.raises(ValueError, match=r"row=3, col=5"):
        render_backward(gs, cam, bad)


def test_single_gaussian_mean_intensity_loss(rng):
    # L = mean pixel intensity; gradient on every parameter vs central FD
    gs = random_gaussians(rng, 1, spread=0.0)
    cam = reference_camera(16, 16)
    g_c = np.full((16, 16, 3), 1.0 / (16 * 16 * 3))
    report = check_gradients(gs, cam, g_c, config=EXACT_CONFIG)
    assert report["max"] < 1e-3


@pytest.mark.parametrize("camera_kind", ["perspective", "ortho"])
def test_random_scenes_match_finite_differences(rng, camera_kind):
    for _ in range(3):
        gs = random_gaussians(rng, 8, logit_range=(-1.0, 2.0))
        cam = (random_perspective_camera(rng, 16, 16) if camera_kind == "perspective"
               else random_ortho_camera(rng, 16, 16))
        out = render(gs, cam, config=EXACT_CONFIG)
        g_c = rng.normal(0, 1, (16, 16, 3))
        g_d = np.where(out.alpha > 0.1, rng.normal(0, 1, (16, 16)), 0.0)
        g_a = rng.normal(0, 1, (16, 16))
        report = check_gradients(gs, cam, g_c, g_d, g_a, config=EXACT_CONFIG)
        assert report["max"] < GRAD_TOL, report


def test_culled_gaussians_get_zero_gradients(rng):
    gs = random_gaussians(rng, 3)
    gs.means[1] = [0.0, -10.0, 0.0]  # behind the reference camera
    cam = reference_camera(16, 16)
    grads = render_backward(gs, cam, np.ones((16, 16, 3)), config=EXACT_CONFIG)
    assert np.all(grads.means[1] == 0.0)
    assert np.all(grads.sh[1] == 0.0)
    assert grads.opacity_logits[1] == 0.0


def test_offscreen_gaussian_touches_no_pixel(rng):
    gs = random_gaussians(rng, 1, spread=0.0)
    gs.means[0] = [500.0, 3.0, 0.0]
    cam = reference_camera(16, 16)
    grads = render_backward(gs, cam, np.ones((16, 16, 3)))
    assert np.all(grads.opacity_logits == 0.0)


def test_background_interaction(rng):
    # nonzero background flows through the transmittance chain
    gs = random_gaussians(rng, 4)
    cam = reference_camera(12, 12)
    g_c = rng.normal(0, 1, (12, 12, 3))
    report = check_gradients(gs, cam, g_c, background=(0.3, 0.7, 0.2),
                             config=EXACT_CONFIG)
    assert report["max"] < GRAD_TOL


def test_gradient_set_zeros_shapes():
    grads = GradientSet.zeros(5)
    assert grads.means.shape == (5, 3)
    assert grads.rotations.shape == (5, 3)
    assert grads.sh.shape == (5, 3, 4)
