import numpy as np
import pytest

from geosplat.cameras import OrthoCamera, PerspectiveCamera
from geosplat.gaussians import GaussianSet, eval_sh, opacity_to_logit
from geosplat.geometry import Pose
from geosplat.rendering import (DEFAULT_CONFIG, EXACT_CONFIG, RenderConfig,
                                project_orthographic, project_perspective, render)

from conftest import random_gaussians, random_ortho_camera, random_perspective_camera, reference_camera
from oracles import oracle_render


def single_gaussian(mean, sigma=0.1, logit=8.0, sh=None):
    return GaussianSet(means=np.asarray(mean, dtype=float)[None, :],
                       log_scales=np.log(np.full((1, 3), sigma)),
                       rotations=[[1.0, 0, 0, 0]],
                       opacity_logits=[logit],
                       sh=np.zeros((1, 3, 4)) if sh is None else sh)


class TestProjectPerspective:
    def test_on_axis_point(self):
        cam = PerspectiveCamera(fx=100, fy=100, cx=64, cy=64, width=128, height=128)
        gs = single_gaussian([0.0, 0.0, 2.0])
        splat = project_perspective(gs, cam)
        assert splat.mean2d[0] == pytest.approx([64.0, 64.0])
        assert splat.depth[0] == pytest.approx(2.0)

    def test_isotropic_cov_matches_finite_difference_jacobian(self, rng):
        # oracle: numerically differentiate the projection map and apply
        # J Sigma J^T for an isotropic Sigma
        cam = random_perspective_camera(rng)
        sigma = 0.2
        mean = np.array([0.25, 2.5, -0.1])
        gs = single_gaussian(mean, sigma=sigma)
        cfg = RenderConfig(eps_2d=0.0)
        splat = project_perspective(gs, cam, cfg)

        def proj(p):
            c = cam.pose.rotation.T @ (p - cam.pose.translation)
            return np.array([cam.fx * c[0] / c[2] + cam.cx,
                             cam.fy * c[1] / c[2] + cam.cy])

        h = 1e-6
        jac = np.zeros((2, 3))
        for k in range(3):
            d = np.zeros(3)
            d[k] = h
            jac[:, k] = (proj(mean + d) - proj(mean - d)) / (2 * h)
        expected = sigma**2 * jac @ jac.T
        assert np.allclose(splat.cov2d[0], expected, rtol=1e-5, atol=1e-9)

    def test_halving_depth_doubles_projected_std(self):
        cam = PerspectiveCamera(fx=80, fy=80, cx=16, cy=16, width=32, height=32)
        cfg = RenderConfig(eps_2d=0.0)
        near = project_perspective(single_gaussian([0, 0, 1.0]), cam, cfg)
        far = project_perspective(single_gaussian([0, 0, 2.0]), cam, cfg)
        assert np.sqrt(near.cov2d[0, 0, 0]) == pytest.approx(
            2 * np.sqrt(far.cov2d[0, 0, 0]), rel=1e-12)

    def test_behind_camera_culled_not_error(self):
        cam = reference_camera()
        gs = single_gaussian([0.0, -5.0, 0.0])  # behind the reference camera
        splat = project_perspective(gs, cam)
        assert not splat.valid[0]
        assert not splat.skipped[0]


class TestProjectOrthographic:
    def test_depth_independence_of_mean2d(self):
        cam = OrthoCamera(resolution=2.0, width=64, height=64)
        for h in (-5.0, 0.0, 17.3):
            splat = project_orthographic(single_gaussian([0.0, 0.0, h]), cam)
            assert splat.mean2d[0] == pytest.approx([32.0, 32.0])

    def test_resolution_scaling_law(self):
        gs = single_gaussian([1.5, -0.5, 0.0])
        cfg = RenderConfig(eps_2d=0.0)
        lo = project_orthographic(gs, OrthoCamera(resolution=2.0, width=64, height=64), cfg)
        hi = project_orthographic(gs, OrthoCamera(resolution=4.0, width=64, height=64), cfg)
        assert (hi.mean2d[0] - 32.0) == pytest.approx(2 * (lo.mean2d[0] - 32.0))
        assert hi.cov2d[0] == pytest.approx(4 * lo.cov2d[0])

    def test_lookat_direction_maps_up(self):
        cam = OrthoCamera(resolution=3.0, width=32, height=32)
        splat = project_orthographic(single_gaussian([0.0, 1.0, 0.0]), cam)
        assert splat.mean2d[0] == pytest.approx([16.0, 16.0 - 3.0])

    def test_sort_key_puts_higher_altitude_first(self):
        gs = GaussianSet.concatenate(single_gaussian([0, 0, 5.0]),
                                     single_gaussian([0, 0, -1.0]))
        splat = project_orthographic(gs, OrthoCamera(resolution=2.0, width=8, height=8))
        assert splat.sort_key[0] < splat.sort_key[1]


class TestRender:
    def test_empty_scene_is_background(self):
        cam = reference_camera(16, 16)
        out = render(GaussianSet.empty(), cam, background=(0.2, 0.4, 0.6))
        assert np.allclose(out.color, [0.2, 0.4, 0.6])
        assert np.all(out.alpha == 0.0)

    def test_single_opaque_gaussian_center_pixel(self):
        cam = reference_camera(32, 32, f=60.0)
        sh = np.zeros((1, 3, 4))
        sh[0, :, 0] = [0.4, -0.2, 0.9]
        gs = single_gaussian([0.0, 2.0, 0.0], sigma=0.2, logit=30.0, sh=sh)
        out = render(gs, cam)
        direction = np.array([0.0, 1.0, 0.0])
        expected = 0.999 * eval_sh(sh[0], direction)  # alpha clamps at 0.999
        assert out.color[16, 16] == pytest.approx(expected, abs=1e-3)
        assert out.alpha[16, 16] == pytest.approx(0.999, abs=1e-6)

    @pytest.mark.parametrize("camera_kind", ["perspective", "ortho"])
    def test_matches_oracle(self, rng, camera_kind):
        for trial in range(5):
            n = int(rng.integers(5, 50))
            gs = random_gaussians(rng, n)
            cam = (random_perspective_camera(rng) if camera_kind == "perspective"
                   else random_ortho_camera(rng))
            bg = rng.uniform(0, 1, 3)
            ours = render(gs, cam, background=bg)
            ref = oracle_render(gs, cam, background=bg)
            assert np.max(np.abs(ours.color - ref.color)) < 1e-5
            assert np.max(np.abs(ours.alpha - ref.alpha)) < 1e-5
            assert np.max(np.abs(ours.depth - ref.depth)) < 1e-4

    def test_alpha_monotone_in_gaussian_count(self, rng):
        cam = random_perspective_camera(rng)
        gs = random_gaussians(rng, 12)
        alpha_prev = render(gs.subset(range(6)), cam).alpha
        alpha_all = render(gs, cam).alpha
        assert np.all(alpha_all >= alpha_prev - 1e-12)

    def test_permutation_invariance(self, rng):
        gs = random_gaussians(rng, 15)
        cam = random_perspective_camera(rng)
        perm = rng.permutation(15)
        a = render(gs, cam)
        b = render(gs.subset(perm), cam)
        assert np.array_equal(a.alpha, b.alpha) or np.allclose(a.alpha, b.alpha, atol=1e-14)
        assert np.allclose(a.color, b.color, atol=1e-14)

    def test_tie_break_by_index_is_deterministic(self):
        # two splats at identical depth with different colors
        sh_a = np.zeros((1, 3, 4)); sh_a[0, :, 0] = 1.0
        sh_b = np.zeros((1, 3, 4)); sh_b[0, :, 0] = -1.0
        a = single_gaussian([0, 2, 0], logit=2.0, sh=sh_a)
        b = single_gaussian([0, 2, 0], logit=2.0, sh=sh_b)
        cam = reference_camera()
        out_ab = render(GaussianSet.concatenate(a, b), cam)
        out_ab2 = render(GaussianSet.concatenate(a, b), cam)
        assert np.array_equal(out_ab.color, out_ab2.color)

    def test_orthographic_depth_translation_invariance(self, rng):
        gs = random_gaussians(rng, 10)
        cam = random_ortho_camera(rng)
        shifted = gs.copy()
        shifted.means = shifted.means + np.array([0.0, 0.0, 123.0])
        a = render(gs, cam)
        b = render(shifted, cam)
        assert np.allclose(a.color, b.color, atol=1e-12)
        assert np.allclose(a.alpha, b.alpha, atol=1e-12)

    def test_eps_regularization_close_to_unregularized(self, rng):
        # footprints >= 2 px: the 0.3 px^2 diagonal changes little
        cam = OrthoCamera(resolution=10.0, width=32, height=32)
        gs = random_gaussians(rng, 8, center=(0.0, 0.0, 0.0), spread=0.6,
                              scale_range=(0.2, 0.5))
        with_eps = render(gs, cam, config=RenderConfig(eps_2d=0.3, alpha_threshold=0.0))
        without = oracle_render(gs, cam, config=RenderConfig(eps_2d=0.0, alpha_threshold=0.0))
        assert np.max(np.abs(with_eps.color - without.color)) < 1e-2

    def test_degenerate_covariance_skipped_and_counted(self):
        gs = single_gaussian([0.0, 2.0, 0.0], sigma=1e-12)
        gs.log_scales[:] = -800.0  # exp underflows to zero -> singular
        cam = reference_camera()
        out = render(gs, cam, config=RenderConfig(eps_2d=0.0))
        assert out.n_skipped == 1
        assert np.all(out.alpha == 0.0)

    def test_nonfinite_parameters_rejected_by_validate(self, rng):
        gs = random_gaussians(rng, 3)
        gs.means[1, 0] = np.nan
        with pytest.raises(ValueError):
            gs.validate()
