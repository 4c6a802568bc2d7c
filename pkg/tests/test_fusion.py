import numpy as np
import pytest

from geosplat.cameras import OrthoCamera, PerspectiveCamera
from geosplat.fusion import (HeightMap, SceneScale, SplatDefaults,
                             compute_scene_scale, heightmap_to_gaussians,
                             heights_from_gaussians, normalize_scene,
                             render_bev_combined, render_combined_exact,
                             render_combined_two_pass)
from geosplat.gaussians import GaussianSet
from geosplat.geodesy import camera_pose
from geosplat.geometry import Pose
from geosplat.metrics import psnr
from geosplat.rendering import project_orthographic, render

from conftest import random_gaussians, random_perspective_camera, reference_camera


class TestHeightmapToGaussians:
    def test_flat_grid_spacing(self):
        hm = HeightMap(np.zeros((4, 4)), resolution=2.0)
        gs = heightmap_to_gaussians(hm, np.full((4, 4, 3), 0.5))
        assert len(gs) == 16
        assert np.all(gs.means[:, 2] == 0.0)
        xs = np.unique(gs.means[:, 0])
        assert np.allclose(np.diff(xs), 0.5)

    def test_center_pixel_maps_to_origin(self):
        hm = HeightMap(np.zeros((8, 8)), resolution=2.0)
        gs = heightmap_to_gaussians(hm, np.zeros((8, 8, 3)))
        center = gs.means.reshape(8, 8, 3)[4, 4]
        assert center[0] == 0.0 and center[1] == 0.0

    def test_dimension_mismatch_raises(self):
        hm = HeightMap(np.zeros((4, 4)), resolution=2.0)
        with pytest.raises(ValueError):
            heightmap_to_gaussians(hm, np.zeros((5, 5, 3)))

    def test_orthographic_round_trip_psnr(self, rng):
        size, ppm = 64, 2.0
        heights = rng.uniform(-1.0, 4.0, (size, size))
        u = np.arange(size)
        gx, gy = np.meshgrid(u, u, indexing="xy")
        colors = np.stack([0.5 + 0.4 * np.sin(gx / 5.0),
                           0.5 + 0.4 * np.cos(gy / 7.0),
                           0.5 + 0.3 * np.sin((gx + gy) / 9.0)], axis=-1)
        hm = HeightMap(heights, resolution=ppm)
        gs = heightmap_to_gaussians(hm, colors, SplatDefaults(opacity=0.99))
        cam = OrthoCamera(resolution=ppm, width=size, height=size)
        out = render(gs, cam)
        assert psnr(out.color, colors) >= 30.0

    def test_height_extraction_inverse(self, rng):
        heights = rng.normal(0, 2, (16, 16))
        hm = HeightMap(heights, resolution=2.0)
        gs = heightmap_to_gaussians(hm, np.zeros((16, 16, 3)))
        assert np.array_equal(heights_from_gaussians(gs, 16, 2.0), heights)

    def test_confidence_validation(self):
        with pytest.raises(ValueError):
            HeightMap(np.zeros((4, 4)), resolution=2.0, confidence=np.zeros((4, 4)))
        with pytest.raises(ValueError):
            HeightMap(np.full((4, 4), np.nan), resolution=2.0)

    def test_save_load_round_trip(self, rng, tmp_path):
        hm = HeightMap(rng.normal(0, 1, (8, 8)), resolution=2.0)
        for name in ("h.npy", "h.tif"):
            hm.save(tmp_path / name)
            back = HeightMap.load(tmp_path / name)
            assert np.allclose(back.heights, hm.heights, atol=1e-6)
            assert back.resolution == 2.0


class TestSceneScale:
    def test_single_pixel(self):
        cam = reference_camera(4, 4)
        depth = np.full((4, 4), np.nan)
        depth[1, 2] = 2.0
        # that pixel backprojects near the optical axis; with cx=cy=2 pixel
        # (2, 2) would be exact, use it
        depth = np.full((4, 4), np.nan)
        depth[2, 2] = 2.0
        scale = compute_scene_scale([depth], [cam])
        assert scale.s == pytest.approx(2.0)

    def test_sphere_of_points(self, rng):
        # pixels backprojecting to a radius-r sphere around the origin
        cam = reference_camera(8, 8)
        r = 3.7
        depth = np.zeros((8, 8))
        for v in range(8):
            for u in range(8):
                ray = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
                depth[v, u] = r / np.linalg.norm(ray)
        scale = compute_scene_scale([depth], [cam])
        assert scale.s == pytest.approx(r, rel=1e-12)

    def test_matches_direct_summation_oracle(self, rng):
        cams = [random_perspective_camera(rng, 12, 12) for _ in range(3)]
        depths = [rng.uniform(0.5, 6.0, (12, 12)) for _ in range(3)]
        scale = compute_scene_scale(depths, cams)
        norms = []
        for cam, depth in zip(cams, depths):
            for v in range(12):
                for u in range(12):
                    p_cam = depth[v, u] * np.array([(u - cam.cx) / cam.fx,
                                                    (v - cam.cy) / cam.fy, 1.0])
                    norms.append(np.linalg.norm(cam.pose.apply(p_cam)))
        assert scale.s == pytest.approx(np.mean(norms), rel=1e-12)

    def test_all_invalid_raises(self):
        cam = reference_camera(4, 4)
        with pytest.raises(ValueError):
            compute_scene_scale([np.full((4, 4), np.nan)], [cam])


class TestNormalizeScene:
    def test_unit_scale_is_identity(self, rng):
        pose = camera_pose(1.0, 2.0, 30.0)
        depth = rng.uniform(1, 5, (4, 4))
        hm = HeightMap(rng.normal(0, 1, (4, 4)), resolution=2.0)
        poses, depths, hm2, r2 = normalize_scene(SceneScale(1.0), [pose], [depth], hm, 2.0)
        assert poses[0].is_close(pose)
        assert np.array_equal(depths[0], depth)
        assert np.array_equal(hm2.heights, hm.heights)
        assert r2 == 2.0

    def test_idempotent_scale_recomputes_to_one(self, rng):
        cams = [random_perspective_camera(rng, 8, 8) for _ in range(2)]
        depths = [rng.uniform(0.5, 4.0, (8, 8)) for _ in range(2)]
        s = compute_scene_scale(depths, cams)
        poses, ndepths = normalize_scene(s, [c.pose for c in cams], depths)
        ncams = [PerspectiveCamera(fx=c.fx, fy=c.fy, cx=c.cx, cy=c.cy, width=c.width,
                                   height=c.height, pose=p)
                 for c, p in zip(cams, poses)]
        s2 = compute_scene_scale(ndepths, ncams)
        assert s2.s == pytest.approx(1.0, abs=1e-12)

    def test_bev_pixel_mapping_invariance(self, rng):
        s = SceneScale(float(rng.uniform(0.2, 8.0)))
        r = 2.0
        points = rng.normal(0, 10, (1000, 2))
        r_hat = normalize_scene(s, resolution=r)
        assert np.allclose(r_hat * (points / s.s), r * points, atol=1e-9)

    def test_projection_invariant_under_normalization(self, rng):
        gs = random_gaussians(rng, 20)
        s = SceneScale(3.7)
        r = 2.0
        cam = OrthoCamera(resolution=r, width=64, height=64)
        before = project_orthographic(gs, cam).mean2d
        # returns follow the signature order: resolution before gaussians
        r_hat, ngs = normalize_scene(s, gaussians=gs, resolution=r)
        ncam = OrthoCamera(resolution=r_hat, width=64, height=64)
        after = project_orthographic(ngs, ncam).mean2d
        assert np.allclose(before, after, atol=1e-9)


class TestCombinedRenders:
    def test_empty_sat_equals_ground_render(self, rng):
        ground = random_gaussians(rng, 8)
        cam = reference_camera()
        a = render_combined_exact(ground, GaussianSet.empty(), cam)
        b = render(ground, cam)
        assert np.array_equal(a.color, b.color)

    def test_empty_ground_equals_sat_render(self, rng):
        sat = random_gaussians(rng, 8)
        cam = reference_camera()
        a = render_combined_exact(GaussianSet.empty(), sat, cam)
        b = render(sat, cam)
        assert np.array_equal(a.color, b.color)

    def test_disjoint_footprints_alpha_is_pixelwise_max(self, rng):
        # two clusters far apart in image space: where one contributes the
        # other does not, so union alpha = max of the individual alphas
        ground = random_gaussians(rng, 5, center=(-1.5, 3.0, 0.0), spread=0.2)
        sat = random_gaussians(rng, 5, center=(1.5, 3.0, 0.0), spread=0.2)
        cam = reference_camera(32, 32, f=30.0)
        union = render_combined_exact(ground, sat, cam)
        a = render(ground, cam)
        b = render(sat, cam)
        assert np.allclose(union.alpha, np.maximum(a.alpha, b.alpha), atol=1e-9)

    def test_two_pass_empty_sat_equals_ground(self, rng):
        ground = random_gaussians(rng, 6)
        cam = reference_camera()
        bg = (0.1, 0.2, 0.3)
        a = render_combined_two_pass(ground, GaussianSet.empty(), cam, background=bg)
        b = render(ground, cam, background=bg)
        assert np.allclose(a.color, b.color, atol=1e-12)
        assert np.allclose(a.depth, b.depth, atol=1e-12)

    def test_two_pass_equals_exact_when_layered(self, rng):
        # every sat gaussian strictly farther than every ground gaussian
        ground = random_gaussians(rng, 6, center=(0.0, 2.0, 0.0), spread=0.3)
        sat = random_gaussians(rng, 6, center=(0.0, 8.0, 0.0), spread=0.3)
        cam = reference_camera()
        bg = (0.4, 0.1, 0.6)
        two = render_combined_two_pass(ground, sat, cam, background=bg)
        exact = render_combined_exact(ground, sat, cam, background=bg)
        assert np.max(np.abs(two.color - exact.color)) < 1e-6
        assert np.max(np.abs(two.alpha - exact.alpha)) < 1e-6

    def test_two_pass_differs_when_sat_occludes(self, rng):
        # a sat gaussian in front of a ground gaussian: the approximation
        # drops the occlusion, so the outputs must differ measurably
        sat = random_gaussians(rng, 1, center=(0.0, 1.5, 0.0), spread=0.0,
                               logit_range=(2.0, 2.0))
        ground = random_gaussians(rng, 1, center=(0.0, 4.0, 0.0), spread=0.0,
                                  logit_range=(2.0, 2.0))
        cam = reference_camera()
        two = render_combined_two_pass(ground, sat, cam)
        exact = render_combined_exact(ground, sat, cam)
        assert np.max(np.abs(two.color - exact.color)) > 1e-3

    def test_two_pass_alpha_bounded(self, rng):
        ground = random_gaussians(rng, 10)
        sat = random_gaussians(rng, 10)
        cam = reference_camera()
        out = render_combined_two_pass(ground, sat, cam)
        assert np.all(out.alpha <= 1.0 + 1e-12)

    def test_bev_combined_tall_gaussian_occludes_ground_plane(self):
        size, ppm = 16, 2.0
        hm = HeightMap(np.zeros((size, size)), resolution=ppm)
        red = np.zeros((size, size, 3)); red[:, :, 0] = 1.0
        sat = heightmap_to_gaussians(hm, red, SplatDefaults(opacity=0.99))
        # one tall green splat above the center
        green_sh = np.zeros((1, 3, 4))
        green_sh[0, :, 0] = ((np.array([0.0, 1.0, 0.0]) - 0.5) / 0.28209479177387814)
        tall = GaussianSet(means=[[0.0, 0.0, 5.0]], log_scales=np.log([[0.5, 0.5, 0.5]]),
                           rotations=[[1.0, 0, 0, 0]], opacity_logits=[6.0], sh=green_sh)
        cam = OrthoCamera(resolution=ppm, width=size, height=size)
        out = render_bev_combined(tall, sat, cam)
        center = out.color[size // 2, size // 2]
        assert center[1] > 0.9 and center[0] < 0.1

    def test_bev_requires_ortho_camera(self, rng):
        with pytest.raises(TypeError):
            render_bev_combined(GaussianSet.empty(), GaussianSet.empty(),
                                reference_camera())

    def test_bev_empty_is_background(self):
        cam = OrthoCamera(resolution=2.0, width=8, height=8)
        out = render_bev_combined(GaussianSet.empty(), GaussianSet.empty(), cam,
                                  background=(0.5, 0.5, 0.5))
        assert np.allclose(out.color, 0.5)
