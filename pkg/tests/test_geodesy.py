import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geosplat.geodesy import (EARTH_RADIUS_M, MERCATOR_MAX_LAT, R_REF, GeoPose,
                              LocalFrame, camera_pose, geo_to_local,
                              latlon_to_mercator, local_to_geo, mercator_to_latlon)
from geosplat.geometry import Pose

M_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0


class TestGeoPose:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            GeoPose(float("nan"), 0.0)

    def test_rejects_out_of_range_latitude(self):
        with pytest.raises(ValueError):
            GeoPose(91.0, 0.0)

    def test_wraps_longitude_and_heading(self):
        p = GeoPose(10.0, 190.0, 370.0)
        assert p.longitude == -170.0
        assert p.heading == 10.0

    def test_json_round_trip(self):
        p = GeoPose(60.17, 24.94, 123.0)
        q = GeoPose.from_json(p.to_json())
        assert (q.latitude, q.longitude, q.heading) == (p.latitude, p.longitude, p.heading)


class TestMercator:
    def test_origin(self):
        assert latlon_to_mercator(GeoPose(0.0, 0.0)) == (0.0, 0.0)

    def test_antimeridian(self):
        x, y = latlon_to_mercator(GeoPose(0.0, -180.0))
        # closed form: x = pi * R at 180 degrees
        assert x == pytest.approx(-math.pi * EARTH_RADIUS_M, abs=0.01)
        assert y == pytest.approx(0.0, abs=1e-9)

    def test_out_of_band_latitude_raises(self):
        with pytest.raises(ValueError):
            latlon_to_mercator(GeoPose(86.0, 0.0))

    def test_round_trip_grid(self):
        lats = np.linspace(-MERCATOR_MAX_LAT, MERCATOR_MAX_LAT, 40)
        lons = np.linspace(-179.999, 179.999, 25)
        for lat in lats:
            for lon in lons:
                p = GeoPose(lat, lon)
                q = mercator_to_latlon(*latlon_to_mercator(p))
                assert abs(q.latitude - lat) < 1e-9
                assert abs(q.longitude - lon) < 1e-9

    @settings(max_examples=100, deadline=None)
    @given(lat=st.floats(-85.0, 85.0), lon=st.floats(-179.99, 179.99))
    def test_round_trip_property(self, lat, lon):
        q = mercator_to_latlon(*latlon_to_mercator(GeoPose(lat, lon)))
        assert abs(q.latitude - lat) < 1e-9
        assert abs(q.longitude - lon) < 1e-9


class TestGeoToLocal:
    def test_identity(self):
        p = GeoPose(60.0, 24.0, 45.0)
        assert geo_to_local(p, p) == (0.0, 0.0, 0.0)

    def test_small_eastward_offset_at_equator(self):
        origin = GeoPose(0.0, 0.0, 0.0)
        other = GeoPose(0.0, 0.001, 0.0)
        east, north, rel = geo_to_local(origin, other)
        # oracle: pi * R / 180 meters per degree of longitude at the equator
        assert east == pytest.approx(0.001 * M_PER_DEG, rel=1e-9)
        assert north == pytest.approx(0.0, abs=1e-9)
        assert rel == 0.0

    def test_heading_rotates_frame(self):
        origin0 = GeoPose(10.0, 20.0, 0.0)
        origin90 = GeoPose(10.0, 20.0, 90.0)
        other = GeoPose(10.001, 20.002, 0.0)
        e0, n0, _ = geo_to_local(origin0, other)
        e90, n90, _ = geo_to_local(origin90, other)
        # rotating the observer's heading by +90 rotates the offsets by -90
        # in the (east, north) plane: (e, n) -> (-n, e)
        assert e90 == pytest.approx(-n0, rel=1e-9)
        assert n90 == pytest.approx(e0, rel=1e-9)

    def test_rel_heading_wraps(self):
        a = GeoPose(0, 0, 350.0)
        b = GeoPose(0, 0, 10.0)
        assert geo_to_local(a, b)[2] == pytest.approx(20.0)

    def test_separation_limit(self):
        with pytest.raises(ValueError):
            geo_to_local(GeoPose(0, 0), GeoPose(1.0, 0))

    def test_translation_antisymmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            lat = rng.uniform(-70, 70)
            a = GeoPose(lat, rng.uniform(-170, 170), rng.uniform(0, 360))
            b = local_to_geo(a, rng.uniform(-700, 700), rng.uniform(-700, 700),
                             heading=rng.uniform(0, 360))
            ea, na, rel_ab = geo_to_local(a, b)
            eb, nb, _ = geo_to_local(b, a)
            h = math.radians(rel_ab)
            # t_ab = -R(-delta_heading) t_ba with R the frame rotation
            expected_e = -(math.cos(h) * eb + math.sin(h) * nb)
            expected_n = -(-math.sin(h) * eb + math.cos(h) * nb)
            assert ea == pytest.approx(expected_e, abs=1e-6)
            assert na == pytest.approx(expected_n, abs=1e-6)

    def test_local_to_geo_inverts(self):
        origin = GeoPose(47.3, 8.5, 213.0)
        east, north = 312.5, -88.25
        p = local_to_geo(origin, east, north)
        e2, n2, _ = geo_to_local(origin, p)
        assert e2 == pytest.approx(east, abs=1e-9)
        assert n2 == pytest.approx(north, abs=1e-9)


class TestCameraPose:
    def test_reference_camera_identity_in_reference_frame(self):
        pose = camera_pose(0.0, 0.0, 0.0, frame="reference")
        assert pose.is_close(Pose.identity())

    def test_reference_camera_world_rotation(self):
        pose = camera_pose(0.0, 0.0, 0.0)
        assert np.allclose(pose.rotation, R_REF)
        assert np.allclose(pose.translation, 0.0)

    def test_forward_displacement_appears_along_z(self):
        # camera 10 m ahead of the reference, same heading, 1.5 m lower
        pose = camera_pose(east=0.0, north=10.0, rel_heading=0.0, altitude=-1.5,
                           frame="reference")
        assert np.allclose(pose.rotation, np.eye(3), atol=1e-12)
        assert pose.translation == pytest.approx([0.0, 1.5, 10.0])

    def test_opposite_heading_antiparallel_forward(self):
        a = camera_pose(0, 0, 0.0)
        b = camera_pose(0, 0, 180.0)
        za = a.rotation @ np.array([0, 0, 1.0])
        zb = b.rotation @ np.array([0, 0, 1.0])
        assert np.allclose(za, -zb, atol=1e-12)

    def test_world_and_reference_frames_consistent(self):
        world = camera_pose(3.0, -2.0, 57.0, altitude=0.4)
        rel = camera_pose(3.0, -2.0, 57.0, altitude=0.4, frame="reference")
        recomposed = Pose(R_REF, np.zeros(3)).compose(rel)
        assert recomposed.is_close(world, atol=1e-12)

    def test_shared_point_round_trip_projection(self):
        # built by hand from the axis convention: with heading 90 the camera
        # looks along +x, so a world point 5 m east of it sits on its axis
        pose = camera_pose(east=0.0, north=0.0, rel_heading=90.0)
        p_world = np.array([5.0, 0.0, 0.0])
        p_cam = pose.inverse().apply(p_world)
        assert p_cam == pytest.approx([0.0, 0.0, 5.0])

    def test_axis_convention_forward_maps_to_image_up(self):
        # reference camera-frame (0,0,1) in world coordinates, through the
        # BEV pixel mapping, must move toward decreasing v
        from geosplat.cameras import OrthoCamera
        from geosplat.gaussians import GaussianSet
        from geosplat.rendering import project_orthographic

        forward_world = R_REF @ np.array([0.0, 0.0, 1.0])
        assert np.allclose(forward_world, [0.0, 1.0, 0.0])
        gs = GaussianSet(means=forward_world[None, :], log_scales=np.zeros((1, 3)),
                         rotations=[[1.0, 0, 0, 0]], opacity_logits=[0.0],
                         sh=np.zeros((1, 3, 4)))
        cam = OrthoCamera(resolution=2.0, width=64, height=64)
        splat = project_orthographic(gs, cam)
        assert splat.mean2d[0] == pytest.approx([32.0, 32.0 - 2.0])


def test_local_frame_requires_positive_camera_height():
    with pytest.raises(ValueError):
        LocalFrame(GeoPose(0, 0), camera_height=0.0)
    frame = LocalFrame(GeoPose(1, 2, 3))
    assert frame.camera_height == 2.0
    assert frame.zero_altitude == 0.0
