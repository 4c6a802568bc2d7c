import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from geosplat.cameras import OrthoCamera, PerspectiveCamera
from geosplat.gaussians import GaussianSet
from geosplat.geodesy import R_REF
from geosplat.geometry import Pose, quat_normalize


def random_gaussians(rng, n, center=(0.0, 3.0, 0.0), spread=0.8,
                     scale_range=(0.08, 0.4), logit_range=(-1.0, 2.5)) -> GaussianSet:
    """Well-conditioned random scene in front of the reference camera."""
    return GaussianSet(
        means=np.asarray(center) + rng.normal(0, spread, (n, 3)),
        log_scales=np.log(rng.uniform(*scale_range, (n, 3))),
        rotations=quat_normalize(rng.normal(0, 1, (n, 4))),
        opacity_logits=rng.uniform(*logit_range, n),
        sh=rng.normal(0, 0.3, (n, 3, 4)),
    )


def reference_camera(width=32, height=32, f=40.0) -> PerspectiveCamera:
    return PerspectiveCamera(fx=f, fy=f, cx=width / 2, cy=height / 2,
                             width=width, height=height, pose=Pose(R_REF, np.zeros(3)))


def random_perspective_camera(rng, width=32, height=32) -> PerspectiveCamera:
    from geosplat.geodesy import camera_pose
    pose = camera_pose(east=rng.uniform(-0.5, 0.5), north=rng.uniform(-1.5, 0.0),
                       rel_heading=rng.uniform(-25, 25), altitude=rng.uniform(-0.3, 0.3))
    f = rng.uniform(25, 60)
    return PerspectiveCamera(fx=f, fy=f * rng.uniform(0.9, 1.1),
                             cx=width / 2 + rng.uniform(-2, 2),
                             cy=height / 2 + rng.uniform(-2, 2),
                             width=width, height=height, pose=pose)


def random_ortho_camera(rng, width=32, height=32) -> OrthoCamera:
    return OrthoCamera(resolution=rng.uniform(2.0, 6.0), width=width, height=height)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
