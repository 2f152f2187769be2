import numpy as np
import pytest

from scalepose.geometry import CameraIntrinsics, RigidPose, project, random_rotation

CAMERA = CameraIntrinsics(fx=577.5, fy=577.5, cx=319.5, cy=239.5)


def make_projected_scene(n_points, seed, depth_range=(0.8, 2.0), spread=0.12):
    """Random pose + model points + exact projections, camera at origin."""
    rng = np.random.default_rng(seed)
    rotation = random_rotation(rng)
    translation = np.array(
        [rng.uniform(-0.25, 0.25), rng.uniform(-0.18, 0.18), rng.uniform(*depth_range)]
    )
    points = rng.uniform(-spread, spread, size=(n_points, 3))
    pose = RigidPose(rotation, translation)
    pixels = project(pose.transform(points), CAMERA)
    return pose, points, pixels


@pytest.fixture
def camera():
    return CAMERA
