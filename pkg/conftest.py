"""
Shared pytest fixtures: cameras, random scenes and single surfels.
"""
import numpy as np
import pytest

from model.camera import CameraIntrinsics, CameraPose
from model.gaussian import Gaussian4D, GaussianScene, random_scene


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_camera():
    """32x32 camera at the origin looking down +z."""
    return CameraIntrinsics.centered(32, 32, focal=32.0), CameraPose()


@pytest.fixture
def camera64():
    """64x64 camera at the origin looking down +z."""
    return CameraIntrinsics.centered(64, 64, focal=64.0), CameraPose()


@pytest.fixture
def random_static_scene(rng):
    return random_scene(24, rng, dynamic=False)


@pytest.fixture
def random_dynamic_scene(rng):
    return random_scene(24, rng, dynamic=True)


@pytest.fixture
def facing_surfel():
    """One camera-facing surfel 2 units ahead of the origin."""
    g = Gaussian4D(
        position=[0.0, 0.0, 2.0],
        scale=[0.4, 0.4],
        opacity=0.8,
        color=[0.9, 0.2, 0.1],
    )
    return GaussianScene.from_gaussians([g])
