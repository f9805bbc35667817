import numpy as np
import pytest

from railcount.geometry import CameraIntrinsics


@pytest.fixture
def cam() -> CameraIntrinsics:
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=960.0, cy=540.0,
                            image_width=1920.0, image_height=1080.0)


@pytest.fixture
def cam_origin() -> CameraIntrinsics:
    """Principal point at the corner: projection offsets read directly."""
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=0.0, cy=0.0,
                            image_width=1920.0, image_height=1080.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
