import math

import numpy as np
import pytest

from covis import CameraIntrinsics, CropBox, RelativePose, SceneSpec


def rot_x(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def make_scene_spec(
    seed: int = 0,
    n_inliers: int = 100,
    noise_sigma: float = 0.5,
    outlier_rate: float = 0.3,
    covis_box1: CropBox | None = None,
    covis_box2: CropBox | None = None,
    yaw_deg: float = 6.0,
    width: int = 1280,
    height: int = 960,
) -> SceneSpec:
    k = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=width / 2.0, cy=height / 2.0)
    pose = RelativePose(rot_y(yaw_deg), np.array([1.0, 0.15, 0.1]))
    return SceneSpec(
        n_inliers=n_inliers,
        noise_sigma=noise_sigma,
        outlier_rate=outlier_rate,
        covis_box1=covis_box1 or CropBox(100.0, 100.0, width - 100.0, height - 100.0),
        covis_box2=covis_box2 or CropBox(0.0, 0.0, float(width), float(height)),
        pose=pose,
        baseline=1.0,
        intrinsics1=k,
        intrinsics2=k,
        width=width,
        height=height,
        depth_min=4.0,
        depth_max=12.0,
        seed=seed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
