"""Ground-truth two-view oracle.

Generates scenes with a known relative pose, intrinsics, co-visible
regions, pixel noise and outliers, at two levels:

* match level (no pixels): 3-D points projected into both views, the
  regime every estimator and metric can be verified against;
* image level: procedurally textured planar pairs under a known
  homography, so the built-in matcher can run end to end.

A simulated matcher is included for benchmark runs on match-level scenes.
It mimics the behaviour the crop pipeline exploits: candidate detections
that land inside the co-visible region become true correspondences, the
rest become wrong matches, so restricting its view to a good crop raises
its precision.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import CropBox, ImageMeta
from .errors import InfeasibleSceneError
from .geometry import CameraIntrinsics, RelativePose
from .imageops import bilinear_sample

_MAX_REJECTION_TRIES = 100_000

SCENE_SUFFIX = ".scene.json"


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic epipolar scene."""

    n_inliers: int
    noise_sigma: float
    outlier_rate: float
    covis_box1: CropBox
    covis_box2: CropBox
    pose: RelativePose
    baseline: float
    intrinsics1: CameraIntrinsics
    intrinsics2: CameraIntrinsics
    width: int
    height: int
    depth_min: float
    depth_max: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ValueError(f"outlier_rate must be in [0, 1), got {self.outlier_rate}")
        if self.depth_min <= 0.0 or self.depth_max < self.depth_min:
            raise ValueError("depth range must satisfy 0 < min <= max")
        if self.n_inliers < 1:
            raise ValueError("need at least one inlier")


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """A generated scene: correspondences plus every ground-truth quantity."""

    pts1: np.ndarray
    pts2: np.ndarray
    inlier_mask: np.ndarray
    pose_gt: RelativePose
    k1: CameraIntrinsics
    k2: CameraIntrinsics
    spec: SceneSpec
    h_gt: np.ndarray | None = None

    @property
    def meta1(self) -> ImageMeta:
        return ImageMeta("synthetic/1", self.spec.width, self.spec.height)

    @property
    def meta2(self) -> ImageMeta:
        return ImageMeta("synthetic/2", self.spec.width, self.spec.height)

    def fundamental_gt(self) -> np.ndarray:
        """F = K2^-T [t]x R K1^-1 for the generating cameras."""
        t = self.pose_gt.translation * self.spec.baseline
        e = _cross_matrix(t) @ self.pose_gt.rotation
        f = np.linalg.inv(self.k2.matrix()).T @ e @ np.linalg.inv(self.k1.matrix())
        return f / np.linalg.norm(f)


def _cross_matrix(t: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]]
    )


def _project(k: np.ndarray, r: np.ndarray, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    cam = x @ r.T + t
    pix = cam @ k.T
    return pix[:, :2] / pix[:, 2:3], cam[:, 2]


def generate_epipolar_scene(spec: SceneSpec) -> SyntheticScene:
    """Sample a scene with exactly spec.n_inliers true matches.

    3-D points are drawn by backprojecting uniform pixels from the image-1
    co-visible box at uniform depth and rejecting those whose image-2
    projection misses the image-2 co-visible box. Gaussian pixel noise is
    added to the image-2 projections. Outliers (count chosen so they make
    up ``outlier_rate`` of the final set) are uniform over the full frame
    of each image independently.
    """
    rng = np.random.default_rng(spec.seed)
    k1 = spec.intrinsics1.matrix()
    k2 = spec.intrinsics2.matrix()
    k1_inv = np.linalg.inv(k1)
    r = spec.pose.rotation
    t = spec.pose.translation * spec.baseline

    b1, b2 = spec.covis_box1, spec.covis_box2
    pts1 = np.empty((spec.n_inliers, 2))
    pts2 = np.empty((spec.n_inliers, 2))
    found = 0
    tries = 0
    while found < spec.n_inliers:
        if tries >= _MAX_REJECTION_TRIES:
            raise InfeasibleSceneError(
                f"co-visibility constraints unsatisfiable after {tries} samples"
            )
        batch = min(4 * (spec.n_inliers - found) + 16, 8192)
        tries += batch
        u = rng.uniform([b1.x_min, b1.y_min], [b1.x_max, b1.y_max], size=(batch, 2))
        depth = rng.uniform(spec.depth_min, spec.depth_max, size=batch)
        rays = np.hstack([u, np.ones((batch, 1))]) @ k1_inv.T
        x3d = rays * depth[:, None]
        proj, z2 = _project(k2, r, t, x3d)
        ok = (
            (z2 > 0.0)
            & (proj[:, 0] >= b2.x_min)
            & (proj[:, 0] <= b2.x_max)
            & (proj[:, 1] >= b2.y_min)
            & (proj[:, 1] <= b2.y_max)
        )
        take = min(int(ok.sum()), spec.n_inliers - found)
        pts1[found : found + take] = u[ok][:take]
        pts2[found : found + take] = proj[ok][:take]
        found += take

    if spec.noise_sigma > 0.0:
        # Radially truncated at 3 sigma: every inlier is guaranteed within
        # 3*noise_sigma of its epipolar constraint, so tests can assert a
        # hard residual bound.
        noise = rng.normal(0.0, spec.noise_sigma, size=pts2.shape)
        norms = np.linalg.norm(noise, axis=1, keepdims=True)
        cap = 3.0 * spec.noise_sigma
        noise *= np.minimum(1.0, cap / np.maximum(norms, 1e-12))
        pts2 = pts2 + noise

    n_out = int(math.ceil(spec.outlier_rate * spec.n_inliers / (1.0 - spec.outlier_rate)))
    w, h = float(spec.width), float(spec.height)
    out1 = rng.uniform([0.0, 0.0], [w, h], size=(n_out, 2))
    out2 = rng.uniform([0.0, 0.0], [w, h], size=(n_out, 2))

    all1 = np.vstack([pts1, out1])
    all2 = np.vstack([pts2, out2])
    mask = np.zeros(len(all1), dtype=bool)
    mask[: spec.n_inliers] = True
    return SyntheticScene(
        pts1=all1,
        pts2=all2,
        inlier_mask=mask,
        pose_gt=spec.pose,
        k1=spec.intrinsics1,
        k2=spec.intrinsics2,
        spec=spec,
    )


def planar_matches(
    h: np.ndarray, n: int, width: int, height: int, seed: int = 0, margin: float = 10.0
) -> tuple[np.ndarray, np.ndarray]:
    """Correspondences generated by a homography, for degeneracy tests."""
    rng = np.random.default_rng(seed)
    pts1 = rng.uniform([margin, margin], [width - margin, height - margin], size=(n, 2))
    hom = np.hstack([pts1, np.ones((n, 1))]) @ np.asarray(h, dtype=np.float64).T
    pts2 = hom[:, :2] / hom[:, 2:3]
    return pts1, pts2


# ---------------------------------------------------------------------------
# Image-level rendering
# ---------------------------------------------------------------------------


def procedural_texture(seed: int, width: int, height: int) -> np.ndarray:
    """Multi-scale noise texture in [0, 1]; deterministic under seed.

    Smooth value-noise octaves plus two quantized octaves whose blob
    boundaries provide the step edges and corners classical detectors
    need.
    """
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width))
    for cell, weight, quantize in (
        (64, 0.30, False),
        (32, 0.20, False),
        (24, 0.35, True),
        (11, 0.25, True),
        (8, 0.10, False),
    ):
        gw = width // cell + 2
        gh = height // cell + 2
        grid = rng.random((gh, gw))
        xs = np.arange(width) / cell
        ys = np.arange(height) / cell
        gx, gy = np.meshgrid(xs, ys)
        layer = bilinear_sample(grid, gx, gy)
        if quantize:
            layer = np.floor(layer * 3.0) / 2.0
        img += layer * weight
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return img


def render_planar_pair(
    texture_seed: int, h: np.ndarray, size: int | tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Render (image1, warped image2) under homography h.

    image2(x2) samples image1 at H^-1 x2, so content at x1 in image 1
    appears at H x1 in image 2. Out-of-frame pixels are mid-gray.
    """
    h = np.asarray(h, dtype=np.float64).reshape(3, 3)
    if abs(np.linalg.det(h)) < 1e-12:
        raise ValueError("homography must be nonsingular")
    if isinstance(size, int):
        width = height = size
    else:
        width, height = size
    img1 = procedural_texture(texture_seed, width, height)

    h_inv = np.linalg.inv(h)
    gx, gy = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    ones = np.ones_like(gx)
    src = np.stack([gx, gy, ones], axis=-1) @ h_inv.T
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[..., 0] / src[..., 2]
        sy = src[..., 1] / src[..., 2]
    inside = (
        np.isfinite(sx)
        & np.isfinite(sy)
        & (sx >= 0.0)
        & (sx <= width - 1.0)
        & (sy >= 0.0)
        & (sy <= height - 1.0)
    )
    img2 = np.full((height, width), 0.5)
    img2[inside] = bilinear_sample(img1, sx[inside], sy[inside])
    return img1, img2


# ---------------------------------------------------------------------------
# Simulated matcher + scene (de)serialization
# ---------------------------------------------------------------------------


def _stable_seed(*parts) -> int:
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class SimulatedMatcherParams:
    """Behaviour of the simulated matcher on a scene.

    ``n_candidates`` detections are attempted per call; each candidate is
    drawn inside the co-visible region with probability ``covis_bias`` and
    uniformly over the working crop otherwise. Candidates landing in the
    co-visible region produce geometrically true matches (working-frame
    noise ``noise_sigma``) with probability ``covis_precision`` and wrong
    matches otherwise; candidates outside the co-visible region always
    pair with a random point. This mirrors real matchers, which both
    mismatch occasionally inside the co-visible area and fabricate
    correspondences outside it.
    """

    n_candidates: int = 200
    covis_bias: float = 0.0
    noise_sigma: float = 0.5
    covis_precision: float = 1.0


def simulate_matches(
    scene: SyntheticScene,
    crop1: CropBox,
    crop2: CropBox,
    resolution: int,
    params: SimulatedMatcherParams,
    salt: str = "",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic matcher surrogate operating on the scene ground truth.

    Returns (pts1, pts2, confidence) in the ORIGINAL frame. The working
    frame only influences the noise level: working-frame noise divided by
    the crop resize scale, so tighter crops at the same resolution give
    more precise correspondences.
    """
    spec = scene.spec
    rng = np.random.default_rng(
        _stable_seed(
            spec.seed,
            salt,
            round(crop1.x_min, 3),
            round(crop1.y_min, 3),
            round(crop1.x_max, 3),
            round(crop1.y_max, 3),
            resolution,
        )
    )
    k1 = scene.k1.matrix()
    k2 = scene.k2.matrix()
    k1_inv = np.linalg.inv(k1)
    r = scene.pose_gt.rotation
    t = scene.pose_gt.translation * spec.baseline

    covis1 = spec.covis_box1
    inter = None
    if _overlaps(crop1, covis1):
        inter = CropBox(
            max(crop1.x_min, covis1.x_min),
            max(crop1.y_min, covis1.y_min),
            min(crop1.x_max, covis1.x_max),
            min(crop1.y_max, covis1.y_max),
        )

    scale1 = resolution / max(crop1.width, crop1.height)
    sigma_orig = params.noise_sigma / scale1

    n = params.n_candidates
    use_covis = (rng.random(n) < params.covis_bias) & (inter is not None)
    cand = rng.uniform(
        [crop1.x_min, crop1.y_min], [crop1.x_max, crop1.y_max], size=(n, 2)
    )
    if inter is not None and use_covis.any():
        cand[use_covis] = rng.uniform(
            [inter.x_min, inter.y_min], [inter.x_max, inter.y_max], size=(int(use_covis.sum()), 2)
        )

    depth = rng.uniform(spec.depth_min, spec.depth_max, size=n)
    rays = np.hstack([cand, np.ones((n, 1))]) @ k1_inv.T
    proj, z2 = _project(k2, r, t, rays * depth[:, None])

    in_covis1 = (
        (cand[:, 0] >= covis1.x_min)
        & (cand[:, 0] <= covis1.x_max)
        & (cand[:, 1] >= covis1.y_min)
        & (cand[:, 1] <= covis1.y_max)
    )
    lands_in_crop2 = (
        (z2 > 0.0)
        & (proj[:, 0] >= crop2.x_min)
        & (proj[:, 0] <= crop2.x_max)
        & (proj[:, 1] >= crop2.y_min)
        & (proj[:, 1] <= crop2.y_max)
    )
    precise = rng.random(n) < params.covis_precision
    true_match = in_covis1 & lands_in_crop2 & precise

    pts2 = rng.uniform([crop2.x_min, crop2.y_min], [crop2.x_max, crop2.y_max], size=(n, 2))
    noise = rng.normal(0.0, sigma_orig, size=(n, 2))
    pts2[true_match] = proj[true_match] + noise[true_match]
    conf = np.where(true_match, 0.9, 0.4)

    w, h = float(spec.width), float(spec.height)
    keep = (
        (pts2[:, 0] >= 0.0) & (pts2[:, 0] <= w) & (pts2[:, 1] >= 0.0) & (pts2[:, 1] <= h)
    )
    return cand[keep], pts2[keep], conf[keep]


def _overlaps(a: CropBox, b: CropBox) -> bool:
    return a.x_min < b.x_max and b.x_min < a.x_max and a.y_min < b.y_max and b.y_min < a.y_max


def scene_to_dict(spec: SceneSpec) -> dict:
    return {
        "n_inliers": spec.n_inliers,
        "noise_sigma": spec.noise_sigma,
        "outlier_rate": spec.outlier_rate,
        "covis_box1": [spec.covis_box1.x_min, spec.covis_box1.y_min, spec.covis_box1.x_max, spec.covis_box1.y_max],
        "covis_box2": [spec.covis_box2.x_min, spec.covis_box2.y_min, spec.covis_box2.x_max, spec.covis_box2.y_max],
        "rotation": spec.pose.rotation.ravel().tolist(),
        "translation": spec.pose.translation.tolist(),
        "baseline": spec.baseline,
        "k1": spec.intrinsics1.matrix().ravel().tolist(),
        "k2": spec.intrinsics2.matrix().ravel().tolist(),
        "width": spec.width,
        "height": spec.height,
        "depth_min": spec.depth_min,
        "depth_max": spec.depth_max,
        "seed": spec.seed,
    }


def scene_from_dict(d: dict) -> SceneSpec:
    return SceneSpec(
        n_inliers=int(d["n_inliers"]),
        noise_sigma=float(d["noise_sigma"]),
        outlier_rate=float(d["outlier_rate"]),
        covis_box1=CropBox(*map(float, d["covis_box1"])),
        covis_box2=CropBox(*map(float, d["covis_box2"])),
        pose=RelativePose(
            np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
            np.array(d["translation"], dtype=np.float64),
        ),
        baseline=float(d["baseline"]),
        intrinsics1=CameraIntrinsics.from_matrix(np.array(d["k1"]).reshape(3, 3)),
        intrinsics2=CameraIntrinsics.from_matrix(np.array(d["k2"]).reshape(3, 3)),
        width=int(d["width"]),
        height=int(d["height"]),
        depth_min=float(d["depth_min"]),
        depth_max=float(d["depth_max"]),
        seed=int(d["seed"]),
    )


def save_scene(spec: SceneSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(spec), indent=1))


def load_scene(path: str | Path) -> SceneSpec:
    return scene_from_dict(json.loads(Path(path).read_text()))


def scene_with_seed(spec: SceneSpec, seed: int) -> SceneSpec:
    return replace(spec, seed=seed)


def random_scene_spec(
    rng: np.random.Generator,
    width: int = 1280,
    height: int = 960,
    n_inliers: int = 120,
    noise_sigma: float = 0.5,
    outlier_rate: float = 0.0,
    covis_frac: float = 0.4,
    depth_min: float = 6.0,
    depth_max: float = 14.0,
) -> SceneSpec:
    """A randomized desk-scale scene: mild yaw/pitch, sideways-dominant
    translation, and a vertical co-visible band covering ``covis_frac`` of
    the image-1 frame at a random horizontal position."""
    f = 0.9 * max(width, height)
    k = CameraIntrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0)
    yaw = math.radians(rng.uniform(2.0, 6.0)) * (1.0 if rng.random() < 0.5 else -1.0)
    pitch = math.radians(rng.uniform(-1.0, 1.0))
    cy_, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    r_yaw = np.array([[cy_, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy_]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    t_dir = np.array(
        [1.0 if rng.random() < 0.5 else -1.0, rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)]
    )
    x_lo = rng.uniform(0.05, 0.95 - covis_frac) * width
    return SceneSpec(
        n_inliers=n_inliers,
        noise_sigma=noise_sigma,
        outlier_rate=outlier_rate,
        covis_box1=CropBox(x_lo, 0.0, x_lo + covis_frac * width, float(height)),
        covis_box2=CropBox(0.0, 0.0, float(width), float(height)),
        pose=RelativePose(r_yaw @ r_pitch, t_dir),
        baseline=float(rng.uniform(0.5, 1.0)),
        intrinsics1=k,
        intrinsics2=k,
        width=width,
        height=height,
        depth_min=depth_min,
        depth_max=depth_max,
        seed=int(rng.integers(0, 2**31 - 1)),
    )
