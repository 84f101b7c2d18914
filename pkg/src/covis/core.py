"""Shared data model and coordinate transforms.

Everything downstream (clustering, crop proposal, estimation, metrics)
works on the types defined here. Correspondences are always stored in the
ORIGINAL image frame; the transforms in this module move keypoints between
the original frame and the resized-crop frames that matchers operate in.

Coordinate convention: corner-anchored. The keypoint (x, y) addresses the
image like an array lookup at column x, row y; resizing an image by a
factor s moves content at (x, y) to exactly (s*x, s*y). Valid coordinates
for an image of width w and height h span the continuous box
[0, w] x [0, h].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Stage(Enum):
    """Which pass of the two-stage pipeline produced a correspondence."""

    ONE = 1
    TWO = 2


@dataclass(frozen=True)
class Point2:
    """A pixel location; sub-pixel values are expected."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class ImageMeta:
    """Identity and pixel dimensions of one input image."""

    id: str
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class Correspondence:
    """One matched point pair, in the original frames of both images."""

    p1: Point2
    p2: Point2
    confidence: float
    source: str
    stage: Stage

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class CropBox:
    """Axis-aligned region of one image, in original-frame pixels."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate crop box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, p: Point2, tol: float = 0.0) -> bool:
        return (
            self.x_min - tol <= p.x <= self.x_max + tol
            and self.y_min - tol <= p.y <= self.y_max + tol
        )

    def clamped(self, meta: ImageMeta) -> "CropBox":
        """Intersect with the image bounds."""
        return CropBox(
            max(0.0, self.x_min),
            max(0.0, self.y_min),
            min(float(meta.width), self.x_max),
            min(float(meta.height), self.y_max),
        )

    @classmethod
    def full_image(cls, meta: ImageMeta) -> "CropBox":
        return cls(0.0, 0.0, float(meta.width), float(meta.height))


@dataclass(frozen=True)
class MatchSet:
    """Ordered correspondences between a fixed image pair.

    Construction validates every item against the image bounds; use
    :func:`build_match_set` to tolerate (and drop) small out-of-bounds
    overshoot from interpolation at crop borders.
    """

    items: tuple[Correspondence, ...]
    image1: ImageMeta
    image2: ImageMeta

    def __post_init__(self):
        w1, h1 = float(self.image1.width), float(self.image1.height)
        w2, h2 = float(self.image2.width), float(self.image2.height)
        for c in self.items:
            if not (0.0 <= c.p1.x <= w1 and 0.0 <= c.p1.y <= h1):
                raise ValueError(f"p1 {c.p1} outside image1 bounds {w1}x{h1}")
            if not (0.0 <= c.p2.x <= w2 and 0.0 <= c.p2.y <= h2):
                raise ValueError(f"p2 {c.p2} outside image2 bounds {w2}x{h2}")

    def __len__(self) -> int:
        return len(self.items)

    def points1(self) -> np.ndarray:
        """(N, 2) array of image-1 coordinates."""
        if not self.items:
            return np.empty((0, 2), dtype=np.float64)
        return np.array([[c.p1.x, c.p1.y] for c in self.items], dtype=np.float64)

    def points2(self) -> np.ndarray:
        """(N, 2) array of image-2 coordinates."""
        if not self.items:
            return np.empty((0, 2), dtype=np.float64)
        return np.array([[c.p2.x, c.p2.y] for c in self.items], dtype=np.float64)

    def confidences(self) -> np.ndarray:
        return np.array([c.confidence for c in self.items], dtype=np.float64)

    def stages(self) -> np.ndarray:
        return np.array([c.stage.value for c in self.items], dtype=np.int64)

    def concat(self, other: "MatchSet") -> "MatchSet":
        if other.image1 != self.image1 or other.image2 != self.image2:
            raise ValueError("cannot concatenate match sets over different image pairs")
        return MatchSet(self.items + other.items, self.image1, self.image2)

    @classmethod
    def empty(cls, image1: ImageMeta, image2: ImageMeta) -> "MatchSet":
        return cls((), image1, image2)


# Clamp tolerance for points mapped just outside the image: interpolation at
# crop borders legitimately overshoots by a fraction of a pixel. Anything
# farther out is not clamped and gets rejected by build_match_set.
BORDER_CLAMP_TOL = 0.5


def _clamp_coord(v: float, hi: float, tol: float) -> float:
    if -tol <= v < 0.0:
        return 0.0
    if hi < v <= hi + tol:
        return hi
    return v


def resize_scale(meta: ImageMeta, longest_dim: int) -> float:
    """Scale factor that brings the longest image side to ``longest_dim``."""
    if longest_dim < 1:
        raise ValueError(f"longest_dim must be >= 1, got {longest_dim}")
    return float(longest_dim) / float(max(meta.width, meta.height))


def resized_dims(width: int, height: int, longest_dim: int) -> tuple[int, int]:
    """Integer dimensions after resizing so the longest side equals ``longest_dim``.

    The shorter side is rounded half-up to the nearest integer (minimum 1).
    Keypoint mapping always uses the exact float scale, never these rounded
    side lengths.
    """
    if longest_dim < 1:
        raise ValueError(f"longest_dim must be >= 1, got {longest_dim}")
    scale = float(longest_dim) / float(max(width, height))
    if width >= height:
        return longest_dim, max(1, int(math.floor(height * scale + 0.5)))
    return max(1, int(math.floor(width * scale + 0.5))), longest_dim


def map_stage2_to_original(
    p: Point2,
    crop: CropBox,
    scale: float,
    meta: ImageMeta | None = None,
) -> Point2:
    """Map a keypoint from a resized-crop frame back to the original frame.

    ``scale`` is the resize factor applied to the crop before matching.
    With ``meta`` given, results within BORDER_CLAMP_TOL of the image
    border are snapped onto it; farther outliers are returned as-is for the
    match-set validator to reject.
    """
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    x = crop.x_min + p.x / scale
    y = crop.y_min + p.y / scale
    if meta is not None:
        x = _clamp_coord(x, float(meta.width), BORDER_CLAMP_TOL)
        y = _clamp_coord(y, float(meta.height), BORDER_CLAMP_TOL)
    return Point2(x, y)


def map_original_to_stage2(p: Point2, crop: CropBox, scale: float) -> Point2:
    """Inverse of :func:`map_stage2_to_original` (no clamping)."""
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    return Point2((p.x - crop.x_min) * scale, (p.y - crop.y_min) * scale)


def map_points_to_original(
    pts: np.ndarray,
    crop_origin: tuple[float, float],
    scale: float,
    meta: ImageMeta,
) -> np.ndarray:
    """Vectorized crop-frame -> original-frame mapping with border clamping.

    ``pts`` is (N, 2) in the resized-crop frame. Points beyond the clamp
    tolerance stay out of bounds (callers filter them out).
    """
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    out = np.asarray(pts, dtype=np.float64) / scale
    out = out + np.array(crop_origin, dtype=np.float64)
    for axis, hi in ((0, float(meta.width)), (1, float(meta.height))):
        v = out[:, axis]
        v[(v >= -BORDER_CLAMP_TOL) & (v < 0.0)] = 0.0
        v[(v > hi) & (v <= hi + BORDER_CLAMP_TOL)] = hi
    return out


def build_match_set(
    pts1: np.ndarray,
    pts2: np.ndarray,
    confidences: np.ndarray,
    image1: ImageMeta,
    image2: ImageMeta,
    source: str,
    stage: Stage,
) -> MatchSet:
    """Assemble a MatchSet from original-frame arrays, dropping invalid rows.

    Rows with a point outside the image bounds (after the mapping step's
    clamping) or a non-finite value are discarded; confidences are clipped
    into [0, 1].
    """
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    conf = np.clip(np.asarray(confidences, dtype=np.float64).reshape(-1), 0.0, 1.0)
    if not (len(pts1) == len(pts2) == len(conf)):
        raise ValueError("pts1, pts2 and confidences must have equal lengths")
    ok = (
        np.isfinite(pts1).all(axis=1)
        & np.isfinite(pts2).all(axis=1)
        & (pts1[:, 0] >= 0.0)
        & (pts1[:, 0] <= image1.width)
        & (pts1[:, 1] >= 0.0)
        & (pts1[:, 1] <= image1.height)
        & (pts2[:, 0] >= 0.0)
        & (pts2[:, 0] <= image2.width)
        & (pts2[:, 1] >= 0.0)
        & (pts2[:, 1] <= image2.height)
    )
    items = tuple(
        Correspondence(
            Point2(float(x1), float(y1)),
            Point2(float(x2), float(y2)),
            float(c),
            source,
            stage,
        )
        for (x1, y1), (x2, y2), c in zip(pts1[ok], pts2[ok], conf[ok])
    )
    return MatchSet(items, image1, image2)
