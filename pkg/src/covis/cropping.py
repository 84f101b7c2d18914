"""Co-visible region proposal from stage-one matches.

Per image: cluster the keypoints with DBSCAN, keep the largest cluster and
every further cluster whose size is at least a fraction t of it, take the
axis-aligned bounding box of the kept points, then widen it horizontally/
vertically to win back co-visible margin that keypoint clusters tend to
undershoot. Degenerate inputs (all points noise, or a single point)
fall back to the full-image box so the pipeline degrades to single-stage
behavior instead of matching inside a useless sliver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .clustering import NOISE, DbscanParams, dbscan, default_eps
from .core import CropBox, ImageMeta

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CropParams:
    """Knobs of the crop proposal.

    t is the cluster-size ratio threshold (a cluster is kept while
    size/largest >= t). dbscan=None derives eps per image from
    eps_factor * image diagonal. e_h/e_v expand the final box about its
    center; the defaults match the outdoor-benchmark setting where
    horizontal context is informative and vertical context rarely is.
    """

    t: float = 0.05
    dbscan: DbscanParams | None = None
    eps_factor: float = 0.04
    min_pts: int = 5
    e_h: float = 1.05
    e_v: float = 1.0
    min_box_side: float = 64.0

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"t must be in (0, 1], got {self.t}")
        if self.e_h < 1.0 or self.e_v < 1.0:
            raise ValueError(f"expand factors must be >= 1, got e_h={self.e_h} e_v={self.e_v}")
        if self.min_box_side < 1.0:
            raise ValueError(f"min_box_side must be >= 1, got {self.min_box_side}")


@dataclass(frozen=True)
class CropProposal:
    """One crop box per image plus the clusters that produced them."""

    box1: CropBox
    box2: CropBox
    kept_clusters1: tuple[int, ...]
    kept_clusters2: tuple[int, ...]
    degenerate: bool


def select_clusters(sizes_desc: list[int] | np.ndarray, t: float) -> list[int]:
    """Indices kept from a descending list of cluster sizes.

    The largest cluster is always kept; each following cluster is kept
    while its ratio to the largest stays >= t (inclusive). The walk stops
    at the first failure, which is also the global stop since sizes are
    sorted descending.
    """
    sizes = list(sizes_desc)
    if not sizes:
        raise ValueError("select_clusters requires at least one cluster")
    if any(sizes[i] < sizes[i + 1] for i in range(len(sizes) - 1)):
        raise ValueError("cluster sizes must be sorted descending")
    kept = [0]
    largest = float(sizes[0])
    for i in range(1, len(sizes)):
        if float(sizes[i]) / largest >= t:
            kept.append(i)
        else:
            break
    return kept


def bounding_box(
    points: np.ndarray,
    min_box_side: float = 1.0,
    meta: ImageMeta | None = None,
) -> CropBox:
    """Axis-aligned bounds of the points, inflated per axis to a minimum side.

    Inflation is symmetric about the box center; with ``meta`` given the
    result is clamped to the image afterwards (clamping may shrink a side
    below the minimum near borders, which is accepted).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("bounding_box requires at least one point")
    x_min, y_min = pts.min(axis=0)
    x_max, y_max = pts.max(axis=0)
    if x_max - x_min < min_box_side:
        cx = 0.5 * (x_min + x_max)
        x_min, x_max = cx - 0.5 * min_box_side, cx + 0.5 * min_box_side
    if y_max - y_min < min_box_side:
        cy = 0.5 * (y_min + y_max)
        y_min, y_max = cy - 0.5 * min_box_side, cy + 0.5 * min_box_side
    box = CropBox(float(x_min), float(y_min), float(x_max), float(y_max))
    if meta is not None:
        box = box.clamped(meta)
    return box


def expand_box(box: CropBox, e_h: float, e_v: float, meta: ImageMeta) -> CropBox:
    """Scale the box width by e_h and height by e_v about its center, then
    clamp to the image. Factors of exactly 1 leave the box bit-identical."""
    dx = 0.5 * (e_h - 1.0) * box.width
    dy = 0.5 * (e_v - 1.0) * box.height
    return CropBox(box.x_min - dx, box.y_min - dy, box.x_max + dx, box.y_max + dy).clamped(meta)


def _propose_one(
    meta: ImageMeta,
    pts: np.ndarray,
    params: CropParams,
    eps: float,
) -> tuple[CropBox, tuple[int, ...], bool]:
    if len(pts) < 2:
        return CropBox.full_image(meta), (), True

    db = params.dbscan or DbscanParams(eps=eps, min_pts=params.min_pts)
    labels = dbscan(pts, db)
    ids, counts = np.unique(labels[labels != NOISE], return_counts=True)
    if len(ids) == 0:
        return CropBox.full_image(meta), (), True

    # Size-descending order, ties broken by lower cluster id.
    order = sorted(range(len(ids)), key=lambda k: (-counts[k], ids[k]))
    sizes_desc = [int(counts[k]) for k in order]
    kept_pos = select_clusters(sizes_desc, params.t)
    kept_ids = tuple(int(ids[order[k]]) for k in kept_pos)

    mask = np.isin(labels, kept_ids)
    box = bounding_box(pts[mask], params.min_box_side, meta)
    box = expand_box(box, params.e_h, params.e_v, meta)
    return box, kept_ids, False


def propose_crops(
    meta1: ImageMeta,
    meta2: ImageMeta,
    pts1: np.ndarray,
    pts2: np.ndarray,
    params: CropParams | None = None,
) -> CropProposal:
    """Propose one co-visible-region crop box per image from paired keypoints."""
    params = params or CropParams()
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    if len(pts1) != len(pts2):
        raise ValueError(f"paired keypoint lists differ in length: {len(pts1)} vs {len(pts2)}")
    if len(pts1) == 0:
        raise ValueError("propose_crops requires at least one correspondence")

    eps1, eps2 = default_eps(meta1, meta2, params.eps_factor)
    box1, kept1, degen1 = _propose_one(meta1, pts1, params, eps1)
    box2, kept2, degen2 = _propose_one(meta2, pts2, params, eps2)
    degenerate = degen1 or degen2
    if degenerate:
        # One unreliable side taints the pair: a tight box on the other
        # image would pair a constrained view with an unconstrained one,
        # which is worse than no crop at all. Degrade both to full frame.
        logger.debug(
            "crop proposal degenerate (image1=%s image2=%s), falling back to full frame",
            degen1,
            degen2,
        )
        box1 = CropBox.full_image(meta1)
        box2 = CropBox.full_image(meta2)
    return CropProposal(box1, box2, kept1, kept2, degenerate)
