"""From-scratch DBSCAN over 2-D keypoints.

Standard semantics: a point is core iff its closed eps-ball (Euclidean)
holds at least ``min_pts`` points including itself; clusters are maximal
density-connected sets of core points plus their border points; everything
else is noise. Border points reachable from several clusters go to the
cluster whose expansion reaches them first, and clusters are expanded one
at a time in ascending order of their first core point's input index, so
the labeling is fully deterministic.

Neighborhood queries run on a uniform grid with cell size eps, which keeps
the expected cost near O(n * neighborhood size) on the dense stage-one
keypoint ensembles this is used for.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import ImageMeta

NOISE = -1
_UNVISITED = -2


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = 5

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


def default_eps(meta1: ImageMeta, meta2: ImageMeta, factor: float = 0.04) -> tuple[float, float]:
    """Per-image eps as a fraction of each image's own diagonal.

    Scale-relative eps keeps the clustering invariant to the resolution
    the matchers ran at.
    """
    if factor <= 0.0:
        raise ValueError(f"factor must be > 0, got {factor}")
    return factor * meta1.diagonal, factor * meta2.diagonal


class _Grid:
    """Uniform hash grid for fixed-radius neighbor queries."""

    def __init__(self, pts: np.ndarray, eps: float):
        self.pts = pts
        self.eps = eps
        self.eps2 = eps * eps
        cells = np.floor(pts / eps).astype(np.int64)
        self.cells = cells
        self.index: dict[tuple[int, int], list[int]] = {}
        for i, (cx, cy) in enumerate(cells):
            self.index.setdefault((int(cx), int(cy)), []).append(i)

    def neighbors(self, i: int) -> np.ndarray:
        """Indices within the closed eps-ball of point i (includes i), ascending."""
        cx, cy = self.cells[i]
        cand: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                bucket = self.index.get((int(cx) + dx, int(cy) + dy))
                if bucket:
                    cand.extend(bucket)
        cand_arr = np.array(cand, dtype=np.int64)
        d = self.pts[cand_arr] - self.pts[i]
        within = cand_arr[(d * d).sum(axis=1) <= self.eps2]
        within.sort()
        return within


def dbscan(points: np.ndarray | list, params: DbscanParams) -> np.ndarray:
    """Cluster 2-D points; returns an int label per point, NOISE = -1.

    Cluster ids are 0..k-1 in order of discovery (ascending first-core
    index). Output is identical across runs for identical input.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        pts = pts.reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("dbscan requires at least one point")

    grid = _Grid(pts, params.eps)
    labels = np.full(n, _UNVISITED, dtype=np.int64)
    cluster_id = 0

    for i in range(n):
        if labels[i] != _UNVISITED:
            continue
        neigh = grid.neighbors(i)
        if len(neigh) < params.min_pts:
            labels[i] = NOISE  # may be re-claimed later as a border point
            continue
        labels[i] = cluster_id
        queue = deque(int(j) for j in neigh if j != i)
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster_id  # border point, first cluster to arrive wins
            if labels[j] != _UNVISITED:
                continue
            labels[j] = cluster_id
            j_neigh = grid.neighbors(j)
            if len(j_neigh) >= params.min_pts:
                queue.extend(int(q) for q in j_neigh if labels[q] in (_UNVISITED, NOISE))
        cluster_id += 1

    return labels


def cluster_sizes(labels: np.ndarray) -> dict[int, int]:
    """Cluster id -> member count, noise excluded."""
    ids, counts = np.unique(labels[labels != NOISE], return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}
