"""Robust two-view estimation.

Normalized eight-point fundamental/essential solve, homography DLT,
Sampson residuals, an adaptive RANSAC loop, and recovery of (R, t) from an
estimated model. The RANSAC loop evaluates hypotheses in fixed-size
batches so the linear algebra vectorizes; the sample stream comes from a
single seeded generator, making results reproducible for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import MatchSet
from .errors import (
    DegenerateConfigurationError,
    EstimationFailedError,
    InsufficientDataError,
)

_RANK_DEFICIENT_RTOL = 1e-9
_RANSAC_CHUNK = 256


class ModelKind(Enum):
    FUNDAMENTAL = "fundamental"
    ESSENTIAL = "essential"
    HOMOGRAPHY = "homography"


MINIMAL_SAMPLE = {
    ModelKind.FUNDAMENTAL: 8,
    ModelKind.ESSENTIAL: 8,
    ModelKind.HOMOGRAPHY: 4,
}


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, k: np.ndarray) -> "CameraIntrinsics":
        k = np.asarray(k, dtype=np.float64).reshape(3, 3)
        return cls(fx=float(k[0, 0]), fy=float(k[1, 1]), cx=float(k[0, 2]), cy=float(k[1, 2]), skew=float(k[0, 1]))


@dataclass(frozen=True, eq=False)
class RelativePose:
    """Rotation plus unit translation direction (scale-free)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with det +1")
        norm = np.linalg.norm(t)
        if norm == 0.0:
            raise ValueError("translation direction must be nonzero")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t / norm)


@dataclass(eq=False)
class Model3x3:
    """An estimated F, E or H with its inlier support."""

    kind: ModelKind
    m: np.ndarray
    inliers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    score: int = 0


@dataclass(frozen=True)
class EstimatorParams:
    threshold: float = 1.5
    max_iters: int = 10000
    confidence: float = 0.9999
    seed: int = 0

    def __post_init__(self):
        if self.threshold <= 0.0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    return np.hstack([pts, np.ones((len(pts), 1))])


def normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley preconditioning: centroid to origin, mean radius sqrt(2).

    Returns the transformed points and the 3x3 similarity T with
    x_normalized = T @ x (homogeneous).
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("normalize_points requires at least 2 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    mean_dist = np.linalg.norm(centered, axis=1).mean()
    if mean_dist <= 0.0:
        raise DegenerateConfigurationError("all points coincident")
    s = math.sqrt(2.0) / mean_dist
    t = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return centered * s, t


def _epipolar_design(pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    """Rows [x2x1, x2y1, x2, y2x1, y2y1, y2, x1, y1, 1] so that A @ vec(F) = 0."""
    x1, y1 = pts1[:, 0], pts1[:, 1]
    x2, y2 = pts2[:, 0], pts2[:, 1]
    one = np.ones_like(x1)
    return np.stack([x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, one], axis=1)


def _project_rank2(f: np.ndarray, essential: bool = False) -> np.ndarray:
    u, s, vt = np.linalg.svd(f)
    if essential:
        m = 0.5 * (s[0] + s[1])
        s = np.array([m, m, 0.0])
    else:
        s = np.array([s[0], s[1], 0.0])
    return u @ np.diag(s) @ vt


def _frobenius_normalized(m: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(m)
    if n == 0.0:
        raise DegenerateConfigurationError("zero matrix")
    m = m / n
    # Fix an overall sign so estimates are comparable across runs.
    flat = m.ravel()
    lead = flat[np.argmax(np.abs(flat) > 1e-12)]
    return -m if lead < 0 else m


def eight_point(pts1: np.ndarray, pts2: np.ndarray, essential: bool = False) -> np.ndarray:
    """Normalized linear solve of x2' F x1 = 0 over >= 8 correspondences.

    The smallest-singular-vector solution is projected to rank 2 (equal
    nonzero singular values when ``essential``), denormalized, and
    Frobenius-normalized. Raises DegenerateConfigurationError when the
    design matrix is rank-deficient, which is the symptom of a planar or
    otherwise non-constraining configuration.
    """
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    if len(pts1) != len(pts2):
        raise ValueError("point lists differ in length")
    if len(pts1) < 8:
        raise InsufficientDataError(f"eight_point needs >= 8 matches, got {len(pts1)}")

    n1, t1 = normalize_points(pts1)
    n2, t2 = normalize_points(pts2)
    a = _epipolar_design(n1, n2)
    _, s, vt = np.linalg.svd(a)
    if s[min(7, len(s) - 1)] <= _RANK_DEFICIENT_RTOL * s[0]:
        raise DegenerateConfigurationError(
            "design matrix rank-deficient (planar or degenerate configuration)"
        )
    f_hat = vt[-1].reshape(3, 3)
    f_hat = _project_rank2(f_hat, essential=essential)
    f = t2.T @ f_hat @ t1
    if essential:
        f = _project_rank2(f, essential=True)
    return _frobenius_normalized(f)


def sampson_distances(f: np.ndarray, pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    """Squared Sampson distance of each correspondence to x2' F x1 = 0.

    Vanishing denominators (both epipolar line gradients zero) yield +inf
    so such pairs always count as outliers.
    """
    f = np.asarray(f, dtype=np.float64).reshape(3, 3)
    h1 = _homogeneous(pts1)
    h2 = _homogeneous(pts2)
    fx1 = h1 @ f.T  # rows: F @ x1
    ftx2 = h2 @ f  # rows: F' @ x2
    num = np.einsum("ij,ij->i", h2, fx1) ** 2
    den = fx1[:, 0] ** 2 + fx1[:, 1] ** 2 + ftx2[:, 0] ** 2 + ftx2[:, 1] ** 2
    out = np.full(len(h1), np.inf)
    nz = den > 0.0
    out[nz] = num[nz] / den[nz]
    return out


def sampson_distance(f: np.ndarray, p1, p2) -> float:
    """Scalar Sampson distance (squared pixels) for one correspondence."""
    a1 = np.asarray([p1.x, p1.y]) if hasattr(p1, "x") else np.asarray(p1, dtype=np.float64)
    a2 = np.asarray([p2.x, p2.y]) if hasattr(p2, "x") else np.asarray(p2, dtype=np.float64)
    if not np.any(np.asarray(f) != 0.0):
        raise ValueError("F must be nonzero")
    return float(sampson_distances(f, a1.reshape(1, 2), a2.reshape(1, 2))[0])


def homography_dlt(pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    """Normalized DLT homography from >= 4 correspondences."""
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    if len(pts1) != len(pts2):
        raise ValueError("point lists differ in length")
    if len(pts1) < 4:
        raise InsufficientDataError(f"homography_dlt needs >= 4 matches, got {len(pts1)}")

    n1, t1 = normalize_points(pts1)
    n2, t2 = normalize_points(pts2)
    x1, y1 = n1[:, 0], n1[:, 1]
    x2, y2 = n2[:, 0], n2[:, 1]
    zero = np.zeros_like(x1)
    one = np.ones_like(x1)
    rows_a = np.stack([-x1, -y1, -one, zero, zero, zero, x2 * x1, x2 * y1, x2], axis=1)
    rows_b = np.stack([zero, zero, zero, -x1, -y1, -one, y2 * x1, y2 * y1, y2], axis=1)
    a = np.concatenate([rows_a, rows_b], axis=0)
    _, s, vt = np.linalg.svd(a)
    if s[min(7, len(s) - 1)] <= _RANK_DEFICIENT_RTOL * s[0]:
        raise DegenerateConfigurationError("collinear or otherwise degenerate points")
    h_hat = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t2) @ h_hat @ t1
    if abs(np.linalg.det(h)) < 1e-12:
        raise DegenerateConfigurationError("singular homography")
    return _frobenius_normalized(h)


def transfer_errors(h: np.ndarray, pts1: np.ndarray, pts2: np.ndarray) -> np.ndarray:
    """Symmetric transfer error (squared pixels, forward + backward)."""
    h = np.asarray(h, dtype=np.float64).reshape(3, 3)
    try:
        h_inv = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        return np.full(len(np.atleast_2d(pts1)), np.inf)
    h1 = _homogeneous(pts1)
    h2 = _homogeneous(pts2)
    fwd = h1 @ h.T
    bwd = h2 @ h_inv.T
    out = np.full(len(h1), np.inf)
    ok = (np.abs(fwd[:, 2]) > 1e-12) & (np.abs(bwd[:, 2]) > 1e-12)
    fwd_xy = fwd[ok, :2] / fwd[ok, 2:3]
    bwd_xy = bwd[ok, :2] / bwd[ok, 2:3]
    p1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    p2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    out[ok] = ((fwd_xy - p2[ok]) ** 2).sum(axis=1) + ((bwd_xy - p1[ok]) ** 2).sum(axis=1)
    return out


# ---------------------------------------------------------------------------
# Batched minimal solvers for the RANSAC loop. These mirror eight_point /
# homography_dlt but solve many samples at once and never raise on a bad
# sample: degenerate hypotheses simply score zero inliers.
# ---------------------------------------------------------------------------


def _batch_normalize(p: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalize (m, s, 2) sample points; returns points, scale, centroid."""
    centroid = p.mean(axis=1, keepdims=True)
    centered = p - centroid
    mean_dist = np.linalg.norm(centered, axis=2).mean(axis=1)
    mean_dist = np.where(mean_dist > 0.0, mean_dist, 1.0)
    s = math.sqrt(2.0) / mean_dist
    return centered * s[:, None, None], s, centroid[:, 0, :]


def _denormalize_batch(f_hat: np.ndarray, s1, c1, s2, c2) -> np.ndarray:
    """Undo per-sample Hartley transforms: F = T2^T F_hat T1 (batched)."""
    m = len(f_hat)
    t1 = np.zeros((m, 3, 3))
    t1[:, 0, 0] = s1
    t1[:, 1, 1] = s1
    t1[:, 2, 2] = 1.0
    t1[:, 0, 2] = -s1 * c1[:, 0]
    t1[:, 1, 2] = -s1 * c1[:, 1]
    t2 = np.zeros_like(t1)
    t2[:, 0, 0] = s2
    t2[:, 1, 1] = s2
    t2[:, 2, 2] = 1.0
    t2[:, 0, 2] = -s2 * c2[:, 0]
    t2[:, 1, 2] = -s2 * c2[:, 1]
    return np.transpose(t2, (0, 2, 1)) @ f_hat @ t1


def _solve_epipolar_batch(p1: np.ndarray, p2: np.ndarray, essential: bool) -> np.ndarray:
    """(m, s, 2) sample pairs -> (m, 3, 3) rank-projected models."""
    n1, s1, c1 = _batch_normalize(p1)
    n2, s2, c2 = _batch_normalize(p2)
    x1, y1 = n1[..., 0], n1[..., 1]
    x2, y2 = n2[..., 0], n2[..., 1]
    one = np.ones_like(x1)
    a = np.stack([x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, one], axis=2)
    _, _, vt = np.linalg.svd(a)
    f_hat = vt[:, -1, :].reshape(-1, 3, 3)
    u, s, vts = np.linalg.svd(f_hat)
    if essential:
        mean = 0.5 * (s[:, 0] + s[:, 1])
        s = np.stack([mean, mean, np.zeros_like(mean)], axis=1)
    else:
        s = np.stack([s[:, 0], s[:, 1], np.zeros_like(s[:, 0])], axis=1)
    f_hat = u @ (s[:, :, None] * vts)
    return _denormalize_batch(f_hat, s1, c1, s2, c2)


def _solve_homography_batch(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    n1, s1, c1 = _batch_normalize(p1)
    n2, s2, c2 = _batch_normalize(p2)
    x1, y1 = n1[..., 0], n1[..., 1]
    x2, y2 = n2[..., 0], n2[..., 1]
    zero = np.zeros_like(x1)
    one = np.ones_like(x1)
    rows_a = np.stack([-x1, -y1, -one, zero, zero, zero, x2 * x1, x2 * y1, x2], axis=2)
    rows_b = np.stack([zero, zero, zero, -x1, -y1, -one, y2 * x1, y2 * y1, y2], axis=2)
    a = np.concatenate([rows_a, rows_b], axis=1)
    _, _, vt = np.linalg.svd(a)
    h_hat = vt[:, -1, :].reshape(-1, 3, 3)
    # Invert T2 in closed form: inv([[s,0,-s cx],[0,s,-s cy],[0,0,1]]).
    m = len(h_hat)
    t1 = np.zeros((m, 3, 3))
    t1[:, 0, 0] = s1
    t1[:, 1, 1] = s1
    t1[:, 2, 2] = 1.0
    t1[:, 0, 2] = -s1 * c1[:, 0]
    t1[:, 1, 2] = -s1 * c1[:, 1]
    t2_inv = np.zeros((m, 3, 3))
    t2_inv[:, 0, 0] = 1.0 / s2
    t2_inv[:, 1, 1] = 1.0 / s2
    t2_inv[:, 2, 2] = 1.0
    t2_inv[:, 0, 2] = c2[:, 0]
    t2_inv[:, 1, 2] = c2[:, 1]
    return t2_inv @ h_hat @ t1


def _residual_batch(kind: ModelKind, models: np.ndarray, h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    """(m, 3, 3) models x (n, 3) homogeneous points -> (m, n) squared residuals."""
    if kind is ModelKind.HOMOGRAPHY:
        dets = np.linalg.det(models)
        res = np.full((len(models), len(h1)), np.inf)
        ok = np.abs(dets) > 1e-12
        if ok.any():
            h_ok = models[ok]
            h_inv = np.linalg.inv(h_ok)
            fwd = np.einsum("mij,nj->mni", h_ok, h1)
            bwd = np.einsum("mij,nj->mni", h_inv, h2)
            with np.errstate(divide="ignore", invalid="ignore"):
                fwd_xy = fwd[..., :2] / fwd[..., 2:3]
                bwd_xy = bwd[..., :2] / bwd[..., 2:3]
                err = ((fwd_xy - h2[None, :, :2]) ** 2).sum(axis=2)
                err = err + ((bwd_xy - h1[None, :, :2]) ** 2).sum(axis=2)
            err[~np.isfinite(err)] = np.inf
            res[ok] = err
        return res
    fx1 = np.einsum("mij,nj->mni", models, h1)
    ftx2 = np.einsum("mji,nj->mni", models, h2)
    num = np.einsum("ni,mni->mn", h2, fx1) ** 2
    den = fx1[..., 0] ** 2 + fx1[..., 1] ** 2 + ftx2[..., 0] ** 2 + ftx2[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        res = num / den
    res[~np.isfinite(res)] = np.inf
    return res


def _draw_samples(rng: np.random.Generator, n: int, s: int, m: int) -> np.ndarray:
    if n <= s:
        return np.tile(np.arange(n), (m, 1))
    if n <= 4096:
        keys = rng.random((m, n))
        return np.argpartition(keys, s, axis=1)[:, :s]
    return np.stack([rng.choice(n, size=s, replace=False) for _ in range(m)])


def _as_point_arrays(matches) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(matches, MatchSet):
        return matches.points1(), matches.points2()
    pts1, pts2 = matches
    return (
        np.asarray(pts1, dtype=np.float64).reshape(-1, 2),
        np.asarray(pts2, dtype=np.float64).reshape(-1, 2),
    )


def ransac(
    matches,
    kind: ModelKind,
    params: EstimatorParams | None = None,
    k1: CameraIntrinsics | None = None,
    k2: CameraIntrinsics | None = None,
) -> Model3x3:
    """Hypothesize-and-verify estimation of F, E or H.

    Uniform minimal samples (8 for F/E, 4 for H) from a seeded generator;
    a correspondence is an inlier when its squared residual (Sampson for
    F/E, symmetric transfer for H) is below threshold^2. The iteration
    budget shrinks adaptively as the best inlier ratio w improves,
    N = log(1 - confidence) / log(1 - w^s), capped at max_iters; the
    budget is re-checked after each evaluation batch. The winning model is
    re-fit on its inliers with the linear solver.

    Essential estimation requires both intrinsics; points are moved to
    normalized camera coordinates and the pixel threshold is divided by
    the mean focal length.
    """
    params = params or EstimatorParams()
    pts1, pts2 = _as_point_arrays(matches)
    if len(pts1) != len(pts2):
        raise ValueError("point lists differ in length")
    n = len(pts1)
    s = MINIMAL_SAMPLE[kind]
    if n < s:
        raise InsufficientDataError(f"{kind.value} estimation needs >= {s} matches, got {n}")

    threshold = params.threshold
    if kind is ModelKind.ESSENTIAL:
        if k1 is None or k2 is None:
            raise ValueError("essential estimation requires both camera intrinsics")
        pts1 = _to_normalized_cam(pts1, k1)
        pts2 = _to_normalized_cam(pts2, k2)
        threshold = params.threshold / _mean_focal(k1, k2)
    thr_sq = threshold * threshold

    h1 = _homogeneous(pts1)
    h2 = _homogeneous(pts2)
    rng = np.random.default_rng(params.seed)

    best_count = 0
    best_mask = np.zeros(n, dtype=bool)
    best_model: np.ndarray | None = None
    target = params.max_iters
    done = 0
    while done < min(target, params.max_iters):
        m = min(_RANSAC_CHUNK, params.max_iters - done)
        idx = _draw_samples(rng, n, s, m)
        p1 = pts1[idx]
        p2 = pts2[idx]
        if kind is ModelKind.HOMOGRAPHY:
            models = _solve_homography_batch(p1, p2)
        else:
            models = _solve_epipolar_batch(p1, p2, essential=kind is ModelKind.ESSENTIAL)
        res = _residual_batch(kind, models, h1, h2)
        counts = (res < thr_sq).sum(axis=1)
        k = int(np.argmax(counts))  # first maximum = lowest iteration index
        if counts[k] > best_count:
            best_count = int(counts[k])
            best_mask = res[k] < thr_sq
            best_model = models[k]
            w = best_count / n
            if w >= 1.0:
                target = done + 1
            else:
                denom = math.log1p(-min(w**s, 1.0 - 1e-15))
                if denom < 0.0:
                    target = min(
                        params.max_iters,
                        int(math.ceil(math.log(1.0 - params.confidence) / denom)),
                    )
        done += m

    min_support = s + 1 if n > s else s
    if best_model is None or best_count < min_support:
        raise EstimationFailedError(
            f"no model with >= {min_support} inliers found in {done} iterations"
        )

    model = _refit(kind, pts1, pts2, best_mask, best_model, h1, h2, thr_sq)
    if kind is ModelKind.ESSENTIAL:
        # Report the model and mask in the original pixel-domain convention:
        # the matrix stays an essential matrix (normalized coordinates).
        model.m = _frobenius_normalized(_project_rank2(model.m, essential=True))
    return model


def estimate_robust(
    matches,
    kind: ModelKind,
    params: EstimatorParams | None = None,
    method: str = "ransac",
    k1: CameraIntrinsics | None = None,
    k2: CameraIntrinsics | None = None,
) -> Model3x3:
    """Robust estimation entry point with a named estimator slot.

    "ransac" is the adaptive RANSAC implemented here. "magsac" is a
    recognized name kept as an integration hook for a marginalizing
    estimator; it is intentionally not implemented.
    """
    if method == "ransac":
        return ransac(matches, kind, params, k1=k1, k2=k2)
    if method == "magsac":
        raise NotImplementedError(
            "magsac is a named hook without an implementation; use method='ransac'"
        )
    raise ValueError(f"unknown estimator method {method!r}")


def _refit(
    kind: ModelKind,
    pts1: np.ndarray,
    pts2: np.ndarray,
    mask: np.ndarray,
    hypothesis: np.ndarray,
    h1: np.ndarray,
    h2: np.ndarray,
    thr_sq: float,
) -> Model3x3:
    refit = None
    try:
        if kind is ModelKind.HOMOGRAPHY:
            refit = homography_dlt(pts1[mask], pts2[mask])
        else:
            refit = eight_point(pts1[mask], pts2[mask], essential=kind is ModelKind.ESSENTIAL)
    except (InsufficientDataError, DegenerateConfigurationError, np.linalg.LinAlgError):
        refit = None

    hyp_m = _frobenius_normalized(hypothesis)
    if refit is not None:
        refit_res = _residual_batch(kind, refit[None], h1, h2)[0]
        refit_mask = refit_res < thr_sq
        if refit_mask.sum() >= mask.sum():
            return Model3x3(kind, refit, refit_mask, int(refit_mask.sum()))
    return Model3x3(kind, hyp_m, mask, int(mask.sum()))


def _to_normalized_cam(pts: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    k_inv = np.linalg.inv(k.matrix())
    h = _homogeneous(pts) @ k_inv.T
    return h[:, :2] / h[:, 2:3]


def _mean_focal(k1: CameraIntrinsics, k2: CameraIntrinsics) -> float:
    return 0.25 * (k1.fx + k1.fy + k2.fx + k2.fy)


# ---------------------------------------------------------------------------
# Pose recovery
# ---------------------------------------------------------------------------


def triangulate(
    p1: np.ndarray, p2: np.ndarray, pts1: np.ndarray, pts2: np.ndarray
) -> np.ndarray:
    """Linear (DLT) triangulation; returns (n, 3) points in camera-1 frame.

    ``p1``/``p2`` are 3x4 projection matrices; points that triangulate at
    infinity come back as nan rows.
    """
    pts1 = np.asarray(pts1, dtype=np.float64).reshape(-1, 2)
    pts2 = np.asarray(pts2, dtype=np.float64).reshape(-1, 2)
    n = len(pts1)
    a = np.empty((n, 4, 4))
    a[:, 0] = pts1[:, 0, None] * p1[2] - p1[0]
    a[:, 1] = pts1[:, 1, None] * p1[2] - p1[1]
    a[:, 2] = pts2[:, 0, None] * p2[2] - p2[0]
    a[:, 3] = pts2[:, 1, None] * p2[2] - p2[1]
    _, _, vt = np.linalg.svd(a)
    x = vt[:, -1, :]
    w = x[:, 3]
    out = np.full((n, 3), np.nan)
    ok = np.abs(w) > 1e-12
    out[ok] = x[ok, :3] / w[ok, None]
    return out


def decompose_essential(e: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """The four (R, t) candidates of an essential matrix."""
    u, _, vt = np.linalg.svd(np.asarray(e, dtype=np.float64).reshape(3, 3))
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r1 = u @ w @ vt
    r2 = u @ w.T @ vt
    t = u[:, 2]
    return [(r1, t), (r1, -t), (r2, t), (r2, -t)]


def pose_from_fundamental(
    model: Model3x3,
    k1: CameraIntrinsics,
    k2: CameraIntrinsics,
    matches,
) -> RelativePose:
    """Recover (R, t) from an estimated F (or E) via cheirality.

    Forms E = K2' F K1 (already E for essential models), projects onto the
    essential manifold, and returns the decomposition candidate that
    triangulates the most inlier points with positive depth in both
    cameras.
    """
    pts1, pts2 = _as_point_arrays(matches)
    if len(model.inliers) == len(pts1) and model.inliers.any():
        pts1 = pts1[model.inliers]
        pts2 = pts2[model.inliers]
    if len(pts1) == 0:
        raise EstimationFailedError("no inlier matches available for cheirality check")

    if model.kind is ModelKind.ESSENTIAL:
        e = model.m
    else:
        e = k2.matrix().T @ model.m @ k1.matrix()
    e = _project_rank2(e, essential=True)

    n1 = _to_normalized_cam(pts1, k1)
    n2 = _to_normalized_cam(pts2, k2)
    p1 = np.hstack([np.eye(3), np.zeros((3, 1))])

    best: tuple[int, int] | None = None
    best_pose: tuple[np.ndarray, np.ndarray] | None = None
    for ci, (r, t) in enumerate(decompose_essential(e)):
        p2 = np.hstack([r, t.reshape(3, 1)])
        x = triangulate(p1, p2, n1, n2)
        finite = np.isfinite(x).all(axis=1)
        z1 = x[:, 2]
        z2 = (x @ r.T + t)[:, 2]
        count = int((finite & (z1 > 0.0) & (z2 > 0.0)).sum())
        if best is None or count > best[0]:
            best = (count, ci)
            best_pose = (r, t)
    assert best is not None and best_pose is not None
    if best[0] == 0:
        raise EstimationFailedError("cheirality check failed: no point in front of both cameras")
    return RelativePose(best_pose[0], best_pose[1])
