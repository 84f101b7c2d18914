"""Pose-error metrics: angular errors, AUC at fixed thresholds, mAA.

The combined pose error of a pair is the maximum of the rotation angle
error and the translation direction error, both in degrees. A failed
estimation counts as +inf combined error, so it drags every metric down
instead of silently disappearing.

AUC at threshold tau is the area under the recall-vs-error step curve on
[0, tau], normalized by tau. With recall(e) = fraction of pairs whose
combined error is <= e, the exact integral reduces to
sum_i max(0, tau - e_i) / (n * tau). A coarser histogram-style variant is
available behind ``method="binned"`` for comparison with evaluations that
sample recall at a fixed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedMetricError


@dataclass(frozen=True)
class PoseError:
    """Angular pose error of one pair; failed pairs carry infinite error."""

    rot_deg: float
    trans_deg: float
    failed: bool = False

    @property
    def combined(self) -> float:
        if self.failed:
            return math.inf
        return max(self.rot_deg, self.trans_deg)

    @classmethod
    def failure(cls) -> "PoseError":
        return cls(rot_deg=math.inf, trans_deg=math.inf, failed=True)


@dataclass(frozen=True)
class ThresholdGrid:
    """Paired rotation (degrees) / translation (meters) acceptance levels."""

    rot_thresholds: tuple[float, ...]
    trans_thresholds: tuple[float, ...]

    def __post_init__(self):
        if len(self.rot_thresholds) != len(self.trans_thresholds):
            raise ValueError("rotation and translation threshold lists must pair up")
        if len(self.rot_thresholds) == 0:
            raise ValueError("threshold grid cannot be empty")
        for seq in (self.rot_thresholds, self.trans_thresholds):
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ValueError("thresholds must be strictly increasing")

    @classmethod
    def default(cls) -> "ThresholdGrid":
        # 10 levels, 1..10 degrees and 0.2..2.0 meters.
        return cls(
            tuple(float(i) for i in range(1, 11)),
            tuple(round(0.2 * i, 10) for i in range(1, 11)),
        )


def _check_rotation(r: np.ndarray, name: str) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64).reshape(3, 3)
    if np.abs(r.T @ r - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
        raise ValueError(f"{name} is not a rotation matrix")
    return r


def rotation_error(r_est: np.ndarray, r_gt: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees."""
    r_est = _check_rotation(r_est, "r_est")
    r_gt = _check_rotation(r_gt, "r_gt")
    cos = 0.5 * (np.trace(r_gt.T @ r_est) - 1.0)
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def translation_error(t_est: np.ndarray, t_gt: np.ndarray) -> float:
    """Angle between translation directions in degrees, sign-free.

    An essential matrix fixes t only up to sign, so antiparallel vectors
    score zero; the range is [0, 90].
    """
    t_est = np.asarray(t_est, dtype=np.float64).reshape(3)
    t_gt = np.asarray(t_gt, dtype=np.float64).reshape(3)
    n_est = np.linalg.norm(t_est)
    n_gt = np.linalg.norm(t_gt)
    if n_est == 0.0 or n_gt == 0.0:
        raise ValueError("translation vectors must be nonzero")
    cos = abs(float(t_est @ t_gt)) / (n_est * n_gt)
    return math.degrees(math.acos(min(1.0, cos)))


def _combined_errors(errors: list[PoseError] | np.ndarray) -> np.ndarray:
    if isinstance(errors, np.ndarray):
        return errors.astype(np.float64).reshape(-1)
    return np.array([e.combined for e in errors], dtype=np.float64)


def pose_auc(
    errors: list[PoseError] | np.ndarray,
    thresholds: list[float],
    method: str = "exact",
    bin_width: float = 5.0,
) -> list[float]:
    """AUC of the combined pose error at each threshold, in percent.

    ``method="exact"`` integrates the recall step function analytically.
    ``method="binned"`` averages recall at multiples of ``bin_width``
    degrees up to the threshold (at least one level), mirroring
    histogram-style evaluations.
    """
    combined = _combined_errors(errors)
    if len(combined) == 0:
        raise ValueError("pose_auc requires at least one error")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    if method not in ("exact", "binned"):
        raise ValueError(f"unknown AUC method {method!r}")

    n = len(combined)
    out = []
    for tau in thresholds:
        if tau <= 0.0:
            raise ValueError(f"thresholds must be positive, got {tau}")
        if method == "exact":
            area = np.maximum(0.0, tau - combined).sum() / (n * tau)
        else:
            k = max(1, int(math.floor(tau / bin_width + 1e-9)))
            levels = np.arange(1, k + 1) * min(bin_width, tau)
            recall = (combined[None, :] <= levels[:, None]).mean(axis=1)
            area = float(recall.mean())
        out.append(100.0 * float(area))
    return out


def maa(
    errors: list[PoseError],
    trans_errors_m: list[float] | np.ndarray | None,
    grid: ThresholdGrid | None = None,
) -> float:
    """Mean average accuracy over a rotation/translation threshold grid.

    Each level accepts a pair when rotation error (degrees) and metric
    translation error (meters) both pass; the result is the mean accuracy
    over levels, in percent. Requires metric translation errors, which
    exist only when the ground truth carries scale.
    """
    grid = grid or ThresholdGrid.default()
    if trans_errors_m is None:
        raise UnsupportedMetricError("mAA needs metric translation errors (scaled ground truth)")
    trans = np.asarray(trans_errors_m, dtype=np.float64).reshape(-1)
    if len(trans) != len(errors):
        raise ValueError("translation error list must match pose error list")
    if len(errors) == 0:
        raise ValueError("maa requires at least one pair")

    rot = np.array(
        [math.inf if e.failed else e.rot_deg for e in errors], dtype=np.float64
    )
    failed = np.array([e.failed for e in errors])
    trans = np.where(failed, math.inf, trans)

    acc = [
        float(((rot <= rt) & (trans <= tt)).mean())
        for rt, tt in zip(grid.rot_thresholds, grid.trans_thresholds)
    ]
    return 100.0 * float(np.mean(acc))


def metric_translation_error(
    t_est_unit: np.ndarray, t_gt_meters: np.ndarray
) -> float:
    """Metric translation error for a scale-free estimate.

    Scales the estimated unit direction to the ground-truth magnitude,
    resolving the sign ambiguity toward the ground truth, then measures the
    Euclidean gap in meters. Zero-magnitude ground truth is rejected since
    there is no scale to borrow.
    """
    t_est = np.asarray(t_est_unit, dtype=np.float64).reshape(3)
    t_gt = np.asarray(t_gt_meters, dtype=np.float64).reshape(3)
    mag = np.linalg.norm(t_gt)
    if mag == 0.0:
        raise UnsupportedMetricError("ground-truth translation has no magnitude")
    n_est = np.linalg.norm(t_est)
    if n_est == 0.0:
        raise ValueError("estimated translation must be nonzero")
    direction = t_est / n_est
    if float(direction @ t_gt) < 0.0:
        direction = -direction
    return float(np.linalg.norm(direction * mag - t_gt))
