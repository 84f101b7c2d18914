"""Grayscale raster helpers shared by the matchers and the pipeline.

Images are float64 arrays of shape (height, width) with values in [0, 1].
Resizing samples corner-anchored: content at (x, y) lands at exactly
(s*x, s*y) in the resized raster, matching the keypoint transforms in
``core``. Decoding/encoding of image files lives in the CLI layer.
"""

from __future__ import annotations

import numpy as np

from .core import CropBox, resized_dims


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """RGB(A) uint8/float to float64 grayscale in [0, 1]."""
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3:
        arr = arr[..., :3] @ np.array([0.299, 0.587, 0.114])
    return np.clip(arr, 0.0, 1.0)


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample the image at float coordinates with edge clamping."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def resize_longest(img: np.ndarray, longest_dim: int) -> tuple[np.ndarray, float]:
    """Resize so the longest side equals ``longest_dim``; returns (image, scale).

    Keypoints map between frames via the exact float scale, independent of
    the rounded output dimensions.
    """
    h, w = img.shape
    out_w, out_h = resized_dims(w, h, longest_dim)
    scale = float(longest_dim) / float(max(w, h))
    if out_w == w and out_h == h:
        return img.copy(), scale
    xs = np.arange(out_w, dtype=np.float64) / scale
    ys = np.arange(out_h, dtype=np.float64) / scale
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(img, gx, gy), scale


def round_rect(box: CropBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Whole-pixel crop rectangle (x0, y0, x1, y1) for a float box.

    Each edge rounds half-up to the nearest pixel boundary, so the rect
    stays within half a pixel of the requested box (matches mapped back
    from a crop can then never drift beyond the box by more than the
    border clamp tolerance). Degenerate rounding is widened to one pixel.
    """
    x0 = min(max(0, int(np.floor(box.x_min + 0.5))), width - 1)
    y0 = min(max(0, int(np.floor(box.y_min + 0.5))), height - 1)
    x1 = max(min(width, int(np.floor(box.x_max + 0.5))), x0 + 1)
    y1 = max(min(height, int(np.floor(box.y_max + 0.5))), y0 + 1)
    return x0, y0, x1, y1


def crop_slice(img: np.ndarray, box: CropBox) -> tuple[np.ndarray, tuple[int, int]]:
    """Naive array-slicing crop; returns the view and its integer origin."""
    h, w = img.shape
    x0, y0, x1, y1 = round_rect(box, w, h)
    return img[y0:y1, x0:x1], (x0, y0)
