"""Image file decode/encode (Pillow-backed).

Kept out of the in-memory data model on purpose: everything below the CLI
works on arrays, and external workers receive file paths.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .imageops import to_grayscale


def load_grayscale(path: str | Path) -> np.ndarray:
    """Decode an image file to float64 grayscale in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return to_grayscale(arr)


def save_grayscale(img: np.ndarray, path: str | Path) -> None:
    """Encode a [0, 1] grayscale array as an 8-bit image file."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="L").save(path)
