"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Coerce to a finite 2-d float64 array; RGB inputs are converted to
    luma."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        img = img @ np.array([0.299, 0.587, 0.114])
    if img.ndim != 2:
        raise ValueError(f"{name} must be 2-d grayscale, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError(f"{name} contains non-finite values")
    return img


def check_stereo_pair(left: np.ndarray, right: np.ndarray,
                      divisor: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Validate a rectified pair: equal shapes, at least 16x16, and both
    axes divisible by ``divisor`` (three resolution halvings)."""
    left = check_image(left, "left image")
    right = check_image(right, "right image")
    if left.shape != right.shape:
        raise ValueError(f"image sizes differ: {left.shape} vs {right.shape}")
    h, w = left.shape
    if h < 16 or w < 16:
        raise ValueError(f"images must be at least 16x16, got {h}x{w}")
    if h % divisor or w % divisor:
        raise ValueError(f"image size {h}x{w} is not divisible by {divisor}")
    return left, right
