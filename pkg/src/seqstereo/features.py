"""Multi-scale matching features without a learned backbone.

Three pluggable extractors stand in for a trained encoder: census sign
descriptors (default; contrast-invariant and sharp at integer shifts),
mean-removed raw patches, and a seeded random projection of those
patches.  Descriptor values carry a ``gain`` factor that sets the
magnitude of downstream correlation scores and hence the sharpness of
the softmax disparity regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorops import concat_axis, resample_bilinear

PYRAMID_SCALES = (1 / 4, 1 / 8, 1 / 16)


@dataclass
class PyramidLevel:
    scale: float
    left: np.ndarray   # (C, H*scale, W*scale)
    right: np.ndarray


@dataclass
class FeaturePyramid:
    levels: list[PyramidLevel]  # scales strictly decreasing: 1/4, 1/8, 1/16

    def at_scale(self, scale: float) -> PyramidLevel:
        for level in self.levels:
            if abs(level.scale - scale) < 1e-12:
                return level
        raise KeyError(f"no pyramid level at scale {scale}")


@dataclass
class FeatureCache:
    """Backbone features of the previous processed frame (coarsest level)."""

    left: np.ndarray
    right: np.ndarray
    frame_index: int


def build_pyramid(
    left: np.ndarray,
    right: np.ndarray,
    extractor: str = "census",
    seed: int = 0,
    gain: float = 1.0,
    window: int = 5,
    out_channels: int = 16,
) -> FeaturePyramid:
    """Extract left/right features at 1/4, 1/8 and 1/16 resolution.

    Images are downsampled by block averaging before description, so
    each level matches at its own pixel granularity.  Deterministic for
    a given (extractor, seed).
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape or left.ndim != 2:
        raise ValueError(f"need equal-size 2-d images, got {left.shape} and {right.shape}")
    h, w = left.shape
    if h < 16 or w < 16:
        raise ValueError(f"image {h}x{w} is smaller than 16x16")

    levels = []
    for scale in PYRAMID_SCALES:
        factor = round(1 / scale)
        dl = block_mean(left, factor)
        dr = block_mean(right, factor)
        levels.append(PyramidLevel(
            scale=scale,
            left=_describe(dl, extractor, seed, gain, window, out_channels),
            right=_describe(dr, extractor, seed, gain, window, out_channels),
        ))
    return FeaturePyramid(levels=levels)


def _describe(img, extractor, seed, gain, window, out_channels):
    if extractor == "census":
        return gain * census_descriptor(img, window)
    if extractor == "patch":
        patches = _patch_stack(img, window)
        return gain * (patches - patches.mean(axis=0, keepdims=True))
    if extractor == "random-projection":
        patches = _patch_stack(img, window)
        patches -= patches.mean(axis=0, keepdims=True)
        rng = np.random.default_rng(seed)
        proj = rng.normal(size=(out_channels, patches.shape[0])) / np.sqrt(patches.shape[0])
        return gain * np.einsum("oc,chw->ohw", proj, patches)
    raise ValueError(f"unknown extractor {extractor!r}")


def census_descriptor(img: np.ndarray, window: int = 5) -> np.ndarray:
    """(window^2 - 1, H, W) sign comparisons of each neighbour against the
    window center; out-of-image neighbours compare as equal, so a
    constant image yields all-zero descriptors."""
    if window % 2 == 0 or window < 3:
        raise ValueError(f"census window must be odd and >= 3, got {window}")
    h, w = img.shape
    half = window // 2
    out = np.zeros((window * window - 1, h, w))
    ch = 0
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            if dy == dx == 0:
                continue
            shifted, inside = _shift(img, dy, dx)
            out[ch] = np.where(inside, np.sign(shifted - img), 0.0)
            ch += 1
    return out


def _patch_stack(img: np.ndarray, window: int) -> np.ndarray:
    h, w = img.shape
    half = window // 2
    out = np.zeros((window * window, h, w))
    ch = 0
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            shifted, _ = _shift(img, dy, dx)
            out[ch] = shifted
            ch += 1
    return out


def _shift(img: np.ndarray, dy: int, dx: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = img.shape
    shifted = np.zeros_like(img)
    inside = np.zeros((h, w), dtype=bool)
    ys, yd = (slice(dy, h), slice(0, h - dy)) if dy >= 0 else (slice(0, h + dy), slice(-dy, h))
    xs, xd = (slice(dx, w), slice(0, w - dx)) if dx >= 0 else (slice(0, w + dx), slice(-dx, w))
    shifted[yd, xd] = img[ys, xs]
    inside[yd, xd] = True
    return shifted, inside


def block_mean(img: np.ndarray, factor: int) -> np.ndarray:
    """Downsample by averaging factor x factor blocks (ragged tails allowed)."""
    if factor == 1:
        return img.astype(np.float64, copy=True)
    h, w = img.shape[-2:]
    rows = np.arange(0, h, factor)
    cols = np.arange(0, w, factor)
    sums = np.add.reduceat(np.add.reduceat(img, rows, axis=-2), cols, axis=-1)
    rn = np.minimum(rows + factor, h) - rows
    cn = np.minimum(cols + factor, w) - cols
    return sums / np.multiply.outer(rn, cn)


def decode_stage(
    prev: np.ndarray | None,
    backbone: np.ndarray,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Per-stage feature decoding: upsample the previous stage's features
    by 2, concatenate on channels, and optionally apply a linear channel
    mix.  With ``weights=None`` the concatenation passes through
    unchanged (identity mix)."""
    if prev is None:
        x = backbone
    else:
        if prev.shape[1] * 2 != backbone.shape[1] or prev.shape[2] * 2 != backbone.shape[2]:
            raise ValueError(
                f"previous stage {prev.shape} is not half the size of backbone {backbone.shape}")
        up = resample_bilinear(prev, backbone.shape[1], backbone.shape[2])
        x = concat_axis([up, backbone], axis=0)
    if weights is None:
        return x
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ValueError(f"channel mix {weights.shape} does not match {x.shape[0]} channels")
    return np.einsum("oc,chw->ohw", weights, x)


def identity_mix(out_channels: int, in_channels: int) -> np.ndarray:
    """Identity-extended channel mix: square identity, truncated or
    zero-padded to the requested output width."""
    return np.eye(out_channels, in_channels)


def temporal_shift(current: np.ndarray, cache: np.ndarray | None,
                   fraction: float) -> np.ndarray:
    """Replace the first floor(C * fraction) channels with the cached
    previous-frame channels; identity when no cache is present."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"shift fraction must be in [0, 1], got {fraction}")
    if cache is None:
        return current
    if cache.shape != current.shape:
        raise ValueError(f"cache shape {cache.shape} does not match {current.shape}")
    k = int(current.shape[0] * fraction)
    if k == 0:
        return current
    out = current.copy()
    out[:k] = cache[:k]
    return out
