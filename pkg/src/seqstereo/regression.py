"""Disparity regression and candidate generation.

The regressor takes, per pixel, the K best candidates by score
(score = minus cost), softmax-normalises those scores, and returns the
weighted mean of the shifted candidates d + o.  Next-stage candidates
come from deterministic quantiles of a unit-variance normal around the
upsampled prediction, truncated to +-beta stage pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .aggregation import OffsetVolume
from .costvolume import CandidateVolume
from .tensorops import resample_bilinear


@dataclass
class DisparityMap:
    """Disparity values in full-resolution pixels on a grid at ``scale``
    times the full resolution."""

    values: np.ndarray  # (H, W)
    scale: float = 1.0
    valid: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"disparity map must be 2-d, got {self.values.shape}")


def regress_topk(
    final_cost: np.ndarray,
    cands: CandidateVolume,
    offsets: OffsetVolume,
    k: int,
    max_disparity: float,
    return_grads: bool = False,
):
    """Softmax-weighted mean of the K best shifted candidates.

    Per pixel: select the K largest values of -cost (ties broken toward
    the lower candidate index), softmax-normalise them, and output
    sum((d + o) * weight), clamped to [0, max_disparity].

    With ``return_grads`` also returns (d_out/d_cost, d_out/d_offset),
    both (H, W, n) and zero outside the selected candidates (and where
    the clamp is active).
    """
    scores = -np.asarray(final_cost, dtype=np.float64)
    n = scores.shape[-1]
    if n == 0:
        raise ValueError("empty candidate axis")
    if not 1 <= k <= n:
        raise ValueError(f"top-k must satisfy 1 <= k <= {n}, got {k}")

    order = np.argsort(-scores, axis=-1, kind="stable")
    top = order[..., :k]
    sel_scores = np.take_along_axis(scores, top, axis=-1)
    sel_vals = np.take_along_axis(cands.values + offsets.offsets, top, axis=-1)

    shifted = sel_scores - sel_scores.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    w = ex / ex.sum(axis=-1, keepdims=True)
    raw = (w * sel_vals).sum(axis=-1)
    out = np.clip(raw, 0.0, max_disparity)
    dmap = DisparityMap(values=out, scale=cands.scale)
    if not return_grads:
        return dmap

    live = ((raw > 0.0) & (raw < max_disparity)).astype(np.float64)[..., None]
    # d out / d offset_j = w_j ; d out / d cost_j = w_j * (out - (d_j + o_j))
    g_off_sel = w * live
    g_cost_sel = w * (raw[..., None] - sel_vals) * live
    grad_cost = np.zeros_like(scores)
    grad_off = np.zeros_like(scores)
    np.put_along_axis(grad_cost, top, g_cost_sel, axis=-1)
    np.put_along_axis(grad_off, top, g_off_sel, axis=-1)
    return dmap, grad_cost, grad_off


def upsample_disparity(
    d: DisparityMap,
    mode: str,
    weights: np.ndarray | None = None,
) -> DisparityMap:
    """Upsample a disparity map without rescaling its values.

    ``convex``: double the resolution; every fine pixel is a convex
    combination of the 3x3 coarse neighbourhood around its parent,
    using 9 softmax-normalised weights per fine pixel (default:
    center delta, i.e. parent copy).

    ``superpixel``: bilinearly resample to full resolution, then take a
    per-pixel weighted average over the 3x3 neighbourhood (default
    weights again the center delta).
    """
    if mode == "convex":
        return _convex_double(d, weights)
    if mode == "superpixel":
        return _superpixel_full(d, weights)
    raise ValueError(f"unknown upsampling mode {mode!r}")


def _convex_double(d: DisparityMap, weights: np.ndarray | None) -> DisparityMap:
    h, w = d.values.shape
    oh, ow = 2 * h, 2 * w
    out = _neighborhood_average(np.repeat(np.repeat(d.values, 2, 0), 2, 1),
                                weights, (oh, ow), coarse=d.values)
    return DisparityMap(values=out, scale=d.scale * 2.0)


def _superpixel_full(d: DisparityMap, weights: np.ndarray | None) -> DisparityMap:
    h, w = d.values.shape
    oh = round(h / d.scale)
    ow = round(w / d.scale)
    fine = resample_bilinear(d.values, oh, ow)
    out = _neighborhood_average(fine, weights, (oh, ow), coarse=None)
    return DisparityMap(values=out, scale=1.0)


def _neighborhood_average(fine: np.ndarray, weights: np.ndarray | None,
                          out_shape: tuple[int, int],
                          coarse: np.ndarray | None) -> np.ndarray:
    """3x3 weighted average.  For the convex mode ``coarse`` holds the
    source grid and neighbours step in coarse pixels; otherwise
    neighbours step on the fine grid itself.  Border neighbourhoods are
    renormalised over the in-bounds taps to stay convex."""
    oh, ow = out_shape
    if weights is None:
        if coarse is None:
            return fine.copy()
        weights = np.zeros((oh, ow, 9))
        weights[..., 4] = 1.0
    if weights.shape != (oh, ow, 9):
        raise ValueError(f"need per-pixel 3x3 weights {(oh, ow, 9)}, got {weights.shape}")

    num = np.zeros(out_shape)
    den = np.zeros(out_shape)
    ii, jj = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    for tap in range(9):
        dy, dx = tap // 3 - 1, tap % 3 - 1
        if coarse is not None:
            src_i = ii // 2 + dy
            src_j = jj // 2 + dx
            grid = coarse
        else:
            src_i = ii + dy
            src_j = jj + dx
            grid = fine
        ok = (src_i >= 0) & (src_i < grid.shape[0]) & (src_j >= 0) & (src_j < grid.shape[1])
        vals = grid[np.clip(src_i, 0, grid.shape[0] - 1),
                    np.clip(src_j, 0, grid.shape[1] - 1)]
        wtap = weights[..., tap] * ok
        num += wtap * vals
        den += wtap
    fallback = fine
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), fallback)


def truncated_normal_quantiles(n: int, beta: float) -> np.ndarray:
    """Quantiles (i + 0.5)/n of a unit normal truncated to [-beta, beta]."""
    if n < 1:
        raise ValueError("need at least one quantile")
    if beta <= 0:
        raise ValueError(f"truncation half-width must be positive, got {beta}")
    q = (np.arange(n) + 0.5) / n
    lo, hi = ndtr(-beta), ndtr(beta)
    return ndtri(lo + q * (hi - lo))


def sample_candidates(
    d_up: DisparityMap,
    n: int,
    beta: float,
    stage_scale: float,
    max_disparity: float,
) -> CandidateVolume:
    """Candidate hypotheses around an upsampled prediction.

    Quantile offsets are computed in the target stage's pixel units
    (unit variance, truncated to +-beta) and converted back to
    full-resolution pixels, then clamped to [0, max_disparity].
    """
    offsets_stage = truncated_normal_quantiles(n, beta)
    center_stage = d_up.values * stage_scale
    cands_stage = center_stage[..., None] + offsets_stage
    values = np.clip(cands_stage / stage_scale, 0.0, max_disparity)
    return CandidateVolume(values=values, scale=stage_scale)


def init_candidates(
    max_disparity: float,
    n: int,
    shape: tuple[int, int],
    stage_scale: float = 1 / 16,
) -> CandidateVolume:
    """Spatially constant first-stage candidates at the centers of n
    uniform bins over [0, max_disparity]."""
    if n < 1:
        raise ValueError("need at least one candidate")
    centers = (np.arange(n) + 0.5) * (max_disparity / n)
    values = np.broadcast_to(centers, shape + (n,)).copy()
    return CandidateVolume(values=values, scale=stage_scale)
