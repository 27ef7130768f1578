"""Sparse cost volume construction.

A candidate volume holds a small per-pixel set of disparity hypotheses
(always in full-resolution pixel units); a cost volume holds matching
scores for those hypotheses.  Two kinds of evidence are combined:
feature concatenation (left features stacked with horizontally sampled
right features) and multi-level group-wise correlation, where features
are additionally downsampled by 1, 2 and 4 to pull in non-local
context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import block_mean
from .tensorops import concat_axis, resample_bilinear


@dataclass
class CandidateVolume:
    """Per-pixel disparity hypotheses in full-resolution pixels."""

    values: np.ndarray  # (H, W, n)
    scale: float        # grid scale relative to full resolution (1/16, 1/8, 1/4)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] < 1:
            raise ValueError(f"candidate volume needs shape (H, W, n>=1), got {self.values.shape}")

    @property
    def count(self) -> int:
        return self.values.shape[2]


@dataclass
class CostVolume:
    """Matching costs aligned with a candidate volume.

    The leading ``concat_channels`` channels come from feature
    concatenation; the remaining channels are correlation scores
    (higher = better match).
    """

    costs: np.ndarray  # (Ch, H, W, n)
    candidates: CandidateVolume
    concat_channels: int = 0

    def __post_init__(self) -> None:
        if self.costs.shape[1:] != self.candidates.values.shape:
            raise ValueError(
                f"cost trailing axes {self.costs.shape[1:]} do not match "
                f"candidates {self.candidates.values.shape}")

    @property
    def correlation(self) -> np.ndarray:
        return self.costs[self.concat_channels:]


def sample_right(features: np.ndarray, cands: CandidateVolume,
                 level_factor: int = 1) -> np.ndarray:
    """Sample right-image features at u - d * scale per candidate.

    ``features`` is (C, h, w) at the candidate grid downsampled by
    ``level_factor``.  Horizontal linear interpolation; out-of-bounds
    taps contribute zero.
    """
    c, h, w = features.shape
    values = cands.values
    if level_factor != 1:
        values = block_mean(np.moveaxis(values, 2, 0), level_factor)
        values = np.moveaxis(values, 0, 2)
    if values.shape[:2] != (h, w):
        raise ValueError(f"feature grid {(h, w)} does not match candidates {values.shape[:2]}")

    u = np.arange(w, dtype=np.float64)[None, :, None]
    x = u - values * (cands.scale / level_factor)
    x0 = np.floor(x)
    frac = x - x0
    x0 = x0.astype(np.intp)
    x1 = x0 + 1
    ok0 = (x0 >= 0) & (x0 < w)
    ok1 = (x1 >= 0) & (x1 < w)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x1, 0, w - 1)

    rows = np.arange(h)[:, None, None]
    g0 = features[:, rows, x0c]
    g1 = features[:, rows, x1c]
    return g0 * ((1 - frac) * ok0)[None] + g1 * (frac * ok1)[None]


def concat_cost(left_feat: np.ndarray, right_feat: np.ndarray,
                cands: CandidateVolume) -> CostVolume:
    """Concatenation cost: per candidate, left features stacked with the
    sampled right features -> (2C, H, W, n)."""
    if left_feat.shape != right_feat.shape:
        raise ValueError("left/right feature shapes differ")
    sampled = sample_right(right_feat, cands)
    left_part = np.broadcast_to(left_feat[..., None], sampled.shape)
    costs = concat_axis([left_part, sampled], axis=0)
    return CostVolume(costs=costs, candidates=cands, concat_channels=costs.shape[0])


def groupwise_multilevel_cost(
    left_feat: np.ndarray,
    right_feat: np.ndarray,
    cands: CandidateVolume,
    groups_per_level: int | None = None,
    level_factors: tuple[int, ...] = (1, 2, 4),
) -> CostVolume:
    """Group-wise correlation at several feature-resolution levels.

    Features are downsampled by each level factor, channels are split
    into G groups, and each group's cost is the inner product of left
    and sampled right features normalised by the group width.  Level
    costs are bilinearly upsampled back to the candidate grid and
    stacked: (len(levels) * G, H, W, n).
    """
    c, h, w = left_feat.shape
    groups = groups_per_level if groups_per_level is not None else max(1, c // 8)
    if c % groups != 0:
        raise ValueError(f"{c} channels not divisible into {groups} groups")

    per_level = []
    for factor in level_factors:
        fl = block_mean(left_feat, factor)
        fr = block_mean(right_feat, factor)
        sampled = sample_right(fr, cands, level_factor=factor)
        hw = fl.shape[1:]
        lg = fl.reshape(groups, c // groups, *hw, 1)
        rg = sampled.reshape(groups, c // groups, *hw, sampled.shape[-1])
        corr = (groups / c) * (lg * rg).sum(axis=1)  # (G, h_f, w_f, n)
        if factor != 1:
            corr = np.moveaxis(corr, 3, 1)
            corr = resample_bilinear(corr, h, w)
            corr = np.moveaxis(corr, 1, 3)
        per_level.append(corr)
    costs = concat_axis(per_level, axis=0)
    return CostVolume(costs=costs, candidates=cands, concat_channels=0)


def assemble_cost(concat_part: CostVolume | None, gwc_part: CostVolume | None) -> CostVolume:
    """Stack concatenation and correlation costs on the channel axis,
    concatenation first.  Either part may be absent."""
    if concat_part is None and gwc_part is None:
        raise ValueError("nothing to assemble")
    if concat_part is None:
        return gwc_part
    if gwc_part is None:
        return concat_part
    if concat_part.costs.shape[1:] != gwc_part.costs.shape[1:]:
        raise ValueError("concat and correlation parts disagree on trailing axes")
    costs = concat_axis([concat_part.costs, gwc_part.costs], axis=0)
    return CostVolume(costs=costs, candidates=concat_part.candidates,
                      concat_channels=concat_part.costs.shape[0])
