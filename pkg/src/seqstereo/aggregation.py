"""Cost aggregation: spatial smoothing, the statistics-based fusion
module (which also merges warped past costs in temporal mode), and the
prediction heads that emit the final cost volume and per-candidate
offsets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costvolume import CandidateVolume, CostVolume
from .tensorops import concat_axis, pool


@dataclass
class OffsetVolume:
    """Per-candidate disparity corrections, full-resolution pixels."""

    offsets: np.ndarray  # (H, W, n)

    def __post_init__(self) -> None:
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if self.offsets.ndim != 3:
            raise ValueError(f"offset volume needs shape (H, W, n), got {self.offsets.shape}")


def spatial_smooth(cv: CostVolume, radius: int = 1, mode: str = "box") -> CostVolume:
    """Separable smoothing over the two spatial axes, per channel and
    candidate.  Windows are truncated and renormalised at the borders;
    radius 0 is the identity."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return cv
    if mode == "box":
        k = 2 * radius + 1
        smoothed = pool(cv.costs, "avg", (1, k, k, 1))
    elif mode == "gaussian":
        taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / max(radius / 2.0, 0.5)) ** 2)
        smoothed = _axis_filter(cv.costs, taps, axis=1)
        smoothed = _axis_filter(smoothed, taps, axis=2)
    else:
        raise ValueError(f"unknown smoothing mode {mode!r}")
    return CostVolume(costs=smoothed, candidates=cv.candidates,
                      concat_channels=cv.concat_channels)


def _axis_filter(x: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate along one axis with border truncation + renormalisation."""
    half = len(taps) // 2
    n = x.shape[axis]
    moved = np.moveaxis(x, axis, 0)
    out = np.zeros_like(moved)
    den = np.zeros((n,) + (1,) * (x.ndim - 1))
    for i, tap in enumerate(taps):
        off = i - half
        lo, hi = max(0, off), min(n, n + off)
        out[lo - off : hi - off] += tap * moved[lo:hi]
        den[lo - off : hi - off] += tap
    return np.moveaxis(out / den, 0, axis)


@dataclass(frozen=True)
class FusionConfig:
    """Mixing configuration for :func:`statistical_fusion`.

    ``branch_weights`` blends (identity, candidate-axis 5-tap mix,
    5x5x5 average pool, 5x5x5 max pool); the default selects the
    identity branch, which reproduces the input exactly.  ``past_gain``
    attenuates appended past-cost scores so that a stale cached match
    never outranks an equally good current one.
    """

    branch_weights: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    candidate_taps: tuple[float, ...] = (1 / 9, 2 / 9, 3 / 9, 2 / 9, 1 / 9)
    past_gain: float = 0.9


def statistical_fusion(
    cv: CostVolume,
    past: CostVolume | None = None,
    config: FusionConfig | None = None,
) -> CostVolume:
    """Candidate-axis merge of past costs plus global cost statistics.

    When ``past`` is given, its candidates (and cost scores, tiled to
    the current channel count and scaled by ``past_gain``) are appended
    along the candidate axis.  Four parallel branches -- identity,
    5-tap candidate mixing, average pooling and max pooling -- are then
    blended with ``branch_weights``.
    """
    config = config or FusionConfig()
    x = cv.costs
    cands = cv.candidates
    concat_ch = cv.concat_channels
    if past is not None:
        if past.costs.shape[1:3] != x.shape[1:3]:
            raise ValueError(
                f"past costs spatial size {past.costs.shape[1:3]} does not match {x.shape[1:3]}")
        extra = past.costs * config.past_gain
        if extra.shape[0] == 1 and x.shape[0] > 1:
            extra = np.broadcast_to(extra, (x.shape[0],) + extra.shape[1:])
        elif extra.shape[0] != x.shape[0]:
            raise ValueError(f"cannot merge {extra.shape[0]} past channels into {x.shape[0]}")
        x = concat_axis([x, extra], axis=3)
        cands = CandidateVolume(
            values=concat_axis([cands.values, past.candidates.values], axis=2),
            scale=cands.scale)

    weights = config.branch_weights
    out = np.zeros_like(x)
    if weights[0] != 0.0:
        out += weights[0] * x
    if weights[1] != 0.0:
        out += weights[1] * _axis_filter(x, np.asarray(config.candidate_taps), axis=3)
    if weights[2] != 0.0:
        out += weights[2] * pool(x, "avg", (1, 5, 5, 5))
    if weights[3] != 0.0:
        out += weights[3] * pool(x, "max", (1, 5, 5, 5))
    return CostVolume(costs=out, candidates=cands, concat_channels=concat_ch)


def predict_heads(
    cv_agg: CostVolume,
    mode: str = "handcrafted",
    weights: dict[str, np.ndarray] | None = None,
) -> tuple[np.ndarray, OffsetVolume]:
    """Final cost volume and offset volume from the aggregated costs.

    Handcrafted mode: the final cost is minus the mean over correlation
    channels (so lower cost = stronger correlation) and offsets are
    zero, which makes the untrained pipeline behave as classical
    correlation matching.  Loaded mode applies per-channel linear maps
    from a weight file ("cost_head.weight"/"bias",
    "offset_head.weight"/"bias").
    """
    costs = cv_agg.costs
    n_shape = costs.shape[1:]
    if mode == "handcrafted":
        corr = cv_agg.correlation
        if corr.shape[0] == 0:
            corr = costs
        final = -corr.mean(axis=0)
        return final, OffsetVolume(np.zeros(n_shape))
    if mode == "loaded":
        if weights is None:
            raise ValueError("loaded mode requires a weight dictionary")
        final = _linear_head(costs, weights, "cost_head")
        off = _linear_head(costs, weights, "offset_head")
        return final, OffsetVolume(off)
    raise ValueError(f"unknown head mode {mode!r}")


def _linear_head(costs: np.ndarray, weights: dict[str, np.ndarray], name: str) -> np.ndarray:
    try:
        w = np.asarray(weights[f"{name}.weight"], dtype=np.float64)
        b = float(np.asarray(weights[f"{name}.bias"]).reshape(()))
    except KeyError as exc:
        raise ValueError(f"weight file is missing {exc.args[0]!r}") from None
    if w.shape != (costs.shape[0],):
        raise ValueError(
            f"{name}.weight has shape {w.shape}, expected ({costs.shape[0]},)")
    return np.einsum("c,chwn->hwn", w, costs) + b
