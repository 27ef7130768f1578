"""Training-objective terms with analytic gradients, plus the central
finite-difference harness used to verify every hand-written gradient in
this package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .aggregation import OffsetVolume
from .costvolume import CandidateVolume


@dataclass(frozen=True)
class LossConfig:
    """Loss weighting.  ``stage_weights`` holds (w0, w1, w2, w3): w0
    weights the native third-stage map, w1..w3 the upsampled maps of
    stages 1..3.  ``alpha`` is the floor added to the matching
    probability in the offset loss so that even near-zero-probability
    candidates keep learning."""

    stage_weights: tuple[float, float, float, float] = (1.0, 0.5, 0.7, 2.0)
    final_weight: float = 2.0
    alpha: float = 0.25

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.stage_weights) or self.final_weight < 0 or self.alpha < 0:
            raise ValueError("loss weights must be non-negative")


def smooth_l1(x: np.ndarray) -> np.ndarray:
    """0.5 x^2 inside |x| < 1, |x| - 0.5 outside."""
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_grad(x: np.ndarray) -> np.ndarray:
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def huber_loss_total(
    stage1_up: np.ndarray,
    stage2_up: np.ndarray,
    stage3: np.ndarray,
    stage3_up: np.ndarray,
    gt: np.ndarray,
    valid: np.ndarray,
    config: LossConfig | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Smooth-L1 disparity loss over the four predictions.

    All predictions must already be at full resolution (bilinearly
    upsampled by the caller).  Returns the scalar loss and the gradient
    with respect to each prediction.
    """
    config = config or LossConfig()
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid ground-truth pixels")
    w0, w1, w2, w3 = config.stage_weights
    terms = {"stage3": (w0, stage3), "stage1_up": (w1, stage1_up),
             "stage2_up": (w2, stage2_up), "stage3_up": (w3, stage3_up)}
    loss = 0.0
    grads: dict[str, np.ndarray] = {}
    for name, (weight, pred) in terms.items():
        if pred.shape != gt.shape:
            raise ValueError(f"{name} has shape {pred.shape}, ground truth {gt.shape}")
        err = gt - pred
        loss += weight * float(smooth_l1(err)[valid].sum()) / n
        grads[name] = np.where(valid, -weight * smooth_l1_grad(err) / n, 0.0)
    return loss, grads


def wasserstein_offset_loss(
    stages: Sequence[tuple[CandidateVolume, OffsetVolume, np.ndarray, np.ndarray, np.ndarray]],
    config: LossConfig | None = None,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Offset-supervision loss over up to three stages.

    Each stage entry is (candidates, offsets, final_cost, gt, valid)
    with ground truth already downsampled to the stage grid.  Per pixel
    the loss sums |d + o - gt| * (softmax(-cost) + alpha) over all
    candidates; stage s is weighted by stage_weights[s] / N_valid.
    Returns the scalar and per-stage gradients (d_offsets, d_costs).
    """
    config = config or LossConfig()
    loss = 0.0
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for s, (cands, offsets, final_cost, gt, valid) in enumerate(stages, start=1):
        weight = config.stage_weights[s]
        n = int(valid.sum())
        if n == 0:
            raise ValueError(f"stage {s}: no valid ground-truth pixels")
        sigma = _softmax(-final_cost)
        err = cands.values + offsets.offsets - gt[..., None]
        abs_err = np.abs(err)
        prob = sigma + config.alpha
        loss += weight * float((abs_err * prob)[valid].sum()) / n

        scale = weight / n
        g_off = np.where(valid[..., None], scale * np.sign(err) * prob, 0.0)
        inner = (abs_err * sigma).sum(axis=-1, keepdims=True)
        g_cost = np.where(valid[..., None], scale * sigma * (inner - abs_err), 0.0)
        grads.append((g_off, g_cost))
    return loss, grads


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def total_loss(huber: float, wasserstein: float, config: LossConfig | None = None) -> float:
    config = config or LossConfig()
    return huber + config.final_weight * wasserstein


def downsample_gt(gt: np.ndarray, valid: np.ndarray, factor: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Average-pool ground truth over valid pixels only; blocks without
    any valid pixel come back invalid."""
    rows = np.arange(0, gt.shape[0], factor)
    cols = np.arange(0, gt.shape[1], factor)

    def block_sum(a):
        return np.add.reduceat(np.add.reduceat(a, rows, axis=0), cols, axis=1)

    sums = block_sum(np.where(valid, gt, 0.0))
    counts = block_sum(valid.astype(np.float64))
    ok = counts > 0
    return np.where(ok, sums / np.where(ok, counts, 1.0), 0.0), ok


def finite_difference_check(
    fn: Callable[..., tuple[float, Sequence[np.ndarray]]],
    inputs: Sequence[np.ndarray],
    step: float = 1e-4,
) -> float:
    """Max relative error between analytic gradients and central
    finite differences.

    ``fn(*inputs)`` must return (scalar value, gradients matching the
    inputs).  The relative error denominator is floored at 1e-12.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    value, grads = fn(*inputs)
    if not np.isfinite(value):
        raise ValueError("objective is not finite at the test point")

    worst = 0.0
    for arg, grad in zip(inputs, grads):
        flat = arg.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus, _ = fn(*inputs)
            flat[i] = orig - step
            f_minus, _ = fn(*inputs)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(fd), abs(gflat[i]), 1e-12)
            worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst
