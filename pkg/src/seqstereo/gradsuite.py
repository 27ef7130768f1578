"""Randomised gradient verification for every hand-written gradient:
top-K regression, softmax splatting, and both loss terms.

Test points are drawn away from the known non-smooth sets (top-K
selection ties, the |x| = 1 kink of the smooth-L1, zero offset error,
and the regression clamp), where the analytic gradients are exact.
"""

from __future__ import annotations

import numpy as np

from .aggregation import OffsetVolume
from .costvolume import CandidateVolume
from .losses import (LossConfig, finite_difference_check, huber_loss_total,
                     wasserstein_offset_loss)
from .regression import regress_topk
from .temporal import splat_forward

_TIE_GAP = 0.05


def check_regression(seed: int, step: float = 1e-4, k: int = 2) -> float:
    rng = np.random.default_rng(seed)
    h, w, n = 2, 3, 6
    cands = CandidateVolume(rng.uniform(30.0, 60.0, (h, w, n)), scale=1 / 8)
    offsets = rng.uniform(-1.0, 1.0, (h, w, n))
    costs = _well_separated(rng, (h, w, n), k)
    mix = rng.normal(size=(h, w))

    def fn(c, o):
        dmap, g_cost, g_off = regress_topk(c, cands, OffsetVolume(o), k,
                                           max_disparity=192.0, return_grads=True)
        value = float((mix * dmap.values).sum())
        return value, [mix[..., None] * g_cost, mix[..., None] * g_off]

    return finite_difference_check(fn, [costs, offsets], step)


def _well_separated(rng, shape, k):
    """Random costs whose k-th/(k+1)-th score gap stays well away from a
    top-K selection tie."""
    while True:
        costs = rng.normal(0.0, 2.0, shape)
        s = np.sort(-costs, axis=-1)[..., ::-1]
        gaps = s[..., :-1] - s[..., 1:]
        if gaps[..., k - 1].min() > _TIE_GAP:
            return costs


def check_splatting(seed: int, step: float = 1e-4) -> float:
    rng = np.random.default_rng(seed)
    src = (3, 4)
    out_shape = (5, 6)
    values = rng.normal(size=(2,) + src)
    importance = rng.normal(size=src)
    targets = np.stack([rng.uniform(0.2, out_shape[1] - 1.2, src),
                        rng.uniform(0.2, out_shape[0] - 1.2, src)], axis=-1)
    mix = rng.normal(size=(2,) + out_shape)

    def fn(v, imp):
        out, mask, vjp = splat_forward(v, targets, imp, out_shape, return_vjp=True)
        g = np.where(mask[None], mix, 0.0)
        value = float((g * out).sum())
        gv, gi = vjp(mix)
        return value, [gv, gi]

    return finite_difference_check(fn, [values, importance], step)


def check_huber(seed: int, step: float = 1e-4) -> float:
    rng = np.random.default_rng(seed)
    shape = (4, 5)
    gt = rng.uniform(5.0, 20.0, shape)
    valid = rng.uniform(size=shape) < 0.8
    valid.flat[0] = True
    preds = [_away_from_kink(rng, gt) for _ in range(4)]

    def fn(p1, p2, p3, p3u):
        loss, grads = huber_loss_total(p1, p2, p3, p3u, gt, valid)
        return loss, [grads["stage1_up"], grads["stage2_up"],
                      grads["stage3"], grads["stage3_up"]]

    return finite_difference_check(fn, preds, step)


def _away_from_kink(rng, gt):
    """Prediction whose per-pixel error keeps |gt - pred| away from the
    smooth-L1 kink at 1."""
    while True:
        pred = gt + rng.normal(0.0, 2.0, gt.shape)
        if (np.abs(np.abs(gt - pred) - 1.0) > _TIE_GAP).all():
            return pred


def check_wasserstein(seed: int, step: float = 1e-4) -> float:
    rng = np.random.default_rng(seed)
    h, w, n = 3, 3, 5
    gt = rng.uniform(10.0, 30.0, (h, w))
    valid = np.ones((h, w), dtype=bool)
    cands = CandidateVolume(rng.uniform(8.0, 32.0, (h, w, n)), scale=1 / 8)
    costs = rng.normal(0.0, 1.5, (h, w, n))
    while True:
        offsets = rng.uniform(-2.0, 2.0, (h, w, n))
        err = cands.values + offsets - gt[..., None]
        if (np.abs(err) > _TIE_GAP).all():
            break

    def fn(o, c):
        loss, grads = wasserstein_offset_loss(
            [(cands, OffsetVolume(o), c, gt, valid)], LossConfig())
        g_off, g_cost = grads[0]
        return loss, [g_off, g_cost]

    return finite_difference_check(fn, [offsets, costs], step)


ALL_CHECKS = {
    "regression": check_regression,
    "splatting": check_splatting,
    "huber": check_huber,
    "wasserstein": check_wasserstein,
}


def run_gradient_suite(n_seeds: int = 100, step: float = 1e-4,
                       base_seed: int = 0) -> dict[str, float]:
    """Worst relative gradient error per check over ``n_seeds`` random
    problem instances each."""
    worst = {}
    for name, check in ALL_CHECKS.items():
        worst[name] = max(check(base_seed + i, step) for i in range(n_seeds))
    return worst
