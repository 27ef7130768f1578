"""Disparity error metrics over all / occluded / non-occluded regions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegionMetrics:
    epe: float      # mean absolute error, pixels
    p3: float       # % of pixels with error > 3 px
    p5: float       # % of pixels with error > 5 px
    d1: float       # % with error > 3 px and > 5% of ground truth
    count: int

    def as_dict(self) -> dict:
        return {"epe": self.epe, "3pe": self.p3, "5pe": self.p5,
                "d1": self.d1, "count": self.count}


@dataclass(frozen=True)
class MetricsReport:
    all: RegionMetrics
    occ: RegionMetrics
    noc: RegionMetrics

    def as_dict(self) -> dict:
        return {"all": self.all.as_dict(), "occ": self.occ.as_dict(),
                "noc": self.noc.as_dict()}


def compute_metrics(pred: np.ndarray, gt: np.ndarray,
                    occ_mask: np.ndarray | None = None) -> MetricsReport:
    """EPE / 3PE / 5PE / D1 over ALL, OCC and NOC regions.

    Valid pixels are those with finite positive ground truth.  Without
    an occlusion mask the OCC region is empty and NOC equals ALL.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    valid = np.isfinite(gt) & (gt > 0)
    if not valid.any():
        raise ValueError("no valid ground-truth pixels")
    if occ_mask is None:
        occ_mask = np.zeros_like(valid)
    err = np.abs(pred - gt)
    flagged_d1 = (err > 3.0) & (err > 0.05 * gt)

    def region(mask: np.ndarray) -> RegionMetrics:
        n = int(mask.sum())
        if n == 0:
            return RegionMetrics(0.0, 0.0, 0.0, 0.0, 0)
        e = err[mask]
        return RegionMetrics(
            epe=float(e.mean()),
            p3=float((e > 3.0).mean() * 100.0),
            p5=float((e > 5.0).mean() * 100.0),
            d1=float(flagged_d1[mask].mean() * 100.0),
            count=n,
        )

    return MetricsReport(
        all=region(valid),
        occ=region(valid & occ_mask),
        noc=region(valid & ~occ_mask),
    )
