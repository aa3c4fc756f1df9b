"""Regression metrics: MAE, MAPE (zero targets excluded) and R^2.

All metrics are computed in float64 on raw target units.  MAPE divides
only over samples with nonzero targets and reports the excluded count;
R^2 is undefined (None) for constant targets, MAPE for all-zero targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class HeadMetrics:
    mae: float
    mape: float | None
    r2: float | None
    n_zero_excluded: int

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "mape": self.mape,
            "r2": self.r2,
            "n_zero_excluded": self.n_zero_excluded,
        }


@dataclass
class MetricsReport:
    """Per-head metrics for one evaluation split."""

    design: HeadMetrics
    kernel: HeadMetrics | None
    delta: HeadMetrics | None
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "design": self.design.to_dict(),
            "kernel": self.kernel.to_dict() if self.kernel else None,
            "delta": self.delta.to_dict() if self.delta else None,
        }


def compute_metrics(y_true, y_pred) -> HeadMetrics:
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot compute metrics on an empty sample set")
    if y.shape != p.shape:
        raise ValueError(f"shape mismatch: targets {y.shape} vs predictions {p.shape}")

    mae = float(np.mean(np.abs(y - p)))

    nonzero = y != 0.0
    n_excluded = int(np.size(y) - np.count_nonzero(nonzero))
    if nonzero.any():
        mape = float(100.0 * np.mean(np.abs((y[nonzero] - p[nonzero]) / y[nonzero])))
    else:
        mape = None

    ss_res = float(np.sum((y - p) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = None if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    return HeadMetrics(mae=mae, mape=mape, r2=r2, n_zero_excluded=n_excluded)
