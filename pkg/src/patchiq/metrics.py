"""Correlation and error metrics for quality predictions.

Pearson uses population standard deviations. Spearman is Pearson on
average-tie fractional ranks. RMSE is reported on the original 0-100
scale. A constant input makes the correlations undefined; that raises
DegenerateInput rather than returning NaN, and the evaluation helper
catches it per metric so the remaining numbers still come out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, ShapeError


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ShapeError("metric inputs must be 1-D")
    if x.shape != y.shape:
        raise ShapeError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ShapeError("need at least two points")
    return x, y


def pearson(x, y) -> float:
    """Pearson correlation with population normalization."""
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(np.mean(dx * dx))
    vy = float(np.mean(dy * dy))
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInput("zero variance input, correlation undefined")
    return float(np.mean(dx * dy) / np.sqrt(vx * vy))


def average_ranks(x) -> np.ndarray:
    """1-based fractional ranks; tied values share their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and x[order[j + 1]] == x[order[i]]:
            j += 1
        # ranks i+1 .. j+1 average to (i + j) / 2 + 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Rank correlation; ties get average ranks."""
    x, y = _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def rmse_0_100(pred_unit, target_unit) -> float:
    """Root-mean-square error of unit-scale values, on the 0-100 scale."""
    p, t = _check_pair(pred_unit, target_unit)
    d = 100.0 * p - 100.0 * t
    return float(np.sqrt(np.mean(d * d)))


@dataclass
class Metrics:
    """Evaluation result. Degenerate correlations are None, with reasons."""

    scc: float | None
    pcc: float | None
    rmse: float
    errors: list[str] = field(default_factory=list)


def compute_metrics(pred_unit, target_unit) -> Metrics:
    """All three metrics, catching degenerate correlations per metric."""
    errors = []
    try:
        scc = spearman(pred_unit, target_unit)
    except DegenerateInput as e:
        scc = None
        errors.append(f"scc: {e}")
    try:
        pcc = pearson(pred_unit, target_unit)
    except DegenerateInput as e:
        pcc = None
        errors.append(f"pcc: {e}")
    return Metrics(scc=scc, pcc=pcc, rmse=rmse_0_100(pred_unit, target_unit), errors=errors)
