"""Correlation and error metrics against brute-force references."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import rankdata

from patchiq.errors import DegenerateInput, ShapeError
from patchiq.metrics import (
    average_ranks,
    compute_metrics,
    pearson,
    rmse_0_100,
    spearman,
)


def _pearson_oracle(x, y) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    return cov / math.sqrt(vx * vy)


def _random_pair(rng, ties: bool):
    n = int(rng.integers(2, 40))
    x = rng.standard_normal(n)
    y = rng.standard_normal(n)
    if ties:
        x = np.round(x * 2.0) / 2.0
        y = np.round(y * 2.0) / 2.0
        if np.all(x == x[0]):
            x[0] += 1.0
        if np.all(y == y[0]):
            y[0] += 1.0
    return x, y


def test_pearson_matches_oracle_on_random_instances():
    rng = np.random.default_rng(41)
    for _ in range(100):
        x, y = _random_pair(rng, ties=False)
        assert abs(pearson(x, y) - _pearson_oracle(list(x), list(y))) < 1e-12


def test_spearman_matches_rankdata_oracle_on_random_instances():
    rng = np.random.default_rng(42)
    for k in range(100):
        x, y = _random_pair(rng, ties=k % 2 == 0)
        want = _pearson_oracle(
            list(rankdata(x, method="average")), list(rankdata(y, method="average"))
        )
        assert abs(spearman(x, y) - want) < 1e-12


def test_average_ranks_pinned_examples():
    np.testing.assert_array_equal(
        average_ranks(np.array([1.0, 2.0, 2.0, 3.0])), [1.0, 2.5, 2.5, 4.0]
    )
    np.testing.assert_array_equal(
        average_ranks(np.array([5.0, 5.0, 5.0])), [2.0, 2.0, 2.0]
    )
    np.testing.assert_array_equal(
        average_ranks(np.array([3.0, 1.0, 2.0])), [3.0, 1.0, 2.0]
    )


def test_average_ranks_match_rankdata_with_ties():
    rng = np.random.default_rng(43)
    for _ in range(50):
        x = rng.integers(0, 6, size=int(rng.integers(2, 30))).astype(np.float64)
        np.testing.assert_array_equal(average_ranks(x), rankdata(x, method="average"))


def test_spearman_invariant_under_monotone_transforms():
    rng = np.random.default_rng(44)
    for _ in range(20):
        x, y = _random_pair(rng, ties=True)
        base = spearman(x, y)
        assert abs(spearman(np.exp(x), y) - base) < 1e-12
        assert abs(spearman(x, y**3) - base) < 1e-12
        assert abs(spearman(3.0 * x + 7.0, 0.5 * y - 2.0) - base) < 1e-12


def test_spearman_exact_for_monotone_data():
    x = np.array([1.0, 2.0, 5.0, 9.0])
    assert spearman(x, np.exp(x)) == 1.0
    assert spearman(x, -x) == -1.0


def test_pearson_affine_invariance_and_sign():
    rng = np.random.default_rng(45)
    x, y = _random_pair(rng, ties=False)
    base = pearson(x, y)
    assert abs(pearson(2.5 * x + 1.0, y) - base) < 1e-12
    assert abs(pearson(-x, y) + base) < 1e-12
    assert abs(pearson(x, x) - 1.0) < 1e-12


def test_rmse_reports_on_percent_scale():
    assert rmse_0_100([0.5, 0.5], [0.4, 0.6]) == pytest.approx(10.0, abs=1e-12)
    rng = np.random.default_rng(46)
    p = rng.uniform(0, 1, 20)
    t = rng.uniform(0, 1, 20)
    want = 100.0 * math.sqrt(sum((a - b) ** 2 for a, b in zip(p, t)) / 20)
    assert rmse_0_100(p, t) == pytest.approx(want, abs=1e-12)


def test_constant_inputs_are_degenerate():
    const = np.ones(5)
    varying = np.arange(5.0)
    with pytest.raises(DegenerateInput):
        pearson(const, varying)
    with pytest.raises(DegenerateInput):
        spearman(varying, const)


def test_compute_metrics_degrades_per_metric():
    m = compute_metrics([0.5, 0.5, 0.5], [0.1, 0.2, 0.3])
    assert m.scc is None and m.pcc is None
    assert m.rmse == pytest.approx(
        100.0 * math.sqrt((0.4**2 + 0.3**2 + 0.2**2) / 3), abs=1e-12
    )
    assert any(e.startswith("scc:") for e in m.errors)
    assert any(e.startswith("pcc:") for e in m.errors)
    ok = compute_metrics([0.1, 0.9], [0.2, 0.8])
    assert ok.errors == []
    assert ok.scc == 1.0


def test_metric_input_validation():
    with pytest.raises(ShapeError):
        pearson([1.0], [1.0])
    with pytest.raises(ShapeError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ShapeError):
        pearson(np.zeros((2, 2)), np.zeros((2, 2)))
