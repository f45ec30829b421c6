import math
import statistics

import numpy as np
import pytest
from tsquery.model import SeriesSlice, TrendDirection, TrendModifier
from tsquery.operators import (
    DegenerateQuery,
    InsufficientOverlap,
    NoPeriodicity,
    QueryLongerThanSearch,
    TooShort,
    ZeroVariance,
    calc_correlation,
    calc_trend_slope,
    default_changepoint_penalty,
    detect_changepoints,
    detect_period,
    exhaustive_changepoints,
    find_best_match,
    label_segments,
    segment_and_label,
)

HOUR = 3600


# ---------------------------------------------------------------------------
# periodicity


def test_period_pure_sinusoid():
    t = np.arange(1000)
    assert abs(detect_period(np.sin(2 * np.pi * t / 50), 200) - 50) <= 1


def test_period_mixture_prefers_fundamental():
    # closed form: r(90) = 1 while r(30) = (9 - 0.5) / 10 = 0.85
    t = np.arange(1800)
    x = 3 * np.sin(2 * np.pi * t / 30) + np.sin(2 * np.pi * t / 90)
    assert detect_period(x, 200) == 90


def test_period_constant_and_noise():
    with pytest.raises(NoPeriodicity):
        detect_period(np.ones(100), 30)
    with pytest.raises(NoPeriodicity):
        detect_period(np.random.default_rng(3).normal(0, 1, 800), 200)


def test_period_too_short():
    with pytest.raises(TooShort):
        detect_period(np.sin(np.arange(100)), 100)


def test_period_affine_invariance():
    t = np.arange(900)
    x = np.sin(2 * np.pi * t / 45) + np.random.default_rng(5).normal(0, 0.2, 900)
    base = detect_period(x, 200)
    assert detect_period(-2.5 * x + 17, 200) == base
    assert detect_period(0.001 * x, 200) == base


# ---------------------------------------------------------------------------
# subsequence matching


def _oracle_dtw(a, b, band):
    """Nested-loop banded DTW (independent oracle)."""
    m = len(a)
    cells = {}
    for i in range(m):
        for j in range(max(0, i - band), min(m - 1, i + band) + 1):
            d = (a[i] - b[j]) ** 2
            if i == 0 and j == 0:
                cells[(0, 0)] = d
                continue
            best = math.inf
            for pi, pj in ((i - 1, j), (i, j - 1), (i - 1, j - 1)):
                if (pi, pj) in cells:
                    best = min(best, cells[(pi, pj)])
            cells[(i, j)] = d + best
    return math.sqrt(cells[(m - 1, m - 1)])


def _oracle_scan(query, values, band_fraction):
    q = np.asarray(query, float)
    qz = (q - q.mean()) / q.std()
    m = len(q)
    band = math.ceil(band_fraction * m)
    best = (math.inf, -1)
    for s in range(len(values) - m + 1):
        w = np.asarray(values[s:s + m], float)
        sd = w.std()
        wz = (w - w.mean()) / sd if sd > 0 else np.zeros(m)
        d = _oracle_dtw(qz.tolist(), wz.tolist(), band)
        if d < best[0]:
            best = (d, s)
    return best


def test_match_exact_copy():
    rng = np.random.default_rng(0)
    vals = rng.normal(0, 1, 200)
    q = np.sin(np.arange(25) * 0.4)
    vals[90:115] = q
    sl = SeriesSlice("c", np.arange(200) * HOUR, vals)
    res = find_best_match(q, sl)
    assert res.start_index == 90
    assert res.distance == pytest.approx(0.0, abs=1e-12)
    assert res.window.start == sl.timestamps[90]


def test_match_scale_shift_invariance():
    rng = np.random.default_rng(1)
    vals = rng.normal(0, 1, 300)
    q = np.cos(np.arange(30) * 0.3) * np.arange(30)
    vals[140:170] = 3 * q + 7
    sl = SeriesSlice("c", np.arange(300) * HOUR, vals)
    res = find_best_match(q, sl)
    assert res.start_index == 140
    assert res.distance == pytest.approx(0.0, abs=1e-9)


def test_match_errors():
    sl = SeriesSlice("c", np.arange(50) * HOUR, np.random.default_rng(2).normal(0, 1, 50))
    with pytest.raises(QueryLongerThanSearch):
        find_best_match(np.arange(100.0), sl)
    with pytest.raises(DegenerateQuery):
        find_best_match(np.ones(10), sl)
    with pytest.raises(TooShort):
        find_best_match([1.0], sl)


def test_dtw_self_zero_and_symmetric():
    rng = np.random.default_rng(6)
    from tsquery.operators import dtw_distance

    for _ in range(5):
        a = rng.normal(0, 1, 24)
        b = rng.normal(0, 1, 24)
        assert dtw_distance(a, a, 4) == 0.0
        assert dtw_distance(a, b, 4) == pytest.approx(dtw_distance(b, a, 4), abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_match_equals_bruteforce_scan(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(60, 160))
    m = int(rng.integers(8, 24))
    vals = rng.normal(0, 1, n)
    q = np.cumsum(rng.normal(0, 1, m))
    frac = float(rng.uniform(0.08, 0.3))
    sl = SeriesSlice("c", np.arange(n) * HOUR, vals)
    res = find_best_match(q, sl, frac)
    od, oi = _oracle_scan(q, vals, frac)
    assert res.start_index == oi
    assert res.distance == pytest.approx(od, abs=1e-9)


# ---------------------------------------------------------------------------
# changepoints


def test_changepoints_step():
    x = np.array([0.0] * 50 + [5.0] * 50)
    assert detect_changepoints(x).indices == (50,)


def test_changepoints_constant():
    assert detect_changepoints(np.ones(80)).indices == ()


def test_changepoints_two_steps():
    x = np.array([0.0] * 40 + [5.0] * 40 + [0.0] * 40)
    assert detect_changepoints(x).indices == (40, 80)


def test_changepoints_too_short():
    with pytest.raises(TooShort):
        detect_changepoints(np.ones(6), min_segment_length=5)


def test_changepoints_min_segment_spacing():
    rng = np.random.default_rng(9)
    x = rng.normal(0, 1, 200)
    x[67:] += 4
    x[130:] -= 6
    cps = detect_changepoints(x, min_segment_length=8)
    assert all(b - a >= 8 for a, b in zip((0,) + cps.indices, cps.indices + (200,)))


def _random_piecewise(rng):
    n = int(rng.integers(12, 65))
    n_seg = int(rng.integers(1, 4))
    levels = rng.normal(0, 3, n_seg)
    bounds = sorted(rng.choice(np.arange(1, n), size=n_seg - 1, replace=False).tolist()) if n_seg > 1 else []
    x = np.empty(n)
    prev = 0
    for level, b in zip(levels, bounds + [n]):
        x[prev:b] = level
        prev = b
    return x + rng.normal(0, 0.5, n)


@pytest.mark.parametrize("seed", range(40))
def test_pelt_equals_exhaustive_dp(seed):
    rng = np.random.default_rng(seed)
    x = _random_piecewise(rng)
    min_seg = int(rng.integers(1, 6))
    if x.size < 2 * min_seg:
        min_seg = 1
    penalty = float(rng.uniform(0.5, 30.0))
    fast = detect_changepoints(x, penalty=penalty, min_segment_length=min_seg)
    slow = exhaustive_changepoints(x, penalty=penalty, min_segment_length=min_seg)
    assert fast.indices == slow.indices


def test_variance_cost_detects_dispersion_shift():
    rng = np.random.default_rng(4)
    x = np.concatenate([rng.normal(0, 1.0, 120), rng.normal(0, 0.05, 100), rng.normal(0, 1.0, 120)])
    cps = detect_changepoints(x, cost="variance")
    assert len(cps.indices) == 2
    assert abs(cps.indices[0] - 120) <= 3 and abs(cps.indices[1] - 220) <= 3


# ---------------------------------------------------------------------------
# robust slope


def _theil_sen_oracle(values):
    slopes = []
    n = len(values)
    for i in range(n):
        for j in range(i + 1, n):
            slopes.append((values[j] - values[i]) / (j - i))
    return statistics.median(slopes)


def test_trend_slope_perfect_line():
    assert calc_trend_slope([0, 2, 4, 6]) == pytest.approx(2.0)


def test_trend_slope_outlier_robust():
    rng = np.random.default_rng(11)
    y = np.arange(50, dtype=float)
    idx = rng.choice(50, size=10, replace=False)
    y[idx] = 1000.0
    assert calc_trend_slope(y) == pytest.approx(1.0, rel=0.05)


def test_trend_slope_too_short():
    with pytest.raises(TooShort):
        calc_trend_slope([7.0])


@pytest.mark.parametrize("seed", range(25))
def test_trend_slope_equals_pair_median_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    y = rng.normal(0, 5, n)
    assert calc_trend_slope(y) == pytest.approx(_theil_sen_oracle(y.tolist()), abs=1e-12)


def test_trend_slope_shift_invariant_scale_equivariant():
    rng = np.random.default_rng(13)
    y = rng.normal(0, 2, 40)
    base = calc_trend_slope(y)
    assert calc_trend_slope(y + 100) == pytest.approx(base, abs=1e-12)
    assert calc_trend_slope(3.5 * y) == pytest.approx(3.5 * base, abs=1e-12)


def test_trend_slope_large_n_deterministic():
    rng = np.random.default_rng(17)
    y = np.arange(1500.0) * 0.5 + rng.normal(0, 1, 1500)
    a = calc_trend_slope(y)
    b = calc_trend_slope(y)
    assert a == b
    assert a == pytest.approx(0.5, rel=0.02)


# ---------------------------------------------------------------------------
# correlation


def test_correlation_basic():
    a = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert calc_correlation(a, a, 0) == pytest.approx(1.0)
    assert calc_correlation(a, [-x for x in a], 0) == pytest.approx(-1.0)


def test_correlation_lag_realigns():
    rng = np.random.default_rng(21)
    a = rng.normal(0, 1, 60)
    b = np.concatenate([np.zeros(3), a])  # b trails a by 3
    assert calc_correlation(a, b, 3) == pytest.approx(1.0)


def test_correlation_symmetry():
    rng = np.random.default_rng(22)
    a = rng.normal(0, 1, 40)
    b = rng.normal(0, 1, 40)
    assert calc_correlation(a, b, 0) == pytest.approx(calc_correlation(b, a, 0))


def test_correlation_errors():
    with pytest.raises(InsufficientOverlap):
        calc_correlation([1.0, 2.0], [1.0, 2.0], 0)
    with pytest.raises(ZeroVariance):
        calc_correlation([1.0, 1.0, 1.0, 1.0], [1.0, 2.0, 3.0, 4.0], 0)


# ---------------------------------------------------------------------------
# composed report


def test_segment_and_label_rise_then_flat():
    rng = np.random.default_rng(31)
    up = np.linspace(0, 30, 120) + rng.normal(0, 0.3, 120)
    flat = np.full(120, 30.0) + rng.normal(0, 0.3, 120)
    vals = np.concatenate([up, flat])
    sl = SeriesSlice("c", np.arange(240) * HOUR, vals)
    rep = segment_and_label(sl)
    dirs = [s.trend.direction for s in rep.segments]
    assert dirs == [TrendDirection.RISE, TrendDirection.STABLE]
    assert rep.segments[1].trend.modifier is TrendModifier.STEADY


def test_segment_and_label_outlier():
    rng = np.random.default_rng(33)
    vals = rng.normal(10, 0.5, 200)
    vals[77] += 10 * 0.5
    sl = SeriesSlice("c", np.arange(200) * HOUR, vals)
    rep = segment_and_label(sl)
    assert int(sl.timestamps[77]) in rep.outliers


def test_segment_and_label_too_short():
    sl = SeriesSlice("c", np.arange(6) * HOUR, np.random.default_rng(1).normal(0, 1, 6))
    with pytest.raises(TooShort):
        segment_and_label(sl, min_segment_length=5)


def test_label_segments_relative_rule():
    # slopes 8u / 0 / -2u with quiet residuals: rapid rise, steady stable, gradual fall
    labels = label_segments([0.8, 0.0, -0.2], [0.1, 0.1, 0.1], [100, 100, 100])
    assert [l.direction for l in labels] == [
        TrendDirection.RISE, TrendDirection.STABLE, TrendDirection.FALL,
    ]
    assert labels[0].modifier is TrendModifier.RAPID
    assert labels[2].modifier is TrendModifier.GRADUAL


def test_default_penalty_positive_on_noise():
    rng = np.random.default_rng(5)
    assert default_changepoint_penalty(rng.normal(0, 1, 500)) > 0
