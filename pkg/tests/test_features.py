import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsquery.features import (
    DEFAULT_SAX,
    SaxConfig,
    ViewType,
    build_feature_tables,
    calendar_windows,
    compute_paa,
    compute_window_stats,
    normal_breakpoints,
    sax_encode,
    symbolize,
)
from tsquery.model import EmptyInput, SeriesSlice
from tsquery.search import search_candidates, SearchSpec

HOUR = 3600
MARCH_1 = 1614556800  # 2021-03-01T00:00:00Z


def test_breakpoints_match_inverse_normal_cdf():
    # alpha=5 quintile breakpoints of N(0,1)
    bps = normal_breakpoints(5)
    expected = (-0.8416212335729143, -0.2533471031357997, 0.2533471031357997, 0.8416212335729143)
    assert np.allclose(bps, expected, atol=1e-8)
    assert all(a < b for a, b in zip(bps, bps[1:]))


def test_paa_exact_segments():
    assert compute_paa([5, 5, 5, 5], 2).tolist() == [5, 5]
    assert compute_paa([1, 2, 3, 4, 5, 6], 3).tolist() == [1.5, 3.5, 5.5]


def test_paa_fractional_weighting():
    # oracle: segments cover [0,2.5) and [2.5,5); point 2 (value 3) splits evenly
    got = compute_paa([1, 2, 3, 4, 5], 2)
    assert got == pytest.approx([(1 + 2 + 0.5 * 3) / 2.5, (0.5 * 3 + 4 + 5) / 2.5])
    assert got == pytest.approx([1.8, 4.2])


def test_paa_empty():
    with pytest.raises(EmptyInput):
        compute_paa([], 4)


@settings(max_examples=200)
@given(
    vals=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200),
    w=st.integers(1, 40),
)
def test_paa_mean_preservation(vals, w):
    arr = np.asarray(vals)
    paa = compute_paa(arr, w)
    assert paa.size == w
    scale = max(1.0, float(np.abs(arr).max()))
    assert float(paa.mean()) == pytest.approx(float(arr.mean()), abs=1e-9 * scale)


def test_symbolize_known_zscores():
    # derived from the quintile breakpoints +-0.8416 / +-0.2533
    assert symbolize([-2, -0.5, 0, 0.5, 2]) == "abcde"


def test_sax_constant_window_is_middle():
    assert sax_encode([7.0] * 24, 24) == "c" * 24


def test_sax_monotone_ramp():
    s = sax_encode(np.arange(24.0), 24)
    assert s[0] == "a" and s[-1] == "e"
    assert list(s) == sorted(s)  # monotone PAA -> monotone symbols


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    a=st.floats(0.01, 100.0),
    b=st.floats(-50.0, 50.0),
)
def test_sax_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, 48)
    assert sax_encode(x, 12) == sax_encode(a * x + b, 12)


def test_sax_equiprobability_quick():
    rng = np.random.default_rng(7)
    counts = np.zeros(5)
    for _ in range(2000):
        s = sax_encode(rng.normal(0, 1, 24), 24)
        for ch in s:
            counts[ord(ch) - ord("a")] += 1
    freqs = counts / counts.sum()
    assert np.all(np.abs(freqs - 0.2) < 0.03)


def _ols_slope_oracle(values):
    # closed-form OLS of value against index
    y = np.asarray(values, dtype=float)
    x = np.arange(y.size, dtype=float)
    return float(((x - x.mean()) * (y - y.mean())).sum() / ((x - x.mean()) ** 2).sum())


def test_window_stats():
    ts = np.arange(3) * HOUR
    st_ = compute_window_stats(SeriesSlice("c", ts, [2.0, 2.0, 2.0]))
    assert (st_.min_val, st_.max_val, st_.avg_val, st_.std_val, st_.slope) == (2, 2, 2, 0, 0)

    st2 = compute_window_stats(SeriesSlice("c", np.arange(4) * HOUR, [0.0, 1.0, 2.0, 3.0]))
    assert st2.slope == pytest.approx(1.0)

    vals = [0.0, 2.0, 1.0, 3.0]
    st3 = compute_window_stats(SeriesSlice("c", np.arange(4) * HOUR, vals))
    assert st3.slope == pytest.approx(_ols_slope_oracle(vals))
    assert st3.slope == pytest.approx(0.8)

    solo = compute_window_stats(SeriesSlice("c", np.array([0]), np.array([5.0])))
    assert solo.slope is None
    with pytest.raises(EmptyInput):
        compute_window_stats(SeriesSlice("c", np.array([], dtype=np.int64), np.array([])))


def test_calendar_windows_month_lengths():
    wins = calendar_windows(ViewType.MONTHLY, MARCH_1, MARCH_1 + 40 * 86400)
    assert wins[0][1] == 31  # March
    assert wins[1][1] == 30  # April
    feb21 = calendar_windows(ViewType.MONTHLY, MARCH_1 - 10 * 86400, MARCH_1 - 86400)
    assert feb21[0][1] == 28
    yearly = calendar_windows(ViewType.YEARLY, MARCH_1, MARCH_1)
    assert yearly[0][1] == 12


def test_build_daily_rows(store):
    ts = MARCH_1 + HOUR * np.arange(48)
    store.write_points("c", ts, np.sin(np.arange(48.0)))
    n = build_feature_tables(store, views=[ViewType.DAILY])
    assert n == 2
    rows = search_candidates(store, SearchSpec(view=ViewType.DAILY)).rows
    assert len(rows) == 2
    assert all(r.sax_len == 24 and len(r.sax) == 24 for r in rows)
    assert all(set(r.sax) <= set("abcde") for r in rows)
    assert all(r.min_val <= r.avg_val <= r.max_val and r.std_val >= 0 for r in rows)


def test_build_monthly_march(store):
    n_hours = 31 * 24
    ts = MARCH_1 + HOUR * np.arange(n_hours)
    store.write_points("c", ts, np.random.default_rng(0).normal(0, 1, n_hours))
    build_feature_tables(store, views=[ViewType.MONTHLY])
    rows = search_candidates(store, SearchSpec(view=ViewType.MONTHLY)).rows
    assert len(rows) == 1
    assert rows[0].sax_len == 31 and len(rows[0].sax) == 31


def test_low_coverage_null_sax(store):
    ts = MARCH_1 + HOUR * np.arange(4)  # 4 of 24 hours
    store.write_points("c", ts, [1.0, 2.0, 3.0, 4.0])
    # a second full day pins the hourly median interval
    ts2 = MARCH_1 + 86400 + HOUR * np.arange(24)
    store.write_points("c", ts2, np.ones(24))
    build_feature_tables(store, views=[ViewType.DAILY])
    rows = search_candidates(store, SearchSpec(view=ViewType.DAILY)).rows
    sparse = [r for r in rows if r.window.start == MARCH_1][0]
    assert sparse.coverage == pytest.approx(4 / 24, abs=1e-9)
    assert sparse.sax is None


def test_rebuild_determinism(hourly_store):
    build_feature_tables(hourly_store)
    first = hourly_store.conn.execute(
        "SELECT * FROM features ORDER BY series_id, view_type, window_start"
    ).fetchall()
    build_feature_tables(hourly_store)
    second = hourly_store.conn.execute(
        "SELECT * FROM features ORDER BY series_id, view_type, window_start"
    ).fetchall()
    assert first == second


def test_daily_phase_offset(store):
    # a 6-hour phase offset shifts every daily window boundary by 6 hours
    ts = MARCH_1 + HOUR * np.arange(48)
    store.write_points("c", ts, np.sin(np.arange(48.0)))
    build_feature_tables(store, views=[ViewType.DAILY],
                         offsets={ViewType.DAILY: 6 * HOUR})
    rows = search_candidates(store, SearchSpec(view=ViewType.DAILY)).rows
    assert all((r.window.start - 6 * HOUR) % 86400 == 0 for r in rows)


def test_sax_config_validation():
    with pytest.raises(ValueError):
        SaxConfig(alphabet_size=1, breakpoints=())
    with pytest.raises(ValueError):
        SaxConfig(alphabet_size=3, breakpoints=(0.5, 0.1))
    assert DEFAULT_SAX.middle_symbol == "c"
