"""Atomic verification operators: exact, stateless numeric kernels.

These are the "lock on" primitives that confirm or refute candidates on raw
data: periodicity (autocorrelation), subsequence matching (banded DTW over a
sliding window), changepoint detection (penalized exact segmentation with
pruning), robust trend slope (Theil-Sen), correlation at a lag, and the
composed trend-report labeler built from changepoints + slopes.

All functions are pure; none touch the store.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .model import (
    Report,
    ReportSegment,
    SeriesSlice,
    TimeWindow,
    TrendDirection,
    TrendLabel,
    TrendModifier,
)


class OperatorError(Exception):
    code = "OPERATOR_ERROR"


class TooShort(OperatorError):
    code = "TOO_SHORT"


class NoPeriodicity(OperatorError):
    code = "NO_PERIODICITY"


class QueryLongerThanSearch(OperatorError):
    code = "QUERY_LONGER_THAN_SEARCH"


class DegenerateQuery(OperatorError):
    code = "DEGENERATE_QUERY"


class InsufficientOverlap(OperatorError):
    code = "INSUFFICIENT_OVERLAP"


class ZeroVariance(OperatorError):
    code = "ZERO_VARIANCE"


# ---------------------------------------------------------------------------
# periodicity


ACF_SIGNIFICANCE_FLOOR = 0.2


def autocorrelation(values: Sequence[float], max_lag: int) -> np.ndarray:
    """Sample ACF r(1..max_lag), mean-centered, normalized by total variance.

    Uses the 1/n (biased) normalization, which damps long lags slightly; for
    a periodic signal that makes the fundamental lag win over its multiples.
    """
    x = np.asarray(values, dtype=np.float64)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom <= 0.0:
        return np.zeros(max_lag)
    out = np.empty(max_lag)
    for lag in range(1, max_lag + 1):
        out[lag - 1] = float(np.dot(x[:-lag], x[lag:])) / denom
    return out


def detect_period(values: Sequence[float], max_lag: int,
                  significance: float = ACF_SIGNIFICANCE_FLOOR) -> int:
    """Dominant period in points: highest ACF value among its local maxima.

    Any smooth signal autocorrelates strongly at tiny lags, so candidate
    lags are restricted to local peaks of the ACF over 2..max_lag; the
    global maximum among those peaks is the period. The 1/n-normalized
    estimator damps integer multiples of the true period, so the
    fundamental wins. Raises NoPeriodicity when no peak clears the
    significance floor (constant input, white noise) and TooShort when the
    series cannot support max_lag.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 6:
        raise TooShort(f"need at least 6 points, got {n}")
    if not (2 <= max_lag < n):
        raise TooShort(f"max_lag {max_lag} must satisfy 2 <= max_lag < n={n}")
    acf = autocorrelation(x, max_lag)  # acf[k] = r(k + 1)
    # skip the initial decay: a periodic signal's ACF dips non-positive
    # around half a period, after which real peaks appear
    nonpos = np.nonzero(acf <= 0)[0]
    start = max(2, int(nonpos[0]) + 2) if nonpos.size else 2
    best_lag = None
    best_r = -np.inf
    for lag in range(start, max_lag + 1):
        r = acf[lag - 1]
        left = acf[lag - 2]
        right = acf[lag] if lag < max_lag else -np.inf
        if r >= left and r >= right and r > best_r:
            best_r = r
            best_lag = lag
    if best_lag is None or best_r <= significance:
        raise NoPeriodicity(f"no ACF peak exceeds significance floor {significance}")
    # parabolic refinement over the neighbouring lags averages out ACF noise
    lo = max(1, best_lag - 2)
    hi = min(max_lag, best_lag + 2)
    lags = np.arange(lo, hi + 1, dtype=np.float64)
    window = acf[lo - 1:hi]
    if lags.size >= 3:
        a, b, _ = np.polyfit(lags, window, 2)
        if a < 0:
            vertex = -b / (2 * a)
            if abs(vertex - best_lag) <= 2:
                return int(round(vertex))
    return best_lag


# ---------------------------------------------------------------------------
# subsequence matching


@dataclass(frozen=True)
class MatchResult:
    window: TimeWindow
    distance: float
    start_index: int


def _znorm(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd <= 0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def dtw_distance(a: Sequence[float], b: Sequence[float], band: int) -> float:
    """Plain banded DTW between two equal-length sequences (squared local cost)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m = a.size
    inf = np.inf
    prev = np.full(m, inf)
    for i in range(m):
        cur = np.full(m, inf)
        j_lo = max(0, i - band)
        j_hi = min(m - 1, i + band)
        for j in range(j_lo, j_hi + 1):
            d = (a[i] - b[j]) ** 2
            if i == 0 and j == 0:
                cur[j] = d
                continue
            best = inf
            if i > 0 and prev[j] < best:
                best = prev[j]
            if j > 0 and cur[j - 1] < best:
                best = cur[j - 1]
            if i > 0 and j > 0 and prev[j - 1] < best:
                best = prev[j - 1]
            cur[j] = d + best
        prev = cur
    return math.sqrt(prev[m - 1])


def find_best_match(query: Sequence[float], search: SeriesSlice,
                    band_fraction: float = 0.1) -> MatchResult:
    """Most similar window to ``query`` anywhere in ``search`` (stride 1).

    Every candidate window and the query are z-normalized, so matches are
    scale- and offset-invariant. DTW runs under a Sakoe-Chiba band of
    half-width ceil(band_fraction * len(query)). Ties break to the earliest
    start. The DP is vectorized across all candidate offsets.
    """
    q = np.asarray(query, dtype=np.float64)
    m = q.size
    if m < 2:
        raise TooShort("query needs at least 2 points")
    n = len(search)
    if m > n:
        raise QueryLongerThanSearch(f"query length {m} exceeds search length {n}")
    if q.std() <= 0:
        raise DegenerateQuery("query has zero variance")
    if not (0 < band_fraction <= 1):
        raise ValueError("band_fraction must be in (0, 1]")

    qz = _znorm(q)
    windows = sliding_window_view(search.values, m)  # (K, m) view
    mu = windows.mean(axis=1)
    sd = windows.std(axis=1)
    safe = np.where(sd > 0, sd, 1.0)
    wz = (windows - mu[:, None]) / safe[:, None]
    wz[sd == 0] = 0.0

    band = int(math.ceil(band_fraction * m))
    k = wz.shape[0]
    inf = np.inf
    width = 2 * band + 1
    # rows stored in band offsets: column index j = i - band + offset
    prev = np.full((k, width + 2), inf)  # padded left/right for shifts
    for i in range(m):
        j_lo = max(0, i - band)
        j_hi = min(m - 1, i + band)
        off_lo = j_lo - (i - band)
        cur = np.full((k, width + 2), inf)
        d = (wz[:, j_lo:j_hi + 1] - qz[i]) ** 2
        for off in range(off_lo, off_lo + (j_hi - j_lo + 1)):
            j = i - band + off
            col = d[:, off - off_lo]
            if i == 0 and j == 0:
                cur[:, off + 1] = col
                continue
            # prev row offsets: same j -> off+1, j-1 -> off
            best = np.minimum(prev[:, off + 2], prev[:, off + 1])
            best = np.minimum(best, cur[:, off])
            cur[:, off + 1] = col + best
    # prev row j index for final cell: j = m-1 at offset m-1-(m-1-band) = band
        prev = cur
    finals = prev[:, band + 1]
    best_idx = int(np.argmin(finals))
    distance = float(math.sqrt(finals[best_idx]))
    ts = search.timestamps
    deltas = np.diff(ts)
    step = int(np.median(deltas)) if deltas.size else 1
    window = TimeWindow(int(ts[best_idx]), int(ts[best_idx + m - 1]) + step)
    return MatchResult(window=window, distance=distance, start_index=best_idx)


def refine_alignment(query: np.ndarray, values: np.ndarray, coarse_at: int,
                     radius: int = 20) -> int:
    """Sharpen a match offset by rigid cross-correlation around it.

    Elastic matching tolerates a few points of slide along flat stretches;
    plain correlation against the reference pins the transition.
    """
    m = query.size
    qz = query - query.mean()
    qn = float(np.dot(qz, qz))
    if qn <= 0 or values.size < m:
        return coarse_at
    best_at, best_r = coarse_at, -math.inf
    for at in range(max(0, coarse_at - radius),
                    min(values.size - m, coarse_at + radius) + 1):
        w = values[at:at + m]
        wz = w - w.mean()
        wn = float(np.dot(wz, wz))
        if wn <= 0:
            continue
        r = float(np.dot(qz, wz)) / math.sqrt(qn * wn)
        if r > best_r:
            best_r = r
            best_at = at
    return best_at


def smooth_moving_average(values: np.ndarray, width: int = 5) -> np.ndarray:
    if values.size < width:
        return values
    kernel = np.ones(width) / width
    return np.convolve(values, kernel, mode="same")


def day_profile(timestamps: np.ndarray, values: np.ndarray,
                interval: int, points_per_day: int) -> np.ndarray:
    """Median value per day-phase bucket (the daily seasonal component).

    The median keeps injected or anomalous stretches from bleeding into
    the estimated cycle.
    """
    phases = (timestamps // interval) % points_per_day
    fallback = float(np.median(values)) if values.size else 0.0
    out = np.full(points_per_day, fallback)
    order = np.argsort(phases, kind="stable")
    sorted_phases = phases[order]
    sorted_vals = values[order]
    edges = np.searchsorted(sorted_phases, np.arange(points_per_day + 1))
    for p in range(points_per_day):
        lo, hi = edges[p], edges[p + 1]
        if hi > lo:
            out[p] = float(np.median(sorted_vals[lo:hi]))
    return out


def deseasonalize(timestamps: np.ndarray, values: np.ndarray, profile: np.ndarray,
                  interval: int) -> np.ndarray:
    phases = (timestamps // interval) % profile.size
    return values - profile[phases]


def refined_subsequence_match(query: SeriesSlice, search: SeriesSlice,
                              coarse_at: int, radius: int = 28) -> int:
    """Alignment refinement on deseasonalized, smoothed copies of both sides.

    The shared daily cycle and autocorrelated noise tilt a plain correlation
    across the flat top of a smooth template's autocorrelation; removing the
    cycle and averaging the noise pins the transition.
    """
    deltas = np.diff(search.timestamps)
    step = int(np.median(deltas)) if deltas.size else 1
    points_per_day = max(1, 86400 // step)
    all_ts = np.concatenate([query.timestamps, search.timestamps])
    all_vals = np.concatenate([query.values, search.values])
    profile = day_profile(all_ts, all_vals, step, points_per_day)
    q = smooth_moving_average(deseasonalize(query.timestamps, query.values, profile, step))
    s = smooth_moving_average(deseasonalize(search.timestamps, search.values, profile, step))
    return refine_alignment(q, s, coarse_at, radius=radius)


# ---------------------------------------------------------------------------
# changepoints


@dataclass(frozen=True)
class Changepoints:
    indices: tuple[int, ...]
    n: int

    def segments(self) -> list[tuple[int, int]]:
        bounds = (0,) + self.indices + (self.n,)
        return list(zip(bounds[:-1], bounds[1:]))


def default_changepoint_penalty(values: np.ndarray) -> float:
    """2 * sigma^2 * ln(n), with sigma estimated from first differences.

    For i.i.d. noise, Var(x[t+1] - x[t]) = 2 sigma^2; level shifts contribute
    only a handful of diff samples, so the estimate stays honest on
    piecewise-constant signals.
    """
    n = values.size
    if n < 2:
        return 1.0
    sigma2 = float(np.var(np.diff(values))) / 2.0
    return 2.0 * sigma2 * math.log(n)


def _mean_cost_factory(values: np.ndarray) -> Callable[[np.ndarray, int], np.ndarray]:
    s1 = np.concatenate(([0.0], np.cumsum(values)))
    s2 = np.concatenate(([0.0], np.cumsum(values * values)))

    def cost(starts: np.ndarray, end: int) -> np.ndarray:
        length = end - starts
        total = s1[end] - s1[starts]
        return (s2[end] - s2[starts]) - total * total / length

    return cost


def _variance_cost_factory(values: np.ndarray) -> Callable[[np.ndarray, int], np.ndarray]:
    s1 = np.concatenate(([0.0], np.cumsum(values)))
    s2 = np.concatenate(([0.0], np.cumsum(values * values)))

    def cost(starts: np.ndarray, end: int) -> np.ndarray:
        length = end - starts
        total = s1[end] - s1[starts]
        sse = (s2[end] - s2[starts]) - total * total / length
        return length * np.log(np.maximum(sse / length, 1e-12))

    return cost


def _linear_cost_factory(values: np.ndarray) -> Callable[[np.ndarray, int], np.ndarray]:
    """SSE around each segment's own least-squares line (trend regimes)."""
    x = np.arange(values.size, dtype=np.float64)
    sy = np.concatenate(([0.0], np.cumsum(values)))
    syy = np.concatenate(([0.0], np.cumsum(values * values)))
    sx = np.concatenate(([0.0], np.cumsum(x)))
    sxx = np.concatenate(([0.0], np.cumsum(x * x)))
    sxy = np.concatenate(([0.0], np.cumsum(x * values)))

    def cost(starts: np.ndarray, end: int) -> np.ndarray:
        n = end - starts
        vy = (syy[end] - syy[starts]) - (sy[end] - sy[starts]) ** 2 / n
        cxx = (sxx[end] - sxx[starts]) - (sx[end] - sx[starts]) ** 2 / n
        cxy = (sxy[end] - sxy[starts]) - (sx[end] - sx[starts]) * (sy[end] - sy[starts]) / n
        fit = np.where(cxx > 0, cxy * cxy / np.where(cxx > 0, cxx, 1.0), 0.0)
        return np.maximum(vy - fit, 0.0)

    return cost


COST_FACTORIES = {
    "mean": _mean_cost_factory,
    "variance": _variance_cost_factory,
    "linear": _linear_cost_factory,
}


def detect_changepoints(values: Sequence[float], penalty: float | None = None,
                        min_segment_length: int = 5, cost: str = "mean") -> Changepoints:
    """Exact minimizer of sum(segment costs) + penalty * (#changepoints).

    The default cost penalizes deviation from each segment's mean; the
    "variance" cost (Gaussian with free per-segment variance) detects
    dispersion shifts. Pruned candidates are kept alive for one extra
    min_segment_length so pruning never changes the optimum under the
    minimum-segment constraint.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if min_segment_length < 1:
        raise ValueError("min_segment_length must be >= 1")
    if n < 2 * min_segment_length:
        raise TooShort(f"need at least {2 * min_segment_length} points, got {n}")
    if penalty is None:
        penalty = 3.0 * math.log(n) if cost == "variance" else default_changepoint_penalty(x)
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    cost_fn = COST_FACTORIES[cost](x)

    inf = float("inf")
    f = np.full(n + 1, inf)
    f[0] = -penalty
    prev = np.zeros(n + 1, dtype=np.int64)
    cands = np.array([0], dtype=np.int64)
    dead_from = np.array([np.iinfo(np.int64).max], dtype=np.int64)

    for t in range(min_segment_length, n + 1):
        alive = dead_from > t
        cands = cands[alive]
        dead_from = dead_from[alive]
        valid = t - cands >= min_segment_length
        vs = cands[valid]
        totals = f[vs] + cost_fn(vs, t) + penalty
        best = int(np.argmin(totals))  # first minimum = smallest s on ties
        f[t] = totals[best]
        prev[t] = vs[best]
        # candidates strictly dominated now stay eligible until t + min_seg;
        # the pruning test compares unpenalized path costs: F(s) + C(s,t) > F(t)
        dominated = valid.copy()
        dominated[valid] = totals - penalty > f[t]
        newly = dominated & (dead_from == np.iinfo(np.int64).max)
        dead_from[newly] = t + min_segment_length
        if t <= n - min_segment_length:
            cands = np.append(cands, t)
            dead_from = np.append(dead_from, np.iinfo(np.int64).max)

    out: list[int] = []
    t = n
    while t > 0:
        s = int(prev[t])
        if s > 0:
            out.append(s)
        t = s
    return Changepoints(tuple(sorted(out)), n)


def exhaustive_changepoints(values: Sequence[float], penalty: float | None = None,
                            min_segment_length: int = 5, cost: str = "mean") -> Changepoints:
    """O(n^2) dynamic program over all admissible segmentations (no pruning)."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2 * min_segment_length:
        raise TooShort(f"need at least {2 * min_segment_length} points, got {n}")
    if penalty is None:
        penalty = 3.0 * math.log(n) if cost == "variance" else default_changepoint_penalty(x)
    cost_fn = COST_FACTORIES[cost](x)

    inf = float("inf")
    f = np.full(n + 1, inf)
    f[0] = -penalty
    prev = np.zeros(n + 1, dtype=np.int64)
    for t in range(min_segment_length, n + 1):
        starts = [0] + [s for s in range(min_segment_length, t - min_segment_length + 1)]
        ss = np.asarray(starts, dtype=np.int64)
        totals = f[ss] + cost_fn(ss, t) + penalty
        best = int(np.argmin(totals))
        f[t] = totals[best]
        prev[t] = ss[best]
    out: list[int] = []
    t = n
    while t > 0:
        s = int(prev[t])
        if s > 0:
            out.append(s)
        t = s
    return Changepoints(tuple(sorted(out)), n)


# ---------------------------------------------------------------------------
# robust slope


THEIL_SEN_EXACT_LIMIT = 1000
THEIL_SEN_SAMPLE_PAIRS = 500_000
_THEIL_SEN_SEED = 909


def calc_trend_slope(values: Sequence[float]) -> float:
    """Theil-Sen slope: median over pairwise slopes (v_j - v_i) / (j - i).

    Exact over all pairs up to 1000 points; above that, a seeded uniform
    subsample of 500k pairs keeps the estimate deterministic and cheap.
    """
    y = np.asarray(values, dtype=np.float64)
    n = y.size
    if n < 2:
        raise TooShort("slope needs at least 2 points")
    if n <= THEIL_SEN_EXACT_LIMIT:
        idx = np.arange(n, dtype=np.float64)
        dv = y[None, :] - y[:, None]
        di = idx[None, :] - idx[:, None]
        iu = np.triu_indices(n, k=1)
        slopes = dv[iu] / di[iu]
    else:
        rng = np.random.default_rng(_THEIL_SEN_SEED)
        need = THEIL_SEN_SAMPLE_PAIRS
        chunks: list[np.ndarray] = []
        got = 0
        while got < need:
            a = rng.integers(0, n, size=need)
            b = rng.integers(0, n, size=need)
            mask = a != b
            s = (y[b[mask]] - y[a[mask]]) / (b[mask] - a[mask])
            chunks.append(s[: need - got])
            got += chunks[-1].size
        slopes = np.concatenate(chunks)
    return float(np.median(slopes))


def theil_sen_fit(values: Sequence[float]) -> tuple[float, float]:
    """(slope, intercept) with the median-residual intercept."""
    y = np.asarray(values, dtype=np.float64)
    slope = calc_trend_slope(y)
    x = np.arange(y.size, dtype=np.float64)
    intercept = float(np.median(y - slope * x))
    return slope, intercept


# ---------------------------------------------------------------------------
# correlation


def calc_correlation(a: Sequence[float], b: Sequence[float], lag: int = 0) -> float:
    """Pearson r between a[i] and b[i + lag] over their overlap.

    Positive lag realigns a delayed ``b`` (b trailing a by ``lag`` points).
    """
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    na, nb = xa.size, xb.size
    lo = max(0, -lag)
    hi = min(na, nb - lag)
    if hi - lo < 3:
        raise InsufficientOverlap(f"overlap of {max(0, hi - lo)} points; need >= 3")
    u = xa[lo:hi]
    v = xb[lo + lag:hi + lag]
    su, sv = u.std(), v.std()
    if su <= 0 or sv <= 0:
        raise ZeroVariance("an overlap segment is constant")
    r = float(np.mean((u - u.mean()) * (v - v.mean())) / (su * sv))
    return max(-1.0, min(1.0, r))


# ---------------------------------------------------------------------------
# composed trend report


STABLE_PERCENTILE = 40.0
RAPID_PERCENTILE = 75.0
OUTLIER_SIGMA = 3.0
FLUCTUATION_RATIO = 1.25  # volatility must clearly exceed the median to read as fluctuating


def label_segments(slopes: Sequence[float], residual_stds: Sequence[float],
                   lengths: Sequence[int] | None = None) -> list[TrendLabel]:
    """Standardized trend labels from per-segment slopes and volatilities.

    Direction is relative: |slope| below the 40th percentile of all segment
    |slopes| reads as STABLE; otherwise sign decides RISE/FALL. A segment
    whose total movement |slope| * length does not clear its own residual
    noise is also STABLE (a lone noisy flat window should not read as a
    trend). RAPID starts above the 75th |slope| percentile; STEADY vs
    FLUCTUATING compares volatility to the median volatility.
    """
    s = np.asarray(slopes, dtype=np.float64)
    v = np.asarray(residual_stds, dtype=np.float64)
    if lengths is None:
        lens = np.full(s.size, np.inf)
    else:
        lens = np.asarray(lengths, dtype=np.float64)
    abs_s = np.abs(s)
    p40 = float(np.percentile(abs_s, STABLE_PERCENTILE))
    p75 = float(np.percentile(abs_s, RAPID_PERCENTILE))
    med_v = float(np.median(v))
    labels: list[TrendLabel] = []
    for slope, vol, length in zip(s, v, lens):
        insignificant = bool(np.isfinite(length)) and abs(slope) * length <= vol
        if abs(slope) < p40 or abs(slope) <= 1e-12 or insignificant:
            mod = TrendModifier.STEADY if vol <= FLUCTUATION_RATIO * med_v else TrendModifier.FLUCTUATING
            labels.append(TrendLabel(TrendDirection.STABLE, mod))
        else:
            direction = TrendDirection.RISE if slope > 0 else TrendDirection.FALL
            mod = TrendModifier.RAPID if abs(slope) > p75 else TrendModifier.GRADUAL
            labels.append(TrendLabel(direction, mod))
    return labels


def _segment_fit(values: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Theil-Sen fit of one segment -> (slope, residual std, residuals)."""
    if values.size < 2:
        return 0.0, 0.0, np.zeros_like(values)
    slope, intercept = theil_sen_fit(values)
    residuals = values - (intercept + slope * np.arange(values.size))
    return slope, float(residuals.std()), residuals


def median_filter(values: np.ndarray, width: int = 5) -> np.ndarray:
    """Running median; isolated spikes vanish, edges and ramps survive."""
    if width < 2 or values.size < width:
        return values
    pad = width // 2
    padded = np.concatenate([np.full(pad, values[0]), values, np.full(pad, values[-1])])
    return np.median(sliding_window_view(padded, width), axis=1)


def _absorb_short_segments(bounds: list[int], values: np.ndarray, floor: int) -> list[int]:
    """Fold segments shorter than the floor into their better-fitting neighbor."""
    bounds = list(bounds)
    while len(bounds) > 2:
        lengths = [b - a for a, b in zip(bounds[:-1], bounds[1:])]
        short = [i for i, L in enumerate(lengths) if L < floor]
        if not short:
            break
        i = min(short, key=lambda j: lengths[j])
        if i == 0:
            del bounds[1]
        elif i == len(lengths) - 1:
            del bounds[-2]
        else:
            # drop the boundary whose removal leaves the lower combined SSE
            left = values[bounds[i - 1]:bounds[i + 1]]
            right = values[bounds[i]:bounds[i + 2]]
            _, vl, _ = _segment_fit(left)
            _, vr, _ = _segment_fit(right)
            del bounds[i if vl * left.size <= vr * right.size else i + 1]
    return bounds


SLOPE_MERGE_REL_DIFF = 0.35


def _merge_similar_slopes(bounds: list[int], values: np.ndarray) -> list[int]:
    """Rejoin adjacent segments whose robust slopes nearly agree.

    A gently curved ramp legitimately splits into two lines under the
    segmentation cost, but a report should read it as one trend; the
    percentile direction rule is unstable on near-tie slopes, so merging
    happens before labeling.
    """
    bounds = list(bounds)
    while len(bounds) > 2:
        slopes = [calc_trend_slope(values[a:b]) if b - a >= 2 else 0.0
                  for a, b in zip(bounds[:-1], bounds[1:])]
        best_i = None
        best_rel = SLOPE_MERGE_REL_DIFF
        for i in range(len(slopes) - 1):
            denom = max(abs(slopes[i]), abs(slopes[i + 1]))
            if denom <= 0:
                continue
            rel = abs(slopes[i] - slopes[i + 1]) / denom
            if rel <= best_rel:
                best_rel = rel
                best_i = i
        if best_i is None:
            break
        del bounds[best_i + 1]
    return bounds


def segment_and_label(slice_: SeriesSlice, penalty: float | None = None,
                      min_segment_length: int = 5) -> Report:
    """Changepoint segmentation + robust per-segment labels + outlier audit.

    Segmentation runs with the piecewise-linear cost on a median-filtered
    copy, so a long ramp is one regime (not a staircase of mean shifts) and
    single-point outliers cannot masquerade as regime breaks; labels and
    the outlier audit still use the raw values. Adjacent segments that read
    as the same direction are merged and refitted until the direction
    sequence alternates.
    """
    values = slice_.values
    ts = slice_.timestamps
    n = values.size
    if n < 2 * min_segment_length:
        raise TooShort(f"need at least {2 * min_segment_length} points, got {n}")

    filtered = median_filter(values)
    if penalty is None:
        # a narrative report wants regimes, not marginal splits; scale the
        # penalty to the noisiest regime so lucky splits inside a volatile
        # stretch never clear it
        block = 32
        diffs = np.diff(values)
        n_blocks = diffs.size // block
        if n_blocks >= 1:
            local_var = diffs[: n_blocks * block].reshape(n_blocks, block).var(axis=1)
            sigma2 = float(np.percentile(local_var, 85)) / 2.0
        else:
            sigma2 = float(np.var(diffs)) / 2.0 if diffs.size else 1.0
        penalty = 3.0 * max(sigma2, 1e-12) * math.log(n)
    cps = detect_changepoints(filtered, penalty=penalty,
                              min_segment_length=min_segment_length, cost="linear")
    short_floor = max(3 * min_segment_length, round(0.015 * n))
    bounds = _absorb_short_segments([0, *cps.indices, n], values, short_floor)
    bounds = _merge_similar_slopes(bounds, values)

    def fit_all(bnds: list[int]):
        slopes, vols, resids = [], [], []
        for a, b in zip(bnds[:-1], bnds[1:]):
            s, v, r = _segment_fit(values[a:b])
            slopes.append(s)
            vols.append(v)
            resids.append(r)
        return slopes, vols, resids

    slopes, vols, resids = fit_all(bounds)
    lengths = [b - a for a, b in zip(bounds[:-1], bounds[1:])]
    labels = label_segments(slopes, vols, lengths)

    while True:
        merge_at = next(
            (
                i
                for i in range(len(labels) - 1)
                if labels[i].direction == labels[i + 1].direction
            ),
            None,
        )
        if merge_at is None:
            break
        del bounds[merge_at + 1]
        slopes, vols, resids = fit_all(bounds)
        lengths = [b - a for a, b in zip(bounds[:-1], bounds[1:])]
        labels = label_segments(slopes, vols, lengths)

    deltas = np.diff(ts)
    step = int(np.median(deltas)) if deltas.size else 1

    segments: list[ReportSegment] = []
    outliers: list[int] = []
    for (a, b), label, resid in zip(zip(bounds[:-1], bounds[1:]), labels, resids):
        end_ts = int(ts[b - 1]) + step
        segments.append(ReportSegment(TimeWindow(int(ts[a]), end_ts), label))
        mad = float(np.median(np.abs(resid - np.median(resid))))
        scale = 1.4826 * mad
        if scale <= 0:
            scale = float(resid.std())
        if scale > 0:
            absr = np.abs(resid)
            hits = np.nonzero(absr > OUTLIER_SIGMA * scale)[0]
            block = 96
            for h in hits:
                # significant outliers are isolated spikes; a run of large
                # residuals is a mis-fit regime, not an outlier
                left = absr[h - 1] if h > 0 else 0.0
                right = absr[h + 1] if h + 1 < absr.size else 0.0
                if absr[h] < 1.5 * max(left, right):
                    continue
                # judge against the local neighbourhood too: a segment that
                # straddles a volatile stretch must not flag its every swing
                lo = max(0, h - block // 2)
                hi = min(resid.size, h + block // 2)
                local = resid[lo:hi]
                local_mad = float(np.median(np.abs(local - np.median(local))))
                local_scale = max(scale, 1.4826 * local_mad)
                if absr[h] > OUTLIER_SIGMA * local_scale:
                    outliers.append(int(ts[a + h]))

    return Report(tuple(segments), tuple(sorted(outliers)))
