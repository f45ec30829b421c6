"""Multi-scale feature tables: window statistics plus SAX shape signatures.

Windows are aligned to UTC calendar boundaries at three granularities:

    YEARLY   segment count 12 (one symbol per month)
    MONTHLY  segment count = days in that month
    DAILY    segment count 24 (one symbol per hour)

Each window row stores min/max/avg/std, an index-slope pruning signal, a
SAX string and a coverage fraction. Encoding is PAA (segment means with
fractional boundary weighting) followed by z-normalization of the PAA
vector and symbol lookup against equiprobable normal breakpoints.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .model import EmptyInput, SeriesSlice, TimeWindow, Timestamp
from .store import SeriesStore, UnknownChannel

DEGENERATE_STD = 1e-12


class ViewType(str, Enum):
    YEARLY = "YEARLY"
    MONTHLY = "MONTHLY"
    DAILY = "DAILY"


VIEW_TABLE_NAMES = {
    "feature_daily": ViewType.DAILY,
    "feature_monthly": ViewType.MONTHLY,
    "feature_yearly": ViewType.YEARLY,
}


def normal_breakpoints(alphabet_size: int) -> tuple[float, ...]:
    """Breakpoints splitting N(0,1) into ``alphabet_size`` equiprobable regions."""
    if alphabet_size < 2:
        raise ValueError("alphabet size must be >= 2")
    dist = NormalDist()
    return tuple(dist.inv_cdf(k / alphabet_size) for k in range(1, alphabet_size))


@dataclass(frozen=True)
class SaxConfig:
    alphabet_size: int = 5
    breakpoints: tuple[float, ...] = field(default_factory=lambda: normal_breakpoints(5))

    def __post_init__(self):
        if self.alphabet_size < 2 or self.alphabet_size > 26:
            raise ValueError("alphabet size must be in [2, 26]")
        bps = tuple(float(b) for b in self.breakpoints)
        if len(bps) != self.alphabet_size - 1:
            raise ValueError("need alphabet_size - 1 breakpoints")
        if any(b >= c for b, c in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bps)

    @property
    def alphabet(self) -> str:
        return "".join(chr(ord("a") + i) for i in range(self.alphabet_size))

    @property
    def middle_symbol(self) -> str:
        return self.alphabet[self.alphabet_size // 2]


DEFAULT_SAX = SaxConfig()


def compute_paa(values: Sequence[float], segments: int) -> np.ndarray:
    """Piecewise aggregate approximation with fractional boundary weighting.

    The series is treated as a step function on [0, n); segment i covers
    [i*n/w, (i+1)*n/w) so every segment carries total weight n/w even when
    w does not divide n. For divisible n this reduces to plain segment means.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise EmptyInput("cannot compute PAA of an empty window")
    if segments < 1:
        raise ValueError("segment count must be >= 1")
    n = vals.size
    w = int(segments)
    if n % w == 0:
        return vals.reshape(w, n // w).mean(axis=1)

    # integral of the step function up to fractional coordinate t
    prefix = np.concatenate(([0.0], np.cumsum(vals)))

    def integral(t: np.ndarray) -> np.ndarray:
        idx = np.floor(t).astype(np.int64)
        idx = np.clip(idx, 0, n)
        frac = t - idx
        base = prefix[idx]
        inner = np.where(idx < n, vals[np.minimum(idx, n - 1)] * frac, 0.0)
        return base + inner

    bounds = np.arange(w + 1, dtype=np.float64) * (n / w)
    area = integral(bounds[1:]) - integral(bounds[:-1])
    return area * (w / n)


def symbolize(z_scores: Sequence[float], cfg: SaxConfig = DEFAULT_SAX) -> str:
    """Map z-scored coefficients to symbols; breakpoint k is the lower edge of symbol k+1."""
    bps = np.asarray(cfg.breakpoints)
    idx = np.searchsorted(bps, np.asarray(z_scores, dtype=np.float64), side="right")
    alphabet = cfg.alphabet
    return "".join(alphabet[i] for i in idx)


def sax_encode(values: Sequence[float], segments: int, cfg: SaxConfig = DEFAULT_SAX) -> str:
    """PAA, then z-normalize the PAA vector, then symbol lookup.

    A window whose PAA vector has (near-)zero variance encodes as all middle
    symbols: a flat stretch should look flat, not undefined.
    """
    paa = compute_paa(values, segments)
    std = float(paa.std())
    if std <= DEGENERATE_STD:
        return cfg.middle_symbol * int(segments)
    z = (paa - paa.mean()) / std
    return symbolize(z, cfg)


@dataclass(frozen=True)
class WindowStats:
    min_val: float
    max_val: float
    avg_val: float
    std_val: float
    slope: float | None


def compute_window_stats(slice_: SeriesSlice) -> WindowStats:
    """Descriptive stats plus OLS slope of value against point index.

    std is the population standard deviation. The slope is the cheap
    pruning signal for the index; the robust estimator lives with the
    verification operators.
    """
    vals = slice_.values
    if vals.size == 0:
        raise EmptyInput("cannot compute stats of an empty slice")
    slope = None
    if vals.size >= 2:
        idx = np.arange(vals.size, dtype=np.float64)
        xc = idx - idx.mean()
        slope = float(np.dot(xc, vals - vals.mean()) / np.dot(xc, xc))
    return WindowStats(
        min_val=float(vals.min()),
        max_val=float(vals.max()),
        avg_val=float(vals.mean()),
        std_val=float(vals.std()),
        slope=slope,
    )


@dataclass(frozen=True)
class FeatureRow:
    series_id: str
    view_type: ViewType
    window: TimeWindow
    min_val: float
    max_val: float
    avg_val: float
    std_val: float
    slope: float | None
    sax: str | None
    sax_len: int
    coverage: float

    def to_json(self) -> dict:
        return {
            "series_id": self.series_id,
            "view_type": self.view_type.value,
            "window_start": self.window.start,
            "window_end": self.window.end,
            "min_val": self.min_val,
            "max_val": self.max_val,
            "avg_val": self.avg_val,
            "std_val": self.std_val,
            "slope": self.slope,
            "sax": self.sax,
            "sax_len": self.sax_len,
            "coverage": self.coverage,
        }


def _utc(ts: Timestamp) -> datetime:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc)


def _epoch(dt: datetime) -> int:
    return int(dt.timestamp())


def calendar_windows(view: ViewType, first_ts: Timestamp, last_ts: Timestamp,
                     offset_seconds: int = 0) -> list[tuple[TimeWindow, int]]:
    """Calendar-aligned (window, segment_count) pairs intersecting the range.

    ``offset_seconds`` shifts the boundary phase (default 0 = UTC midnight /
    month start / year start).
    """
    out: list[tuple[TimeWindow, int]] = []
    first = int(first_ts) - offset_seconds
    last = int(last_ts) - offset_seconds
    if view is ViewType.DAILY:
        day = 86400
        start = (first // day) * day
        while start <= last:
            out.append((TimeWindow(start + offset_seconds, start + day + offset_seconds), 24))
            start += day
    elif view is ViewType.MONTHLY:
        dt = _utc(first)
        dt = datetime(dt.year, dt.month, 1, tzinfo=timezone.utc)
        while _epoch(dt) <= last:
            days = calendar.monthrange(dt.year, dt.month)[1]
            nxt = datetime(dt.year + (dt.month == 12), dt.month % 12 + 1, 1, tzinfo=timezone.utc)
            out.append((TimeWindow(_epoch(dt) + offset_seconds, _epoch(nxt) + offset_seconds), days))
            dt = nxt
    else:
        dt = _utc(first)
        dt = datetime(dt.year, 1, 1, tzinfo=timezone.utc)
        while _epoch(dt) <= last:
            nxt = datetime(dt.year + 1, 1, 1, tzinfo=timezone.utc)
            out.append((TimeWindow(_epoch(dt) + offset_seconds, _epoch(nxt) + offset_seconds), 12))
            dt = nxt
    return out


def build_feature_tables(store: SeriesStore, channels: Iterable[str] | None = None,
                         views: Iterable[ViewType] = (ViewType.DAILY, ViewType.MONTHLY, ViewType.YEARLY),
                         cfg: SaxConfig = DEFAULT_SAX, coverage_floor: float = 0.5,
                         offsets: dict[ViewType, int] | None = None) -> int:
    """(Re)build feature rows for the given channels and views.

    One row per calendar-aligned window that contains at least one point.
    Windows whose coverage falls below ``coverage_floor`` keep their stats
    but store a null SAX string (too sparse for a trustworthy shape).
    Rebuilding is deterministic: prior rows for the same (channel, view)
    are replaced.
    """
    offsets = offsets or {}
    names = list(channels) if channels is not None else store.channel_names()
    for name in names:
        if not store.has_channel(name):
            raise UnknownChannel(f"unknown channel {name!r}")

    written = 0
    cur = store.conn.cursor()
    for name in names:
        full = store.fetch_all(name)
        if len(full) == 0:
            continue
        stats = store.channel_stats(name)
        interval = stats.median_interval_seconds or float(86400)
        ts = full.timestamps
        vals = full.values
        for view in views:
            cur.execute(
                "DELETE FROM features WHERE series_id=? AND view_type=?", (name, view.value)
            )
            rows = []
            for window, segments in calendar_windows(view, int(ts[0]), int(ts[-1]),
                                                     offsets.get(view, 0)):
                lo = int(np.searchsorted(ts, window.start, side="left"))
                hi = int(np.searchsorted(ts, window.end, side="left"))
                if hi <= lo:
                    continue
                wvals = vals[lo:hi]
                expected = max(1.0, window.duration_seconds / interval)
                coverage = min(1.0, (hi - lo) / expected)
                st = compute_window_stats(SeriesSlice(name, ts[lo:hi], wvals))
                sax = sax_encode(wvals, segments, cfg) if coverage >= coverage_floor else None
                rows.append(
                    (
                        name, view.value, window.start, window.end,
                        st.min_val, st.max_val, st.avg_val, st.std_val, st.slope,
                        sax, segments, coverage,
                    )
                )
            cur.executemany(
                "INSERT OR REPLACE INTO features (series_id, view_type, window_start, window_end,"
                " min_val, max_val, avg_val, std_val, slope, sax, sax_len, coverage)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                rows,
            )
            written += len(rows)
    store.conn.commit()
    return written


def export_features_csv(store: SeriesStore, path: str) -> int:
    """Dump the feature table with its canonical column names."""
    import csv as _csv

    rows = store.conn.execute(
        "SELECT series_id, view_type, window_start, window_end, min_val, max_val,"
        " avg_val, std_val, slope, sax, sax_len, coverage FROM features"
        " ORDER BY series_id, view_type, window_start"
    ).fetchall()
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            ["series_id", "view_type", "window_start", "window_end", "min_val", "max_val",
             "avg_val", "std_val", "slope", "sax", "sax_len", "coverage"]
        )
        writer.writerows(rows)
    return len(rows)
