"""Benchmark construction: controlled injection over synthesized backgrounds.

Two generation strategies: L1 answers are extracted from raw data by the
deterministic builtins (the question is built around what the data already
says); L2-L4 instances inject mathematically specified patterns into
stationary background windows, so ground truth is exact by construction.
Gain is calibrated so the injected peak clears the local background noise
(SNR above 1, usually well above), and every emitted instance passes an
automated QA gate plus a solver round-trip before it is published.

Backgrounds are synthesized (seasonal daily cycle + slow drift + AR(1)
noise); real CSV data can replace them through the normal ingest path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import operators as ops
from . import taskspec as ts
from .executor import (
    builtin_aggregate,
    builtin_interval_above_threshold,
    builtin_locate_extremum,
    builtin_sliding_window_stat,
    builtin_top_k_by_score,
)
from .metrics import METRIC_FOR_KIND, score_answer_value
from .model import (
    Answer,
    AnswerKind,
    Report,
    ReportSegment,
    SeriesSlice,
    TimeWindow,
    to_utc_date,
)
from .store import SeriesStore

INTERVAL = ts.BENCH_INTERVAL_SECONDS
DAY_PTS = ts.POINTS_PER_DAY
HOUR_PTS = ts.POINTS_PER_HOUR
DAY = 86400


class BenchError(Exception):
    pass


class BadParameters(BenchError):
    pass


class InsufficientData(BenchError):
    pass


class OutOfBounds(BenchError):
    pass


class FlatBackground(BenchError):
    pass


class GenerationExhausted(BenchError):
    pass


# ---------------------------------------------------------------------------
# atomic primitives


class PrimitiveKind(str, Enum):
    SPIKE = "SPIKE"
    BOX = "BOX"
    WAVE = "WAVE"
    RAMP = "RAMP"
    SIGMOID_STEP = "SIGMOID_STEP"


@dataclass(frozen=True)
class Primitive:
    kind: PrimitiveKind
    params: dict

    def __post_init__(self):
        p = self.params
        if self.kind is PrimitiveKind.SPIKE:
            if p.get("lam", 1.0) <= 0:
                raise BadParameters("spike decay must be positive")
        elif self.kind is PrimitiveKind.BOX:
            if p.get("steepness", 1.0) <= 0:
                raise BadParameters("box steepness must be positive")
            if p["start"] >= p["end"]:
                raise BadParameters("box start must precede end")
        elif self.kind is PrimitiveKind.WAVE:
            if not p.get("components"):
                raise BadParameters("wave needs at least one component")
            if any(c[1] <= 0 for c in p["components"]):
                raise BadParameters("wave periods must be positive")
        elif self.kind is PrimitiveKind.SIGMOID_STEP:
            if p.get("steepness", 1.0) <= 0:
                raise BadParameters("step steepness must be positive")


def render_primitive(p: Primitive, n: int) -> np.ndarray:
    """Sample the primitive's closed form at integer offsets 0..n-1."""
    if n < 2:
        raise BadParameters("need at least 2 samples")
    t = np.arange(n, dtype=np.float64)
    prm = p.params
    if p.kind is PrimitiveKind.SPIKE:
        amplitude = prm.get("amplitude", 1.0)
        center = prm.get("center", (n - 1) / 2.0)
        lam = prm["lam"]
        return amplitude * np.exp(-lam * (t - center) ** 2)
    if p.kind is PrimitiveKind.BOX:
        amplitude = prm.get("amplitude", 1.0)
        return amplitude * ts.box_shape(n, prm["start"], prm["end"], prm["steepness"])
    if p.kind is PrimitiveKind.WAVE:
        out = np.zeros(n)
        for amp, period, phase in prm["components"]:
            out += amp * np.sin(2 * np.pi * t / period + phase)
        sigma = prm.get("noise_sigma", 0.0)
        if sigma > 0:
            rng = np.random.default_rng(prm.get("noise_seed", 0))
            out += rng.normal(0, sigma, n)
        return out
    if p.kind is PrimitiveKind.RAMP:
        return prm["slope"] * (t - (n - 1) / 2.0)
    if p.kind is PrimitiveKind.SIGMOID_STEP:
        amplitude = prm.get("amplitude", 1.0)
        return amplitude * ts.step_shape(n, prm.get("center", (n - 1) / 2.0),
                                         prm["steepness"])
    raise BadParameters(f"unknown primitive {p.kind}")


# ---------------------------------------------------------------------------
# background synthesis


def synthesize_background(rng: np.random.Generator, n: int,
                          interval: int = INTERVAL,
                          level: float = 20.0, scale: float = 1.0,
                          seasonal_amp: float = 0.4, drift_amp: float = 1.2,
                          ar_coeff: float = 0.6) -> np.ndarray:
    """Daily seasonality + slow drift + AR(1) noise, std roughly ``scale``."""
    t = np.arange(n, dtype=np.float64)
    day_phase = 2 * np.pi * (t * interval % DAY) / DAY
    seasonal = seasonal_amp * scale * np.sin(day_phase + rng.uniform(0, 2 * np.pi))
    drift = (
        drift_amp * scale * np.sin(2 * np.pi * t / max(n, 2) * rng.uniform(0.5, 1.5)
                                   + rng.uniform(0, 2 * np.pi))
        + 0.4 * drift_amp * scale * np.sin(2 * np.pi * t / max(n / 3.1, 2)
                                           + rng.uniform(0, 2 * np.pi))
    )
    innovations = rng.normal(0.0, scale * math.sqrt(1 - ar_coeff ** 2), n)
    noise = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = ar_coeff * acc + innovations[i]
        noise[i] = acc
    return level + seasonal + drift + noise


def populate_demo_store(store: SeriesStore, channels: int = 3, days: int = 120,
                        seed: int = 7, interval: int = 3600,
                        start: int = 1577836800) -> list[str]:
    """Fill a store with hourly demo channels (for the CLI quick start)."""
    names = []
    n = days * (DAY // interval)
    for i in range(channels):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        name = f"sensor_{chr(ord('a') + i)}"
        vals = synthesize_background(rng, n, interval=interval,
                                     level=20.0 + 10 * i, scale=1.0 + 0.4 * i)
        ts_ = start + interval * np.arange(n)
        store.write_points(name, ts_, vals)
        names.append(name)
    return names


def sample_background(store: SeriesStore, channel: str, length: int,
                      stationarity_scan: int = 20,
                      rng: np.random.Generator | None = None) -> SeriesSlice:
    """Minimum-variance window among randomly scanned candidates."""
    rng = rng or np.random.default_rng(0)
    full = store.fetch_all(channel)
    if len(full) < length:
        raise InsufficientData(
            f"channel {channel} has {len(full)} points; need {length}"
        )
    max_start = len(full) - length
    starts = rng.integers(0, max_start + 1, size=stationarity_scan)
    best_start = None
    best_var = math.inf
    for s in starts:
        var = float(full.values[s:s + length].var())
        if var < best_var:
            best_var = var
            best_start = int(s)
    return SeriesSlice(channel, full.timestamps[best_start:best_start + length],
                       full.values[best_start:best_start + length])


def calibrate_gain(background: SeriesSlice | np.ndarray, pattern: np.ndarray,
                   target_snr: float = 1.5) -> float:
    """Gain putting the injected peak at target_snr times the background std."""
    values = background.values if isinstance(background, SeriesSlice) else np.asarray(background)
    sigma = float(values.std())
    peak = float(np.abs(pattern).max())
    if peak <= 0:
        raise BadParameters("pattern has zero amplitude")
    if sigma <= 0:
        raise FlatBackground("background has zero variance; inject at absolute amplitude")
    return target_snr * sigma / peak


def inject(background: SeriesSlice, pattern: np.ndarray, alpha: float,
           at: int) -> tuple[SeriesSlice, TimeWindow]:
    """Pointwise addition; ground truth is the 5%-of-peak support window."""
    n = len(background)
    m = len(pattern)
    if at < 0 or at + m > n:
        raise OutOfBounds(f"pattern of {m} points at offset {at} exceeds {n}")
    values = background.values.copy()
    values[at:at + m] = values[at:at + m] + alpha * pattern
    if alpha == 0:
        window = TimeWindow(int(background.timestamps[at]),
                            int(background.timestamps[at + m - 1]) + INTERVAL)
        return SeriesSlice(background.channel, background.timestamps, values), window
    lo, hi = ts.support_bounds(alpha * pattern)
    start_ts = int(background.timestamps[at + lo])
    end_ts = int(background.timestamps[at + hi]) + INTERVAL
    return (
        SeriesSlice(background.channel, background.timestamps, values),
        TimeWindow(start_ts, end_ts),
    )


# ---------------------------------------------------------------------------
# instances


@dataclass
class BenchInstance:
    id: str
    level: int
    task_type: str
    question: str
    channels: list[str]
    context_window: TimeWindow
    answer_kind: AnswerKind
    ground_truth: Answer
    metric: str
    injected: dict | None = None
    snr: float | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "level": self.level,
            "task_type": self.task_type,
            "question": self.question,
            "channels": self.channels,
            "context_window": self.context_window.to_json(),
            "answer_kind": self.answer_kind.value,
            "ground_truth": self.ground_truth.to_json(),
            "metric": self.metric,
            "injected": self.injected,
            "snr": self.snr,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BenchInstance":
        return cls(
            id=obj["id"],
            level=obj["level"],
            task_type=obj["task_type"],
            question=obj["question"],
            channels=list(obj["channels"]),
            context_window=TimeWindow.from_json(obj["context_window"]),
            answer_kind=AnswerKind(obj["answer_kind"]),
            ground_truth=Answer.from_json(obj["ground_truth"]),
            metric=obj["metric"],
            injected=obj.get("injected"),
            snr=obj.get("snr"),
        )


def _round_list(arr: Iterable[float], nd: int = 5) -> list[float]:
    return [round(float(v), nd) for v in arr]


_DAY_EPOCHS = {}


def _day_start(year: int, month: int, day: int) -> int:
    key = (year, month, day)
    if key not in _DAY_EPOCHS:
        _DAY_EPOCHS[key] = int(datetime(year, month, day, tzinfo=timezone.utc).timestamp())
    return _DAY_EPOCHS[key]


def _pick_context_start(rng: np.random.Generator) -> int:
    base = _day_start(2020, 1, 6)
    return base + int(rng.integers(0, 800)) * DAY


def _timestamps(start: int, n: int) -> np.ndarray:
    return start + INTERVAL * np.arange(n, dtype=np.int64)


def _window_of(timestamps: np.ndarray) -> TimeWindow:
    return TimeWindow(int(timestamps[0]), int(timestamps[-1]) + INTERVAL)


@dataclass
class _Ctx:
    """Working state for one instance build."""
    store: SeriesStore
    rng: np.random.Generator
    channel: str


def _new_background(ctx: _Ctx, n: int, start: int) -> SeriesSlice:
    level = float(ctx.rng.uniform(8, 60))
    scale = float(ctx.rng.uniform(0.6, 2.2))
    vals = synthesize_background(ctx.rng, n, level=level, scale=scale)
    return SeriesSlice(ctx.channel, _timestamps(start, n), vals)


def _store_slice(ctx: _Ctx, slice_: SeriesSlice) -> None:
    ctx.store.delete_channel(slice_.channel)
    ctx.store.write_points(slice_.channel, slice_.timestamps, slice_.values)


def _overlay(timestamps: np.ndarray, delta: np.ndarray, at: int) -> dict:
    return {
        "timestamps": [int(t) for t in timestamps[at:at + delta.size]],
        "values": _round_list(delta),
    }


# -- family builders ---------------------------------------------------------


def _build_ar(ctx: _Ctx, inst_id: str) -> BenchInstance:
    n = 21 * DAY_PTS
    start = _pick_context_start(ctx.rng)
    bg = _new_background(ctx, n, start)
    _store_slice(ctx, bg)
    window = _window_of(bg.timestamps)
    sub = ctx.rng.integers(0, 4)
    if sub == 0:
        agg_word = str(ctx.rng.choice(list(ts.AGG_WORDS)))
        question = ts.question_ar_agg(agg_word, ctx.channel, window)
        truth = Answer.scalar(builtin_aggregate(bg, ts.AGG_WORDS[agg_word]))
    elif sub == 1:
        question = ts.question_ar_argmax(ctx.channel, window)
        truth = Answer.timestamp(builtin_locate_extremum(bg, "ARGMAX"))
    elif sub == 2:
        tau = round(float(np.percentile(bg.values, 80)), 3)
        question = ts.question_ar_first_above(ctx.channel, tau, window)
        truth = Answer.timestamp(builtin_locate_extremum(bg, "FIRST_ABOVE", tau))
    else:
        tau = round(float(np.percentile(bg.values, 80)), 3)
        question = ts.question_ar_interval(ctx.channel, tau, window)
        truth = Answer.interval(builtin_interval_above_threshold(bg, tau, 1.5))
    return BenchInstance(
        id=inst_id, level=1, task_type="AR", question=question,
        channels=[ctx.channel], context_window=window,
        answer_kind=truth.kind, ground_truth=truth,
        metric=METRIC_FOR_KIND[truth.kind].value,
    )


def _build_sw(ctx: _Ctx, inst_id: str) -> BenchInstance:
    n = 21 * DAY_PTS
    start = _pick_context_start(ctx.rng)
    bg = _new_background(ctx, n, start)
    _store_slice(ctx, bg)
    window = _window_of(bg.timestamps)
    days = int(ctx.rng.integers(3, 13))
    metric_words = str(ctx.rng.choice(list(ts.SW_METRICS)))
    metric, objective = ts.SW_METRICS[metric_words]
    question = ts.question_sw(days, metric_words, ctx.channel, window)
    truth = Answer.interval(builtin_sliding_window_stat(bg, days * DAY, metric, objective))
    return BenchInstance(
        id=inst_id, level=1, task_type="SW", question=question,
        channels=[ctx.channel], context_window=window,
        answer_kind=AnswerKind.INTERVAL, ground_truth=truth,
        metric=METRIC_FOR_KIND[AnswerKind.INTERVAL].value,
    )


def _build_si(ctx: _Ctx, inst_id: str, context_points: int | None = None) -> BenchInstance:
    n = context_points or 6 * DAY_PTS
    start = _pick_context_start(ctx.rng)
    bg = _new_background(ctx, n, start)

    pattern_name = str(ctx.rng.choice(ts.SI_PATTERNS))
    width_hours = int(ctx.rng.choice(ts.SI_WIDTH_GRID_HOURS[pattern_name]))
    template = ts.si_template(pattern_name, width_hours)
    m = template.size

    n_days = n // DAY_PTS
    day_choices = list(range(1, max(2, n_days - 1)))
    day_idx = int(ctx.rng.choice(day_choices))
    day_off = day_idx * DAY_PTS
    margin = HOUR_PTS  # keep the support inside the day
    if pattern_name == "step ascent":
        # anchored at the day end so the day closes at the new level
        at = day_off + DAY_PTS - m
    elif pattern_name == "step descent":
        at = day_off
    else:
        max_start = DAY_PTS - margin - m
        if max_start <= margin:
            raise InsufficientData("pattern does not fit inside one day")
        at = day_off + margin + int(ctx.rng.integers(0, max_start - margin + 1))

    day_vals = bg.values[day_off:day_off + DAY_PTS]
    snr = float(ctx.rng.uniform(4.5, 7.0))
    alpha = calibrate_gain(day_vals, template, snr)
    injected_slice, truth_window = inject(bg, template, alpha, at)
    _store_slice(ctx, injected_slice)

    window = _window_of(bg.timestamps)
    question = ts.question_si(pattern_name, ctx.channel, window)
    return BenchInstance(
        id=inst_id, level=2, task_type="SI", question=question,
        channels=[ctx.channel], context_window=window,
        answer_kind=AnswerKind.INTERVAL,
        ground_truth=Answer.interval(truth_window),
        metric=METRIC_FOR_KIND[AnswerKind.INTERVAL].value,
        injected={
            "pattern": pattern_name,
            "width_hours": width_hours,
            "alpha": round(alpha, 6),
            "at": int(at),
            "length": int(m),
            "token": ts.SI_TOKEN[pattern_name].value,
            "windows": [truth_window.to_json()],
            "overlay": _overlay(bg.timestamps, alpha * template, at),
        },
        snr=snr,
    )


def _build_pd(ctx: _Ctx, inst_id: str) -> BenchInstance:
    period = int(ctx.rng.integers(30, 121))
    n = max(600, 6 * period)
    start = _pick_context_start(ctx.rng)
    bg = _new_background(ctx, n, start)

    kind = str(ctx.rng.choice(["sine", "cosine", "composite"]))
    phase = 0.0 if kind == "sine" else math.pi / 2
    components = [(1.0, float(period), phase)]
    if kind == "composite":
        components.append((0.35, period / 2.0, float(ctx.rng.uniform(0, 2 * math.pi))))
    wave = render_primitive(
        Primitive(PrimitiveKind.WAVE, {"components": components}), n
    )
    snr = float(ctx.rng.uniform(2.5, 4.0))
    alpha = calibrate_gain(bg.values, wave, snr)
    injected_slice, _ = inject(bg, wave, alpha, 0)
    _store_slice(ctx, injected_slice)

    window = _window_of(bg.timestamps)
    question = ts.question_pd(ctx.channel, window)
    return BenchInstance(
        id=inst_id, level=2, task_type="PD", question=question,
        channels=[ctx.channel], context_window=window,
        answer_kind=AnswerKind.SCALAR,
        ground_truth=Answer.scalar(float(period)),
        metric=METRIC_FOR_KIND[AnswerKind.SCALAR].value,
        injected={
            "kind": kind,
            "period": period,
            "alpha": round(alpha, 6),
            "components": [[round(a, 4), p, round(ph, 4)] for a, p, ph in components],
            "windows": [window.to_json()],
        },
        snr=snr,
    )


def _build_sm(ctx: _Ctx, inst_id: str) -> BenchInstance:
    n = 720
    start = _pick_context_start(ctx.rng)
    bg = _new_background(ctx, n, start)

    kind = str(ctx.rng.choice(ts.SM_PROTOTYPES))
    m_raw = int(ctx.rng.integers(120, 161))
    proto = ts.sm_prototype(kind, m_raw)
    lo, hi = ts.support_bounds(proto)
    proto = proto[lo:hi + 1]
    m = proto.size

    q_at = 16 + int(ctx.rng.integers(0, 40))
    search_from = q_at + m + 24
    t_at = search_from + int(ctx.rng.integers(8, n - search_from - m - 8))
    snr_q = float(ctx.rng.uniform(5.5, 7.5))
    snr_t = float(ctx.rng.uniform(5.5, 7.5))
    alpha_q = calibrate_gain(bg.values, proto, snr_q)
    alpha_t = calibrate_gain(bg.values, proto, snr_t)
    step1, query_window = inject(bg, proto, alpha_q, q_at)
    step2, truth_window = inject(step1, proto, alpha_t, t_at)
    _store_slice(ctx, step2)

    search_window = TimeWindow(int(bg.timestamps[search_from]),
                               int(bg.timestamps[-1]) + INTERVAL)
    question = ts.question_sm(ctx.channel, query_window, search_window)
    return BenchInstance(
        id=inst_id, level=2, task_type="SM", question=question,
        channels=[ctx.channel], context_window=_window_of(bg.timestamps),
        answer_kind=AnswerKind.INTERVAL,
        ground_truth=Answer.interval(truth_window),
        metric=METRIC_FOR_KIND[AnswerKind.INTERVAL].value,
        injected={
            "prototype": kind,
            "length": int(m),
            "alpha_query": round(alpha_q, 6),
            "alpha_target": round(alpha_t, 6),
            "at_query": int(q_at),
            "at_target": int(t_at),
            "query_window": query_window.to_json(),
            "windows": [truth_window.to_json()],
            "overlay": _overlay(bg.timestamps, alpha_t * proto, t_at),
        },
        snr=min(snr_q, snr_t),
    )


def _build_ct(ctx: _Ctx, inst_id: str, context_points: int | None = None,
              k_range: tuple[int, int] = (3, 5)) -> BenchInstance:
    if context_points is None:
        year = int(ctx.rng.choice([2020, 2021]))
        start = _day_start(year, 1, 1)
        end = _day_start(year + 1, 1, 1)
        n = (end - start) // INTERVAL
    else:
        start = _pick_context_start(ctx.rng)
        n = context_points
    bg = _new_background(ctx, n, start)
    n_days = n // DAY_PTS

    pattern = str(ctx.rng.choice(ts.CT_PATTERNS))
    template = ts.ct_day_template(pattern)
    k = int(ctx.rng.integers(k_range[0], k_range[1] + 1))
    day_pool = np.arange(1, n_days - 1)
    days = sorted(int(d) for d in ctx.rng.choice(day_pool, size=k, replace=False))

    snr_base = float(ctx.rng.uniform(6.0, 8.0))
    snr_floor = 2.5
    stepdown = (snr_base - snr_floor) / max(1, k - 1)
    values = bg.values.copy()
    injections = []
    dates = []
    min_snr = snr_base
    for rank, day_idx in enumerate(days):
        at = day_idx * DAY_PTS
        day_vals = bg.values[at:at + DAY_PTS]
        snr_i = snr_base - rank * stepdown
        alpha = calibrate_gain(day_vals, template, snr_i)
        values[at:at + DAY_PTS] += alpha * template
        injections.append({
            "date": to_utc_date(int(bg.timestamps[at])).isoformat(),
            "alpha": round(alpha, 6),
            "rank": rank,
            "at": int(at),
            "snr": round(snr_i, 4),
        })
        dates.append(to_utc_date(int(bg.timestamps[at])))
        min_snr = min(min_snr, snr_i)
    injected_slice = SeriesSlice(ctx.channel, bg.timestamps, values)
    _store_slice(ctx, injected_slice)

    window = _window_of(bg.timestamps)
    question = ts.question_ct(k, ctx.channel, pattern, window)
    return BenchInstance(
        id=inst_id, level=3, task_type="CT", question=question,
        channels=[ctx.channel], context_window=window,
        answer_kind=AnswerKind.DATE_SET,
        ground_truth=Answer.date_set(dates),
        metric=METRIC_FOR_KIND[AnswerKind.DATE_SET].value,
        injected={
            "pattern": pattern,
            "k": k,
            "token": ts.CT_TOKEN[pattern].value,
            "days": injections,
            "windows": [
                TimeWindow(int(bg.timestamps[i["at"]]),
                           int(bg.timestamps[i["at"]]) + DAY).to_json()
                for i in injections
            ],
        },
        snr=min_snr,
    )


def _build_cxa(ctx: _Ctx, inst_id: str) -> BenchInstance:
    year = int(ctx.rng.choice([2020, 2021]))
    start = _day_start(year, 1, 1)
    n = (_day_start(year + 1, 1, 1) - start) // INTERVAL
    bg = _new_background(ctx, n, start)
    n_days = n // DAY_PTS

    kind = str(ctx.rng.choice(ts.CXA_KINDS))
    d_days = int(ctx.rng.integers(2, 6))
    day0 = int(ctx.rng.integers(2, n_days - d_days - 2))
    a = day0 * DAY_PTS
    b = (day0 + d_days) * DAY_PTS
    window_truth = TimeWindow(int(bg.timestamps[a]), int(bg.timestamps[b - 1]) + INTERVAL)

    if kind == "severe flood":
        snr = float(ctx.rng.uniform(8.5, 10.5))
        box = ts.box_shape(n, a, b - 1, 4.0)
        alpha = calibrate_gain(bg.values, box, snr)
        injected_slice, support = inject(bg, box, alpha, 0)
        window_truth = support
        overlay = _overlay(bg.timestamps, (alpha * box)[a - 4:b + 4], a - 4)
        meta = {"kind": kind, "alpha": round(alpha, 6), "box": [int(a), int(b - 1)],
                "steepness": 4.0}
    else:
        # variance collapse: replace the window with its smoothed self
        kernel = np.ones(8) / 8.0
        smooth = np.convolve(bg.values, kernel, mode="same")
        delta = np.zeros(n)
        quiet = np.random.default_rng(int(ctx.rng.integers(0, 2 ** 31)))
        delta[a:b] = smooth[a:b] - bg.values[a:b] + quiet.normal(0, 0.03 * bg.values.std(), b - a)
        injected_slice = SeriesSlice(ctx.channel, bg.timestamps, bg.values + delta)
        collapse = float(bg.values[a:b].std() / max(injected_slice.values[a:b].std(), 1e-9))
        snr = collapse
        overlay = _overlay(bg.timestamps, delta[a:b], a)
        meta = {"kind": kind, "delta": _round_list(delta[a:b]),
                "window_idx": [int(a), int(b)]}
    _store_slice(ctx, injected_slice)

    window = _window_of(bg.timestamps)
    question = ts.question_cxa(ctx.channel, kind, window)
    meta["windows"] = [window_truth.to_json()]
    meta["overlay"] = overlay
    return BenchInstance(
        id=inst_id, level=3, task_type="CxA", question=question,
        channels=[ctx.channel], context_window=window,
        answer_kind=AnswerKind.INTERVAL,
        ground_truth=Answer.interval(window_truth),
        metric=METRIC_FOR_KIND[AnswerKind.INTERVAL].value,
        injected=meta,
        snr=snr,
    )


def _coupled_downstream(up: np.ndarray, gain: float, lag: int, smooth_k: int,
                        noise_sigma: float, seed: int, level: float) -> np.ndarray:
    kernel = np.ones(smooth_k) / smooth_k
    smooth = np.convolve(up - up.mean(), kernel, mode="same")
    shifted = np.roll(smooth, lag)
    shifted[:lag] = smooth[0]
    rng = np.random.default_rng(seed)
    return level + gain * shifted + rng.normal(0, noise_sigma, up.size)


def _build_csa(ctx: _Ctx, inst_id: str, context_points: int | None = None) -> BenchInstance:
    if context_points is None:
        year = int(ctx.rng.choice([2020, 2021]))
        start = _day_start(year, 1, 1)
        n = (_day_start(year + 1, 1, 1) - start) // INTERVAL
    else:
        start = _pick_context_start(ctx.rng)
        n = context_points
    up_name = f"{ctx.channel}_up"
    dn_name = f"{ctx.channel}_dn"
    rng = ctx.rng
    # strong within-day structure keeps the day-level coupling measurable
    up_vals = synthesize_background(rng, n, level=float(rng.uniform(10, 50)),
                                    scale=float(rng.uniform(0.8, 1.8)),
                                    seasonal_amp=1.0)
    coupling = {
        "gain": round(float(rng.uniform(0.6, 0.9)), 4),
        "lag": int(rng.integers(2, 9)),
        "smooth_k": 4,
        "noise_sigma": round(float(rng.uniform(0.15, 0.3)) * float(np.std(up_vals)), 6),
        "seed": int(rng.integers(0, 2 ** 31)),
        "level": round(float(rng.uniform(5, 30)), 4),
    }
    dn_normal = _coupled_downstream(up_vals, coupling["gain"], coupling["lag"],
                                    coupling["smooth_k"], coupling["noise_sigma"],
                                    coupling["seed"], coupling["level"])

    n_days = n // DAY_PTS
    max_break = min(7, max(2, n_days - 3))
    d_days = int(rng.integers(2, max_break + 1)) if max_break > 2 else 2
    day0 = int(rng.integers(1, n_days - d_days - 1))
    a, b = day0 * DAY_PTS, (day0 + d_days) * DAY_PTS
    break_kind = str(rng.choice(ts.CSA_BREAKS))
    dn_vals = dn_normal.copy()
    local_mean = float(dn_normal[a:b].mean())
    if break_kind == "inverse trend against source":
        dn_vals[a:b] = 2 * local_mean - dn_normal[a:b]
    else:
        flat_rng = np.random.default_rng(coupling["seed"] + 1)
        dn_vals[a:b] = local_mean + flat_rng.normal(0, 0.02 * np.std(dn_normal), b - a)

    timestamps = _timestamps(start, n)
    ctx.store.delete_channel(up_name)
    ctx.store.delete_channel(dn_name)
    ctx.store.write_points(up_name, timestamps, up_vals)
    ctx.store.write_points(dn_name, timestamps, dn_vals)

    window = TimeWindow(int(timestamps[0]), int(timestamps[-1]) + INTERVAL)
    truth = TimeWindow(int(timestamps[a]), int(timestamps[b - 1]) + INTERVAL)
    question = ts.question_csa(up_name, dn_name, break_kind, window)
    delta_peak = float(np.abs(dn_vals[a:b] - dn_normal[a:b]).max())
    snr = delta_peak / max(coupling["noise_sigma"], 1e-9)
    return BenchInstance(
        id=inst_id, level=3, task_type="CsA", question=question,
        channels=[up_name, dn_name], context_window=window,
        answer_kind=AnswerKind.INTERVAL,
        ground_truth=Answer.interval(truth),
        metric=METRIC_FOR_KIND[AnswerKind.INTERVAL].value,
        injected={
            "break": break_kind,
            "coupling": coupling,
            "window_idx": [int(a), int(b)],
            "windows": [truth.to_json()],
            "overlay": _overlay(timestamps, dn_vals[a:b] - dn_normal[a:b], a),
        },
        snr=snr,
    )


def _build_is(ctx: _Ctx, inst_id: str) -> BenchInstance:
    year = int(ctx.rng.choice([2020, 2021]))
    month = int(ctx.rng.integers(1, 13))
    start = _day_start(year, month, 1)
    nxt = _day_start(year + (month == 12), month % 12 + 1, 1)
    n = (nxt - start) // INTERVAL
    bg = _new_background(ctx, n, start)
    sigma = float(bg.values.std())
    amp = 5.0 * sigma

    rng = ctx.rng
    n_stages = int(rng.integers(2, 5))
    start_with_stable = bool(rng.integers(0, 2))
    kinds: list[str] = []
    trend_classes = ["rapid", "gradual"]
    rng.shuffle(trend_classes)
    trend_i = 0
    for i in range(n_stages):
        is_stable = (i % 2 == 0) if start_with_stable else (i % 2 == 1)
        if is_stable:
            kinds.append("stable")
        else:
            kinds.append(trend_classes[trend_i % 2])
            trend_i += 1
    if all(k != "stable" for k in kinds):
        kinds[-1] = "stable"

    min_len = 480
    # resample cuts until trend-stage slope magnitudes are well separated,
    # so the rapid/gradual percentile cut cannot flip on detection noise
    trend_slots = [i for i, k in enumerate(kinds) if k != "stable"]
    magnitudes = {
        "rapid": float(rng.uniform(3.5, 4.5)) * amp,
        "gradual": float(rng.uniform(2.0, 2.6)) * amp,
    }
    bounds = None
    for _ in range(40):
        if n_stages > 1:
            cuts = sorted(rng.choice(np.arange(min_len, n - min_len),
                                     size=n_stages - 1, replace=False).tolist())
        else:
            cuts = []
        cand = [0, *cuts, n]
        if any(b - a < min_len for a, b in zip(cand[:-1], cand[1:])):
            continue
        if len(trend_slots) == 2:
            lens = [cand[i + 1] - cand[i] for i in trend_slots]
            s = [magnitudes[kinds[trend_slots[0]]] / lens[0],
                 magnitudes[kinds[trend_slots[1]]] / lens[1]]
            ratio = max(abs(s[0]), abs(s[1])) / max(min(abs(s[0]), abs(s[1])), 1e-12)
            if ratio < 1.8:
                continue
        bounds = cand
        break
    if bounds is None:
        bounds = [0] + [round(n * i / n_stages) for i in range(1, n_stages)] + [n]

    path = np.zeros(n)
    level = 0.0
    slopes = []
    vols = []
    noise_amp_base = 4.0 * sigma  # bounded stage noise dominates the background
    steady_vol = noise_amp_base / math.sqrt(3.0)
    stage_noise = np.zeros(n)
    fluct_flags = []
    for (a, b), kind in zip(zip(bounds[:-1], bounds[1:]), kinds):
        length = b - a
        if kind == "stable":
            total = 0.0
            fluct = bool(rng.integers(0, 2))
        else:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            total = sign * magnitudes[kind]
            fluct = False
        slope = total / length
        path[a:b] = level + slope * np.arange(length)
        level += total
        slopes.append(slope)
        noise_amp = noise_amp_base * (2.5 if fluct else 1.0)
        stage_noise[a:b] = rng.uniform(-noise_amp, noise_amp, length)
        vols.append(noise_amp / math.sqrt(3.0))
        fluct_flags.append(fluct)

    # outliers only in quiet stages: in a fluctuating stage a spike large
    # enough to audit would also fracture the mean-shift segmentation
    quiet_ranges = [
        (a, b) for (a, b), f in zip(zip(bounds[:-1], bounds[1:]), fluct_flags) if not f
    ]
    outlier_count = int(rng.integers(1, 4))
    outlier_idx: list[int] = []
    guard = 150
    tries = 0
    while len(outlier_idx) < outlier_count and tries < 300:
        tries += 1
        a, b = quiet_ranges[int(rng.integers(0, len(quiet_ranges)))]
        if b - a <= 2 * guard:
            continue
        cand = int(rng.integers(a + guard, b - guard))
        if any(abs(cand - c) < 100 for c in outlier_idx):
            continue
        if any(abs(cand - bnd) < guard for bnd in bounds):
            continue
        outlier_idx.append(cand)
    outlier_idx.sort()
    outlier_delta = np.zeros(n)
    for c in outlier_idx:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        outlier_delta[c] = sign * rng.uniform(3.0, 3.6) * noise_amp_base

    injected_vals = bg.values + path + stage_noise + outlier_delta
    injected_slice = SeriesSlice(ctx.channel, bg.timestamps, injected_vals)
    _store_slice(ctx, injected_slice)

    labels = ops.label_segments(slopes, vols)
    segments = []
    for (a, b), label in zip(zip(bounds[:-1], bounds[1:]), labels):
        end_ts = int(bg.timestamps[b - 1]) + INTERVAL
        segments.append(ReportSegment(TimeWindow(int(bg.timestamps[a]), end_ts), label))
    outlier_ts = [int(bg.timestamps[c]) for c in outlier_idx]
    report = Report(tuple(segments), tuple(outlier_ts))

    window = _window_of(bg.timestamps)
    question = ts.question_is(ctx.channel, window)
    return BenchInstance(
        id=inst_id, level=4, task_type="IS", question=question,
        channels=[ctx.channel], context_window=window,
        answer_kind=AnswerKind.REPORT,
        ground_truth=Answer.report(report),
        metric=METRIC_FOR_KIND[AnswerKind.REPORT].value,
        injected={
            "stages": [
                {"bounds": [int(a), int(b)], "kind": kind,
                 "slope": round(float(s), 8), "fluctuating": bool(f)}
                for (a, b), kind, s, f in zip(
                    zip(bounds[:-1], bounds[1:]), kinds, slopes, fluct_flags
                )
            ],
            "noise_amp": round(noise_amp_base, 6),
            "outlier_idx": outlier_idx,
            "path_peak": round(float(np.abs(path - path[0]).max()), 6),
            "sigma_bg": round(sigma, 6),
            "windows": [s.window.to_json() for s in segments],
            "overlay": _overlay(bg.timestamps, path + stage_noise + outlier_delta, 0),
        },
        snr=float(np.abs(path - path[0]).max() / sigma) if sigma > 0 else None,
    )


_BUILDERS: dict[str, Callable[[_Ctx, str], BenchInstance]] = {
    "AR": _build_ar,
    "SW": _build_sw,
    "SI": _build_si,
    "PD": _build_pd,
    "SM": _build_sm,
    "CT": _build_ct,
    "CxA": _build_cxa,
    "CsA": _build_csa,
    "IS": _build_is,
}


def instantiate_template(family: str, seed: int, store: SeriesStore,
                         inst_id: str | None = None, channel: str | None = None,
                         profile: str = "DEFAULT") -> BenchInstance:
    """Fill one family template from its parameter distributions."""
    if family not in _BUILDERS:
        raise BadParameters(f"unknown task family {family!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    inst_id = inst_id or f"{family.lower()}_{seed}"
    channel = channel or f"bench_{inst_id}"
    ctx = _Ctx(store=store, rng=rng, channel=channel)
    if profile == "LITE":
        return _build_lite(ctx, family, inst_id)
    return _BUILDERS[family](ctx, inst_id)


def _build_lite(ctx: _Ctx, family: str, inst_id: str) -> BenchInstance:
    points = ts.LITE_CONTEXT_POINTS
    if family == "SI":
        return _build_si(ctx, inst_id, context_points=points)
    if family == "CT":
        return _build_ct(ctx, inst_id, context_points=points, k_range=(2, 3))
    if family == "CsA":
        return _build_csa(ctx, inst_id, context_points=points)
    raise BadParameters(f"family {family} is not part of the Lite profile")


# ---------------------------------------------------------------------------
# independent SNR remeasurement (trusts instance metadata, not the generator's
# claimed value: the pattern is re-rendered and subtracted from stored data)


def remeasure_snr(instance: BenchInstance, store: SeriesStore) -> float | None:
    meta = instance.injected
    if meta is None:
        return None
    family = instance.task_type
    stored = store.fetch_slice(instance.channels[-1], instance.context_window)
    vals = stored.values

    if family == "SI":
        template = ts.si_template(meta["pattern"], meta["width_hours"])
        at, alpha = meta["at"], meta["alpha"]
        bg = vals.copy()
        bg[at:at + template.size] -= alpha * template
        day = (at // DAY_PTS) * DAY_PTS
        sigma = float(bg[day:day + DAY_PTS].std())
        return float(alpha * np.abs(template).max() / max(sigma, 1e-12))

    if family == "PD":
        components = [tuple(c) for c in meta["components"]]
        wave = render_primitive(
            Primitive(PrimitiveKind.WAVE, {"components": components}), vals.size
        )
        bg = vals - meta["alpha"] * wave
        return float(meta["alpha"] * np.abs(wave).max() / max(float(bg.std()), 1e-12))

    if family == "SM":
        proto = ts.sm_prototype(meta["prototype"], meta["length"])
        lo, hi = ts.support_bounds(proto)
        proto = proto[lo:hi + 1] if proto.size != meta["length"] else proto
        bg = vals.copy()
        bg[meta["at_query"]:meta["at_query"] + proto.size] -= meta["alpha_query"] * proto
        bg[meta["at_target"]:meta["at_target"] + proto.size] -= meta["alpha_target"] * proto
        sigma = float(bg.std())
        worst = min(meta["alpha_query"], meta["alpha_target"])
        return float(worst * np.abs(proto).max() / max(sigma, 1e-12))

    if family == "CT":
        template = ts.ct_day_template(meta["pattern"])
        bg = vals.copy()
        worst = math.inf
        for inj in meta["days"]:
            at = inj["at"]
            bg[at:at + DAY_PTS] -= inj["alpha"] * template
        for inj in meta["days"]:
            at = inj["at"]
            sigma = float(bg[at:at + DAY_PTS].std())
            worst = min(worst, inj["alpha"] / max(sigma, 1e-12))
        return float(worst)

    if family == "CxA":
        if meta["kind"] == "severe flood":
            a, e = meta["box"]
            box = ts.box_shape(vals.size, a, e, meta["steepness"])
            bg = vals - meta["alpha"] * box
            return float(meta["alpha"] / max(float(bg.std()), 1e-12))
        a, b = meta["window_idx"]
        delta = np.asarray(meta["delta"], dtype=np.float64)
        bg_win = vals[a:b] - delta
        return float(bg_win.std() / max(float(vals[a:b].std()), 1e-12))

    if family == "CsA":
        c = meta["coupling"]
        up = store.fetch_slice(instance.channels[0], instance.context_window).values
        dn_normal = _coupled_downstream(up, c["gain"], c["lag"], c["smooth_k"],
                                        c["noise_sigma"], c["seed"], c["level"])
        a, b = meta["window_idx"]
        delta_peak = float(np.abs(vals[a:b] - dn_normal[a:b]).max())
        return delta_peak / max(c["noise_sigma"], 1e-12)

    if family == "IS":
        return float(meta["path_peak"] / max(meta["sigma_bg"], 1e-12))

    return None


# ---------------------------------------------------------------------------
# QA gate


def _matched_projection(values: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Projection amplitude of the centered template at every offset."""
    t = template - template.mean()
    norm2 = float(np.dot(t, t))
    if norm2 <= 0:
        return np.zeros(max(1, values.size - template.size + 1))
    m = template.size
    if values.size < m:
        return np.zeros(1)
    from numpy.lib.stride_tricks import sliding_window_view

    windows = sliding_window_view(values, m)
    centered = windows - windows.mean(axis=1, keepdims=True)
    return centered @ t / norm2


def qa_check(instance: BenchInstance, store: SeriesStore) -> tuple[str, str | None]:
    """PASS, or REJECT(low_snr | ambiguous). Total over valid instances."""
    if instance.injected is None:
        return "PASS", None
    snr = remeasure_snr(instance, store)
    if snr is not None and snr <= 1.0:
        return "REJECT", "low_snr"

    meta = instance.injected
    family = instance.task_type
    stored = store.fetch_slice(instance.channels[-1], instance.context_window)
    vals = stored.values

    if family == "SI":
        template = ts.si_template(meta["pattern"], meta["width_hours"])
        proj = _matched_projection(vals, template)
        at = meta["at"]
        inj_score = abs(float(proj[at])) if at < proj.size else 0.0
        lo = max(0, at - template.size)
        hi = min(proj.size, at + template.size)
        mask = np.ones(proj.size, dtype=bool)
        mask[lo:hi] = False
        decoy = float(np.abs(proj[mask]).max()) if mask.any() else 0.0
        if inj_score <= 0 or decoy >= 0.9 * inj_score:
            return "REJECT", "ambiguous"

    elif family == "SM":
        proto = ts.sm_prototype(meta["prototype"], meta["length"])
        lo_, hi_ = ts.support_bounds(proto)
        proto = proto[lo_:hi_ + 1] if proto.size != meta["length"] else proto
        proj = _matched_projection(vals, proto)
        at = meta["at_target"]
        inj_score = abs(float(proj[at])) if at < proj.size else 0.0
        mask = np.ones(proj.size, dtype=bool)
        for shield in (meta["at_target"], meta["at_query"]):
            mask[max(0, shield - proto.size):min(proj.size, shield + proto.size)] = False
        decoy = float(np.abs(proj[mask]).max()) if mask.any() else 0.0
        if inj_score <= 0 or decoy >= 0.9 * inj_score:
            return "REJECT", "ambiguous"

    elif family == "CT":
        injected_days = {inj["at"] // DAY_PTS for inj in meta["days"]}
        weakest = min(inj["alpha"] for inj in meta["days"])
        scored = ct_day_scores(stored, meta["pattern"])
        decoy_best = max(
            (beta for d, (_, beta) in enumerate(scored) if d not in injected_days),
            default=0.0,
        )
        if decoy_best >= 0.9 * weakest:
            return "REJECT", "ambiguous"

    return "PASS", None


# ---------------------------------------------------------------------------
# brute-force reference solvers (no search layer; operator kernels only)


def _si_locate(vals: np.ndarray, timestamps: np.ndarray, pattern: str) -> TimeWindow:
    """Grid matched filter: locate by amplitude x shape quality, then pick
    the width by matched-subspace classification.

    The location score (projection x corr^2) resists both too-wide templates
    (which project strongly) and background dips (which correlate but carry
    little amplitude). Adjacent grid widths correlate highly with each other,
    so the width is re-decided afterwards: the vector of center-aligned
    projections across all grid widths is compared against each width's
    theoretical cross-gram signature.
    """
    from numpy.lib.stride_tricks import sliding_window_view

    widths = [w for w in ts.SI_WIDTH_GRID_HOURS[pattern]
              if ts.si_template(pattern, w).size <= vals.size]
    if not widths:
        raise BenchError("context shorter than every template")
    templates = {w: ts.si_template(pattern, w) for w in widths}
    projections = {}
    best = None
    for width in widths:
        template = templates[width]
        proj = _matched_projection(vals, template)
        projections[width] = proj
        t = template - template.mean()
        tnorm = math.sqrt(float(np.dot(t, t)))
        windows = sliding_window_view(vals, template.size)
        centered = windows - windows.mean(axis=1, keepdims=True)
        wnorm = np.sqrt((centered ** 2).sum(axis=1))
        corr = proj * tnorm / np.maximum(wnorm, 1e-12)
        score = np.where(proj > 0, proj * corr * corr, -np.inf)
        idx = int(np.argmax(score))
        if best is None or score[idx] > best[0]:
            best = (float(score[idx]), idx, width)
    if best is None or not math.isfinite(best[0]):
        width = widths[0]
        proj = projections[width]
        idx = int(np.argmax(np.abs(proj)))
        best = (float(proj[idx]), idx, width)

    _, at0, width0 = best
    center = at0 + templates[width0].size // 2

    # width re-decision by likelihood: which fitted template leaves the
    # least residual over a common span around the event
    span_half = max(t.size for t in templates.values()) // 2 + 8
    lo = max(0, center - span_half)
    hi = min(vals.size, center + span_half)
    segment = vals[lo:hi]

    best_w, best_at, best_sse = width0, at0, math.inf
    for w in widths:
        template = templates[w]
        m = template.size
        p_lo = max(0, center - m)
        p_hi = min(vals.size - m, center)
        if p_hi < p_lo:
            continue
        proj = projections[w]
        window_scores = proj[p_lo:p_hi + 1]
        p = p_lo + int(np.argmax(window_scores))
        amp = float(proj[p])
        if amp <= 0:
            continue
        model = np.zeros(hi - lo)
        m_lo = max(p, lo)
        m_hi = min(p + m, hi)
        model[m_lo - lo:m_hi - lo] = amp * template[m_lo - p:m_hi - p]
        resid = segment - model
        xs = np.arange(resid.size, dtype=np.float64)
        xc = xs - xs.mean()
        slope = float(np.dot(xc, resid - resid.mean()) / np.dot(xc, xc))
        resid = resid - resid.mean() - slope * xc
        sse = float(np.dot(resid, resid))
        if sse < best_sse:
            best_sse = sse
            best_w, best_at = w, p

    template = templates[best_w]
    m = template.size
    best_at = ops.refine_alignment(template, vals, best_at, radius=6)
    return TimeWindow(int(timestamps[best_at]), int(timestamps[best_at + m - 1]) + INTERVAL)


def mean_day_profile(values: np.ndarray) -> np.ndarray:
    """Average day shape over all complete days (the seasonal component)."""
    n_days = values.size // DAY_PTS
    if n_days == 0:
        return np.zeros(DAY_PTS)
    stacked = values[: n_days * DAY_PTS].reshape(n_days, DAY_PTS)
    return stacked.mean(axis=0)


def ct_day_scores(slice_: SeriesSlice, pattern: str) -> list[tuple]:
    """Per-day matched-filter amplitudes against the day template.

    Days are deseasonalized (mean day profile subtracted) first: the daily
    cycle projects onto every day identically and would otherwise drown the
    weakest injections. The projection then recovers the injected gain
    directly, so linear-decay intensities rank strictly and natural days
    score near zero.
    """
    template = ts.ct_day_template(pattern)
    t = template - template.mean()
    norm2 = float(np.dot(t, t))
    profile = mean_day_profile(slice_.values)
    n_days = len(slice_) // DAY_PTS
    scored = []
    for d in range(n_days):
        day_vals = slice_.values[d * DAY_PTS:(d + 1) * DAY_PTS]
        if day_vals.size != template.size:
            continue
        resid = day_vals - profile
        beta = float(np.dot(resid - resid.mean(), t) / norm2)
        scored.append((to_utc_date(int(slice_.timestamps[d * DAY_PTS])), beta))
    return scored


def hourly_dispersion(slice_: SeriesSlice) -> tuple[np.ndarray, np.ndarray]:
    """(hour_start_timestamps, log std of first differences per hour).

    Differencing removes drift and the seasonal cycle, so a dispersion
    collapse reads as a level shift in this compact hourly series.
    """
    n_hours = len(slice_) // HOUR_PTS
    if n_hours == 0:
        raise InsufficientData("slice shorter than one hour")
    m = n_hours * HOUR_PTS
    diffs = np.diff(slice_.values[:m])
    diffs = np.append(diffs, diffs[-1] if diffs.size else 0.0)
    grid = diffs[:m].reshape(n_hours, HOUR_PTS)
    stds = grid.std(axis=1)
    ts_hours = slice_.timestamps[0] + 3600 * np.arange(n_hours, dtype=np.int64)
    return ts_hours, np.log(np.maximum(stds, 1e-9))


def drought_window(slice_: SeriesSlice) -> TimeWindow:
    """Quietest regime: mean-shift segmentation of hourly log-dispersion."""
    ts_hours, log_std = hourly_dispersion(slice_)
    cps = ops.detect_changepoints(log_std, min_segment_length=6)
    segs = cps.segments()
    means = [float(log_std[a:b].mean()) for a, b in segs]
    a, b = segs[int(np.argmin(means))]
    end = int(ts_hours[b - 1]) + 3600
    return TimeWindow(int(ts_hours[a]), end)



def estimate_coupling_lag(up: SeriesSlice, dn: SeriesSlice,
                          max_lag: int = 12) -> int:
    best_lag, best_r = 0, -2.0
    for lag in range(0, max_lag + 1):
        try:
            r = ops.calc_correlation(up.values, dn.values, lag)
        except ops.OperatorError:
            continue
        if r > best_r:
            best_lag, best_r = lag, r
    return best_lag


def csa_day_correlations(up: SeriesSlice, dn: SeriesSlice, lag: int) -> list[float]:
    """Per-day Pearson correlation of the (lag-aligned) channel pair."""
    n_days = len(dn) // DAY_PTS
    out = []
    for d in range(n_days):
        a = d * DAY_PTS
        dn_day = dn.values[a:a + DAY_PTS]
        lo = max(0, a - lag)
        up_day = up.values[lo:lo + DAY_PTS]
        m = min(dn_day.size, up_day.size)
        try:
            out.append(float(ops.calc_correlation(dn_day[:m], up_day[:m], 0)))
        except ops.OperatorError:
            out.append(0.0)  # a flatlined day cannot co-move
    return out


def csa_break_window(up: SeriesSlice, dn: SeriesSlice) -> TimeWindow:
    """Longest run of days whose pair correlation collapses below the norm."""
    lag = estimate_coupling_lag(up, dn)
    corrs = csa_day_correlations(up, dn, lag)
    if not corrs:
        raise BenchError("context shorter than one day")
    # most days are healthy, so the median tracks normal coupling strength
    threshold = max(0.25, 0.5 * float(np.median(corrs)))
    run_best = None
    run_start = None
    for d, r in enumerate(corrs):
        if r < threshold:
            if run_start is None:
                run_start = d
            if run_best is None or d - run_start > run_best[1] - run_best[0]:
                run_best = (run_start, d)
        else:
            run_start = None
    if run_best is None:
        raise BenchError("no causal break found")
    a = run_best[0] * DAY_PTS
    b = (run_best[1] + 1) * DAY_PTS
    return TimeWindow(int(dn.timestamps[a]),
                      int(dn.timestamps[min(b, len(dn)) - 1]) + INTERVAL)


def solve_bruteforce(instance: BenchInstance, store: SeriesStore) -> Answer:
    """Family-matched direct solver over the full context (no pruning)."""
    family = instance.task_type
    parsed = ts.parse_question(instance.question)
    if parsed is None:
        raise BenchError(f"question out of grammar: {instance.question!r}")
    slice_ = store.fetch_slice(parsed.channel, parsed.window)

    if family == "AR":
        if parsed.subtype == "agg":
            return Answer.scalar(builtin_aggregate(slice_, parsed.params["agg"]))
        if parsed.subtype == "argmax":
            return Answer.timestamp(builtin_locate_extremum(slice_, "ARGMAX"))
        if parsed.subtype == "first_above":
            return Answer.timestamp(
                builtin_locate_extremum(slice_, "FIRST_ABOVE", parsed.params["threshold"])
            )
        return Answer.interval(
            builtin_interval_above_threshold(slice_, parsed.params["threshold"], 1.5)
        )

    if family == "SW":
        return Answer.interval(
            builtin_sliding_window_stat(
                slice_, parsed.params["days"] * DAY, parsed.params["metric"],
                parsed.params["objective"],
            )
        )

    if family == "SI":
        return Answer.interval(
            _si_locate(slice_.values, slice_.timestamps, parsed.params["pattern"])
        )

    if family == "PD":
        n = len(slice_)
        period = ops.detect_period(slice_.values, min(n // 2, 400))
        return Answer.scalar(float(period))

    if family == "SM":
        query = store.fetch_slice(parsed.channel, parsed.params["query_window"])
        res = ops.find_best_match(query.values, slice_, band_fraction=0.1)
        at = ops.refined_subsequence_match(query, slice_, res.start_index)
        m = len(query)
        return Answer.interval(
            TimeWindow(int(slice_.timestamps[at]),
                       int(slice_.timestamps[at + m - 1]) + INTERVAL)
        )

    if family == "CT":
        scored = ct_day_scores(slice_, parsed.params["pattern"])
        return Answer.date_set(builtin_top_k_by_score(scored, parsed.params["k"]))

    if family == "CxA":
        if parsed.params["kind"] == "severe flood":
            tau = float(slice_.values.mean() + 3.0 * slice_.values.std())
            return Answer.interval(
                builtin_interval_above_threshold(slice_, tau, gap_factor=5.0)
            )
        return Answer.interval(drought_window(slice_))

    if family == "CsA":
        up = store.fetch_slice(parsed.params["upstream"], parsed.window)
        return Answer.interval(csa_break_window(up, slice_))

    if family == "IS":
        return Answer.report(ops.segment_and_label(slice_, min_segment_length=24))

    raise BenchError(f"no solver for family {family}")


# ---------------------------------------------------------------------------
# suite generation


GENERATOR_VERSION = "1.0"
MAX_ATTEMPTS_PER_INSTANCE = 12
SOLVER_ROUNDTRIP_FLOOR = 0.95


def generate_suite(store: SeriesStore, profile: str = "DEFAULT",
                   counts: dict[str, int] | None = None, seed: int = 0,
                   roundtrip_gate: bool = True,
                   progress: Callable[[str], None] | None = None) -> list[BenchInstance]:
    """Emit only instances that pass QA; regenerate rejects up to a bound.

    Beyond the QA gate (SNR + ambiguity), generation also verifies that the
    family's brute-force solver recovers the stored ground truth at >= 0.95;
    instances failing that round-trip are regenerated too, keeping the suite
    solvable by construction.
    """
    profile = profile.upper()
    if counts is None:
        if profile == "LITE":
            counts = {fam: 30 for fam in ts.LITE_FAMILIES}
        else:
            counts = dict(ts.DEFAULT_COUNTS)
    if profile == "LITE":
        bad = set(counts) - set(ts.LITE_FAMILIES)
        if bad:
            raise BadParameters(f"Lite profile only covers {ts.LITE_FAMILIES}, got {sorted(bad)}")

    instances: list[BenchInstance] = []
    idx = 0
    for family in ts.FAMILIES:
        total = counts.get(family, 0)
        for j in range(total):
            idx += 1
            inst_id = f"{profile.lower()}_{seed}_{family.lower()}_{j:04d}"
            channel = f"bench_{inst_id}"
            emitted = None
            for attempt in range(MAX_ATTEMPTS_PER_INSTANCE):
                inst_seed = int(
                    np.random.SeedSequence([seed, idx, attempt]).generate_state(1)[0]
                )
                inst = instantiate_template(family, inst_seed, store,
                                            inst_id=inst_id, channel=channel,
                                            profile=profile)
                status, reason = qa_check(inst, store)
                if status != "PASS":
                    continue
                if roundtrip_gate and inst.injected is not None:
                    predicted = solve_bruteforce(inst, store)
                    if score_answer_value(predicted, inst.ground_truth) < SOLVER_ROUNDTRIP_FLOOR:
                        continue
                emitted = inst
                break
            if emitted is None:
                raise GenerationExhausted(
                    f"could not generate a PASS instance for {inst_id}"
                )
            instances.append(emitted)
            if progress and idx % 50 == 0:
                progress(f"{idx} instances generated")
    return instances


def write_suite(path: str | Path, instances: Sequence[BenchInstance],
                profile: str, seed: int, counts: dict[str, int]) -> None:
    path = Path(path)
    manifest = {
        "profile": profile,
        "seed": seed,
        "counts": counts,
        "total": len(instances),
        "generator_version": GENERATOR_VERSION,
    }
    with path.open("w") as fh:
        fh.write(json.dumps({"manifest": manifest}, sort_keys=True) + "\n")
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), sort_keys=True) + "\n")


def load_suite(path: str | Path) -> tuple[list[BenchInstance], dict]:
    path = Path(path)
    instances: list[BenchInstance] = []
    manifest: dict = {}
    with path.open() as fh:
        for line in fh:
            obj = json.loads(line)
            if "manifest" in obj:
                manifest = obj["manifest"]
            else:
                instances.append(BenchInstance.from_json(obj))
    return instances, manifest
