"""Task-family grammar shared by the generator, rule planner and solvers.

Nine task families over four levels:

    L1  AR  atomic retrieval (scalar / timestamp / interval answers)
    L1  SW  sliding-window statistics
    L2  SI  shape identification
    L2  PD  periodicity detection
    L2  SM  subsequence matching
    L3  CT  composite-trend top-k dates
    L3  CxA contextual anomaly (flood / drought)
    L3  CsA causal anomaly between a driven channel pair
    L4  IS  trend + outlier report

The question strings are templated and deterministic, so a rule-based
planner can parse any generated question back into a canonical plan.
Pattern shapes live here too: the generator samples widths from the same
grids the verification templates enumerate, keeping the benchmark
solvable by construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
import numpy as np

from .model import TimeWindow, format_timestamp, parse_timestamp
from .search import ShapeToken

FAMILIES = ("AR", "SW", "SI", "PD", "SM", "CT", "CxA", "CsA", "IS")

LEVEL_FOR_FAMILY = {
    "AR": 1, "SW": 1, "SI": 2, "PD": 2, "SM": 2,
    "CT": 3, "CxA": 3, "CsA": 3, "IS": 4,
}

# Table of per-family instance counts for the full benchmark profile
DEFAULT_COUNTS = {
    "AR": 144, "SW": 47, "SI": 80, "PD": 80, "SM": 79,
    "CT": 140, "CxA": 83, "CsA": 78, "IS": 100,
}

LITE_FAMILIES = ("SI", "CT", "CsA")
LITE_CONTEXT_POINTS = 512

BENCH_INTERVAL_SECONDS = 900  # 15-minute sampling for benchmark channels
POINTS_PER_DAY = 86400 // BENCH_INTERVAL_SECONDS
POINTS_PER_HOUR = 3600 // BENCH_INTERVAL_SECONDS

AGG_WORDS = {"maximum": "MAX", "minimum": "MIN", "average": "MEAN",
             "median": "MEDIAN", "range": "RANGE"}
SW_METRICS = {
    "highest average": ("MEAN", "MAX"),
    "lowest average": ("MEAN", "MIN"),
    "highest variance": ("VARIANCE", "MAX"),
    "largest range": ("RANGE", "MAX"),
}

SI_PATTERNS = ("plateau", "upward spike", "deep valley", "step ascent", "step descent")
SI_SUPERLATIVES = {
    "plateau": "longest",
    "upward spike": "highest",
    "deep valley": "deepest",
    "step ascent": "largest",
    "step descent": "largest",
}
SI_TOKEN = {
    "plateau": ShapeToken.PLATEAU_HIGH,
    "upward spike": ShapeToken.PLATEAU_HIGH,
    "deep valley": ShapeToken.PLATEAU_LOW,
    "step ascent": ShapeToken.RISE,
    "step descent": ShapeToken.FALL,
}
# widths in hours; the generator draws from these and the solver enumerates them
SI_WIDTH_GRID_HOURS = {
    "plateau": (8, 12, 16),
    "upward spike": (5, 7, 9),
    "deep valley": (8, 12, 16),
    "step ascent": (8, 12, 16),
    "step descent": (8, 12, 16),
}

SM_PROTOTYPES = ("bell curve", "step pattern", "double-peak (M-shape)", "sharp spike")

CT_PATTERNS = ("rapid rise then fall", "gradual reversal", "step ascent")
CT_TOKEN = {
    "rapid rise then fall": ShapeToken.RISE_THEN_FALL,
    "gradual reversal": ShapeToken.RISE_THEN_FALL,
    "step ascent": ShapeToken.RISE,
}

CXA_KINDS = ("severe flood", "severe drought")
CSA_BREAKS = ("inverse trend against source", "flat line during activity")

STANDARD_PHRASES = "rapid/gradual rise, rapid/gradual fall, steady/fluctuating stable"


# ---------------------------------------------------------------------------
# question rendering


def _fmt_range(window: TimeWindow) -> str:
    return f"from {format_timestamp(window.start)} to {format_timestamp(window.end)}"


def question_ar_agg(agg: str, channel: str, window: TimeWindow) -> str:
    return f"What is the {agg} value of channel {channel} {_fmt_range(window)}?"


def question_ar_argmax(channel: str, window: TimeWindow) -> str:
    return (
        f"At what exact timestamp did channel {channel} reach its maximum value "
        f"{_fmt_range(window)}?"
    )


def question_ar_first_above(channel: str, threshold: float, window: TimeWindow) -> str:
    return (
        f"At what exact timestamp did channel {channel} first rise above {threshold} "
        f"{_fmt_range(window)}?"
    )


def question_ar_interval(channel: str, threshold: float, window: TimeWindow) -> str:
    return (
        f"Find the longest period where channel {channel} remained above {threshold} "
        f"{_fmt_range(window)}."
    )


def question_sw(days: int, metric_words: str, channel: str, window: TimeWindow) -> str:
    return (
        f"Which {days}-day window {_fmt_range(window)} had the {metric_words} "
        f"for channel {channel}?"
    )


def question_si(pattern: str, channel: str, window: TimeWindow) -> str:
    sup = SI_SUPERLATIVES[pattern]
    return (
        f"Identify the time range of the {sup} {pattern} in channel {channel} "
        f"{_fmt_range(window)}."
    )


def question_pd(channel: str, window: TimeWindow) -> str:
    return (
        f"What is the dominant cycle period (in data points) of channel {channel} "
        f"{_fmt_range(window)}?"
    )


def question_sm(channel: str, query_window: TimeWindow, search_window: TimeWindow) -> str:
    return (
        f"Analyze the reference pattern {_fmt_range(query_window)}. Find the time "
        f"interval where channel {channel} exhibits the most similar pattern within "
        f"the search context {_fmt_range(search_window)}."
    )


def question_ct(k: int, channel: str, pattern: str, window: TimeWindow) -> str:
    return (
        f"Identify the top-{k} dates in channel {channel} {_fmt_range(window)} that "
        f"exhibit the most significant {pattern} trend."
    )


def question_cxa(channel: str, kind: str, window: TimeWindow) -> str:
    return (
        f"Identify the period in channel {channel} {_fmt_range(window)} that "
        f"experienced the most significant {kind}."
    )


def question_csa(upstream: str, downstream: str, break_desc: str, window: TimeWindow) -> str:
    return (
        f"Given that channel {upstream} causes {downstream}, identify the time period "
        f"{_fmt_range(window)} where {downstream} shows a significant causal anomaly, "
        f"such as an {break_desc}."
    )


def question_is(channel: str, window: TimeWindow) -> str:
    return (
        f"Analyze channel {channel} {_fmt_range(window)}. Use ONLY standardized "
        f"phrases ({STANDARD_PHRASES}). Provide a structured report covering: "
        f"1. trend segmentation with precise timestamps; "
        f"2. significant outlier audit (ignoring minor noise)."
    )


# ---------------------------------------------------------------------------
# question parsing (rule planner grammar)

_TS = r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z"
_NUM = r"-?\d+(?:\.\d+)?"
_CH = r"[A-Za-z0-9_.\-]+"

_RANGE = rf"from (?P<start>{_TS}) to (?P<end>{_TS})"

QUESTION_PATTERNS = {
    "AR_AGG": re.compile(
        rf"What is the (?P<agg>maximum|minimum|average|median|range) value of "
        rf"channel (?P<channel>{_CH}) {_RANGE}\?"
    ),
    "AR_ARGMAX": re.compile(
        rf"At what exact timestamp did channel (?P<channel>{_CH}) reach its maximum "
        rf"value {_RANGE}\?"
    ),
    "AR_FIRST_ABOVE": re.compile(
        rf"At what exact timestamp did channel (?P<channel>{_CH}) first rise above "
        rf"(?P<threshold>{_NUM}) {_RANGE}\?"
    ),
    "AR_INTERVAL": re.compile(
        rf"Find the longest period where channel (?P<channel>{_CH}) remained above "
        rf"(?P<threshold>{_NUM}) {_RANGE}\."
    ),
    "SW": re.compile(
        rf"Which (?P<days>\d+)-day window {_RANGE} had the "
        rf"(?P<metric>highest average|lowest average|highest variance|largest range) "
        rf"for channel (?P<channel>{_CH})\?"
    ),
    "SI": re.compile(
        rf"Identify the time range of the (?P<sup>\w+) "
        rf"(?P<pattern>plateau|upward spike|deep valley|step ascent|step descent) "
        rf"in channel (?P<channel>{_CH}) {_RANGE}\."
    ),
    "PD": re.compile(
        rf"What is the dominant cycle period \(in data points\) of channel "
        rf"(?P<channel>{_CH}) {_RANGE}\?"
    ),
    "SM": re.compile(
        rf"Analyze the reference pattern from (?P<q_start>{_TS}) to (?P<q_end>{_TS})\. "
        rf"Find the time interval where channel (?P<channel>{_CH}) exhibits the most "
        rf"similar pattern within the search context from (?P<s_start>{_TS}) to "
        rf"(?P<s_end>{_TS})\."
    ),
    "CT": re.compile(
        rf"Identify the top-(?P<k>\d+) dates in channel (?P<channel>{_CH}) {_RANGE} "
        rf"that exhibit the most significant "
        rf"(?P<pattern>rapid rise then fall|gradual reversal|step ascent) trend\."
    ),
    "CXA": re.compile(
        rf"Identify the period in channel (?P<channel>{_CH}) {_RANGE} that "
        rf"experienced the most significant (?P<kind>severe flood|severe drought)\."
    ),
    "CSA": re.compile(
        rf"Given that channel (?P<upstream>{_CH}) causes (?P<downstream>{_CH}), "
        rf"identify the time period {_RANGE} where (?P=downstream) shows a "
        rf"significant causal anomaly, such as an? "
        rf"(?P<break>inverse trend against source|flat line during activity)\."
    ),
    "IS": re.compile(
        rf"Analyze channel (?P<channel>{_CH}) {_RANGE}\. Use ONLY standardized "
        rf"phrases"
    ),
}


@dataclass(frozen=True)
class ParsedQuestion:
    family: str
    subtype: str
    channel: str
    window: TimeWindow
    params: dict


def parse_question(text: str) -> ParsedQuestion | None:
    """Match a question against the template grammar; None if out of grammar."""
    text = " ".join(text.split())
    for name, pattern in QUESTION_PATTERNS.items():
        m = pattern.search(text)
        if not m:
            continue
        g = m.groupdict()
        if name == "SM":
            window = TimeWindow(parse_timestamp(g["s_start"]), parse_timestamp(g["s_end"]))
        else:
            window = TimeWindow(parse_timestamp(g["start"]), parse_timestamp(g["end"]))
        if name == "AR_AGG":
            return ParsedQuestion("AR", "agg", g["channel"], window,
                                  {"agg": AGG_WORDS[g["agg"]]})
        if name == "AR_ARGMAX":
            return ParsedQuestion("AR", "argmax", g["channel"], window, {})
        if name == "AR_FIRST_ABOVE":
            return ParsedQuestion("AR", "first_above", g["channel"], window,
                                  {"threshold": float(g["threshold"])})
        if name == "AR_INTERVAL":
            return ParsedQuestion("AR", "interval", g["channel"], window,
                                  {"threshold": float(g["threshold"])})
        if name == "SW":
            metric, objective = SW_METRICS[g["metric"]]
            return ParsedQuestion("SW", "window", g["channel"], window,
                                  {"days": int(g["days"]), "metric": metric,
                                   "objective": objective})
        if name == "SI":
            return ParsedQuestion("SI", g["pattern"], g["channel"], window,
                                  {"pattern": g["pattern"]})
        if name == "PD":
            return ParsedQuestion("PD", "period", g["channel"], window, {})
        if name == "SM":
            qw = TimeWindow(parse_timestamp(g["q_start"]), parse_timestamp(g["q_end"]))
            sw = TimeWindow(parse_timestamp(g["s_start"]), parse_timestamp(g["s_end"]))
            return ParsedQuestion("SM", "match", g["channel"], sw, {"query_window": qw})
        if name == "CT":
            return ParsedQuestion("CT", g["pattern"], g["channel"], window,
                                  {"k": int(g["k"]), "pattern": g["pattern"]})
        if name == "CXA":
            return ParsedQuestion("CxA", g["kind"], g["channel"], window,
                                  {"kind": g["kind"]})
        if name == "CSA":
            return ParsedQuestion("CsA", g["break"], g["downstream"], window,
                                  {"upstream": g["upstream"], "break": g["break"]})
        if name == "IS":
            return ParsedQuestion("IS", "report", g["channel"], window, {})
    return None


# ---------------------------------------------------------------------------
# shape rendering (shared by injection and verification)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


def box_shape(n: int, start: float, end: float, steepness: float) -> np.ndarray:
    """Dual-sigmoid box over integer offsets 0..n-1."""
    t = np.arange(n, dtype=np.float64)
    return sigmoid(steepness * (t - start)) - sigmoid(steepness * (t - end))


def gaussian_shape(n: int, center: float, half_width: float) -> np.ndarray:
    """Gaussian bump; value 0.5 at +-half_width from the center."""
    t = np.arange(n, dtype=np.float64)
    lam = math.log(2.0) / (half_width ** 2)
    return np.exp(-lam * (t - center) ** 2)


def step_shape(n: int, center: float, steepness: float) -> np.ndarray:
    t = np.arange(n, dtype=np.float64)
    return sigmoid(steepness * (t - center))


SUPPORT_FRACTION = 0.05


def support_bounds(pattern: np.ndarray) -> tuple[int, int]:
    """[first, last] indices where |pattern| exceeds 5% of its peak."""
    mag = np.abs(pattern)
    peak = float(mag.max())
    if peak <= 0:
        raise ValueError("pattern has zero amplitude")
    idx = np.nonzero(mag > SUPPORT_FRACTION * peak)[0]
    return int(idx[0]), int(idx[-1])


def si_template(pattern: str, width_hours: int) -> np.ndarray:
    """Unit-amplitude intra-day template trimmed to its own 5% support.

    Steps hold their new level to the template edge (the generator anchors
    them against a day boundary), so a step-ascent day genuinely ends high
    and a step-descent day genuinely starts high.
    """
    w = width_hours * POINTS_PER_HOUR
    margin = 4 * POINTS_PER_HOUR
    n = w + 2 * margin
    if pattern == "plateau":
        shape = box_shape(n, margin, margin + w, 1.0)
    elif pattern == "upward spike":
        shape = gaussian_shape(n, n / 2, w / 4.0)
    elif pattern == "deep valley":
        shape = -box_shape(n, margin, margin + w, 1.0)
    elif pattern == "step ascent":
        # flat low lead-in, rise, held high for width_hours to the edge
        shape = step_shape(margin + w, margin, 1.2)
    elif pattern == "step descent":
        # held high for width_hours from the edge, then drop
        shape = 1.0 - step_shape(margin + w, w, 1.2)
    else:
        raise ValueError(f"unknown SI pattern {pattern!r}")
    lo, hi = support_bounds(shape)
    return shape[lo:hi + 1]


def ct_day_template(pattern: str, n: int = POINTS_PER_DAY) -> np.ndarray:
    """Unit-amplitude full-day template; humps start and end at the day floor."""
    x = np.linspace(0.0, 1.0, n)
    if pattern == "rapid rise then fall":
        rise_end = 0.3
        up = np.clip(x / rise_end, 0, 1)
        down = np.clip((1 - x) / (1 - rise_end), 0, 1)
        shape = np.minimum(up, down) ** 1.2
    elif pattern == "gradual reversal":
        shape = np.sin(np.pi * x) ** 2
    elif pattern == "step ascent":
        shape = sigmoid(12.0 * (x - 0.5))
    else:
        raise ValueError(f"unknown CT pattern {pattern!r}")
    return shape


def sm_prototype(kind: str, length: int) -> np.ndarray:
    """Unit-amplitude reference prototypes for similarity search.

    Shapes keep their transition inside the window (short flats) so that a
    z-normalized matcher can localize them; a mostly-flat prototype slides
    freely along background of the same level.
    """
    x = np.linspace(-1.0, 1.0, length)
    if kind == "bell curve":
        return np.exp(-4.0 * x ** 2)
    if kind == "step pattern":
        return sigmoid(4.0 * x)
    if kind == "double-peak (M-shape)":
        return np.exp(-18.0 * (x + 0.45) ** 2) + np.exp(-18.0 * (x - 0.45) ** 2)
    if kind == "sharp spike":
        return np.exp(-9.0 * x ** 2)
    raise ValueError(f"unknown SM prototype {kind!r}")
