"""Shared domain types: timestamps, windows, slices, answers, reports.

Everything here is an immutable value type. Timestamps are integer UTC epoch
seconds (the data in scope is hourly-to-daily scale, so sub-second resolution
is deliberately out). Windows are half-open ``[start, end)`` everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from typing import Iterable

import numpy as np

Timestamp = int  # UTC epoch seconds


class InvalidWindow(ValueError):
    pass


class EmptyInput(ValueError):
    pass


def parse_timestamp(raw: str | int | float) -> Timestamp:
    """Parse an RFC 3339 string or epoch-second number into epoch seconds."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return int(raw)
    text = str(raw).strip()
    if not text:
        raise ValueError("empty timestamp")
    try:
        return int(text)
    except ValueError:
        pass
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts: Timestamp) -> str:
    """Render epoch seconds as RFC 3339 UTC ("2021-03-01T00:00:00Z")."""
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def to_utc_date(ts: Timestamp) -> date:
    """Calendar date of a timestamp at UTC midnight boundaries."""
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).date()


def date_to_ts(d: date) -> Timestamp:
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())


@dataclass(frozen=True, order=True)
class TimeWindow:
    """Half-open time interval [start, end) in epoch seconds."""

    start: Timestamp
    end: Timestamp

    def __post_init__(self):
        validate_window(self)

    @property
    def duration_seconds(self) -> int:
        return self.end - self.start

    def contains(self, ts: Timestamp) -> bool:
        return self.start <= ts < self.end

    def overlaps(self, other: "TimeWindow") -> bool:
        return self.start < other.end and other.start < self.end

    def intersection_seconds(self, other: "TimeWindow") -> int:
        return max(0, min(self.end, other.end) - max(self.start, other.start))

    def union_seconds(self, other: "TimeWindow") -> int:
        # measure of the set union (not the convex hull)
        return self.duration_seconds + other.duration_seconds - self.intersection_seconds(other)

    def to_json(self) -> dict:
        return {"start": format_timestamp(self.start), "end": format_timestamp(self.end)}

    @classmethod
    def from_json(cls, obj: dict) -> "TimeWindow":
        return cls(parse_timestamp(obj["start"]), parse_timestamp(obj["end"]))


def validate_window(w: TimeWindow) -> None:
    if w.start >= w.end:
        raise InvalidWindow(f"window start {w.start} must precede end {w.end}")


@dataclass(frozen=True)
class SeriesSlice:
    """Ordered points of one channel: parallel timestamp/value arrays.

    Timestamps are strictly increasing; values are finite. Arrays are
    made read-only so slices can be shared freely.
    """

    channel: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise ValueError("timestamps and values must be parallel 1-d arrays")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if vals.size and not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def points(self) -> list[tuple[Timestamp, float]]:
        return list(zip(self.timestamps.tolist(), self.values.tolist()))

    def subslice(self, w: TimeWindow) -> "SeriesSlice":
        lo = int(np.searchsorted(self.timestamps, w.start, side="left"))
        hi = int(np.searchsorted(self.timestamps, w.end, side="left"))
        return SeriesSlice(self.channel, self.timestamps[lo:hi], self.values[lo:hi])


class AnswerKind(str, Enum):
    SCALAR = "SCALAR"
    TIMESTAMP = "TIMESTAMP"
    INTERVAL = "INTERVAL"
    DATE_SET = "DATE_SET"
    REPORT = "REPORT"


class TrendDirection(str, Enum):
    RISE = "RISE"
    FALL = "FALL"
    STABLE = "STABLE"


class TrendModifier(str, Enum):
    RAPID = "RAPID"
    GRADUAL = "GRADUAL"
    STEADY = "STEADY"
    FLUCTUATING = "FLUCTUATING"


_MODIFIERS_FOR = {
    TrendDirection.RISE: {TrendModifier.RAPID, TrendModifier.GRADUAL},
    TrendDirection.FALL: {TrendModifier.RAPID, TrendModifier.GRADUAL},
    TrendDirection.STABLE: {TrendModifier.STEADY, TrendModifier.FLUCTUATING},
}


@dataclass(frozen=True)
class TrendLabel:
    """One of the six standardized trend phrases (e.g. rapid rise)."""

    direction: TrendDirection
    modifier: TrendModifier

    def __post_init__(self):
        if self.modifier not in _MODIFIERS_FOR[self.direction]:
            raise ValueError(f"modifier {self.modifier.value} invalid for {self.direction.value}")

    def phrase(self) -> str:
        return f"{self.modifier.value.lower()} {self.direction.value.lower()}"

    @classmethod
    def from_phrase(cls, text: str) -> "TrendLabel":
        parts = text.strip().lower().split()
        if len(parts) != 2:
            raise ValueError(f"not a standardized trend phrase: {text!r}")
        mod, direction = parts
        return cls(TrendDirection(direction.upper()), TrendModifier(mod.upper()))


@dataclass(frozen=True)
class ReportSegment:
    window: TimeWindow
    trend: TrendLabel


@dataclass(frozen=True)
class Report:
    """Structured trend report: ordered non-overlapping segments + outliers."""

    segments: tuple[ReportSegment, ...]
    outliers: tuple[Timestamp, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        outs = tuple(int(t) for t in self.outliers)
        for a, b in zip(segs, segs[1:]):
            if b.window.start < a.window.end:
                raise ValueError("report segments must be ordered and non-overlapping")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "outliers", outs)

    def to_json(self) -> dict:
        return {
            "segments": [
                {
                    "start": format_timestamp(s.window.start),
                    "end": format_timestamp(s.window.end),
                    "direction": s.trend.direction.value,
                    "modifier": s.trend.modifier.value,
                }
                for s in self.segments
            ],
            "outliers": [format_timestamp(t) for t in self.outliers],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Report":
        segments = tuple(
            ReportSegment(
                TimeWindow(parse_timestamp(s["start"]), parse_timestamp(s["end"])),
                TrendLabel(TrendDirection(s["direction"]), TrendModifier(s["modifier"])),
            )
            for s in obj.get("segments", [])
        )
        outliers = tuple(parse_timestamp(t) for t in obj.get("outliers", []))
        return cls(segments, outliers)


@dataclass(frozen=True)
class Answer:
    """Tagged query result: scalar, timestamp, interval, date set or report."""

    kind: AnswerKind
    payload: object

    def __post_init__(self):
        kind, payload = self.kind, self.payload
        if kind is AnswerKind.SCALAR:
            if isinstance(payload, bool) or not isinstance(payload, (int, float)):
                raise ValueError("SCALAR payload must be a real number")
            object.__setattr__(self, "payload", float(payload))
        elif kind is AnswerKind.TIMESTAMP:
            object.__setattr__(self, "payload", int(payload))
        elif kind is AnswerKind.INTERVAL:
            if not isinstance(payload, TimeWindow):
                raise ValueError("INTERVAL payload must be a TimeWindow")
        elif kind is AnswerKind.DATE_SET:
            dates = frozenset(payload)
            if not all(isinstance(d, date) for d in dates):
                raise ValueError("DATE_SET payload must contain calendar dates")
            object.__setattr__(self, "payload", dates)
        elif kind is AnswerKind.REPORT:
            if not isinstance(payload, Report):
                raise ValueError("REPORT payload must be a Report")
        else:  # pragma: no cover - enum is closed
            raise ValueError(f"unknown answer kind {kind}")

    def to_json(self) -> dict:
        if self.kind is AnswerKind.SCALAR:
            payload = self.payload
        elif self.kind is AnswerKind.TIMESTAMP:
            payload = format_timestamp(self.payload)
        elif self.kind is AnswerKind.INTERVAL:
            payload = self.payload.to_json()
        elif self.kind is AnswerKind.DATE_SET:
            payload = sorted(d.isoformat() for d in self.payload)
        else:
            payload = self.payload.to_json()
        return {"kind": self.kind.value, "payload": payload}

    def to_text(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "Answer":
        kind = AnswerKind(obj["kind"])
        payload = obj["payload"]
        if kind is AnswerKind.SCALAR:
            return cls(kind, float(payload))
        if kind is AnswerKind.TIMESTAMP:
            return cls(kind, parse_timestamp(payload))
        if kind is AnswerKind.INTERVAL:
            return cls(kind, TimeWindow.from_json(payload))
        if kind is AnswerKind.DATE_SET:
            return cls(kind, frozenset(date.fromisoformat(d) for d in payload))
        return cls(kind, Report.from_json(payload))

    @classmethod
    def from_text(cls, text: str) -> "Answer":
        return cls.from_json(json.loads(text))

    @classmethod
    def scalar(cls, v: float) -> "Answer":
        return cls(AnswerKind.SCALAR, float(v))

    @classmethod
    def timestamp(cls, ts: Timestamp) -> "Answer":
        return cls(AnswerKind.TIMESTAMP, int(ts))

    @classmethod
    def interval(cls, w: TimeWindow) -> "Answer":
        return cls(AnswerKind.INTERVAL, w)

    @classmethod
    def date_set(cls, dates: Iterable[date]) -> "Answer":
        return cls(AnswerKind.DATE_SET, frozenset(dates))

    @classmethod
    def report(cls, r: Report) -> "Answer":
        return cls(AnswerKind.REPORT, r)
