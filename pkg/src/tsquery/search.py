"""Candidate-window retrieval over the feature tables.

Numeric predicates and time-range overlap are pushed down to SQL; SAX
regexes are applied in-process with anchored (full-string) semantics.
Result ordering is fully deterministic: the requested order column first,
then (series_id, window_start) ascending as the tie-break.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .features import FeatureRow, ViewType
from .model import TimeWindow
from .store import SeriesStore


class SearchError(Exception):
    code = "SEARCH_ERROR"


class BadRegex(SearchError):
    code = "BAD_REGEX"


class NoFeatureTable(SearchError):
    code = "NO_FEATURE_TABLE"


class UnknownShapeToken(SearchError):
    code = "UNKNOWN_SHAPE_TOKEN"


PREDICATE_COLUMNS = ("min_val", "max_val", "avg_val", "std_val", "slope", "coverage")
COMPARATORS = {"<", "<=", "=", ">=", ">"}


@dataclass(frozen=True)
class Predicate:
    column: str
    comparator: str
    constant: float

    def __post_init__(self):
        if self.column not in PREDICATE_COLUMNS:
            raise ValueError(f"unsupported predicate column {self.column!r}")
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unsupported comparator {self.comparator!r}")

    def holds(self, value: float | None) -> bool:
        if value is None:
            return False
        ops = {
            "<": value < self.constant,
            "<=": value <= self.constant,
            "=": value == self.constant,
            ">=": value >= self.constant,
            ">": value > self.constant,
        }
        return ops[self.comparator]


@dataclass(frozen=True)
class SearchSpec:
    view: ViewType
    channel: Optional[str] = None
    time_range: Optional[TimeWindow] = None
    predicates: tuple[Predicate, ...] = ()
    sax_regex: Optional[str] = None
    order_by: Optional[tuple[str, str]] = None  # (column, "ASC"|"DESC")
    limit: Optional[int] = None

    def __post_init__(self):
        if self.limit is not None and self.limit <= 0:
            raise ValueError("limit must be positive")
        if self.order_by is not None:
            col, direction = self.order_by
            if col not in PREDICATE_COLUMNS + ("window_start", "window_end"):
                raise ValueError(f"unsupported order column {col!r}")
            if direction not in ("ASC", "DESC"):
                raise ValueError("order direction must be ASC or DESC")
        object.__setattr__(self, "predicates", tuple(self.predicates))

    def to_json(self) -> dict:
        return {
            "view": self.view.value,
            "channel": self.channel,
            "time_range": self.time_range.to_json() if self.time_range else None,
            "predicates": [
                {"column": p.column, "comparator": p.comparator, "constant": p.constant}
                for p in self.predicates
            ],
            "sax_regex": self.sax_regex,
            "order_by": list(self.order_by) if self.order_by else None,
            "limit": self.limit,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "SearchSpec":
        return cls(
            view=ViewType(obj["view"]),
            channel=obj.get("channel"),
            time_range=TimeWindow.from_json(obj["time_range"]) if obj.get("time_range") else None,
            predicates=tuple(
                Predicate(p["column"], p["comparator"], float(p["constant"]))
                for p in obj.get("predicates", [])
            ),
            sax_regex=obj.get("sax_regex"),
            order_by=tuple(obj["order_by"]) if obj.get("order_by") else None,
            limit=obj.get("limit"),
        )


@dataclass(frozen=True)
class CandidateSet:
    rows: tuple[FeatureRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def windows(self) -> list[TimeWindow]:
        return [r.window for r in self.rows]


def _row_from_record(rec) -> FeatureRow:
    return FeatureRow(
        series_id=rec[0],
        view_type=ViewType(rec[1]),
        window=TimeWindow(rec[2], rec[3]),
        min_val=rec[4],
        max_val=rec[5],
        avg_val=rec[6],
        std_val=rec[7],
        slope=rec[8],
        sax=rec[9],
        sax_len=rec[10],
        coverage=rec[11],
    )


def search_candidates(store: SeriesStore, spec: SearchSpec) -> CandidateSet:
    """Every feature row satisfying all predicates, range overlap and regex.

    Rows with a null SAX never match a regex. An empty result is a valid
    result here; fallback policy lives with the executor.
    """
    built = store.conn.execute(
        "SELECT 1 FROM features WHERE view_type=? LIMIT 1", (spec.view.value,)
    ).fetchone()
    if built is None:
        raise NoFeatureTable(f"no feature rows for view {spec.view.value}")

    pattern = None
    if spec.sax_regex is not None:
        try:
            pattern = re.compile(spec.sax_regex)
        except re.error as exc:
            raise BadRegex(f"invalid SAX regex {spec.sax_regex!r}: {exc}") from exc

    sql = [
        "SELECT series_id, view_type, window_start, window_end, min_val, max_val,"
        " avg_val, std_val, slope, sax, sax_len, coverage FROM features WHERE view_type=?"
    ]
    args: list = [spec.view.value]
    if spec.channel is not None:
        sql.append("AND series_id=?")
        args.append(spec.channel)
    if spec.time_range is not None:
        sql.append("AND window_start<? AND window_end>?")
        args.extend([spec.time_range.end, spec.time_range.start])
    for p in spec.predicates:
        if p.column == "slope":
            # slope may be null (single-point windows); nulls never satisfy
            sql.append(f"AND slope IS NOT NULL AND slope {p.comparator} ?")
        else:
            sql.append(f"AND {p.column} {p.comparator} ?")
        args.append(p.constant)

    records = store.conn.execute(" ".join(sql), args).fetchall()
    rows = [_row_from_record(rec) for rec in records]
    if pattern is not None:
        rows = [r for r in rows if r.sax is not None and pattern.fullmatch(r.sax)]

    if spec.order_by is not None:
        col, direction = spec.order_by
        reverse = direction == "DESC"

        def sort_key(r: FeatureRow):
            value = getattr(r, col) if col not in ("window_start", "window_end") else (
                r.window.start if col == "window_start" else r.window.end
            )
            if value is None:
                value = float("-inf") if reverse else float("inf")
            return value

        # stable two-pass sort: deterministic tie-break first, order key second
        rows.sort(key=lambda r: (r.series_id, r.window.start))
        rows.sort(key=sort_key, reverse=reverse)
    else:
        rows.sort(key=lambda r: (r.series_id, r.window.start))

    if spec.limit is not None:
        rows = rows[: spec.limit]
    return CandidateSet(tuple(rows))


class ShapeToken(str, Enum):
    RISE = "RISE"
    FALL = "FALL"
    V_SHAPE = "V_SHAPE"
    PLATEAU_LOW = "PLATEAU_LOW"
    PLATEAU_HIGH = "PLATEAU_HIGH"
    RISE_THEN_FALL = "RISE_THEN_FALL"
    FALL_THEN_RISE = "FALL_THEN_RISE"


_SHAPE_PATTERNS = {
    ShapeToken.RISE: "[ab]+.*[de]+",
    ShapeToken.FALL: "[de]+.*[ab]+",
    ShapeToken.V_SHAPE: ".*[cde][ab]+[cde].*",
    ShapeToken.PLATEAU_LOW: ".*[ab]{3,}.*",
    ShapeToken.PLATEAU_HIGH: ".*[de]{3,}.*",
    ShapeToken.RISE_THEN_FALL: "[ab]+.*[de]+.*[ab]+",
    ShapeToken.FALL_THEN_RISE: "[de]+.*[ab]+.*[de]+",
}

# one-step loosenings used by the self-correction loop when a search is empty
_SHAPE_WIDENINGS = {
    ShapeToken.RISE: ".*[ab]+.*[de]+.*",
    ShapeToken.FALL: ".*[de]+.*[ab]+.*",
    ShapeToken.V_SHAPE: ".*[ab]{2,}.*",
    ShapeToken.PLATEAU_LOW: ".*[ab]{2,}.*",
    ShapeToken.PLATEAU_HIGH: ".*[de]{2,}.*",
    ShapeToken.RISE_THEN_FALL: ".*[ab]+.*[de]+.*[ab]+.*",
    ShapeToken.FALL_THEN_RISE: ".*[de]+.*[ab]+.*[de]+.*",
}


def compile_fuzzy_shape(token: ShapeToken | str) -> str:
    """Deterministic shape-token to SAX-regex mapping (anchored semantics)."""
    try:
        token = ShapeToken(token)
    except ValueError as exc:
        raise UnknownShapeToken(f"unknown shape token {token!r}") from exc
    return _SHAPE_PATTERNS[token]


def widen_fuzzy_shape(token: ShapeToken | str) -> str:
    """One-step looser variant of a shape regex, for search-repair retries."""
    try:
        token = ShapeToken(token)
    except ValueError as exc:
        raise UnknownShapeToken(f"unknown shape token {token!r}") from exc
    return _SHAPE_WIDENINGS[token]


_TEXT_QUERY_RE = re.compile(
    r"(?P<key>view|channel|where|sax|order|limit|from|to)\s*=\s*(?P<val>'[^']*'|\S+)",
    re.IGNORECASE,
)


def parse_text_query(text: str) -> SearchSpec:
    """Small textual form accepted on the CLI, e.g.::

        view=daily channel=river_1 where=std_val>2.5 sax='[ab]+.*[de]+'
        order=std_val:desc limit=1 from=2021-03-01T00:00:00Z to=2021-04-01T00:00:00Z
    """
    from .model import parse_timestamp

    view = None
    channel = None
    predicates: list[Predicate] = []
    sax = None
    order = None
    limit = None
    t_from = None
    t_to = None
    for m in _TEXT_QUERY_RE.finditer(text):
        key = m.group("key").lower()
        val = m.group("val").strip("'")
        if key == "view":
            view = ViewType(val.upper())
        elif key == "channel":
            channel = val
        elif key == "where":
            pm = re.fullmatch(r"(\w+)\s*(<=|>=|<|>|=)\s*(-?[\d.eE+]+)", val)
            if not pm:
                raise ValueError(f"bad predicate {val!r}")
            predicates.append(Predicate(pm.group(1), pm.group(2), float(pm.group(3))))
        elif key == "sax":
            sax = val
        elif key == "order":
            col, _, direction = val.partition(":")
            order = (col, (direction or "asc").upper())
        elif key == "limit":
            limit = int(val)
        elif key == "from":
            t_from = parse_timestamp(val)
        elif key == "to":
            t_to = parse_timestamp(val)
    if view is None:
        raise ValueError("text query must set view=daily|monthly|yearly")
    time_range = TimeWindow(t_from, t_to) if t_from is not None and t_to is not None else None
    return SearchSpec(view=view, channel=channel, time_range=time_range,
                      predicates=tuple(predicates), sax_regex=sax, order_by=order, limit=limit)
