"""Embedded file-backed series store with indexed range scans.

SQLite keeps one clustered ``(channel, ts)`` table for raw points and a
feature table written by the index builder. The raw table remains the
definitive source of truth; everything else is derived and rebuildable.
Single writer, many readers (WAL mode).
"""

from __future__ import annotations

import csv
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import SeriesSlice, TimeWindow, Timestamp, parse_timestamp


class StoreError(Exception):
    code = "STORE_ERROR"


class UnknownChannel(StoreError):
    code = "UNKNOWN_CHANNEL"


class ParseError(StoreError):
    code = "PARSE_ERROR"


class EmptyInputError(StoreError):
    code = "EMPTY_INPUT"


_SCHEMA = """
CREATE TABLE IF NOT EXISTS points (
    channel TEXT NOT NULL,
    ts      INTEGER NOT NULL,
    value   REAL NOT NULL,
    PRIMARY KEY (channel, ts)
) WITHOUT ROWID;

CREATE TABLE IF NOT EXISTS channels (
    name TEXT PRIMARY KEY,
    tags TEXT NOT NULL DEFAULT ''
);

CREATE TABLE IF NOT EXISTS features (
    series_id    TEXT NOT NULL,
    view_type    TEXT NOT NULL,
    window_start INTEGER NOT NULL,
    window_end   INTEGER NOT NULL,
    min_val REAL NOT NULL,
    max_val REAL NOT NULL,
    avg_val REAL NOT NULL,
    std_val REAL NOT NULL,
    slope   REAL,
    sax     TEXT,
    sax_len INTEGER NOT NULL,
    coverage REAL NOT NULL,
    PRIMARY KEY (series_id, view_type, window_start)
) WITHOUT ROWID;

CREATE INDEX IF NOT EXISTS idx_features_view ON features (view_type, window_start);

CREATE TABLE IF NOT EXISTS verdicts (
    instance_id TEXT PRIMARY KEY,
    status      TEXT NOT NULL,
    reason      TEXT,
    reviewer    TEXT,
    updated_at  INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_stored: int = 0
    duplicates_resolved: int = 0
    channels: list[str] = field(default_factory=list)
    median_interval_seconds: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_stored": self.rows_stored,
            "duplicates_resolved": self.duplicates_resolved,
            "channels": self.channels,
            "median_interval_seconds": self.median_interval_seconds,
        }


@dataclass(frozen=True)
class ColumnMapping:
    timestamp: str = "timestamp"
    channel: str = "channel"
    value: str = "value"


@dataclass(frozen=True)
class ChannelStats:
    point_count: int
    first_ts: Timestamp
    last_ts: Timestamp
    median_interval_seconds: float | None


class SeriesStore:
    """Persisted (channel, timestamp, value) points with range-scan access."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.conn = sqlite3.connect(str(self.path))
        self.conn.execute("PRAGMA journal_mode=WAL")
        self.conn.execute("PRAGMA synchronous=NORMAL")
        self.conn.executescript(_SCHEMA)
        self.conn.commit()

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> "SeriesStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- write path ---------------------------------------------------------

    def ingest_csv(self, path: str | Path, mapping: ColumnMapping = ColumnMapping()) -> IngestReport:
        """Load a header-row CSV; duplicates on (channel, ts) are last-write-wins."""
        path = Path(path)
        report = IngestReport()
        rows: list[tuple[str, int, float]] = []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise EmptyInputError(f"{path} has no header row")
            for col in (mapping.timestamp, mapping.channel, mapping.value):
                if col not in reader.fieldnames:
                    raise ParseError(f"missing column {col!r} in {path}")
            for lineno, row in enumerate(reader, start=2):
                report.rows_read += 1
                chan = (row[mapping.channel] or "").strip()
                if not chan:
                    raise ParseError(f"line {lineno}: empty channel name")
                try:
                    ts = parse_timestamp(row[mapping.timestamp])
                except (ValueError, TypeError) as exc:
                    raise ParseError(f"line {lineno}: bad timestamp {row[mapping.timestamp]!r}") from exc
                try:
                    value = float(row[mapping.value])
                except (ValueError, TypeError) as exc:
                    raise ParseError(f"line {lineno}: bad value {row[mapping.value]!r}") from exc
                if not np.isfinite(value):
                    raise ParseError(f"line {lineno}: non-finite value {value!r}")
                rows.append((chan, ts, value))
        if not rows:
            raise EmptyInputError(f"{path} contains no data rows")

        # last-write-wins within the file, then against the store
        deduped: dict[tuple[str, int], float] = {}
        for chan, ts, value in rows:
            if (chan, ts) in deduped:
                report.duplicates_resolved += 1
            deduped[(chan, ts)] = value

        cur = self.conn.cursor()
        pre_existing = 0
        for chan, ts in deduped:
            hit = cur.execute(
                "SELECT 1 FROM points WHERE channel=? AND ts=?", (chan, ts)
            ).fetchone()
            if hit:
                pre_existing += 1
        cur.executemany(
            "INSERT OR REPLACE INTO points (channel, ts, value) VALUES (?, ?, ?)",
            [(c, t, v) for (c, t), v in deduped.items()],
        )
        report.duplicates_resolved += pre_existing
        report.rows_stored = len(deduped) - pre_existing
        channels = sorted({c for c, _ in deduped})
        cur.executemany(
            "INSERT OR IGNORE INTO channels (name) VALUES (?)", [(c,) for c in channels]
        )
        self.conn.commit()
        report.channels = channels
        for chan in channels:
            stats = self.channel_stats(chan)
            if stats.median_interval_seconds is not None:
                report.median_interval_seconds[chan] = stats.median_interval_seconds
        return report

    def write_points(self, channel: str, timestamps: Sequence[int], values: Sequence[float]) -> int:
        """Bulk insert for programmatic writers (synthesizer, benchmark)."""
        if not channel or not channel.strip():
            raise ValueError("channel name must be non-empty")
        ts = np.asarray(timestamps, dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64)
        if ts.size != vals.size:
            raise ValueError("timestamps and values must align")
        if ts.size and not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        cur = self.conn.cursor()
        cur.execute("INSERT OR IGNORE INTO channels (name) VALUES (?)", (channel,))
        cur.executemany(
            "INSERT OR REPLACE INTO points (channel, ts, value) VALUES (?, ?, ?)",
            zip([channel] * ts.size, ts.tolist(), vals.tolist()),
        )
        self.conn.commit()
        return int(ts.size)

    def delete_channel(self, channel: str) -> None:
        cur = self.conn.cursor()
        cur.execute("DELETE FROM points WHERE channel=?", (channel,))
        cur.execute("DELETE FROM features WHERE series_id=?", (channel,))
        cur.execute("DELETE FROM channels WHERE name=?", (channel,))
        self.conn.commit()

    # -- read path ----------------------------------------------------------

    def channel_names(self) -> list[str]:
        rows = self.conn.execute("SELECT name FROM channels ORDER BY name").fetchall()
        return [r[0] for r in rows]

    def has_channel(self, channel: str) -> bool:
        return (
            self.conn.execute("SELECT 1 FROM channels WHERE name=?", (channel,)).fetchone()
            is not None
        )

    def _require_channel(self, channel: str) -> None:
        if not self.has_channel(channel):
            raise UnknownChannel(f"unknown channel {channel!r}")

    def fetch_slice(self, channel: str, window: TimeWindow) -> SeriesSlice:
        """All stored points with start <= ts < end, in timestamp order."""
        self._require_channel(channel)
        rows = self.conn.execute(
            "SELECT ts, value FROM points WHERE channel=? AND ts>=? AND ts<? ORDER BY ts",
            (channel, window.start, window.end),
        ).fetchall()
        ts = np.fromiter((r[0] for r in rows), dtype=np.int64, count=len(rows))
        vals = np.fromiter((r[1] for r in rows), dtype=np.float64, count=len(rows))
        return SeriesSlice(channel, ts, vals)

    def fetch_all(self, channel: str) -> SeriesSlice:
        self._require_channel(channel)
        rows = self.conn.execute(
            "SELECT ts, value FROM points WHERE channel=? ORDER BY ts", (channel,)
        ).fetchall()
        ts = np.fromiter((r[0] for r in rows), dtype=np.int64, count=len(rows))
        vals = np.fromiter((r[1] for r in rows), dtype=np.float64, count=len(rows))
        return SeriesSlice(channel, ts, vals)

    def channel_stats(self, channel: str) -> ChannelStats:
        self._require_channel(channel)
        row = self.conn.execute(
            "SELECT COUNT(*), MIN(ts), MAX(ts) FROM points WHERE channel=?", (channel,)
        ).fetchone()
        count, first, last = row
        if count == 0:
            raise UnknownChannel(f"channel {channel!r} has no points")
        median_interval = None
        if count >= 2:
            ts_rows = self.conn.execute(
                "SELECT ts FROM points WHERE channel=? ORDER BY ts", (channel,)
            ).fetchall()
            ts = np.fromiter((r[0] for r in ts_rows), dtype=np.int64, count=count)
            deltas = np.diff(ts)
            median_interval = float(np.median(deltas))
        return ChannelStats(count, int(first), int(last), median_interval)

    # -- verdict persistence (benchmark review) ------------------------------

    def put_verdict(self, instance_id: str, status: str, reason: str | None,
                    reviewer: str | None, updated_at: int) -> None:
        self.conn.execute(
            "INSERT OR REPLACE INTO verdicts (instance_id, status, reason, reviewer, updated_at)"
            " VALUES (?, ?, ?, ?, ?)",
            (instance_id, status, reason, reviewer, updated_at),
        )
        self.conn.commit()

    def get_verdict(self, instance_id: str) -> dict | None:
        row = self.conn.execute(
            "SELECT status, reason, reviewer, updated_at FROM verdicts WHERE instance_id=?",
            (instance_id,),
        ).fetchone()
        if row is None:
            return None
        return {
            "instance_id": instance_id,
            "status": row[0],
            "reason": row[1],
            "reviewer": row[2],
            "updated_at": row[3],
        }

    def all_verdicts(self) -> dict[str, dict]:
        rows = self.conn.execute(
            "SELECT instance_id, status, reason, reviewer, updated_at FROM verdicts"
        ).fetchall()
        return {
            r[0]: {
                "instance_id": r[0],
                "status": r[1],
                "reason": r[2],
                "reviewer": r[3],
                "updated_at": r[4],
            }
            for r in rows
        }

    # -- misc -----------------------------------------------------------------

    def set_meta(self, key: str, value: str) -> None:
        self.conn.execute("INSERT OR REPLACE INTO meta (key, value) VALUES (?, ?)", (key, value))
        self.conn.commit()

    def get_meta(self, key: str) -> str | None:
        row = self.conn.execute("SELECT value FROM meta WHERE key=?", (key,)).fetchone()
        return row[0] if row else None
