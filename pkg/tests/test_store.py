import numpy as np
import pytest

from tsquery.model import TimeWindow
from tsquery.store import ColumnMapping, EmptyInputError, ParseError, SeriesStore, UnknownChannel

HOUR = 3600


def _write_csv(path, rows, header="timestamp,channel,value"):
    path.write_text(header + "\n" + "\n".join(rows) + ("\n" if rows else ""))
    return path


def test_ingest_basic(store, tmp_path):
    f = _write_csv(tmp_path / "a.csv", [
        "2021-03-01T00:00:00Z,river_a,1.5",
        "2021-03-01T01:00:00Z,river_a,2.5",
        "2021-03-01T02:00:00Z,river_a,3.5",
    ])
    rep = store.ingest_csv(f)
    assert rep.rows_read == 3 and rep.rows_stored == 3 and rep.duplicates_resolved == 0
    assert rep.channels == ["river_a"]
    assert rep.median_interval_seconds["river_a"] == HOUR


def test_ingest_duplicates_last_write_wins(store, tmp_path):
    f = _write_csv(tmp_path / "a.csv", [
        "1000,c,1.0",
        "1000,c,9.0",
    ])
    rep = store.ingest_csv(f)
    assert rep.rows_stored == 1 and rep.duplicates_resolved == 1
    sl = store.fetch_slice("c", TimeWindow(0, 2000))
    assert sl.values.tolist() == [9.0]


def test_ingest_bad_value_names_line(store, tmp_path):
    f = _write_csv(tmp_path / "a.csv", ["1000,c,1.0", "2000,c,not_a_number"])
    with pytest.raises(ParseError, match="line 3"):
        store.ingest_csv(f)


def test_ingest_empty(store, tmp_path):
    f = _write_csv(tmp_path / "a.csv", [])
    with pytest.raises(EmptyInputError):
        store.ingest_csv(f)


def test_ingest_idempotent(store, tmp_path):
    f = _write_csv(tmp_path / "a.csv", ["1000,c,1.0", "2000,c,2.0"])
    store.ingest_csv(f)
    before = store.fetch_slice("c", TimeWindow(0, 10_000)).points
    rep = store.ingest_csv(f)
    assert store.fetch_slice("c", TimeWindow(0, 10_000)).points == before
    assert rep.rows_stored == 0 and rep.duplicates_resolved == 2


def test_ingest_custom_mapping(store, tmp_path):
    f = _write_csv(tmp_path / "a.csv", ["1000,3.5,river"], header="t,v,chan")
    rep = store.ingest_csv(f, ColumnMapping(timestamp="t", channel="chan", value="v"))
    assert rep.rows_stored == 1
    assert store.channel_names() == ["river"]


def test_fetch_slice_windows(hourly_store):
    full = hourly_store.fetch_all("river_a")
    w = TimeWindow(int(full.timestamps[0]), int(full.timestamps[-1]) + HOUR)
    assert len(hourly_store.fetch_slice("river_a", w)) == len(full)
    past = TimeWindow(int(full.timestamps[-1]) + HOUR, int(full.timestamps[-1]) + 2 * HOUR)
    assert len(hourly_store.fetch_slice("river_a", past)) == 0
    with pytest.raises(UnknownChannel):
        hourly_store.fetch_slice("nope", w)


def test_fetch_slice_partition(hourly_store):
    full = hourly_store.fetch_all("river_a")
    a, b, c = int(full.timestamps[0]), int(full.timestamps[100]), int(full.timestamps[-1]) + HOUR
    left = hourly_store.fetch_slice("river_a", TimeWindow(a, b))
    right = hourly_store.fetch_slice("river_a", TimeWindow(b, c))
    both = hourly_store.fetch_slice("river_a", TimeWindow(a, c))
    assert len(left) + len(right) == len(both)
    assert set(left.points) | set(right.points) == set(both.points)


def test_channel_stats_median_interval(store):
    # 13 one-hour gaps then 3 two-hour gaps: median delta is one hour
    ts = [0]
    for _ in range(13):
        ts.append(ts[-1] + HOUR)
    for _ in range(3):
        ts.append(ts[-1] + 2 * HOUR)
    store.write_points("c", ts, np.arange(len(ts), dtype=float))
    stats = store.channel_stats("c")
    assert stats.median_interval_seconds == HOUR
    assert stats.point_count == len(ts)


def test_channel_stats_single_point(store):
    store.write_points("solo", [50], [1.0])
    stats = store.channel_stats("solo")
    assert stats.median_interval_seconds is None


def test_verdict_persistence(tmp_path):
    path = tmp_path / "v.db"
    with SeriesStore(path) as s:
        s.put_verdict("inst-1", "REJECTED", "too noisy", "alice", 1234)
    with SeriesStore(path) as s:
        v = s.get_verdict("inst-1")
        assert v["status"] == "REJECTED" and v["reason"] == "too noisy"
