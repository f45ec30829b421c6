import numpy as np
import pytest

from tsquery.store import SeriesStore

HOUR = 3600


@pytest.fixture
def store(tmp_path):
    s = SeriesStore(tmp_path / "test.db")
    yield s
    s.close()


@pytest.fixture
def hourly_store(store):
    """Store with one deterministic hourly channel spanning March 2021."""
    rng = np.random.default_rng(42)
    start = 1614556800  # 2021-03-01T00:00:00Z
    n = 31 * 24
    ts = start + HOUR * np.arange(n)
    t = np.arange(n)
    vals = 10 + 2 * np.sin(2 * np.pi * (t % 24) / 24) + rng.normal(0, 0.5, n)
    store.write_points("river_a", ts, vals)
    return store
