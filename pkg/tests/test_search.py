import numpy as np
import pytest

from tsquery.features import ViewType, build_feature_tables
from tsquery.model import TimeWindow
from tsquery.search import (
    BadRegex,
    NoFeatureTable,
    Predicate,
    SearchSpec,
    ShapeToken,
    UnknownShapeToken,
    compile_fuzzy_shape,
    parse_text_query,
    search_candidates,
    widen_fuzzy_shape,
)

HOUR = 3600
MARCH_1 = 1614556800


@pytest.fixture
def indexed(store):
    """Five hourly days; day 2 carries an injected monotonic rise."""
    rng = np.random.default_rng(3)
    n = 5 * 24
    ts = MARCH_1 + HOUR * np.arange(n)
    vals = 10 + rng.normal(0, 0.5, n)
    vals[2 * 24:3 * 24] += np.linspace(0, 8, 24)  # clean rise day
    store.write_points("c", ts, vals)
    build_feature_tables(store, views=[ViewType.DAILY])
    return store


def test_order_by_std_limit_one(indexed):
    spec = SearchSpec(view=ViewType.DAILY, order_by=("std_val", "DESC"), limit=1)
    rows = search_candidates(indexed, spec).rows
    assert len(rows) == 1
    # the rise day is by far the most volatile
    assert rows[0].window.start == MARCH_1 + 2 * 86400


def test_rise_regex_finds_injected_day(indexed):
    spec = SearchSpec(view=ViewType.DAILY, sax_regex=compile_fuzzy_shape(ShapeToken.RISE))
    rows = search_candidates(indexed, spec).rows
    assert any(r.window.start == MARCH_1 + 2 * 86400 for r in rows)


def test_unsatisfiable_predicate(indexed):
    spec = SearchSpec(view=ViewType.DAILY,
                      predicates=(Predicate("std_val", "<", 0.0),))
    assert len(search_candidates(indexed, spec)) == 0


def test_predicates_sound(indexed):
    spec = SearchSpec(view=ViewType.DAILY,
                      predicates=(Predicate("std_val", ">", 0.4),
                                  Predicate("coverage", ">=", 0.5)))
    for row in search_candidates(indexed, spec).rows:
        assert row.std_val > 0.4 and row.coverage >= 0.5


def test_time_range_overlap(indexed):
    spec = SearchSpec(view=ViewType.DAILY,
                      time_range=TimeWindow(MARCH_1 + 86400, MARCH_1 + 2 * 86400))
    rows = search_candidates(indexed, spec).rows
    assert [r.window.start for r in rows] == [MARCH_1 + 86400]


def test_limit_monotonic_prefix(indexed):
    spec_k = SearchSpec(view=ViewType.DAILY, order_by=("avg_val", "DESC"), limit=2)
    spec_k1 = SearchSpec(view=ViewType.DAILY, order_by=("avg_val", "DESC"), limit=3)
    rows_k = search_candidates(indexed, spec_k).rows
    rows_k1 = search_candidates(indexed, spec_k1).rows
    assert list(rows_k) == list(rows_k1[:2])


def test_bad_regex(indexed):
    with pytest.raises(BadRegex):
        search_candidates(indexed, SearchSpec(view=ViewType.DAILY, sax_regex="[ab"))


def test_no_feature_table(store):
    store.write_points("c", [0, HOUR], [1.0, 2.0])
    with pytest.raises(NoFeatureTable):
        search_candidates(store, SearchSpec(view=ViewType.MONTHLY))


def test_shape_tokens():
    assert compile_fuzzy_shape(ShapeToken.RISE) == "[ab]+.*[de]+"
    assert compile_fuzzy_shape(ShapeToken.RISE_THEN_FALL) == "[ab]+.*[de]+.*[ab]+"
    assert compile_fuzzy_shape(ShapeToken.PLATEAU_LOW) == ".*[ab]{3,}.*"
    assert compile_fuzzy_shape("FALL") == "[de]+.*[ab]+"
    with pytest.raises(UnknownShapeToken):
        compile_fuzzy_shape("ZIGZAG")
    # widening must stay a superset syntactically (looser quantifier, wildcards)
    assert widen_fuzzy_shape(ShapeToken.PLATEAU_LOW) == ".*[ab]{2,}.*"


def test_null_sax_never_matches_regex(store):
    # sparse day -> null sax; regex must skip it, predicates may still hit
    ts = MARCH_1 + HOUR * np.arange(4)
    store.write_points("c", ts, [1.0, 2.0, 3.0, 4.0])
    store.write_points("c", MARCH_1 + 86400 + HOUR * np.arange(24), np.ones(24))
    build_feature_tables(store, views=[ViewType.DAILY])
    rows = search_candidates(store, SearchSpec(view=ViewType.DAILY, sax_regex=".*")).rows
    assert all(r.sax is not None for r in rows)


def test_spec_serialization_roundtrip(indexed):
    spec = SearchSpec(view=ViewType.DAILY, channel="c",
                      time_range=TimeWindow(MARCH_1, MARCH_1 + 86400),
                      predicates=(Predicate("slope", ">", 0.0),),
                      sax_regex="[ab]+.*[de]+", order_by=("std_val", "DESC"), limit=5)
    again = SearchSpec.from_json(spec.to_json())
    assert again == spec
    assert search_candidates(indexed, again).rows == search_candidates(indexed, spec).rows


def test_text_query_form(indexed):
    spec = parse_text_query(
        "view=daily where=std_val>0.4 sax='[ab]+.*[de]+' order=std_val:desc limit=1"
    )
    rows = search_candidates(indexed, spec).rows
    assert len(rows) == 1 and rows[0].window.start == MARCH_1 + 2 * 86400
