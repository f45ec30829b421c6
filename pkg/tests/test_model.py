import datetime as dt

import pytest
from hypothesis import given, strategies as st

from tsquery.model import (
    Answer,
    AnswerKind,
    InvalidWindow,
    Report,
    ReportSegment,
    TimeWindow,
    TrendDirection,
    TrendLabel,
    TrendModifier,
    format_timestamp,
    parse_timestamp,
    validate_window,
)


def test_validate_window():
    validate_window(TimeWindow(0, 86400))
    with pytest.raises(InvalidWindow):
        TimeWindow(100, 100)
    with pytest.raises(InvalidWindow):
        TimeWindow(200, 100)


def test_timestamp_roundtrip():
    assert parse_timestamp("2021-03-01T00:00:00Z") == 1614556800
    assert parse_timestamp("1614556800") == 1614556800
    assert parse_timestamp(1614556800) == 1614556800
    assert format_timestamp(1614556800) == "2021-03-01T00:00:00Z"
    # range covers 1970..2100
    assert parse_timestamp("2100-12-31T23:59:59Z") > 0


def test_trend_label_domains():
    TrendLabel(TrendDirection.RISE, TrendModifier.RAPID)
    TrendLabel(TrendDirection.STABLE, TrendModifier.FLUCTUATING)
    with pytest.raises(ValueError):
        TrendLabel(TrendDirection.RISE, TrendModifier.STEADY)
    with pytest.raises(ValueError):
        TrendLabel(TrendDirection.STABLE, TrendModifier.RAPID)
    assert TrendLabel.from_phrase("rapid rise").direction is TrendDirection.RISE


def test_report_segments_ordered():
    seg1 = ReportSegment(TimeWindow(0, 100), TrendLabel(TrendDirection.RISE, TrendModifier.RAPID))
    seg2 = ReportSegment(TimeWindow(100, 200), TrendLabel(TrendDirection.STABLE, TrendModifier.STEADY))
    Report((seg1, seg2), (50,))
    with pytest.raises(ValueError):
        Report((seg2, seg1), ())


def _sample_answers():
    report = Report(
        (
            ReportSegment(TimeWindow(0, 3600), TrendLabel(TrendDirection.RISE, TrendModifier.RAPID)),
            ReportSegment(TimeWindow(3600, 7200), TrendLabel(TrendDirection.STABLE, TrendModifier.STEADY)),
        ),
        (1800,),
    )
    return [
        Answer.scalar(9.25),
        Answer.timestamp(1614556800),
        Answer.interval(TimeWindow(0, 86400)),
        Answer.date_set({dt.date(2021, 3, 1), dt.date(2021, 3, 5)}),
        Answer.report(report),
    ]


@pytest.mark.parametrize("answer", _sample_answers(), ids=lambda a: a.kind.value)
def test_answer_serialization_roundtrip(answer):
    assert Answer.from_text(answer.to_text()) == answer


def test_answer_payload_validation():
    with pytest.raises(ValueError):
        Answer(AnswerKind.SCALAR, "nope")
    with pytest.raises(ValueError):
        Answer(AnswerKind.INTERVAL, 5)
    with pytest.raises(ValueError):
        Answer(AnswerKind.DATE_SET, {1, 2})


@given(
    a=st.integers(0, 10_000), b=st.integers(0, 10_000),
    c=st.integers(0, 10_000), d=st.integers(0, 10_000),
)
def test_window_measure_additivity(a, b, c, d):
    # |A∩B| + |A∪B| == |A| + |B| for any two valid windows
    if a >= b or c >= d:
        return
    wa, wb = TimeWindow(a, b), TimeWindow(c, d)
    assert wa.intersection_seconds(wb) + wa.union_seconds(wb) == (
        wa.duration_seconds + wb.duration_seconds
    )
