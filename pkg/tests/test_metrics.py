import datetime as dt

import pytest
from hypothesis import given, strategies as st

from tsquery.metrics import (
    CompositeWeights,
    composite_report_score,
    interval_iou,
    outlier_f1,
    scalar_rel_acc,
    score_answer_value,
    set_f1,
    timestamp_hit,
)
from tsquery.model import (
    Answer,
    Report,
    ReportSegment,
    TimeWindow,
    TrendDirection,
    TrendLabel,
    TrendModifier,
)


def test_scalar_rel_acc():
    assert scalar_rel_acc(100, 100) == 1.0
    # the mandated epsilon guard shifts the value by ~5e-12
    assert scalar_rel_acc(100, 150) == pytest.approx(0.5, abs=1e-9)
    assert scalar_rel_acc(0, 0) == 1.0
    assert scalar_rel_acc(10, 1000) == 0.0  # clamped at zero


def test_timestamp_hit():
    assert timestamp_hit(1000, 1000, 0) == 1
    assert timestamp_hit(1000, 1001, 0) == 0
    assert timestamp_hit(1000, 1030, 60) == 1


def test_interval_iou():
    assert interval_iou(TimeWindow(0, 10), TimeWindow(0, 10)) == 1.0
    assert interval_iou(TimeWindow(0, 10), TimeWindow(20, 30)) == 0.0
    assert interval_iou(TimeWindow(0, 10), TimeWindow(5, 15)) == pytest.approx(1 / 3, abs=1e-12)
    # symmetry
    assert interval_iou(TimeWindow(5, 15), TimeWindow(0, 10)) == pytest.approx(1 / 3, abs=1e-12)


def test_set_f1():
    d = dt.date
    assert set_f1({d(2021, 1, 1)}, {d(2021, 1, 1)}) == 1.0
    assert set_f1({d(2021, 1, 1), d(2021, 1, 2)}, {d(2021, 1, 2), d(2021, 1, 3)}) == pytest.approx(0.5)
    assert set_f1(set(), {d(2021, 1, 1)}) == 0.0
    assert set_f1(set(), set()) == 1.0


def _report(labels, hours, outliers=()):
    segs = []
    t = 0
    for (direction, modifier), h in zip(labels, hours):
        segs.append(
            ReportSegment(
                TimeWindow(t, t + h * 3600),
                TrendLabel(TrendDirection(direction), TrendModifier(modifier)),
            )
        )
        t += h * 3600
    return Report(tuple(segs), tuple(outliers))


def test_composite_identity():
    rep = _report([("RISE", "RAPID"), ("STABLE", "STEADY"), ("FALL", "GRADUAL")], [5, 4, 6], [3600])
    br = composite_report_score(rep, rep)
    assert br.total == pytest.approx(1.0, abs=1e-12)
    assert (br.trend, br.interval, br.adjective, br.outlier) == (1.0, 1.0, 1.0, 1.0)


def test_composite_wrong_modifiers_hand_case():
    # directions and intervals exact, all modifiers wrong, outliers exact
    gt = _report([("RISE", "RAPID"), ("FALL", "GRADUAL")], [5, 5], [1800])
    pred = _report([("RISE", "GRADUAL"), ("FALL", "RAPID")], [5, 5], [1800])
    br = composite_report_score(pred, gt)
    assert br.trend == 1.0 and br.interval == 1.0 and br.adjective == 0.0 and br.outlier == 1.0
    assert br.total == pytest.approx(0.8, abs=1e-12)


def test_composite_empty_pred():
    gt = _report([("RISE", "RAPID")], [5])
    pred = Report((), ())
    assert composite_report_score(pred, gt).total == 0.0


def test_composite_order_sensitivity():
    # permuting gt segments can only hurt the trend LCS vs an ordered pred
    gt = _report([("RISE", "RAPID"), ("STABLE", "STEADY"), ("FALL", "GRADUAL")], [5, 5, 5])
    permuted = _report([("FALL", "GRADUAL"), ("STABLE", "STEADY"), ("RISE", "RAPID")], [5, 5, 5])
    pred = gt
    assert (
        composite_report_score(pred, permuted).trend
        <= composite_report_score(pred, gt).trend
    )


def test_outlier_tolerance():
    assert outlier_f1([0], [3 * 3600], tolerance=4 * 3600) == 1.0
    assert outlier_f1([0], [5 * 3600], tolerance=4 * 3600) == 0.0
    # one-to-one: two predictions cannot both claim one truth
    assert outlier_f1([0, 600], [0], tolerance=4 * 3600) == pytest.approx(2 / 3)


def test_kind_mismatch_scores_zero():
    assert score_answer_value(Answer.scalar(5), Answer.timestamp(5)) == 0.0


def test_weights_must_sum():
    with pytest.raises(ValueError):
        CompositeWeights(0.5, 0.5, 0.5, 0.5)


dates = st.sets(
    st.dates(min_value=dt.date(2020, 1, 1), max_value=dt.date(2021, 12, 31)), max_size=8
)


@given(pred=dates, gt=dates)
def test_set_f1_bounded_and_monotone(pred, gt):
    base = set_f1(pred, gt)
    assert 0.0 <= base <= 1.0
    if pred - gt:
        # removing one false positive never decreases the score
        removed = set(pred)
        removed.discard(next(iter(pred - gt)))
        assert set_f1(removed, gt) >= base
