"""Deterministic scoring metrics for every answer kind, plus suite scoring.

Metric bindings:
    SCALAR      -> relative accuracy  max(0, 1 - |y - yhat| / (|y| + 1e-9))
    TIMESTAMP   -> binary hit within a tolerance (default 0 = exact)
    INTERVAL    -> intersection-over-union of durations
    DATE_SET    -> unordered set F1
    REPORT      -> weighted composite (0.4 trend / 0.3 interval / 0.2
                   adjective / 0.1 outlier)

All metrics return values in [0, 1] and are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .model import Answer, AnswerKind, Report, TimeWindow, Timestamp

EPSILON = 1e-9
OUTLIER_TOLERANCE_SECONDS = 4 * 3600


class MetricName(str, Enum):
    SCALAR_REL_ACC = "SCALAR_REL_ACC"
    TIMESTAMP_HIT = "TIMESTAMP_HIT"
    INTERVAL_IOU = "INTERVAL_IOU"
    SET_F1 = "SET_F1"
    COMPOSITE_REPORT = "COMPOSITE_REPORT"


METRIC_FOR_KIND = {
    AnswerKind.SCALAR: MetricName.SCALAR_REL_ACC,
    AnswerKind.TIMESTAMP: MetricName.TIMESTAMP_HIT,
    AnswerKind.INTERVAL: MetricName.INTERVAL_IOU,
    AnswerKind.DATE_SET: MetricName.SET_F1,
    AnswerKind.REPORT: MetricName.COMPOSITE_REPORT,
}


@dataclass(frozen=True)
class CompositeWeights:
    trend: float = 0.4
    interval: float = 0.3
    adjective: float = 0.2
    outlier: float = 0.1

    def __post_init__(self):
        total = self.trend + self.interval + self.adjective + self.outlier
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"composite weights must sum to 1, got {total}")


def scalar_rel_acc(truth: float, predicted: float) -> float:
    """Relative accuracy with an epsilon guard against division by zero."""
    return max(0.0, 1.0 - abs(truth - predicted) / (abs(truth) + EPSILON))


def timestamp_hit(truth: Timestamp, predicted: Timestamp, tolerance_seconds: int = 0) -> int:
    return 1 if abs(int(predicted) - int(truth)) <= tolerance_seconds else 0


def interval_iou(predicted: TimeWindow, truth: TimeWindow) -> float:
    inter = predicted.intersection_seconds(truth)
    if inter == 0:
        return 0.0
    return inter / predicted.union_seconds(truth)


def set_f1(predicted: Iterable[date], truth: Iterable[date]) -> float:
    pred = frozenset(predicted)
    gold = frozenset(truth)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    hits = len(pred & gold)
    if hits == 0:
        return 0.0
    precision = hits / len(pred)
    recall = hits / len(gold)
    return 2 * precision * recall / (precision + recall)


def _lcs_alignment(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int]]:
    """Longest common subsequence alignment as (index_a, index_b) pairs.

    Standard DP; backtrack prefers matching later elements first, which for
    equal-length alternatives keeps the alignment deterministic.
    """
    n, m = len(a), len(b)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                dp[i][j] = dp[i + 1][j + 1] + 1
            else:
                dp[i][j] = max(dp[i + 1][j], dp[i][j + 1])
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def _match_outliers(pred: Sequence[Timestamp], gold: Sequence[Timestamp],
                    tolerance: int = OUTLIER_TOLERANCE_SECONDS) -> int:
    """One-to-one greedy matching on sorted timestamps within a tolerance."""
    pred_sorted = sorted(pred)
    gold_sorted = sorted(gold)
    hits = 0
    j = 0
    for p in pred_sorted:
        while j < len(gold_sorted) and gold_sorted[j] < p - tolerance:
            j += 1
        if j < len(gold_sorted) and abs(gold_sorted[j] - p) <= tolerance:
            hits += 1
            j += 1
    return hits


def outlier_f1(pred: Sequence[Timestamp], gold: Sequence[Timestamp],
               tolerance: int = OUTLIER_TOLERANCE_SECONDS) -> float:
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    hits = _match_outliers(pred, gold, tolerance)
    if hits == 0:
        return 0.0
    precision = hits / len(pred)
    recall = hits / len(gold)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class CompositeBreakdown:
    total: float
    trend: float
    interval: float
    adjective: float
    outlier: float


def composite_report_score(predicted: Report, truth: Report,
                           weights: CompositeWeights = CompositeWeights()) -> CompositeBreakdown:
    """Structure-aware report score.

    Trend sub-score: LCS over direction sequences, normalized by the longer
    report so both over- and under-segmentation are penalized. Interval and
    adjective sub-scores are computed over the LCS-matched segment pairs.
    Outliers use F1 with a 4-hour matching tolerance. Two empty reports
    score 1.0 (vacuous truth).
    """
    pred_empty = not predicted.segments and not predicted.outliers
    gold_empty = not truth.segments and not truth.outliers
    if pred_empty != gold_empty:
        # a blank report against a substantive one earns nothing
        return CompositeBreakdown(0.0, 0.0, 0.0, 0.0, 0.0)

    pred_dirs = [s.trend.direction.value for s in predicted.segments]
    gold_dirs = [s.trend.direction.value for s in truth.segments]

    if not pred_dirs and not gold_dirs:
        s_trend = 1.0
        matched: list[tuple[int, int]] = []
        s_interval = 1.0
        s_adj = 1.0
    elif not pred_dirs or not gold_dirs:
        s_trend = 0.0
        matched = []
        s_interval = 0.0
        s_adj = 0.0
    else:
        matched = _lcs_alignment(pred_dirs, gold_dirs)
        s_trend = len(matched) / max(len(pred_dirs), len(gold_dirs))
        if matched:
            ious = [
                interval_iou(predicted.segments[i].window, truth.segments[j].window)
                for i, j in matched
            ]
            s_interval = sum(ious) / len(ious)
            adj_hits = sum(
                1
                for i, j in matched
                if predicted.segments[i].trend.modifier == truth.segments[j].trend.modifier
            )
            s_adj = adj_hits / len(matched)
        else:
            s_interval = 0.0
            s_adj = 0.0

    s_outlier = outlier_f1(predicted.outliers, truth.outliers)
    total = (
        weights.trend * s_trend
        + weights.interval * s_interval
        + weights.adjective * s_adj
        + weights.outlier * s_outlier
    )
    return CompositeBreakdown(total, s_trend, s_interval, s_adj, s_outlier)


def score_answer_value(predicted: Answer, truth: Answer,
                       timestamp_tolerance: int = 0) -> float:
    """Score a predicted answer against truth; mismatched kinds score 0."""
    if predicted.kind is not truth.kind:
        return 0.0
    if truth.kind is AnswerKind.SCALAR:
        return scalar_rel_acc(truth.payload, predicted.payload)
    if truth.kind is AnswerKind.TIMESTAMP:
        return float(timestamp_hit(truth.payload, predicted.payload, timestamp_tolerance))
    if truth.kind is AnswerKind.INTERVAL:
        return interval_iou(predicted.payload, truth.payload)
    if truth.kind is AnswerKind.DATE_SET:
        return set_f1(predicted.payload, truth.payload)
    return composite_report_score(predicted.payload, truth.payload).total


TASK_FAMILIES = ("AR", "SW", "SI", "PD", "SM", "CT", "CxA", "CsA", "IS")


@dataclass
class SuiteScores:
    per_family: dict[str, float]
    per_family_counts: dict[str, int]
    macro_avg: float
    micro_avg: float
    per_instance: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "per_family": self.per_family,
            "per_family_counts": self.per_family_counts,
            "macro_avg": self.macro_avg,
            "micro_avg": self.micro_avg,
        }

    def render_table(self) -> str:
        """Aligned grid with one column per task family plus the macro average."""
        cols = [f for f in TASK_FAMILIES if f in self.per_family]
        header = " | ".join(f"{c:>6}" for c in cols + ["Avg."])
        row = " | ".join(f"{self.per_family[c]:6.4f}" for c in cols)
        row += f" | {self.macro_avg:6.4f}"
        sep = "-" * len(header)
        return "\n".join([header, sep, row, f"(macro over families; micro={self.micro_avg:.4f})"])


def score_suite(instances: Sequence, answers: Mapping[str, Answer]) -> SuiteScores:
    """Score answered instances; missing answers score 0.

    ``instances`` supply ``id``, ``task_type`` and ``ground_truth``
    attributes (bench instances or equivalent records).
    """
    per_instance: dict[str, float] = {}
    family_totals: dict[str, list[float]] = {}
    for inst in instances:
        predicted = answers.get(inst.id)
        if predicted is None:
            score = 0.0
        else:
            score = score_answer_value(predicted, inst.ground_truth)
        per_instance[inst.id] = score
        family_totals.setdefault(inst.task_type, []).append(score)

    per_family = {fam: sum(v) / len(v) for fam, v in family_totals.items()}
    counts = {fam: len(v) for fam, v in family_totals.items()}
    macro = sum(per_family.values()) / len(per_family) if per_family else 0.0
    all_scores = [s for v in family_totals.values() for s in v]
    micro = sum(all_scores) / len(all_scores) if all_scores else 0.0
    return SuiteScores(per_family, counts, macro, micro, per_instance)
