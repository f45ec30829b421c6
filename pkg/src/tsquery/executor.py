"""Plan interpreter: search, verify, fallback and bounded self-correction.

A ``QueryPlan`` is declarative data, not code: a retrieval stage (raw fetch
or feature-table search) plus an ordered list of verification steps drawn
from the closed operator vocabulary. The executor runs the plan, assembles
the final answer per its answer kind, and records a full trace. Runtime
failures consume retries (at most 3) through a repair hook; an empty
feature search never fails outright but falls back to scanning the raw
range directly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import operators as ops
from .features import VIEW_TABLE_NAMES
from .model import (
    Answer,
    AnswerKind,
    SeriesSlice,
    TimeWindow,
    Timestamp,
    to_utc_date,
)
from .search import SearchSpec, search_candidates
from .store import SeriesStore


class ExecutorError(Exception):
    code = "EXECUTOR_ERROR"


class PlanInvalid(ExecutorError):
    code = "PLAN_INVALID"


class NotFound(ExecutorError):
    code = "NOT_FOUND"


class TooFew(ExecutorError):
    code = "TOO_FEW"


class VerificationInconclusive(ExecutorError):
    code = "VERIFICATION_INCONCLUSIVE"


class InsufficientTemplate(ExecutorError):
    code = "INSUFFICIENT_TEMPLATE"


class ExecutionFailed(ExecutorError):
    code = "EXECUTION_FAILED"

    def __init__(self, message: str, trace: "ExecutionTrace"):
        super().__init__(message)
        self.trace = trace


MAX_RETRIES = 3


def _digest(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha1(payload).hexdigest()[:12]


# ---------------------------------------------------------------------------
# plan documents


class PipelineMode(str, Enum):
    DIRECT_ACCESS = "DIRECT_ACCESS"
    SEARCH_THEN_VERIFY = "SEARCH_THEN_VERIFY"


VERIFY_OPERATORS = (
    "aggregate",
    "locate_extremum",
    "interval_above_threshold",
    "sliding_window_stat",
    "top_k_by_score",
    "detect_period",
    "find_best_match",
    "detect_changepoints",
    "calc_trend_slope",
    "calc_correlation",
    "segment_and_label",
)


@dataclass(frozen=True)
class VerifyStep:
    op: str
    params: dict = field(default_factory=dict)
    binding: str = "slice"  # "slice" | "candidates" | "step:<index>"

    def __post_init__(self):
        if self.op not in VERIFY_OPERATORS:
            raise PlanInvalid(f"unknown verify operator {self.op!r}")
        if self.binding not in ("slice", "candidates") and not self.binding.startswith("step:"):
            raise PlanInvalid(f"bad binding {self.binding!r}")

    def to_json(self) -> dict:
        return {"op": self.op, "params": self.params, "binding": self.binding}

    @classmethod
    def from_json(cls, obj: dict) -> "VerifyStep":
        return cls(obj["op"], obj.get("params", {}), obj.get("binding", "slice"))


@dataclass(frozen=True)
class VerifySpec:
    steps: tuple[VerifyStep, ...]
    final_answer_kind: AnswerKind
    assemble: dict = field(default_factory=lambda: {"kind": "last"})
    candidate_granularity: str = "whole"  # "whole" | "day"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        for step in self.steps:
            if step.binding.startswith("step:"):
                ref = int(step.binding.split(":", 1)[1])
                if ref >= self.steps.index(step):
                    raise PlanInvalid("step bindings must reference earlier steps")

    def to_json(self) -> dict:
        return {
            "steps": [s.to_json() for s in self.steps],
            "final_answer_kind": self.final_answer_kind.value,
            "assemble": self.assemble,
            "candidate_granularity": self.candidate_granularity,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VerifySpec":
        return cls(
            tuple(VerifyStep.from_json(s) for s in obj.get("steps", [])),
            AnswerKind(obj["final_answer_kind"]),
            obj.get("assemble", {"kind": "last"}),
            obj.get("candidate_granularity", "whole"),
        )


@dataclass(frozen=True)
class RetrievalSpec:
    target_table: str  # "data" | "feature_daily" | "feature_monthly" | "feature_yearly"
    channel: str
    window: Optional[TimeWindow] = None
    search: Optional[SearchSpec] = None
    extra_fetches: dict = field(default_factory=dict)  # name -> {"channel", "window"}
    sql_logic_hint: str = ""

    def to_json(self) -> dict:
        return {
            "target_table": self.target_table,
            "channel": self.channel,
            "window": self.window.to_json() if self.window else None,
            "search": self.search.to_json() if self.search else None,
            "extra_fetches": {
                k: {"channel": v["channel"], "window": v["window"].to_json()}
                for k, v in self.extra_fetches.items()
            },
            "sql_logic_hint": self.sql_logic_hint,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RetrievalSpec":
        extras = {
            k: {"channel": v["channel"], "window": TimeWindow.from_json(v["window"])}
            for k, v in obj.get("extra_fetches", {}).items()
        }
        return cls(
            target_table=obj["target_table"],
            channel=obj["channel"],
            window=TimeWindow.from_json(obj["window"]) if obj.get("window") else None,
            search=SearchSpec.from_json(obj["search"]) if obj.get("search") else None,
            extra_fetches=extras,
            sql_logic_hint=obj.get("sql_logic_hint", ""),
        )


@dataclass(frozen=True)
class QueryPlan:
    reasoning: str
    pipeline_mode: PipelineMode
    retrieval: RetrievalSpec
    needs_verification: bool
    verify_spec: Optional[VerifySpec]

    def __post_init__(self):
        if self.pipeline_mode is PipelineMode.DIRECT_ACCESS:
            if self.retrieval.target_table != "data" or self.retrieval.window is None:
                raise PlanInvalid("DIRECT_ACCESS requires target 'data' with a concrete window")
        else:
            if self.retrieval.target_table not in VIEW_TABLE_NAMES:
                raise PlanInvalid("SEARCH_THEN_VERIFY requires a feature table target")
            if self.retrieval.search is None:
                raise PlanInvalid("SEARCH_THEN_VERIFY requires a search spec")
        if self.needs_verification and self.verify_spec is None:
            raise PlanInvalid("needs_verification without a verify spec")

    def to_json(self) -> dict:
        return {
            "reasoning": self.reasoning,
            "pipeline_mode": self.pipeline_mode.value,
            "step_1_retrieval": self.retrieval.to_json(),
            "step_2_computation": {
                "needs_verification": self.needs_verification,
                "verify_spec": self.verify_spec.to_json() if self.verify_spec else None,
            },
        }

    def to_text(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "QueryPlan":
        comp = obj.get("step_2_computation", {})
        # accept the legacy field name used by model-generated plans
        needs = comp.get("needs_verification", comp.get("needs_python", False))
        return cls(
            reasoning=obj.get("reasoning", ""),
            pipeline_mode=PipelineMode(obj["pipeline_mode"]),
            retrieval=RetrievalSpec.from_json(obj["step_1_retrieval"]),
            needs_verification=bool(needs),
            verify_spec=VerifySpec.from_json(comp["verify_spec"]) if comp.get("verify_spec") else None,
        )

    def digest(self) -> str:
        return _digest(self.to_json())


# ---------------------------------------------------------------------------
# trace


def _compact_params(params: dict) -> dict:
    """Parameters as logged: long arrays are elided to a digest + length."""
    out = {}
    for key, value in params.items():
        if isinstance(value, (list, tuple)) and len(value) > 8:
            out[key] = f"<{len(value)} values:{_digest(list(value))}>"
        elif isinstance(value, dict):
            out[key] = _compact_params(value)
        else:
            out[key] = value
    return out


@dataclass
class StepLog:
    op: str
    binding: str
    params: dict
    output_digest: str
    note: str = ""

    def to_json(self) -> dict:
        return {
            "op": self.op,
            "binding": self.binding,
            "params": self.params,
            "output_digest": self.output_digest,
            "note": self.note,
        }


@dataclass
class Attempt:
    plan_digest: str
    mode: str
    fallback: bool = False
    search_rows: int | None = None
    search_spec: dict | None = None
    search_digest: str | None = None
    steps: list[StepLog] = field(default_factory=list)
    outcome: str = "pending"
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "plan_digest": self.plan_digest,
            "mode": self.mode,
            "fallback": self.fallback,
            "search_rows": self.search_rows,
            "search_spec": self.search_spec,
            "search_digest": self.search_digest,
            "steps": [s.to_json() for s in self.steps],
            "outcome": self.outcome,
            "error": self.error,
        }


@dataclass
class ExecutionTrace:
    attempts: list[Attempt] = field(default_factory=list)
    retries_used: int = 0

    def to_json(self) -> dict:
        return {
            "attempts": [a.to_json() for a in self.attempts],
            "retries_used": self.retries_used,
        }

    def digest(self) -> str:
        return _digest(self.to_json())

    @property
    def used_fallback(self) -> bool:
        return any(a.fallback for a in self.attempts)


# ---------------------------------------------------------------------------
# builtin computations


def builtin_aggregate(slice_: SeriesSlice, kind: str) -> float:
    if len(slice_) == 0:
        raise NotFound("aggregate over an empty slice")
    vals = slice_.values
    kind = kind.upper()
    if kind == "MAX":
        return float(vals.max())
    if kind == "MIN":
        return float(vals.min())
    if kind == "MEAN":
        return float(vals.mean())
    if kind == "MEDIAN":
        return float(np.median(vals))
    if kind == "RANGE":
        return float(vals.max() - vals.min())
    raise PlanInvalid(f"unknown aggregate kind {kind!r}")


def builtin_locate_extremum(slice_: SeriesSlice, kind: str,
                            threshold: float | None = None) -> Timestamp:
    if len(slice_) == 0:
        raise NotFound("locate over an empty slice")
    vals = slice_.values
    ts = slice_.timestamps
    kind = kind.upper()
    if kind == "ARGMAX":
        return int(ts[int(np.argmax(vals))])  # first occurrence = earliest
    if kind == "ARGMIN":
        return int(ts[int(np.argmin(vals))])
    if kind in ("FIRST_ABOVE", "FIRST_BELOW"):
        if threshold is None:
            raise PlanInvalid(f"{kind} requires a threshold")
        hits = np.nonzero(vals > threshold if kind == "FIRST_ABOVE" else vals < threshold)[0]
        if hits.size == 0:
            raise NotFound(f"no point satisfies {kind} {threshold}")
        return int(ts[int(hits[0])])
    raise PlanInvalid(f"unknown locate kind {kind!r}")


def _median_step(slice_: SeriesSlice) -> int:
    deltas = np.diff(slice_.timestamps)
    return int(np.median(deltas)) if deltas.size else 1


def builtin_interval_above_threshold(slice_: SeriesSlice, threshold: float,
                                     gap_factor: float = 1.5) -> TimeWindow:
    """Longest maximal run of points above the threshold.

    Qualifying points more than gap_factor * median-interval apart split the
    run (a data gap should not be counted as time spent above). The window
    is half-open: end = last qualifying timestamp + one median interval.
    """
    if len(slice_) == 0:
        raise NotFound("interval search over an empty slice")
    step = _median_step(slice_)
    ts = slice_.timestamps
    qual = np.nonzero(slice_.values > threshold)[0]
    if qual.size == 0:
        raise NotFound(f"no point exceeds {threshold}")
    max_gap = gap_factor * step
    best: tuple[int, int, int] | None = None  # (duration, start_ts, end_ts)
    run_start = int(ts[qual[0]])
    prev_ts = run_start
    for idx in qual[1:]:
        t = int(ts[idx])
        if t - prev_ts > max_gap:
            duration = prev_ts + step - run_start
            if best is None or duration > best[0]:
                best = (duration, run_start, prev_ts + step)
            run_start = t
        prev_ts = t
    duration = prev_ts + step - run_start
    if best is None or duration > best[0]:
        best = (duration, run_start, prev_ts + step)
    return TimeWindow(best[1], best[2])


def builtin_sliding_window_stat(slice_: SeriesSlice, window_seconds: int,
                                metric: str, objective: str) -> TimeWindow:
    """Objective-optimal fixed-duration window starting at a sample timestamp."""
    if len(slice_) == 0:
        raise NotFound("sliding window over an empty slice")
    ts = slice_.timestamps
    vals = slice_.values
    step = _median_step(slice_)
    span_end = int(ts[-1]) + step
    metric = metric.upper()
    objective = objective.upper()
    if objective not in ("MAX", "MIN"):
        raise PlanInvalid(f"unknown objective {objective!r}")
    best_val = None
    best_window = None
    for i in range(len(slice_)):
        start = int(ts[i])
        end = start + int(window_seconds)
        if end > span_end:
            break
        j = int(np.searchsorted(ts, end, side="left"))
        if j <= i:
            continue
        seg = vals[i:j]
        if metric == "MEAN":
            value = float(seg.mean())
        elif metric == "VARIANCE":
            value = float(seg.var())
        elif metric == "RANGE":
            value = float(seg.max() - seg.min())
        else:
            raise PlanInvalid(f"unknown metric {metric!r}")
        better = (
            best_val is None
            or (objective == "MAX" and value > best_val)
            or (objective == "MIN" and value < best_val)
        )
        if better:
            best_val = value
            best_window = TimeWindow(start, end)
    if best_window is None:
        raise ops.TooShort("no full window fits inside the slice")
    return best_window


def builtin_top_k_by_score(scored: Sequence[tuple], k: int) -> frozenset:
    """k highest-scoring dates; ties go to the earlier date."""
    items = list(scored)
    if len(items) < k:
        raise TooFew(f"need at least {k} scored dates, got {len(items)}")
    if any(not math.isfinite(float(s)) for _, s in items):
        raise PlanInvalid("scores must be finite")
    ranked = sorted(items, key=lambda pair: (-float(pair[1]), pair[0]))
    return frozenset(d for d, _ in ranked[:k])


# ---------------------------------------------------------------------------
# executor


def _day_windows(window: TimeWindow) -> list[TimeWindow]:
    day = 86400
    first = (window.start // day) * day
    out = []
    start = first
    while start < window.end:
        out.append(TimeWindow(start, start + day))
        start += day
    return out


def _resolve_threshold(spec, slice_: SeriesSlice) -> float:
    if isinstance(spec, (int, float)):
        return float(spec)
    if isinstance(spec, dict):
        if "value" in spec:
            return float(spec["value"])
        if "sigma" in spec:
            return float(slice_.values.mean() + spec["sigma"] * slice_.values.std())
        if "percentile" in spec:
            return float(np.percentile(slice_.values, spec["percentile"]))
    raise PlanInvalid(f"bad threshold spec {spec!r}")


def _value_digest(value) -> str:
    if isinstance(value, SeriesSlice):
        return _digest([len(value)])
    if isinstance(value, TimeWindow):
        return _digest(value.to_json())
    if isinstance(value, ops.MatchResult):
        return _digest({"w": value.window.to_json(), "d": round(value.distance, 9)})
    if isinstance(value, (list, tuple)):
        return _digest([_value_digest(v) for v in value])
    return _digest(value)


class QueryExecutor:
    """Runs QueryPlans against one store, with repair-driven retries."""

    def __init__(self, store: SeriesStore,
                 repair_hook: Callable[[QueryPlan, str, int], QueryPlan] | None = None):
        self.store = store
        self.repair_hook = repair_hook or default_repair

    # -- public entry --------------------------------------------------------

    def execute_plan(self, plan: QueryPlan) -> tuple[Answer, ExecutionTrace]:
        trace = ExecutionTrace()
        current = plan
        original_mode = plan.pipeline_mode
        while True:
            attempt = Attempt(plan_digest=current.digest(), mode=current.pipeline_mode.value)
            if (original_mode is PipelineMode.SEARCH_THEN_VERIFY
                    and current.pipeline_mode is PipelineMode.DIRECT_ACCESS):
                # a repair abandoned the symbolic search for a raw-range scan
                attempt.fallback = True
            trace.attempts.append(attempt)
            try:
                answer = self._run_once(current, attempt)
                attempt.outcome = "ok"
                return answer, trace
            except (ExecutorError, ops.OperatorError) as exc:
                if isinstance(exc, (PlanInvalid, ExecutionFailed)):
                    raise
                attempt.outcome = "failed"
                attempt.error = f"{type(exc).__name__}: {exc}"
                if trace.retries_used >= MAX_RETRIES:
                    raise ExecutionFailed(
                        f"retries exhausted after {trace.retries_used} repairs", trace
                    ) from exc
                trace.retries_used += 1
                try:
                    current = self.repair_hook(current, attempt.error, trace.retries_used)
                except ExecutorError as rexc:
                    raise ExecutionFailed(f"repair failed: {rexc}", trace) from exc

    # -- single attempt ------------------------------------------------------

    def _run_once(self, plan: QueryPlan, attempt: Attempt) -> Answer:
        retrieval = plan.retrieval
        spec = plan.verify_spec
        candidates: list[TimeWindow] | None = None
        base_window: TimeWindow | None = retrieval.window

        if plan.pipeline_mode is PipelineMode.SEARCH_THEN_VERIFY:
            result = search_candidates(self.store, retrieval.search)
            attempt.search_rows = len(result)
            attempt.search_spec = retrieval.search.to_json()
            attempt.search_digest = _digest([r.to_json() for r in result.rows])
            base_window = retrieval.search.time_range
            if base_window is None:
                raise PlanInvalid("search-then-verify plans must bound a time range")
            if len(result) == 0:
                # mandatory fallback: scan the raw range instead of giving up
                attempt.fallback = True
                candidates = None
            else:
                candidates = [r.window for r in result.rows]

        if base_window is None:
            raise PlanInvalid("plan has no window to execute over")

        if spec is None or not plan.needs_verification:
            raise PlanInvalid("plan carries no verification steps")

        if candidates is None and spec.candidate_granularity == "day":
            # direct access / fallback for day-grained tasks scans every day
            candidates = [w for w in _day_windows(base_window)]

        return self._run_steps(plan, spec, base_window, candidates, attempt)

    # -- step machinery -------------------------------------------------------

    def _fetch(self, channel: str, window: TimeWindow) -> SeriesSlice:
        return self.store.fetch_slice(channel, window)

    def _run_steps(self, plan: QueryPlan, spec: VerifySpec, base_window: TimeWindow,
                   candidates: list[TimeWindow] | None, attempt: Attempt) -> Answer:
        channel = plan.retrieval.channel
        base_slice = self._fetch(channel, base_window)
        if len(base_slice) == 0:
            raise NotFound(f"no data for {channel} in the requested range")
        self._base_slice = base_slice
        self._base_profile = None
        cand_windows = candidates or []
        cand_slices: dict[int, SeriesSlice] = {}

        def candidate_slice(i: int) -> SeriesSlice:
            if i not in cand_slices:
                cand_slices[i] = base_slice.subslice(cand_windows[i])
            return cand_slices[i]

        extras = {
            name: self._fetch(cfg["channel"], cfg["window"])
            for name, cfg in plan.retrieval.extra_fetches.items()
        }

        outputs: list = []
        for idx, step in enumerate(spec.steps):
            if step.binding == "slice":
                value = self._apply_op(step, base_slice, extras, outputs, plan,
                                       cand_windows=cand_windows)
            elif step.binding == "candidates":
                if not cand_windows:
                    raise NotFound("no candidate windows to verify")
                value = [
                    self._apply_op(step, candidate_slice(i), extras, outputs, plan,
                                   candidate_window=cand_windows[i])
                    for i in range(len(cand_windows))
                ]
            else:
                ref = int(step.binding.split(":", 1)[1])
                value = self._apply_op(step, base_slice, extras, outputs, plan,
                                       bound_value=outputs[ref], cand_windows=cand_windows)
            outputs.append(value)
            attempt.steps.append(
                StepLog(step.op, step.binding, _compact_params(step.params),
                        _value_digest(value))
            )

        return self._assemble(spec, outputs, cand_windows, base_slice)

    def _apply_op(self, step: VerifyStep, slice_: SeriesSlice, extras: dict,
                  outputs: list, plan: QueryPlan,
                  candidate_window: TimeWindow | None = None, bound_value=None,
                  cand_windows: list[TimeWindow] | None = None):
        p = step.params
        op = step.op
        try:
            if op == "aggregate":
                return builtin_aggregate(slice_, p["kind"])
            if op == "locate_extremum":
                threshold = p.get("threshold")
                if threshold is not None:
                    threshold = _resolve_threshold(threshold, slice_)
                return builtin_locate_extremum(slice_, p["kind"], threshold)
            if op == "interval_above_threshold":
                tau = _resolve_threshold(p["threshold"], slice_)
                return builtin_interval_above_threshold(slice_, tau, p.get("gap_factor", 1.5))
            if op == "sliding_window_stat":
                return builtin_sliding_window_stat(
                    slice_, int(p["window_seconds"]), p["metric"], p["objective"]
                )
            if op == "top_k_by_score":
                scored = self._scored_dates(p, outputs, cand_windows or [])
                return builtin_top_k_by_score(scored, int(p["k"]))
            if op == "detect_period":
                n = len(slice_)
                max_lag = int(p.get("max_lag") or min(n // 2, 400))
                return float(ops.detect_period(slice_.values, max_lag))
            if op == "find_best_match":
                return self._best_match(p, slice_, extras)
            if op == "detect_changepoints":
                work = self._transform_slice(slice_, p.get("transform"))
                cps = ops.detect_changepoints(
                    work.values,
                    penalty=p.get("penalty"),
                    min_segment_length=int(p.get("min_segment_length", 5)),
                    cost=p.get("cost", "mean"),
                )
                return {"changepoints": cps, "slice": work}
            if op == "calc_trend_slope":
                return float(ops.calc_trend_slope(slice_.values))
            if op == "calc_correlation":
                return self._correlation(p, slice_, extras, outputs)
            if op == "segment_and_label":
                return ops.segment_and_label(
                    slice_,
                    penalty=p.get("penalty"),
                    min_segment_length=int(p.get("min_segment_length", 5)),
                )
            raise PlanInvalid(f"unhandled operator {op!r}")
        except (ops.OperatorError, ExecutorError):
            if step.binding == "candidates" and p.get("on_error") == "score":
                return p.get("error_score", 0.0)
            raise

    # top_k_by_score: one date per candidate window, scored by an earlier
    # per-candidate step, with an optional gate step dropping weak matches
    def _scored_dates(self, p: dict, outputs: list,
                      cand_windows: list[TimeWindow]) -> list[tuple]:
        if not cand_windows:
            raise NotFound("top-k ranking needs candidate windows")
        dates = [to_utc_date(w.start) for w in cand_windows]
        scores = outputs[int(p["score_step"])]
        gate = None
        if "gate_step" in p and p["gate_step"] is not None:
            gate = outputs[int(p["gate_step"])]
        scored = []
        for i, (d, s) in enumerate(zip(dates, scores)):
            if gate is not None and float(gate[i]) < float(p.get("gate_min", 0.0)):
                continue
            scored.append((d, float(s)))
        if not scored:
            raise VerificationInconclusive("no candidate passed the score gate")
        return scored

    def _transform_slice(self, slice_: SeriesSlice, transform: str | None) -> SeriesSlice:
        if not transform:
            return slice_
        if transform == "diff":
            if len(slice_) < 3:
                raise ops.TooShort("diff transform needs at least 3 points")
            return SeriesSlice(slice_.channel, slice_.timestamps[1:], np.diff(slice_.values))
        if transform == "hourly_log_std":
            step = _median_step(slice_)
            per_hour = max(1, 3600 // max(step, 1))
            n_hours = len(slice_) // per_hour
            if n_hours < 2:
                raise ops.TooShort("hourly dispersion needs at least 2 hours")
            m = n_hours * per_hour
            diffs = np.diff(slice_.values[:m])
            diffs = np.append(diffs, diffs[-1] if diffs.size else 0.0)
            grid = diffs[:m].reshape(n_hours, per_hour)
            stds = np.log(np.maximum(grid.std(axis=1), 1e-9))
            ts_hours = slice_.timestamps[0] + 3600 * np.arange(n_hours, dtype=np.int64)
            return SeriesSlice(slice_.channel, ts_hours, stds)
        raise PlanInvalid(f"unknown transform {transform!r}")

    def _best_match(self, p: dict, slice_: SeriesSlice, extras: dict) -> ops.MatchResult:
        queries: list[np.ndarray] = []
        query_slice: SeriesSlice | None = None
        if "query" in p:
            queries.append(np.asarray(p["query"], dtype=np.float64))
        if "queries" in p:
            queries.extend(np.asarray(q, dtype=np.float64) for q in p["queries"])
        if "query_fetch" in p:
            cfg = p["query_fetch"]
            ref = self._fetch(cfg["channel"], TimeWindow.from_json(cfg["window"]))
            if len(ref) < 2:
                raise NotFound("reference window has too few points")
            query_slice = ref
            queries.append(ref.values)
        if not queries:
            raise PlanInvalid("find_best_match needs a query")
        band = float(p.get("band_fraction", 0.1))
        matches: list[tuple[np.ndarray, ops.MatchResult, float]] = []
        for q in queries:
            if q.size > len(slice_):
                continue
            res = ops.find_best_match(q, slice_, band)
            matches.append((q, res, res.distance / math.sqrt(q.size)))
        if not matches:
            raise ops.QueryLongerThanSearch("every query template exceeds the search slice")
        if len(matches) == 1:
            best_query, best, best_norm = matches[0]
        else:
            # several template variants (e.g. widths): the z-normalized
            # elastic distance barely separates neighbouring variants, so
            # decide by which fitted template explains the raw data best
            best_query, best, best_norm = matches[0]
            best_sse = math.inf
            lo = min(r.start_index for _, r, _ in matches)
            hi = max(r.start_index + q.size for q, r, _ in matches)
            pad = max(16, max(q.size for q, _, _ in matches) // 2)
            lo = max(0, lo - pad)
            hi = min(len(slice_), hi + pad)
            segment = slice_.values[lo:hi]
            xs = np.arange(segment.size, dtype=np.float64)
            xc = xs - xs.mean()
            denom = float(np.dot(xc, xc)) or 1.0
            for q, res, norm in matches:
                at_q = res.start_index
                window = slice_.values[at_q:at_q + q.size]
                qc = q - q.mean()
                qn = float(np.dot(qc, qc))
                if qn <= 0:
                    continue
                amp = float(np.dot(window - window.mean(), qc) / qn)
                model = np.zeros(segment.size)
                m_lo = max(at_q, lo)
                m_hi = min(at_q + q.size, hi)
                model[m_lo - lo:m_hi - lo] = amp * q[m_lo - at_q:m_hi - at_q]
                resid = segment - model
                slope = float(np.dot(xc, resid - resid.mean()) / denom)
                resid = resid - resid.mean() - slope * xc
                sse = float(np.dot(resid, resid))
                if amp > 0 and sse < best_sse:
                    best_sse = sse
                    best_query, best, best_norm = q, res, norm
        at = best.start_index
        if p.get("refine") and best_query is not None:
            if query_slice is not None and best_query is query_slice.values:
                at = ops.refined_subsequence_match(query_slice, slice_, at)
            else:
                at = ops.refine_alignment(best_query, slice_.values, at, radius=8)
        m = best_query.size
        ts_arr = slice_.timestamps
        deltas = np.diff(ts_arr)
        step = int(np.median(deltas)) if deltas.size else 1
        window = TimeWindow(int(ts_arr[at]), int(ts_arr[at + m - 1]) + step)
        return ops.MatchResult(window, best_norm, at)

    def _correlation(self, p: dict, slice_: SeriesSlice, extras: dict, outputs: list):
        if "template" in p:
            template = np.asarray(p["template"], dtype=np.float64)
            n = min(template.size, len(slice_))
            if n < 3:
                raise InsufficientTemplate("template overlap too short")
            values = slice_.values
            if p.get("deseasonalize"):
                values = values - self._seasonal_for(slice_)
            if p.get("measure") == "projection":
                t = template[:n] - template[:n].mean()
                norm2 = float(np.dot(t, t))
                if norm2 <= 0:
                    return 0.0
                if t.size < values.size:
                    # slide the template; the event sits at an unknown offset
                    from numpy.lib.stride_tricks import sliding_window_view

                    windows = sliding_window_view(values, t.size)
                    centered = windows - windows.mean(axis=1, keepdims=True)
                    beta = float((centered @ t).max() / norm2)
                else:
                    resid = values[:n] - values[:n].mean()
                    beta = float(np.dot(resid, t) / norm2)
                if p.get("normalize") == "std":
                    sd = float(values[:n].std())
                    return beta / sd if sd > 0 else 0.0
                if p.get("normalize") == "context_mad":
                    base = getattr(self, "_base_slice", slice_)
                    resid_all = base.values - self._seasonal_for(base)
                    mad = float(np.median(np.abs(resid_all - np.median(resid_all))))
                    scale = 1.4826 * mad
                    return beta / scale if scale > 0 else 0.0
                return beta
            try:
                return float(ops.calc_correlation(values[:n], template[:n], 0))
            except ops.OperatorError:
                return 0.0
        other_name = p.get("other")
        if other_name is None or other_name not in extras:
            raise PlanInvalid("calc_correlation needs 'other' referencing an extra fetch")
        other = extras[other_name]
        if "lag_scan" in p:
            lo, hi = int(p["lag_scan"][0]), int(p["lag_scan"][1])
            best_lag, best_r = lo, -2.0
            for lag in range(lo, hi + 1):
                try:
                    r = ops.calc_correlation(other.values, slice_.values, lag)
                except ops.OperatorError:
                    continue
                if r > best_r:
                    best_lag, best_r = lag, r
            return {"lag": best_lag, "r": best_r}
        lag = p.get("lag", 0)
        if isinstance(lag, dict) and "from_step" in lag:
            lag = int(outputs[int(lag["from_step"])]["lag"])
        step = _median_step(other) or 1
        # align: pair downstream value at t with upstream value at t - lag*step
        shift = int(lag) * step
        lo_ts = int(slice_.timestamps[0]) - shift
        hi_ts = int(slice_.timestamps[-1]) - shift + 1
        up = other.subslice(TimeWindow(lo_ts, hi_ts)) if len(other) else other
        n = min(len(up), len(slice_))
        if n < 3:
            raise ops.InsufficientOverlap("aligned overlap too short")
        try:
            return float(ops.calc_correlation(slice_.values[:n], up.values[:n], 0))
        except ops.ZeroVariance:
            # a flatlined window cannot co-move; report zero association
            return 0.0

    def _seasonal_for(self, slice_: SeriesSlice) -> np.ndarray:
        """Per-point seasonal values from the base slice's day profile."""
        base = getattr(self, "_base_slice", None) or slice_
        step = _median_step(base)
        per_day = max(1, 86400 // max(step, 1))
        if getattr(self, "_base_profile", None) is None:
            self._base_profile = ops.day_profile(base.timestamps, base.values, step, per_day)
        phases = (slice_.timestamps // step) % per_day
        return self._base_profile[phases]

    # -- answer assembly -------------------------------------------------------

    def _assemble(self, spec: VerifySpec, outputs: list,
                  cand_windows: list[TimeWindow], base_slice: SeriesSlice) -> Answer:
        policy = spec.assemble
        kind = spec.final_answer_kind
        mode = policy.get("kind", "last")

        if mode == "last":
            return self._answer_from_value(kind, outputs[-1])

        if mode == "argmin_candidate":
            by = outputs[int(policy["by_step"])]
            values = [
                v.distance if isinstance(v, ops.MatchResult) else float(v) for v in by
            ]
            allowed = list(range(len(values)))
            if policy.get("gate_step") is not None:
                gates = [float(g) for g in outputs[int(policy["gate_step"])]]
                top = max(gates)
                min_top = policy.get("gate_min_top")
                if min_top is not None and top < float(min_top):
                    raise VerificationInconclusive(
                        f"strongest candidate amplitude {top:.2f} below {min_top}"
                    )
                rel = float(policy.get("gate_rel", 0.5))
                gated = [i for i in allowed if gates[i] >= rel * top]
                if gated:
                    allowed = gated
            best = min(allowed, key=lambda i: values[i])
            max_best = policy.get("max_best")
            if max_best is not None and values[best] > float(max_best):
                raise VerificationInconclusive(
                    f"best candidate score {values[best]:.3f} above gate {max_best}"
                )
            chosen = by[best]
            if isinstance(chosen, ops.MatchResult):
                return self._answer_from_value(kind, chosen.window)
            if kind is AnswerKind.INTERVAL:
                return self._answer_from_value(kind, cand_windows[best])
            return self._answer_from_value(kind, chosen)

        if mode == "longest_run_below":
            scores = outputs[int(policy["step"])]
            spec_t = policy["threshold"]
            if isinstance(spec_t, dict):
                med = float(np.median([float(s) for s in scores]))
                threshold = max(float(spec_t.get("floor", 0.0)),
                                float(spec_t.get("rel_median", 0.5)) * med)
            else:
                threshold = float(spec_t)
            best_run = None
            run_start = None
            prev_end = None
            for window, score in zip(cand_windows, scores):
                below = float(score) < threshold
                if below:
                    if run_start is None or (prev_end is not None and window.start > prev_end):
                        run_start = window.start
                    prev_end = window.end
                    if best_run is None or prev_end - run_start > best_run[1] - best_run[0]:
                        best_run = (run_start, prev_end)
                else:
                    run_start = None
                    prev_end = None
            if best_run is None:
                raise NotFound("no candidate window scored below the break threshold")
            return self._answer_from_value(kind, TimeWindow(best_run[0], best_run[1]))

        if mode == "select_segment":
            payload = outputs[int(policy["step"])]
            cps: ops.Changepoints = payload["changepoints"]
            sl: SeriesSlice = payload["slice"]
            segs = cps.segments()
            if len(segs) < 2:
                raise VerificationInconclusive("segmentation found no distinct regime")
            objective = policy.get("objective", "min_std")
            if objective.endswith("_mean"):
                stats = [float(sl.values[a:b].mean()) for a, b in segs]
            else:
                stats = [float(sl.values[a:b].std()) for a, b in segs]
            pick = int(np.argmin(stats)) if objective.startswith("min") else int(np.argmax(stats))
            a, b = segs[pick]
            step = _median_step(sl)
            end_ts = int(sl.timestamps[b - 1]) + step
            return self._answer_from_value(kind, TimeWindow(int(sl.timestamps[a]), end_ts))

        raise PlanInvalid(f"unknown assemble policy {mode!r}")

    def _answer_from_value(self, kind: AnswerKind, value) -> Answer:
        if isinstance(value, ops.MatchResult):
            value = value.window
        if kind is AnswerKind.SCALAR:
            return Answer.scalar(float(value))
        if kind is AnswerKind.TIMESTAMP:
            return Answer.timestamp(int(value))
        if kind is AnswerKind.INTERVAL:
            if not isinstance(value, TimeWindow):
                raise PlanInvalid(f"final step produced {type(value).__name__}, expected a window")
            return Answer.interval(value)
        if kind is AnswerKind.DATE_SET:
            return Answer.date_set(value)
        return Answer.report(value)


# ---------------------------------------------------------------------------
# built-in repair table (used when no model client is wired in)


def _widen_regex(regex: str) -> str:
    out = regex
    if "{3,}" in out:
        out = out.replace("{3,}", "{2,}")
    if not out.startswith(".*"):
        out = ".*" + out
    if not out.endswith(".*"):
        out = out + ".*"
    return out


def default_repair(plan: QueryPlan, failure: str, attempt: int) -> QueryPlan:
    """Deterministic repair: loosen the shape filter once, then go direct.

    Mirrors the operational rule that an empty or unverifiable symbolic
    search should never end the query: the approximation may simply have
    been too strict for this window.
    """
    if attempt > MAX_RETRIES:
        raise ExecutionFailed("repair budget exhausted", ExecutionTrace())
    retrieval = plan.retrieval
    if (
        attempt == 1
        and plan.pipeline_mode is PipelineMode.SEARCH_THEN_VERIFY
        and retrieval.search is not None
        and retrieval.search.sax_regex
    ):
        search = retrieval.search
        widened = SearchSpec(
            view=search.view,
            channel=search.channel,
            time_range=search.time_range,
            predicates=search.predicates,
            sax_regex=_widen_regex(search.sax_regex),
            order_by=search.order_by,
            limit=search.limit,
        )
        new_retrieval = RetrievalSpec(
            target_table=retrieval.target_table,
            channel=retrieval.channel,
            window=retrieval.window,
            search=widened,
            extra_fetches=retrieval.extra_fetches,
            sql_logic_hint=retrieval.sql_logic_hint,
        )
        return QueryPlan(
            reasoning=plan.reasoning + " | repair: widened shape regex",
            pipeline_mode=plan.pipeline_mode,
            retrieval=new_retrieval,
            needs_verification=plan.needs_verification,
            verify_spec=plan.verify_spec,
        )

    if plan.pipeline_mode is PipelineMode.SEARCH_THEN_VERIFY:
        window = retrieval.search.time_range if retrieval.search else retrieval.window
        if window is None:
            raise PlanInvalid("cannot fall back to direct access without a time range")
        new_retrieval = RetrievalSpec(
            target_table="data",
            channel=retrieval.channel,
            window=window,
            search=None,
            extra_fetches=retrieval.extra_fetches,
            sql_logic_hint=retrieval.sql_logic_hint,
        )
        return QueryPlan(
            reasoning=plan.reasoning + " | repair: direct raw-range scan",
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=new_retrieval,
            needs_verification=plan.needs_verification,
            verify_spec=plan.verify_spec,
        )

    # already direct: loosen any verification gate and retry once more
    spec = plan.verify_spec
    if spec is not None and spec.assemble.get("max_best") is not None:
        assemble = dict(spec.assemble)
        assemble["max_best"] = float(assemble["max_best"]) * 2.0
        new_spec = VerifySpec(spec.steps, spec.final_answer_kind, assemble,
                              spec.candidate_granularity)
        return QueryPlan(
            reasoning=plan.reasoning + " | repair: loosened verification gate",
            pipeline_mode=plan.pipeline_mode,
            retrieval=plan.retrieval,
            needs_verification=plan.needs_verification,
            verify_spec=new_spec,
        )
    raise ExecutionFailed(f"no repair available for: {failure}", ExecutionTrace())
