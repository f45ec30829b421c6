"""Question-to-plan translation plus the self-improving experience loop.

Two planners share one plan schema: a model-backed planner (remote chat
endpoint or a deterministic replay client for tests) renders prompt
templates and parses strict JSON; the rule-based planner pattern-matches
the benchmark template grammar and emits the canonical plan for that task
family. The rule planner needs no network and covers all nine families.

Experiences are short reusable insights distilled from execution traces.
They are kept under a hard cap (20), persisted as an append-only journal
plus a current-set snapshot, and injected into planner prompts.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from . import taskspec as ts
from .executor import (
    ExecutionTrace,
    PipelineMode,
    QueryPlan,
    RetrievalSpec,
    VerifySpec,
    VerifyStep,
    default_repair,
    MAX_RETRIES,
)
from .metrics import METRIC_FOR_KIND, score_answer_value
from .model import Answer, AnswerKind, TimeWindow
from .search import SearchSpec, compile_fuzzy_shape
from .features import ViewType
from .store import SeriesStore


class PlannerError(Exception):
    code = "PLANNER_ERROR"


class UnsupportedQuestion(PlannerError):
    code = "UNSUPPORTED_QUESTION"


class PlanParseError(PlannerError):
    code = "PLAN_PARSE_ERROR"


class RepairExhausted(PlannerError):
    code = "REPAIR_EXHAUSTED"


class ClientUnavailable(PlannerError):
    code = "CLIENT_UNAVAILABLE"


EXPERIENCE_CAP = 20


# ---------------------------------------------------------------------------
# schema serialization


def build_schema_text(store: SeriesStore, max_channels: int = 16) -> str:
    """Structural context only: channel names, ranges, feature views."""
    lines = ["channels:"]
    names = store.channel_names()
    for name in names[:max_channels]:
        try:
            stats = store.channel_stats(name)
        except Exception:
            continue
        interval = stats.median_interval_seconds
        lines.append(
            f"  - {name}: {stats.point_count} points,"
            f" {interval or '?'}s sampling,"
            f" range [{stats.first_ts}, {stats.last_ts}]"
        )
    if len(names) > max_channels:
        lines.append(f"  ... and {len(names) - max_channels} more channels")
    views = [
        row[0]
        for row in store.conn.execute("SELECT DISTINCT view_type FROM features").fetchall()
    ]
    lines.append(f"feature tables: {', '.join(sorted(views)) if views else 'none built'}")
    lines.append(
        "feature columns: series_id, view_type, window_start, window_end,"
        " min_val, max_val, avg_val, std_val, slope, sax, sax_len, coverage"
    )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# model clients


class ModelClient(Protocol):
    def complete(self, prompt: str, kind: str) -> str: ...


class HttpChatClient:
    """Minimal chat-completions client for an OpenAI-style endpoint."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, prompt: str, kind: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        }
        resp = requests.post(f"{self.endpoint}/chat/completions", json=payload,
                             headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


class ReplayClient:
    """Deterministic client replaying canned responses (test fixture)."""

    def __init__(self, responses: Sequence[str] | dict[str, Sequence[str]]):
        if isinstance(responses, dict):
            self._by_kind = {k: list(v) for k, v in responses.items()}
            self._queue = None
        else:
            self._by_kind = None
            self._queue = list(responses)
        self.calls: list[tuple[str, str]] = []

    def complete(self, prompt: str, kind: str) -> str:
        self.calls.append((kind, prompt))
        if self._by_kind is not None:
            bucket = self._by_kind.get(kind)
            if not bucket:
                raise ClientUnavailable(f"no canned response for kind {kind!r}")
            return bucket.pop(0) if len(bucket) > 1 else bucket[0]
        if not self._queue:
            raise ClientUnavailable("replay queue exhausted")
        return self._queue.pop(0)


def load_prompt(name: str) -> str:
    return resources.files("tsquery").joinpath(f"prompts/{name}.txt").read_text()


def render_prompt(name: str, **slots: str) -> str:
    text = load_prompt(name)
    for key, value in slots.items():
        text = text.replace("{" + key + "}", str(value))
    return text


# ---------------------------------------------------------------------------
# experiences


@dataclass
class Experience:
    id: int
    text: str
    created_from: str = ""
    last_updated: float = 0.0

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "created_from": self.created_from,
            "last_updated": self.last_updated,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Experience":
        return cls(obj["id"], obj["text"], obj.get("created_from", ""),
                   obj.get("last_updated", 0.0))


class ExperienceStore:
    """Append-only journal plus current-set snapshot, capped below 20."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.journal_path = self.dir / "experience_journal.jsonl"
        self.snapshot_path = self.dir / "experiences.json"

    def load(self) -> list[Experience]:
        if not self.snapshot_path.exists():
            return []
        data = json.loads(self.snapshot_path.read_text())
        return [Experience.from_json(e) for e in data]

    def save(self, experiences: list[Experience], op: str, detail: str = "") -> None:
        experiences = enforce_cap(experiences)
        with self.journal_path.open("a") as fh:
            fh.write(json.dumps({
                "ts": time.time(),
                "op": op,
                "detail": detail,
                "size": len(experiences),
            }, sort_keys=True) + "\n")
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(json.dumps([e.to_json() for e in experiences], indent=2))
        tmp.replace(self.snapshot_path)


def enforce_cap(experiences: list[Experience], cap: int = EXPERIENCE_CAP) -> list[Experience]:
    """Mechanical size guarantee, independent of what any client returned."""
    if len(experiences) < cap:
        return list(experiences)
    ranked = sorted(experiences, key=lambda e: e.last_updated, reverse=True)
    return sorted(ranked[: cap - 1], key=lambda e: e.id)


def format_experiences(experiences: Sequence[Experience]) -> str:
    if not experiences:
        return "(none yet)"
    return "\n".join(f"- {e.text}" for e in experiences)


def summarize_experience(trace: ExecutionTrace, reward: "RewardRecord",
                         question: str, client: ModelClient | None) -> list[str]:
    """Distill 1-3 one-sentence insights from a finished query run."""
    if client is None:
        raise ClientUnavailable("no model client configured")
    prompt = render_prompt(
        "summarizer",
        question=question,
        trace=json.dumps(trace.to_json(), indent=2)[:4000],
        score=f"{reward.score:.3f}",
    )
    raw = client.complete(prompt, kind="summarizer")
    insights = []
    for line in raw.splitlines():
        line = line.strip()
        if line.lower().startswith("insight:"):
            line = line.split(":", 1)[1].strip()
        if line and not line.startswith("#"):
            insights.append(line.lstrip("- "))
    return insights[:3]


def update_experiences(current: list[Experience], candidate: str,
                       client: ModelClient | None,
                       store: ExperienceStore | None = None) -> list[Experience]:
    """Merge one candidate insight into the set via the curator client.

    The client decides add/merge/discard; the size cap is enforced
    mechanically regardless of what it returns.
    """
    if client is None:
        raise ClientUnavailable("no model client configured")
    prompt = render_prompt(
        "updater",
        experiences=format_experiences(current),
        insight=candidate,
    )
    raw = client.complete(prompt, kind="updater")
    try:
        texts = json.loads(_extract_json(raw))
        if not isinstance(texts, list):
            raise ValueError("expected a JSON list")
        texts = [str(t).strip() for t in texts if str(t).strip()]
    except (ValueError, json.JSONDecodeError, PlanParseError):
        # unparsable curation falls back to a plain append
        texts = [e.text for e in current] + [candidate]

    now = time.time()
    by_text = {e.text: e for e in current}
    next_id = max((e.id for e in current), default=0) + 1
    result: list[Experience] = []
    for text in texts:
        if text in by_text:
            result.append(by_text[text])
        else:
            result.append(Experience(next_id, text, last_updated=now))
            next_id += 1
    result = enforce_cap(result)
    if store is not None:
        store.save(result, op="update", detail=candidate[:120])
    return result


# ---------------------------------------------------------------------------
# reward


@dataclass
class RewardRecord:
    question_id: str
    score: float
    answer_kind: str
    metric: str
    kind_mismatch: bool = False

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "score": self.score,
            "answer_kind": self.answer_kind,
            "metric": self.metric,
            "kind_mismatch": self.kind_mismatch,
        }


def score_answer(predicted: Answer, truth: Answer, question_id: str = "") -> RewardRecord:
    mismatch = predicted.kind is not truth.kind
    score = 0.0 if mismatch else score_answer_value(predicted, truth)
    return RewardRecord(
        question_id=question_id,
        score=float(score),
        answer_kind=truth.kind.value,
        metric=METRIC_FOR_KIND[truth.kind].value,
        kind_mismatch=mismatch,
    )


# ---------------------------------------------------------------------------
# rule-based planning


def _direct_retrieval(channel: str, window: TimeWindow,
                      extra_fetches: dict | None = None, hint: str = "") -> RetrievalSpec:
    return RetrievalSpec(
        target_table="data",
        channel=channel,
        window=window,
        extra_fetches=extra_fetches or {},
        sql_logic_hint=hint,
    )


def _search_retrieval(channel: str, window: TimeWindow, regex: str | None,
                      view: ViewType = ViewType.DAILY, hint: str = "") -> RetrievalSpec:
    table = {ViewType.DAILY: "feature_daily", ViewType.MONTHLY: "feature_monthly",
             ViewType.YEARLY: "feature_yearly"}[view]
    return RetrievalSpec(
        target_table=table,
        channel=channel,
        search=SearchSpec(view=view, channel=channel, time_range=window,
                          sax_regex=regex),
        sql_logic_hint=hint,
    )


def rule_based_plan(question: str) -> QueryPlan:
    """Canonical plan for any question inside the template grammar."""
    parsed = ts.parse_question(question)
    if parsed is None:
        raise UnsupportedQuestion(f"question not in the template grammar: {question!r}")
    family = parsed.family
    window = parsed.window
    channel = parsed.channel
    p = parsed.params

    if family == "AR":
        if parsed.subtype == "agg":
            steps = [VerifyStep("aggregate", {"kind": p["agg"]})]
            kind = AnswerKind.SCALAR
        elif parsed.subtype == "argmax":
            steps = [VerifyStep("locate_extremum", {"kind": "ARGMAX"})]
            kind = AnswerKind.TIMESTAMP
        elif parsed.subtype == "first_above":
            steps = [VerifyStep("locate_extremum",
                                {"kind": "FIRST_ABOVE", "threshold": p["threshold"]})]
            kind = AnswerKind.TIMESTAMP
        else:
            steps = [VerifyStep("interval_above_threshold",
                                {"threshold": p["threshold"], "gap_factor": 1.5})]
            kind = AnswerKind.INTERVAL
        return QueryPlan(
            reasoning=f"fixed range, {parsed.subtype} retrieval over raw data",
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=_direct_retrieval(channel, window),
            needs_verification=True,
            verify_spec=VerifySpec(tuple(steps), kind),
        )

    if family == "SW":
        step = VerifyStep("sliding_window_stat", {
            "window_seconds": p["days"] * 86400,
            "metric": p["metric"],
            "objective": p["objective"],
        })
        return QueryPlan(
            reasoning="fixed range, exhaustive sliding-window statistic",
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=_direct_retrieval(channel, window),
            needs_verification=True,
            verify_spec=VerifySpec((step,), AnswerKind.INTERVAL),
        )

    if family == "SI":
        pattern = p["pattern"]
        token = ts.SI_TOKEN[pattern]
        grid = ts.SI_WIDTH_GRID_HOURS[pattern]
        queries = [ts.si_template(pattern, w).tolist() for w in grid]
        mid_template = ts.si_template(pattern, grid[len(grid) // 2]).tolist()
        steps = (
            # amplitude of the event: separates the injected pattern from
            # small background wiggles that merely share its shape
            VerifyStep("calc_correlation",
                       {"template": mid_template, "measure": "projection",
                        "normalize": "context_mad"},
                       binding="candidates"),
            VerifyStep("find_best_match",
                       {"queries": queries, "band_fraction": 0.1, "refine": True},
                       binding="candidates"),
        )
        return QueryPlan(
            reasoning=f"morphological search for a {pattern}: prune days by shape "
                      f"signature, verify candidates by amplitude and elastic match",
            pipeline_mode=PipelineMode.SEARCH_THEN_VERIFY,
            retrieval=_search_retrieval(channel, window, compile_fuzzy_shape(token)),
            needs_verification=True,
            verify_spec=VerifySpec(
                steps, AnswerKind.INTERVAL,
                assemble={"kind": "argmin_candidate", "by_step": 1,
                          "gate_step": 0, "gate_rel": 0.5,
                          "gate_min_top": 2.5, "max_best": 0.85},
                candidate_granularity="day",
            ),
        )

    if family == "PD":
        step = VerifyStep("detect_period", {})
        return QueryPlan(
            reasoning="fixed range, dominant cycle via autocorrelation",
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=_direct_retrieval(channel, window),
            needs_verification=True,
            verify_spec=VerifySpec((step,), AnswerKind.SCALAR),
        )

    if family == "SM":
        step = VerifyStep("find_best_match", {
            "query_fetch": {"channel": channel,
                            "window": p["query_window"].to_json()},
            "band_fraction": 0.1,
            "refine": True,
        })
        return QueryPlan(
            reasoning="reference window given; elastic scan of the search context",
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=_direct_retrieval(channel, window),
            needs_verification=True,
            verify_spec=VerifySpec((step,), AnswerKind.INTERVAL),
        )

    if family == "CT":
        pattern = p["pattern"]
        token = ts.CT_TOKEN[pattern]
        template = ts.ct_day_template(pattern).tolist()
        steps = (
            VerifyStep("calc_correlation",
                       {"template": template, "measure": "projection",
                        "deseasonalize": True},
                       binding="candidates"),
            VerifyStep("top_k_by_score", {"k": p["k"], "score_step": 0}),
        )
        return QueryPlan(
            reasoning=f"top-{p['k']} dates by {pattern} salience: prune days by "
                      f"shape signature, rank by matched amplitude",
            pipeline_mode=PipelineMode.SEARCH_THEN_VERIFY,
            retrieval=_search_retrieval(channel, window, compile_fuzzy_shape(token)),
            needs_verification=True,
            verify_spec=VerifySpec(steps, AnswerKind.DATE_SET,
                                   candidate_granularity="day"),
        )

    if family == "CxA":
        if p["kind"] == "severe flood":
            step = VerifyStep("interval_above_threshold",
                              {"threshold": {"sigma": 3.0}, "gap_factor": 5.0})
            spec = VerifySpec((step,), AnswerKind.INTERVAL)
            reasoning = "flood: longest run above the 3-sigma contextual level"
        else:
            step = VerifyStep("detect_changepoints",
                              {"transform": "hourly_log_std", "min_segment_length": 6})
            spec = VerifySpec((step,), AnswerKind.INTERVAL,
                              assemble={"kind": "select_segment", "step": 0,
                                        "objective": "min_mean"})
            reasoning = "drought: quietest dispersion regime over the year"
        return QueryPlan(
            reasoning=reasoning,
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=_direct_retrieval(channel, window),
            needs_verification=True,
            verify_spec=spec,
        )

    if family == "CsA":
        upstream = p["upstream"]
        margin = 12 * ts.BENCH_INTERVAL_SECONDS
        extra = {"upstream": {"channel": upstream,
                              "window": TimeWindow(window.start - margin, window.end)}}
        steps = (
            VerifyStep("calc_correlation",
                       {"other": "upstream", "lag_scan": [0, 12]}),
            VerifyStep("calc_correlation",
                       {"other": "upstream", "lag": {"from_step": 0}},
                       binding="candidates"),
        )
        return QueryPlan(
            reasoning="causal break: day-level correlation collapse against the driver",
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=_direct_retrieval(channel, window, extra_fetches=extra),
            needs_verification=True,
            verify_spec=VerifySpec(
                steps, AnswerKind.INTERVAL,
                assemble={"kind": "longest_run_below", "step": 1,
                          "threshold": {"rel_median": 0.5, "floor": 0.25}},
                candidate_granularity="day",
            ),
        )

    if family == "IS":
        step = VerifyStep("segment_and_label", {"min_segment_length": 24})
        return QueryPlan(
            reasoning="holistic report: regime segmentation, robust slopes, outlier audit",
            pipeline_mode=PipelineMode.DIRECT_ACCESS,
            retrieval=_direct_retrieval(channel, window),
            needs_verification=True,
            verify_spec=VerifySpec((step,), AnswerKind.REPORT),
        )

    raise UnsupportedQuestion(f"no rule for family {family}")


# ---------------------------------------------------------------------------
# planner facade


def _extract_json(text: str) -> str:
    """Pull the first JSON object/array out of a model response."""
    start = None
    for i, ch in enumerate(text):
        if ch in "[{":
            start = i
            break
    if start is None:
        raise PlanParseError("no JSON found in model output")
    depth = 0
    for j in range(start, len(text)):
        if text[j] in "[{":
            depth += 1
        elif text[j] in "]}":
            depth -= 1
            if depth == 0:
                return text[start:j + 1]
    raise PlanParseError("unterminated JSON in model output")


def plan_query(question: str, schema: str, experiences: Sequence[Experience] = (),
               client: ModelClient | None = None, mode: str = "rules") -> QueryPlan:
    """Produce a QueryPlan via the rule grammar or the model client."""
    if not question.strip():
        raise UnsupportedQuestion("empty question")
    if mode == "rules":
        return rule_based_plan(question)
    if client is None:
        raise ClientUnavailable("llm mode requires a model client")
    prompt = render_prompt(
        "planner",
        schema=schema,
        experiences=format_experiences(experiences),
        question=question,
    )
    raw = client.complete(prompt, kind="planner")
    for attempt in range(2):
        try:
            return QueryPlan.from_json(json.loads(_extract_json(raw)))
        except (PlanParseError, json.JSONDecodeError, KeyError, ValueError) as exc:
            if attempt == 1:
                raise PlanParseError(f"unparsable plan after re-prompt: {exc}") from exc
            raw = client.complete(
                prompt + "\n\nYour previous output was not valid JSON in the required"
                         " schema. Return ONLY the JSON plan.",
                kind="planner",
            )
    raise PlanParseError("unreachable")


def repair_plan(plan: QueryPlan, failure: str, attempt: int,
                client: ModelClient | None = None, question: str = "",
                history: Sequence[str] = ()) -> QueryPlan:
    """Fix a failed plan: fixed rule table, or the model refinement prompt."""
    if attempt > MAX_RETRIES:
        raise RepairExhausted(f"attempt {attempt} exceeds the {MAX_RETRIES}-retry budget")
    if client is None:
        return default_repair(plan, failure, attempt)
    prompt = render_prompt(
        "refine",
        question=question,
        plan=plan.to_text(),
        history="\n".join(history) or "(first failure)",
        failure=failure,
    )
    raw = client.complete(prompt, kind="refine")
    try:
        return QueryPlan.from_json(json.loads(_extract_json(raw)))
    except (PlanParseError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise PlanParseError(f"unparsable repaired plan: {exc}") from exc
