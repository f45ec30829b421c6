import datetime as dt
import json

import pytest

from tsquery import taskspec
from tsquery.executor import ExecutionTrace, PipelineMode
from tsquery.model import Answer, TimeWindow
from tsquery.planner import (
    ClientUnavailable,
    EXPERIENCE_CAP,
    Experience,
    ExperienceStore,
    PlanParseError,
    RepairExhausted,
    ReplayClient,
    UnsupportedQuestion,
    build_schema_text,
    enforce_cap,
    plan_query,
    repair_plan,
    rule_based_plan,
    score_answer,
    summarize_experience,
    update_experiences,
)

W = TimeWindow(1614556800, 1614556800 + 21 * 86400)


def test_rule_planner_total_over_families():
    questions = [
        taskspec.question_ar_agg("maximum", "river_a", W),
        taskspec.question_ar_argmax("river_a", W),
        taskspec.question_ar_first_above("river_a", 7.25, W),
        taskspec.question_ar_interval("river_a", 7.25, W),
        taskspec.question_sw(5, "highest variance", "river_a", W),
        taskspec.question_si("plateau", "river_a", W),
        taskspec.question_pd("river_a", W),
        taskspec.question_sm("river_a", TimeWindow(W.start, W.start + 86400),
                             TimeWindow(W.start + 2 * 86400, W.end)),
        taskspec.question_ct(3, "river_a", "rapid rise then fall", W),
        taskspec.question_cxa("river_a", "severe flood", W),
        taskspec.question_cxa("river_a", "severe drought", W),
        taskspec.question_csa("up_a", "dn_a", "inverse trend against source", W),
        taskspec.question_is("river_a", W),
    ]
    for q in questions:
        plan = rule_based_plan(q)
        assert plan.verify_spec is not None
        # byte-identical plans across invocations
        assert rule_based_plan(q).to_text() == plan.to_text()


def test_rule_planner_modes():
    direct = rule_based_plan(taskspec.question_ar_agg("maximum", "river_a", W))
    assert direct.pipeline_mode is PipelineMode.DIRECT_ACCESS
    assert direct.retrieval.target_table == "data"
    search = rule_based_plan(taskspec.question_si("plateau", "river_a", W))
    assert search.pipeline_mode is PipelineMode.SEARCH_THEN_VERIFY
    assert search.retrieval.target_table == "feature_daily"
    assert search.retrieval.search.sax_regex


def test_rule_planner_rejects_offgrammar():
    with pytest.raises(UnsupportedQuestion):
        rule_based_plan("how is the weather today?")


def test_llm_planner_replay_roundtrip():
    reference = rule_based_plan(taskspec.question_ar_agg("maximum", "river_a", W))
    client = ReplayClient([json.dumps(reference.to_json())])
    plan = plan_query("whatever the user asked", "schema text", [], client=client,
                      mode="llm")
    assert plan.to_text() == reference.to_text()
    assert client.calls[0][0] == "planner"
    # prompts carry schema + experiences + question
    prompt = client.calls[0][1]
    assert "schema text" in prompt and "whatever the user asked" in prompt


def test_llm_planner_reprompts_then_fails():
    client = ReplayClient(["not json at all", "still not json"])
    with pytest.raises(PlanParseError):
        plan_query("q", "s", [], client=client, mode="llm")
    assert len(client.calls) == 2  # one re-prompt, then give up


def test_repair_rule_table_widens_then_goes_direct():
    plan = rule_based_plan(taskspec.question_si("plateau", "river_a", W))
    first = repair_plan(plan, "VerificationInconclusive: gate", 1)
    assert first.pipeline_mode is PipelineMode.SEARCH_THEN_VERIFY
    assert first.retrieval.search.sax_regex != plan.retrieval.search.sax_regex
    second = repair_plan(first, "still failing", 2)
    assert second.pipeline_mode is PipelineMode.DIRECT_ACCESS
    assert second.retrieval.window == plan.retrieval.search.time_range
    with pytest.raises(RepairExhausted):
        repair_plan(second, "nope", 4)


def test_score_answer_kinds():
    a = Answer.interval(TimeWindow(0, 100))
    rec = score_answer(a, a, question_id="x")
    assert rec.score == 1.0 and not rec.kind_mismatch
    rec2 = score_answer(Answer.scalar(1.0), a)
    assert rec2.score == 0.0 and rec2.kind_mismatch
    half = score_answer(
        Answer.date_set({dt.date(2021, 1, 1), dt.date(2021, 1, 2)}),
        Answer.date_set({dt.date(2021, 1, 2), dt.date(2021, 1, 3)}),
    )
    assert half.score == pytest.approx(0.5)


def test_summarizer_replay_and_unavailable():
    trace = ExecutionTrace()
    reward = score_answer(Answer.scalar(1.0), Answer.scalar(1.0))
    client = ReplayClient([
        "Insight: convert timestamps before comparing windows\n"
        "Insight: prefer feature pruning for open ranges\n"
        "Insight: a third one\nInsight: a fourth one"
    ])
    insights = summarize_experience(trace, reward, "q", client)
    assert len(insights) == 3  # capped at three
    with pytest.raises(ClientUnavailable):
        summarize_experience(trace, reward, "q", None)


def test_update_experiences_add_and_cap(tmp_path):
    store = ExperienceStore(tmp_path)
    current: list[Experience] = []
    for i in range(100):
        insight = f"insight number {i}"
        existing = [e.text for e in current]
        client = ReplayClient([json.dumps(existing + [insight])])
        current = update_experiences(current, insight, client, store=store)
        assert len(current) < EXPERIENCE_CAP
    # journal recorded every update; snapshot survives a reload
    assert len(store.journal_path.read_text().splitlines()) == 100
    assert [e.text for e in ExperienceStore(tmp_path).load()] == [e.text for e in current]


def test_update_experiences_merge():
    current = [Experience(1, "always bound the time range"),
               Experience(2, "prefer daily view for day questions")]
    merged_text = "always bound the time range and prefer the daily view"
    client = ReplayClient([json.dumps([merged_text])])
    out = update_experiences(current, "bound ranges", client)
    assert [e.text for e in out] == [merged_text]


def test_update_experiences_bad_client_output_appends():
    current = [Experience(1, "keep it simple")]
    client = ReplayClient(["this is not a JSON list"])
    out = update_experiences(current, "new insight", client)
    assert [e.text for e in out] == ["keep it simple", "new insight"]


def test_enforce_cap_drops_oldest():
    exps = [Experience(i, f"e{i}", last_updated=float(i)) for i in range(25)]
    capped = enforce_cap(exps)
    assert len(capped) == EXPERIENCE_CAP - 1
    assert all(e.last_updated >= 6 for e in capped)


def test_schema_text(hourly_store):
    text = build_schema_text(hourly_store)
    assert "river_a" in text
    assert "feature tables" in text
    # structural context only: no raw values leak
    assert "10." not in text
