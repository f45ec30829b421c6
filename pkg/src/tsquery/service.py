"""HTTP service: querying, series data for charts, benchmark review, results.

Single-store, single-tenant backend for the browser UI. All endpoints live
under /api/v1 and speak JSON; chart data is served as numeric arrays and
rendered client-side. Mutations (verdicts) are serialized and idempotent
under retry; a conflicting verdict on a finalized sample returns 409.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import bench as bench_mod
from .executor import ExecutionFailed, QueryExecutor
from .model import Answer, AnswerKind, TimeWindow, parse_timestamp
from .planner import (
    ExperienceStore,
    HttpChatClient,
    PlannerError,
    build_schema_text,
    plan_query,
)
from .store import SeriesStore, UnknownChannel


DEFAULT_CONFIG = {
    "model_endpoint": "",
    "model_name": "",
    "api_key_env": "TSQUERY_API_KEY",
    "timeout_seconds": 60,
    "max_retries": 3,
    "auth_token": "",
}


def load_config(path: str | Path | None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path:
        cfg.update(json.loads(Path(path).read_text()))
    return cfg


def largest_triangle_downsample(ts: np.ndarray, values: np.ndarray,
                                max_points: int) -> list[int]:
    """Largest-triangle-three-buckets point selection (indices)."""
    n = ts.size
    if n <= max_points:
        return list(range(n))
    if max_points < 3:
        return [0, n - 1]
    picked = [0]
    bucket_count = max_points - 2
    edges = np.linspace(1, n - 1, bucket_count + 1, dtype=np.int64)
    prev = 0
    for b in range(bucket_count):
        lo, hi = int(edges[b]), int(edges[b + 1])
        if hi <= lo:
            continue
        nxt_lo, nxt_hi = hi, int(edges[min(b + 2, bucket_count)])
        if nxt_hi <= nxt_lo:
            nxt_lo, nxt_hi = hi - 1, hi
        avg_t = float(ts[nxt_lo:max(nxt_hi, nxt_lo + 1)].mean())
        avg_v = float(values[nxt_lo:max(nxt_hi, nxt_lo + 1)].mean())
        t0, v0 = float(ts[prev]), float(values[prev])
        areas = np.abs(
            (t0 - avg_t) * (values[lo:hi] - v0) - (t0 - ts[lo:hi]) * (avg_v - v0)
        )
        choice = lo + int(np.argmax(areas))
        picked.append(choice)
        prev = choice
    picked.append(n - 1)
    return picked


def downsample_series(slice_, max_points: int) -> dict:
    """LTTB downsample that always keeps the exact global extremes."""
    ts = slice_.timestamps
    vals = slice_.values
    idx = largest_triangle_downsample(ts, vals, max_points)
    keep = sorted(set(idx))
    if vals.size:
        lo = int(np.argmin(vals))
        hi = int(np.argmax(vals))
        extremes = {lo, hi}
        if not extremes <= set(keep):
            keep = sorted(set(keep) | extremes)[:max(max_points, len(extremes))]
            keep = sorted(set(keep) | extremes)
    return {
        "timestamps": [int(ts[i]) for i in keep],
        "values": [float(vals[i]) for i in keep],
        "total_points": int(vals.size),
    }


class QueryRequest(BaseModel):
    question: str
    planner: str = "rules"


class VerdictRequest(BaseModel):
    status: str
    reason: Optional[str] = None
    reviewer: Optional[str] = None


class ServiceState:
    def __init__(self, store_path: str | Path, data_dir: str | Path,
                 suite_path: str | Path | None = None, config: dict | None = None):
        self.config = config or dict(DEFAULT_CONFIG)
        self.store = SeriesStore(store_path)
        self.store.conn.close()
        # the service is multi-threaded; reopen with cross-thread access and
        # serialize everything through one lock (desk-scale traffic)
        import sqlite3

        self.store.conn = sqlite3.connect(str(store_path), check_same_thread=False)
        self.lock = threading.Lock()
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.experiences = ExperienceStore(self.data_dir)
        self.suite_path = Path(suite_path) if suite_path else None
        self.instances: dict[str, bench_mod.BenchInstance] = {}
        if self.suite_path and self.suite_path.exists():
            insts, _ = bench_mod.load_suite(self.suite_path)
            self.instances = {i.id: i for i in insts}
        self.executor = QueryExecutor(self.store)

    def model_client(self):
        endpoint = self.config.get("model_endpoint")
        if not endpoint:
            return None
        import os

        key = os.environ.get(self.config.get("api_key_env", ""), None)
        return HttpChatClient(endpoint, self.config.get("model_name", ""),
                              api_key=key,
                              timeout=float(self.config.get("timeout_seconds", 60)))


def _window_payload(w: TimeWindow) -> dict:
    return {"start": w.start, "end": w.end}


def _answer_highlights(answer: Answer) -> dict:
    """Chart overlay description per answer kind."""
    if answer.kind is AnswerKind.INTERVAL:
        return {"windows": [_window_payload(answer.payload)], "timestamps": []}
    if answer.kind is AnswerKind.TIMESTAMP:
        return {"windows": [], "timestamps": [answer.payload]}
    if answer.kind is AnswerKind.REPORT:
        return {
            "windows": [_window_payload(s.window) for s in answer.payload.segments],
            "timestamps": list(answer.payload.outliers),
        }
    if answer.kind is AnswerKind.DATE_SET:
        windows = []
        for d in sorted(answer.payload):
            from .model import date_to_ts

            start = date_to_ts(d)
            windows.append({"start": start, "end": start + 86400})
        return {"windows": windows, "timestamps": []}
    return {"windows": [], "timestamps": []}


def create_app(store_path: str | Path, data_dir: str | Path,
               suite_path: str | Path | None = None,
               config: dict | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    state = ServiceState(store_path, data_dir, suite_path, config)
    app = FastAPI(title="tsquery", version="0.1.0")
    app.state.service = state

    token = (state.config or {}).get("auth_token") or ""

    @app.middleware("http")
    async def auth_middleware(request: Request, call_next):
        if token and request.url.path.startswith("/api/"):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse({"code": "UNAUTHORIZED",
                                     "message": "missing or invalid token"}, 401)
        return await call_next(request)

    def error(status: int, code: str, message: str):
        raise HTTPException(status_code=status,
                            detail={"code": code, "message": message})

    @app.get("/api/v1/channels")
    def channels():
        with state.lock:
            names = state.store.channel_names()
            out = []
            for name in names[:500]:
                try:
                    stats = state.store.channel_stats(name)
                except UnknownChannel:
                    continue
                out.append({
                    "name": name,
                    "points": stats.point_count,
                    "first_ts": stats.first_ts,
                    "last_ts": stats.last_ts,
                    "median_interval_seconds": stats.median_interval_seconds,
                })
        return {"channels": out}

    @app.get("/api/v1/series/{channel}")
    def series(channel: str,
               frm: str = Query(alias="from"),
               to: str = Query(),
               max_points: int = Query(default=2000, ge=3, le=20000)):
        try:
            window = TimeWindow(parse_timestamp(frm), parse_timestamp(to))
        except ValueError as exc:
            error(400, "BAD_WINDOW", str(exc))
        with state.lock:
            try:
                sl = state.store.fetch_slice(channel, window)
            except UnknownChannel:
                error(404, "UNKNOWN_CHANNEL", f"no channel {channel!r}")
        return downsample_series(sl, max_points)

    @app.post("/api/v1/query")
    def query(req: QueryRequest):
        client = None
        if req.planner == "llm":
            client = state.model_client()
            if client is None:
                error(400, "NO_MODEL_CLIENT", "llm planner requires a configured endpoint")
        with state.lock:
            schema = build_schema_text(state.store)
            experiences = state.experiences.load()
            try:
                plan = plan_query(req.question, schema, experiences,
                                  client=client, mode=req.planner)
            except PlannerError as exc:
                error(400, getattr(exc, "code", "PLANNER_ERROR"), str(exc))
            try:
                answer, trace = state.executor.execute_plan(plan)
            except ExecutionFailed as exc:
                return {
                    "answer": None,
                    "error": {"code": "EXECUTION_FAILED", "message": str(exc)},
                    "trace": exc.trace.to_json(),
                    "plan": plan.to_json(),
                    "plot_data": None,
                }
            window = plan.retrieval.window or (
                plan.retrieval.search.time_range if plan.retrieval.search else None
            )
            plot = None
            if window is not None:
                sl = state.store.fetch_slice(plan.retrieval.channel, window)
                plot = downsample_series(sl, 2000)
                plot["channel"] = plan.retrieval.channel
                plot["window"] = _window_payload(window)
        return {
            "answer": answer.to_json(),
            "trace": trace.to_json(),
            "plan": plan.to_json(),
            "highlights": _answer_highlights(answer),
            "plot_data": plot,
        }

    def _verdict_status(inst_id: str) -> str:
        v = state.store.get_verdict(inst_id)
        return v["status"] if v else "PENDING"

    @app.get("/api/v1/bench/samples")
    def bench_samples(status: str | None = None):
        with state.lock:
            out = []
            for inst in state.instances.values():
                st = _verdict_status(inst.id)
                if status and st != status.upper():
                    continue
                out.append({
                    "id": inst.id,
                    "task_type": inst.task_type,
                    "level": inst.level,
                    "question": inst.question,
                    "status": st,
                    "snr": inst.snr,
                })
        out.sort(key=lambda s: s["id"])
        return {"samples": out}

    @app.get("/api/v1/bench/samples/{inst_id}")
    def bench_sample(inst_id: str):
        inst = state.instances.get(inst_id)
        if inst is None:
            error(404, "UNKNOWN_SAMPLE", f"no sample {inst_id!r}")
        with state.lock:
            channel = inst.channels[-1]
            sl = state.store.fetch_slice(channel, inst.context_window)
            plot = downsample_series(sl, 2000)
            status = _verdict_status(inst_id)
        overlay = None
        if inst.injected and "overlay" in inst.injected:
            overlay = inst.injected["overlay"]
        return {
            "instance": inst.to_json(),
            "status": status,
            "chart": {
                "channel": channel,
                "raw": plot,
                "injected": overlay,
                "truth_highlights": _answer_highlights(inst.ground_truth),
            },
        }

    @app.post("/api/v1/bench/samples/{inst_id}/verdict")
    def post_verdict(inst_id: str, req: VerdictRequest):
        if inst_id not in state.instances:
            error(404, "UNKNOWN_SAMPLE", f"no sample {inst_id!r}")
        status = req.status.upper()
        if status not in ("ACCEPTED", "REJECTED"):
            error(400, "BAD_STATUS", "status must be ACCEPTED or REJECTED")
        if status == "REJECTED" and not (req.reason or "").strip():
            error(400, "REASON_REQUIRED", "a rejection needs a reason")
        with state.lock:
            existing = state.store.get_verdict(inst_id)
            if existing is not None:
                same = (
                    existing["status"] == status
                    and (existing["reason"] or "") == (req.reason or "")
                    and (existing["reviewer"] or "") == (req.reviewer or "")
                )
                if same:
                    return {"verdict": existing, "idempotent": True}
                error(409, "ALREADY_FINALIZED",
                      f"sample already {existing['status']}")
            state.store.put_verdict(inst_id, status, req.reason, req.reviewer,
                                    int(time.time()))
            stored = state.store.get_verdict(inst_id)
        return {"verdict": stored, "idempotent": False}

    @app.get("/api/v1/experiences")
    def experiences():
        return {"experiences": [e.to_json() for e in state.experiences.load()]}

    @app.get("/api/v1/results/latest")
    def results_latest():
        path = state.data_dir / "results.json"
        if not path.exists():
            error(404, "NO_RESULTS", "no evaluation has been stored yet")
        return json.loads(path.read_text())

    if ui_dir and Path(ui_dir).exists():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        def root():
            return FileResponse(str(Path(ui_dir) / "index.html"))

    return app
