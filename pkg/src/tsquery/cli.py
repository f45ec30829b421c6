"""Command-line entry points: ingest, index, benchmark, query, serve.

Exit codes: 0 success, 1 runtime error (machine code printed to stderr),
2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import bench as bench_mod
from . import taskspec
from .executor import ExecutionFailed, QueryExecutor
from .features import (
    SaxConfig,
    ViewType,
    build_feature_tables,
    export_features_csv,
    normal_breakpoints,
)
from .metrics import score_suite
from .model import Answer
from .planner import (
    ExperienceStore,
    PlannerError,
    build_schema_text,
    plan_query,
)
from .service import load_config
from .store import ColumnMapping, SeriesStore, StoreError


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _open_store(args) -> SeriesStore:
    path = Path(args.store)
    if not path.exists() and getattr(args, "require_store", True):
        raise CliError("NO_STORE", f"store {path} does not exist; run ingest first")
    return SeriesStore(path)


def cmd_ingest(args) -> int:
    store = SeriesStore(args.store)
    mapping = ColumnMapping(timestamp=args.ts_col, channel=args.chan_col, value=args.val_col)
    report = store.ingest_csv(args.file, mapping)
    print(json.dumps(report.to_json(), indent=2))
    store.close()
    return 0


def cmd_synth_demo(args) -> int:
    store = SeriesStore(args.store)
    names = bench_mod.populate_demo_store(store, channels=args.channels,
                                          days=args.days, seed=args.seed)
    print(f"synthesized {len(names)} channels: {', '.join(names)}")
    store.close()
    return 0


def cmd_index(args) -> int:
    store = _open_store(args)
    views = [ViewType[v.strip().upper()] for v in args.views.split(",") if v.strip()]
    cfg = SaxConfig(alphabet_size=args.alphabet,
                    breakpoints=normal_breakpoints(args.alphabet))
    channels = args.channels.split(",") if args.channels else None
    n = build_feature_tables(store, channels=channels, views=views, cfg=cfg,
                             coverage_floor=args.coverage_floor)
    print(f"wrote {n} feature rows for views {', '.join(v.value for v in views)}")
    if args.export_csv:
        rows = export_features_csv(store, args.export_csv)
        print(f"exported {rows} rows to {args.export_csv}")
    store.close()
    return 0


def cmd_search(args) -> int:
    from .search import parse_text_query, search_candidates

    store = _open_store(args)
    try:
        spec = parse_text_query(args.query)
    except ValueError as exc:
        raise CliError("BAD_QUERY", str(exc)) from exc
    result = search_candidates(store, spec)
    for row in result.rows:
        print(json.dumps(row.to_json(), sort_keys=True))
    print(f"# {len(result.rows)} rows", file=sys.stderr)
    store.close()
    return 0


def cmd_gen_bench(args) -> int:
    store = SeriesStore(args.store)
    counts = None
    if args.counts:
        counts = {k: int(v) for k, v in
                  (pair.split("=") for pair in args.counts.split(","))}
    if args.total and not counts:
        # scale the default mix down to ~total instances
        base = taskspec.DEFAULT_COUNTS
        scale = args.total / sum(base.values())
        counts = {k: max(1, round(v * scale)) for k, v in base.items()}
        drift = args.total - sum(counts.values())
        counts["AR"] += drift
    t0 = time.time()
    instances = bench_mod.generate_suite(
        store, profile=args.profile, counts=counts, seed=args.seed,
        progress=lambda msg: print(f"  {msg}", file=sys.stderr),
    )
    used_counts = {}
    for inst in instances:
        used_counts[inst.task_type] = used_counts.get(inst.task_type, 0) + 1
    bench_mod.write_suite(args.out, instances, args.profile, args.seed, used_counts)
    print(f"wrote {len(instances)} instances to {args.out} in {time.time()-t0:.0f}s")
    store.close()
    return 0


def _make_client(config: dict):
    endpoint = config.get("model_endpoint")
    if not endpoint:
        return None
    from .planner import HttpChatClient

    key = os.environ.get(config.get("api_key_env", ""), None)
    return HttpChatClient(endpoint, config.get("model_name", ""), api_key=key,
                          timeout=float(config.get("timeout_seconds", 60)))


def cmd_query(args) -> int:
    store = _open_store(args)
    config = load_config(args.config)
    client = _make_client(config) if args.planner == "llm" else None
    if args.planner == "llm" and client is None:
        raise CliError("NO_MODEL_CLIENT", "llm planner requires model_endpoint in config")
    schema = build_schema_text(store)
    experiences = ExperienceStore(Path(args.data_dir)).load() if args.data_dir else []
    try:
        plan = plan_query(args.question, schema, experiences, client=client,
                          mode=args.planner)
    except PlannerError as exc:
        raise CliError(getattr(exc, "code", "PLANNER_ERROR"), str(exc)) from exc
    executor = QueryExecutor(store)
    try:
        answer, trace = executor.execute_plan(plan)
    except ExecutionFailed as exc:
        print(json.dumps({"error": str(exc), "trace": exc.trace.to_json()}, indent=2))
        store.close()
        return 1
    print(json.dumps({
        "answer": answer.to_json(),
        "retries_used": trace.retries_used,
        "fallback": trace.used_fallback,
        "plan": plan.to_json() if args.show_plan else None,
    }, indent=2))
    store.close()
    return 0


def _ensure_features_for_suite(store: SeriesStore, instances) -> None:
    """SEARCH_THEN_VERIFY families need daily feature rows."""
    needed = sorted({
        inst.channels[-1] for inst in instances if inst.task_type in ("SI", "CT")
    })
    missing = [
        c for c in needed
        if store.conn.execute(
            "SELECT 1 FROM features WHERE series_id=? AND view_type='DAILY' LIMIT 1", (c,)
        ).fetchone() is None
    ]
    if missing:
        print(f"building daily feature rows for {len(missing)} channels...",
              file=sys.stderr)
        build_feature_tables(store, channels=missing, views=[ViewType.DAILY])


def cmd_run_bench(args) -> int:
    store = _open_store(args)
    instances, manifest = bench_mod.load_suite(args.suite)
    _ensure_features_for_suite(store, instances)
    config = load_config(args.config)
    client = _make_client(config) if args.planner == "llm" else None
    schema = build_schema_text(store)
    executor = QueryExecutor(store)
    answers = {}
    stats = {"ok": 0, "failed": 0, "fallbacks": 0, "retries": 0}
    t0 = time.time()
    for i, inst in enumerate(instances, 1):
        try:
            plan = plan_query(inst.question, schema, client=client, mode=args.planner)
            answer, trace = executor.execute_plan(plan)
            answers[inst.id] = answer.to_json()
            stats["ok"] += 1
            stats["fallbacks"] += int(trace.used_fallback)
            stats["retries"] += trace.retries_used
        except (PlannerError, ExecutionFailed) as exc:
            stats["failed"] += 1
            answers[inst.id] = None
        if args.progress and i % 25 == 0:
            print(f"  {i}/{len(instances)} answered", file=sys.stderr)
    Path(args.out).write_text(json.dumps({
        "suite": str(args.suite),
        "planner": args.planner,
        "answers": answers,
    }, indent=2))
    print(f"answered {stats['ok']}/{len(instances)} "
          f"(failed {stats['failed']}, fallbacks {stats['fallbacks']}, "
          f"retries {stats['retries']}) in {time.time()-t0:.0f}s -> {args.out}")
    store.close()
    return 0


def cmd_eval(args) -> int:
    instances, manifest = bench_mod.load_suite(args.suite)
    payload = json.loads(Path(args.answers).read_text())
    answers = {
        k: Answer.from_json(v)
        for k, v in payload.get("answers", {}).items()
        if v is not None
    }
    scores = score_suite(instances, answers)
    print(scores.render_table())
    result = {
        "suite": str(args.suite),
        "answers": str(args.answers),
        "scored_at": int(time.time()),
        **scores.to_json(),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2))
        print(f"wrote {args.out}")
    if args.data_dir:
        path = Path(args.data_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "results.json").write_text(json.dumps(result, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    ui_dir = args.ui_dir
    if ui_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = candidate if candidate.exists() else None
    app = create_app(args.store, args.data_dir, suite_path=args.suite,
                     config=config, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsquery",
                                     description="search-then-verify time-series querying")
    parser.add_argument("--store", default="tsquery.db", help="store file path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a CSV into the store")
    p.add_argument("--file", required=True)
    p.add_argument("--ts-col", default="timestamp")
    p.add_argument("--chan-col", default="channel")
    p.add_argument("--val-col", default="value")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth-demo", help="fill the store with demo channels")
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth_demo)

    p = sub.add_parser("index", help="build the multi-scale feature tables")
    p.add_argument("--views", default="daily,monthly,yearly")
    p.add_argument("--channels", default="")
    p.add_argument("--alphabet", type=int, default=5)
    p.add_argument("--coverage-floor", type=float, default=0.5)
    p.add_argument("--export-csv", default="")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="query the feature tables (textual spec)")
    p.add_argument("query", help="e.g. \"view=daily where=std_val>2 sax='[ab]+.*[de]+' limit=5\"")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("gen-bench", help="generate an evaluation suite")
    p.add_argument("--out", required=True)
    p.add_argument("--profile", default="DEFAULT", choices=["DEFAULT", "LITE", "default", "lite"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", default="", help="e.g. AR=10,SI=5")
    p.add_argument("--total", type=int, default=0, help="scale the default mix")
    p.set_defaults(func=cmd_gen_bench)

    p = sub.add_parser("query", help="answer one natural-language question")
    p.add_argument("question")
    p.add_argument("--planner", default="rules", choices=["rules", "llm"])
    p.add_argument("--config", default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--show-plan", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("run-bench", help="answer a full suite, write answers")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--planner", default="rules", choices=["rules", "llm"])
    p.add_argument("--config", default=None)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_run_bench)

    p = sub.add_parser("eval", help="score an answers file against a suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--data-dir", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--suite", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--data-dir", default="tsquery_data")
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except StoreError as exc:
        print(f"error [{getattr(exc, 'code', 'STORE_ERROR')}]: {exc}", file=sys.stderr)
        return 1
    except bench_mod.BenchError as exc:
        print(f"error [BENCH_ERROR]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # searches, plans, executions surface a code
        code = getattr(exc, "code", "RUNTIME_ERROR")
        print(f"error [{code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
