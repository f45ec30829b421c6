import json

import pytest

from tsquery.cli import main


def test_missing_store_is_runtime_error(tmp_path, capsys):
    code = main(["--store", str(tmp_path / "absent.db"), "query", "whatever"])
    assert code == 1
    assert "NO_STORE" in capsys.readouterr().err


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_full_cli_flow(tmp_path, capsys):
    store = str(tmp_path / "flow.db")
    assert main(["--store", store, "synth-demo", "--days", "40", "--channels", "1"]) == 0
    assert main(["--store", store, "index", "--views", "daily"]) == 0
    out = capsys.readouterr().out
    assert "feature rows" in out

    question = ("What is the maximum value of channel sensor_a "
                "from 2020-01-05T00:00:00Z to 2020-02-01T00:00:00Z?")
    assert main(["--store", store, "query", question]) == 0
    answer = json.loads(capsys.readouterr().out)
    assert answer["answer"]["kind"] == "SCALAR"

    suite = str(tmp_path / "suite.jsonl")
    answers = str(tmp_path / "answers.json")
    results = str(tmp_path / "results.json")
    assert main(["--store", store, "gen-bench", "--out", suite,
                 "--counts", "AR=2,PD=1", "--seed", "3"]) == 0
    capsys.readouterr()
    assert main(["--store", store, "run-bench", "--suite", suite, "--out", answers]) == 0
    capsys.readouterr()
    assert main(["--store", store, "eval", "--suite", suite, "--answers", answers,
                 "--out", results]) == 0
    table = capsys.readouterr().out
    assert "AR" in table and "Avg." in table
    stored = json.loads(open(results).read())
    assert stored["per_family"]["AR"] == 1.0


def test_search_subcommand(tmp_path, capsys):
    store = str(tmp_path / "s.db")
    assert main(["--store", store, "synth-demo", "--days", "30", "--channels", "1"]) == 0
    assert main(["--store", store, "index", "--views", "daily"]) == 0
    capsys.readouterr()
    assert main(["--store", store, "search",
                 "view=daily order=std_val:desc limit=2"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 2
    row = json.loads(out[0])
    assert row["view_type"] == "DAILY" and "sax" in row

    assert main(["--store", store, "search", "limit=2"]) == 1  # missing view


def test_ingest_roundtrip(tmp_path, capsys):
    csv = tmp_path / "in.csv"
    csv.write_text("timestamp,channel,value\n"
                   "2021-03-01T00:00:00Z,r,1.5\n"
                   "2021-03-01T01:00:00Z,r,2.5\n")
    store = str(tmp_path / "ing.db")
    assert main(["--store", store, "ingest", "--file", str(csv)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["rows_stored"] == 2
    assert report["channels"] == ["r"]
