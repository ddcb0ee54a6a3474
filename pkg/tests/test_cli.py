"""CLI: the scripted end-to-end session, exit codes, and atomicity."""

from __future__ import annotations

import json

import pytest

from provtrack.cli import run_cli
from provtrack.prov import parse_provn, validate


def invoke(capsys, *argv: str, expect: int = 0) -> dict:
    code = run_cli(list(argv))
    captured = capsys.readouterr()
    assert code == expect, f"exit {code} for {argv}: {captured.out} {captured.err}"
    return json.loads(captured.out) if captured.out.strip() else {}


def store_args(tmp_path) -> list[str]:
    return ["--store", str(tmp_path / "store.xml"), "--json", "--who", "alice"]


def seed_world(capsys, tmp_path) -> dict:
    base = store_args(tmp_path)
    user = invoke(capsys, *base, "user", "create", "--name", "alice")
    alg1 = invoke(capsys, *base, "algorithm", "register", "--name", "normalize",
                  "--command", "norm --fast")
    alg2 = invoke(capsys, *base, "algorithm", "register", "--name", "segment",
                  "--command", "seg -v")
    pipeline = invoke(
        capsys, *base, "--why", "build the pipeline",
        "pipeline", "create", "--name", "morph-pipe",
        "--step", f"{alg1['id']}:level=2", "--step", f"{alg2['id']}@0",
    )
    dataset = invoke(
        capsys, *base, "dataset", "register", "--name", "scan-batch",
        "--element", "lfn:/data/scan1::subject=s1",
        "--element", "lfn:/data/scan2::subject=s2",
    )
    return {
        "user": user["id"], "alg1": alg1["id"], "alg2": alg2["id"],
        "pipeline": pipeline["id"], "dataset": dataset["id"],
    }


def test_end_to_end_session_produces_valid_prov(capsys, tmp_path):
    base = store_args(tmp_path)
    world = seed_world(capsys, tmp_path)
    created = invoke(
        capsys, *base, "analysis", "create",
        "--owner", world["user"], "--purpose", "find-biomarkers",
        "--justification", "compare cohorts", "--dataset", world["dataset"],
        "--pipeline", world["pipeline"], "--param", "alpha=0.5",
    )
    analysis = created["id"]
    submitted = invoke(capsys, *base, "analysis", "submit", analysis)
    assert len(submitted["elements"]) == 2
    ran = invoke(capsys, *base, "analysis", "run", analysis)
    assert ran["state"] == "Completed"
    status = invoke(capsys, *base, "analysis", "status", analysis)
    assert status["state"] == "Completed"
    assert status["jobs_completed"] == 4

    out = tmp_path / "analysis.provn"
    invoke(capsys, *base, "prov", "export", analysis, "-o", str(out))
    text = out.read_text()
    assert validate(parse_provn(text)) == []
    # element specs parsed as full LFN + metadata, not split at the first ':'
    assert 'an:location = "lfn:/data/scan1"' in text
    checked = invoke(capsys, *base, "prov", "validate", str(out))
    assert checked["findings"] == []

    archive_out = tmp_path / "full.xml"
    invoke(capsys, *base, "archive", "export", "-o", str(archive_out))
    assert archive_out.read_text().count("<event ") >= 10


def test_unknown_verb_exits_two(capsys, tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        run_cli(["--store", str(tmp_path / "s.xml"), "bogus", "verb"])
    assert excinfo.value.code == 2
    with pytest.raises(SystemExit) as excinfo:
        run_cli(["--store", str(tmp_path / "s.xml"), "analysis", "explode"])
    assert excinfo.value.code == 2


def test_domain_error_exits_one_with_error_name(capsys, tmp_path):
    base = store_args(tmp_path)
    seed_world(capsys, tmp_path)
    payload = invoke(capsys, *base, "item", "get", "no-such-id", expect=1)
    assert payload["error"] == "UnknownItem"


def test_json_output_is_single_sorted_object(capsys, tmp_path):
    base = store_args(tmp_path)
    invoke(capsys, *base, "user", "create", "--name", "bob")
    code = run_cli([*base, "user", "create", "--name", "carol"])
    out = capsys.readouterr().out
    assert code == 0
    assert len(out.strip().splitlines()) == 1
    payload = json.loads(out)
    assert list(payload) == sorted(payload)


def test_failed_command_leaves_store_untouched(capsys, tmp_path):
    base = store_args(tmp_path)
    world = seed_world(capsys, tmp_path)
    store_file = tmp_path / "store.xml"
    before = store_file.read_bytes()
    invoke(
        capsys, *base, "analysis", "create",
        "--owner", world["user"], "--purpose", "doomed",
        "--justification", "", "--dataset", world["dataset"],
        "--pipeline", world["pipeline"],
        expect=1,
    )
    assert store_file.read_bytes() == before


def test_item_update_requires_why(capsys, tmp_path):
    base = store_args(tmp_path)
    world = seed_world(capsys, tmp_path)
    failed = invoke(capsys, *base, "item", "update", world["dataset"],
                    "--set", "properties.note=x", expect=1)
    assert failed["error"] == "MissingJustification"
    updated = invoke(capsys, *base, "--why", "fixing metadata",
                     "item", "update", world["dataset"], "--set", "properties.note=x")
    assert updated["version"] == 1
    history = invoke(capsys, *base, "item", "history", world["dataset"])
    assert [event["transition"] for event in history["events"]] == ["Created", "Updated"]


def test_item_get_supports_versions(capsys, tmp_path):
    base = store_args(tmp_path)
    world = seed_world(capsys, tmp_path)
    invoke(capsys, *base, "--why", "rename", "item", "update", world["dataset"],
           "--set", 'name="scan-batch-2"')
    old = invoke(capsys, *base, "item", "get", world["dataset"], "--version", "0")
    new = invoke(capsys, *base, "item", "get", world["dataset"])
    assert old["name"] == "scan-batch"
    assert new["name"] == "scan-batch-2"


def test_query_run_and_save(capsys, tmp_path):
    base = store_args(tmp_path)
    world = seed_world(capsys, tmp_path)
    q = json.dumps({"kind": "Dataset", "predicates": [
        {"path": "name", "op": "eq", "value": "scan-batch"}
    ]})
    result = invoke(capsys, *base, "query", "run", "--query", q)
    assert result["results"] == [{"id": world["dataset"], "version": 0}]
    saved = invoke(capsys, *base, "query", "save", "--name", "my-sets", "--query", q)
    rerun = invoke(capsys, *base, "item", "get", saved["id"])
    assert rerun["kind"] == "Query"


def test_query_run_from_file_and_json_export(capsys, tmp_path):
    base = store_args(tmp_path)
    world = seed_world(capsys, tmp_path)
    query_file = tmp_path / "q.json"
    query_file.write_text(json.dumps({"kind": "Dataset", "predicates": []}))
    result = invoke(capsys, *base, "query", "run", "--file", str(query_file))
    assert result["results"] == [{"id": world["dataset"], "version": 0}]

    created = invoke(
        capsys, *base, "analysis", "create",
        "--owner", world["user"], "--purpose", "json-export",
        "--justification", "check mirror", "--dataset", world["dataset"],
        "--pipeline", world["pipeline"],
    )
    invoke(capsys, *base, "analysis", "submit", created["id"])
    invoke(capsys, *base, "analysis", "run", created["id"])
    out = tmp_path / "mirror.json"
    invoke(capsys, *base, "prov", "export", created["id"],
           "--format", "json", "-o", str(out))
    mirror = json.loads(out.read_text())
    assert set(mirror) == {"namespaces", "entities", "activities", "agents", "relations"}


def test_archive_import_round_trip_via_cli(capsys, tmp_path):
    base = store_args(tmp_path)
    seed_world(capsys, tmp_path)
    exported = tmp_path / "backup.xml"
    invoke(capsys, *base, "archive", "export", "-o", str(exported))
    fresh = ["--store", str(tmp_path / "fresh.xml"), "--json"]
    imported = invoke(capsys, *fresh, "archive", "import", str(exported))
    assert imported["items"] > 0
    # importing again into the now-populated store is a domain error
    failed = invoke(capsys, *fresh, "archive", "import", str(exported), expect=1)
    assert failed["error"] == "NonEmptyTarget"


def test_prov_diff_between_exports(capsys, tmp_path):
    base = store_args(tmp_path)
    world = seed_world(capsys, tmp_path)
    created = invoke(
        capsys, *base, "analysis", "create",
        "--owner", world["user"], "--purpose", "diffable",
        "--justification", "compare", "--dataset", world["dataset"],
        "--pipeline", world["pipeline"],
    )
    invoke(capsys, *base, "analysis", "submit", created["id"])
    invoke(capsys, *base, "analysis", "run", created["id"])
    out_a = tmp_path / "a.provn"
    out_b = tmp_path / "b.provn"
    invoke(capsys, *base, "prov", "export", created["id"], "-o", str(out_a))
    invoke(capsys, *base, "prov", "export", created["id"], "-o", str(out_b))
    same = invoke(capsys, *base, "prov", "diff", str(out_a), str(out_b))
    assert same["equal"] is True
