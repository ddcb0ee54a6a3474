"""Command-line front end.

Verbs mirror the library operations: register users/algorithms, build
pipelines and datasets, create/submit/run analyses, query the catalog,
export provenance and move archives. State lives in one archive XML file
(--store); a command that fails leaves it untouched, since the store is
only written back after the verb succeeds.

Exit codes: 0 success, 1 domain error (error name printed), 2 usage error.
With --json every invocation emits exactly one JSON object with sorted
keys, including failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable

from . import archive, model, prov, query
from .broker import InlineBroker, SimulatedBroker
from .config import AppConfig, load_config
from .engine import RunPolicy, WorkflowEngine
from .errors import MalformedQueryError, ProvTrackError, error_name
from .model import Step
from .store import ItemId, ItemStore, W7Record
from . import service as service_module

DEFAULT_STORE = "provtrack-store.xml"


def _load_store(path: Path) -> ItemStore:
    if path.exists():
        return archive.import_archive(path.read_text(encoding="utf-8"))
    return ItemStore()


def _save_store(store: ItemStore, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(archive.export_all(store), encoding="utf-8")
    os.replace(tmp, path)


def _w7(store: ItemStore, args: argparse.Namespace, what: str) -> W7Record:
    now = store.clock.now()
    return W7Record(
        who=args.who,
        what=what,
        when_start=now,
        when_end=now,
        where="cli",
        how="command line",
        why=args.why or "",
    )


def _parse_kv(pairs: list[str], flag: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise MalformedQueryError(f"{flag} expects key=value, got {pair!r}")
        try:
            values[key] = json.loads(raw)
        except json.JSONDecodeError:
            values[key] = raw
    return values


def _parse_step(spec: str, store: ItemStore) -> Step:
    """Step spec: <algorithm-id>[@version][:k=v[,k=v]*]."""
    head, sep, binding_text = spec.partition(":")
    algorithm, at, version_text = head.partition("@")
    bindings = _parse_kv(binding_text.split(",") if sep else [], "--step bindings")
    if at:
        version = int(version_text)
    else:
        version = store.get_item(ItemId(algorithm)).version
    return Step(algorithm=ItemId(algorithm), algorithm_version=version, bindings=bindings)


def _parse_element(spec: str) -> tuple[str, dict[str, str]]:
    """Element spec: <location>[::k=v[,k=v]*]; "::" because LFNs contain ":"."""
    location, sep, metadata_text = spec.partition("::")
    metadata = _parse_kv(metadata_text.split(",") if sep else [], "--element metadata")
    return location, {key: str(value) for key, value in metadata.items()}


def _read_query(args: argparse.Namespace) -> query.Query:
    if args.file:
        raw = json.loads(Path(args.file).read_text(encoding="utf-8"))
    elif args.query:
        raw = json.loads(args.query)
    else:
        raise MalformedQueryError("give --query JSON or --file PATH")
    return query.Query.from_json(raw)


# -- verb handlers (return (payload, mutated)) ---------------------------------

def _cmd_user_create(store: ItemStore, args, _config) -> tuple[dict, bool]:
    user_id = model.register_user(store, args.name, _w7(store, args, "register user"))
    return {"id": str(user_id), "name": args.name}, True


def _cmd_algorithm_register(store: ItemStore, args, _config) -> tuple[dict, bool]:
    algorithm_id = model.register_algorithm(
        store, args.name, args.command, _w7(store, args, "register algorithm")
    )
    return {"id": str(algorithm_id), "name": args.name}, True


def _cmd_pipeline_create(store: ItemStore, args, _config) -> tuple[dict, bool]:
    steps = [_parse_step(spec, store) for spec in args.step]
    pipeline_id = model.define_pipeline(
        store, args.name, steps, _w7(store, args, "define pipeline")
    )
    return {"id": str(pipeline_id), "name": args.name, "steps": len(steps)}, True


def _cmd_dataset_register(store: ItemStore, args, _config) -> tuple[dict, bool]:
    elements = [_parse_element(spec) for spec in args.element]
    dataset_id = model.register_dataset(
        store, args.name, elements, _w7(store, args, "register dataset")
    )
    return {"id": str(dataset_id), "name": args.name, "elements": len(elements)}, True


def _cmd_analysis_create(store: ItemStore, args, _config) -> tuple[dict, bool]:
    analysis_id = model.create_analysis(
        store,
        owner=ItemId(args.owner),
        purpose=args.purpose,
        justification=args.justification,
        dataset=ItemId(args.dataset),
        pipeline=ItemId(args.pipeline),
        parameters=_parse_kv(args.param, "--param"),
    )
    return {"id": str(analysis_id), "state": "Draft"}, True


def _cmd_analysis_submit(store: ItemStore, args, _config) -> tuple[dict, bool]:
    elements = model.expand_analysis(store, ItemId(args.id))
    return {
        "id": args.id,
        "state": "Submitted",
        "elements": [str(element) for element in elements],
    }, True


def _cmd_analysis_run(store: ItemStore, args, config: AppConfig) -> tuple[dict, bool]:
    engine = WorkflowEngine(store, RunPolicy(max_parallel_jobs=args.max_parallel))
    handle = engine.submit(ItemId(args.id))
    if args.broker == "inline":
        broker = InlineBroker()
    else:
        broker = SimulatedBroker(config.sim)
    outcome = engine.run_to_completion(handle, broker)
    return {
        "id": args.id,
        "state": outcome.state.value,
        "result_link": outcome.result_link,
        "elements_succeeded": outcome.elements_succeeded,
        "elements_failed": outcome.elements_failed,
        "jobs_dispatched": outcome.jobs_dispatched,
    }, True


def _cmd_analysis_status(store: ItemStore, args, _config) -> tuple[dict, bool]:
    report = WorkflowEngine(store).status(ItemId(args.id))
    return {
        "id": args.id,
        "state": report.state.value,
        "jobs_completed": report.jobs_completed,
        "jobs_failed": report.jobs_failed,
        "elements": [
            {
                "element": str(element.element),
                "state": element.state.value,
                "steps_completed": element.steps_completed,
                "steps_failed": element.steps_failed,
                "steps_pending": element.steps_pending,
                "steps_skipped": element.steps_skipped,
            }
            for element in report.elements
        ],
    }, False


def _cmd_item_get(store: ItemStore, args, _config) -> tuple[dict, bool]:
    item = store.get_item(ItemId(args.id), args.version)
    return {
        "id": str(item.id),
        "kind": item.kind.value,
        "name": item.name,
        "version": item.version,
        "properties": item.properties,
        "payload": item.payload,
    }, False


def _cmd_item_update(store: ItemStore, args, _config) -> tuple[dict, bool]:
    changes = _parse_kv(args.set, "--set")
    version, _event = store.update_item(
        ItemId(args.id), changes, _w7(store, args, "update item")
    )
    return {"id": args.id, "version": version}, True


def _cmd_item_history(store: ItemStore, args, _config) -> tuple[dict, bool]:
    events = store.history(ItemId(args.id))
    return {
        "id": args.id,
        "events": [
            {
                "seq": event.seq,
                "transition": event.transition.value,
                "version_after": event.version_after,
                "who": event.w7.who,
                "why": event.w7.why,
            }
            for event in events
        ],
    }, False


def _cmd_query_run(store: ItemStore, args, _config) -> tuple[dict, bool]:
    results = query.find_items(store, _read_query(args))
    return {
        "results": [{"id": str(item_id), "version": version} for item_id, version in results]
    }, False


def _cmd_query_save(store: ItemStore, args, _config) -> tuple[dict, bool]:
    query_id = query.save_query(
        store, args.name, _read_query(args), _w7(store, args, "save query")
    )
    return {"id": str(query_id), "name": args.name}, True


def _cmd_prov_export(store: ItemStore, args, _config) -> tuple[dict, bool]:
    doc = prov.export_analysis(store, ItemId(args.id))
    if args.format == "json":
        text = json.dumps(prov.to_json(doc), indent=2, sort_keys=True) + "\n"
    else:
        text = prov.serialize_provn(doc)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        return {"id": args.id, "written": args.output, "format": args.format}, False
    return {"id": args.id, "document": text, "format": args.format}, False


def _cmd_prov_validate(_store: ItemStore, args, _config) -> tuple[dict, bool]:
    doc = prov.parse_provn(Path(args.file).read_text(encoding="utf-8"))
    findings = prov.validate(doc)
    payload = {
        "file": args.file,
        "findings": [
            {"code": finding.code, "subject": finding.subject, "message": finding.message}
            for finding in findings
        ],
    }
    if findings:
        raise _Findings(payload)
    return payload, False


def _cmd_prov_diff(_store: ItemStore, args, _config) -> tuple[dict, bool]:
    doc_a = prov.parse_provn(Path(args.file_a).read_text(encoding="utf-8"))
    doc_b = prov.parse_provn(Path(args.file_b).read_text(encoding="utf-8"))
    result = prov.diff(doc_a, doc_b)
    payload = {
        "equal": result.is_empty(),
        "nodes_only_in_a": [str(name) for _cls, name in result.nodes_only_in_a],
        "nodes_only_in_b": [str(name) for _cls, name in result.nodes_only_in_b],
        "relations_only_in_a": len(result.relations_only_in_a),
        "relations_only_in_b": len(result.relations_only_in_b),
        "attribute_mismatches": [
            {"node": str(m.node), "key": m.key, "a": m.in_a, "b": m.in_b}
            for m in result.attribute_mismatches
        ],
    }
    if not result.is_empty():
        raise _Findings(payload)
    return payload, False


def _cmd_archive_export(store: ItemStore, args, _config) -> tuple[dict, bool]:
    text = archive.export_all(store)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        return {"written": args.output}, False
    return {"document": text}, False


def _cmd_archive_import(store: ItemStore, args, _config) -> tuple[dict, bool]:
    imported = archive.import_archive(
        Path(args.file).read_text(encoding="utf-8"), into=store
    )
    return {
        "items": len(imported.item_ids()),
        "events": len(imported.event_log()),
    }, True


def _cmd_serve(store: ItemStore, args, config: AppConfig) -> tuple[dict, bool]:
    if args.port is not None:
        config = AppConfig(
            port=args.port, data_dir=config.data_dir,
            virtual_time=config.virtual_time, sim=config.sim,
        )
    service_module.serve(config, store=store)
    return {"served": True}, False


class _Findings(Exception):
    """Successful execution whose payload demands a nonzero exit."""

    def __init__(self, payload: dict) -> None:
        super().__init__("findings")
        self.payload = payload


# -- wiring ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provtrack", description=__doc__)
    parser.add_argument("--store", default=os.environ.get("PROVTRACK_STORE", DEFAULT_STORE),
                        help="archive XML file holding the store")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--who", default=os.environ.get("USER", "cli"),
                        help="agent recorded in provenance")
    parser.add_argument("--why", default="", help="justification recorded in provenance")
    groups = parser.add_subparsers(dest="group", required=True)

    user = groups.add_parser("user").add_subparsers(dest="verb", required=True)
    create = user.add_parser("create")
    create.add_argument("--name", required=True)
    create.set_defaults(handler=_cmd_user_create)

    algorithm = groups.add_parser("algorithm").add_subparsers(dest="verb", required=True)
    register = algorithm.add_parser("register")
    register.add_argument("--name", required=True)
    register.add_argument("--command", required=True)
    register.set_defaults(handler=_cmd_algorithm_register)

    pipeline = groups.add_parser("pipeline").add_subparsers(dest="verb", required=True)
    pipeline_create = pipeline.add_parser("create")
    pipeline_create.add_argument("--name", required=True)
    pipeline_create.add_argument(
        "--step", action="append", required=True,
        help="algorithm-id[@version][:k=v,...]; repeatable, in order",
    )
    pipeline_create.set_defaults(handler=_cmd_pipeline_create)

    dataset = groups.add_parser("dataset").add_subparsers(dest="verb", required=True)
    dataset_register = dataset.add_parser("register")
    dataset_register.add_argument("--name", required=True)
    dataset_register.add_argument(
        "--element", action="append", required=True,
        help="location[::k=v,...]; repeatable, in order",
    )
    dataset_register.set_defaults(handler=_cmd_dataset_register)

    analysis = groups.add_parser("analysis").add_subparsers(dest="verb", required=True)
    analysis_create = analysis.add_parser("create")
    analysis_create.add_argument("--owner", required=True)
    analysis_create.add_argument("--purpose", required=True)
    analysis_create.add_argument("--justification", required=True)
    analysis_create.add_argument("--dataset", required=True)
    analysis_create.add_argument("--pipeline", required=True)
    analysis_create.add_argument("--param", action="append", default=[])
    analysis_create.set_defaults(handler=_cmd_analysis_create)
    analysis_submit = analysis.add_parser("submit")
    analysis_submit.add_argument("id")
    analysis_submit.set_defaults(handler=_cmd_analysis_submit)
    analysis_run = analysis.add_parser("run")
    analysis_run.add_argument("id")
    analysis_run.add_argument("--broker", choices=("sim", "inline"), default="sim")
    analysis_run.add_argument("--max-parallel", type=int, default=1)
    analysis_run.set_defaults(handler=_cmd_analysis_run)
    analysis_status = analysis.add_parser("status")
    analysis_status.add_argument("id")
    analysis_status.set_defaults(handler=_cmd_analysis_status)

    item = groups.add_parser("item").add_subparsers(dest="verb", required=True)
    item_get = item.add_parser("get")
    item_get.add_argument("id")
    item_get.add_argument("--version", type=int, default=None)
    item_get.set_defaults(handler=_cmd_item_get)
    item_update = item.add_parser("update")
    item_update.add_argument("id")
    item_update.add_argument("--set", action="append", required=True,
                             help="path=json-value; repeatable")
    item_update.set_defaults(handler=_cmd_item_update)
    item_history = item.add_parser("history")
    item_history.add_argument("id")
    item_history.set_defaults(handler=_cmd_item_history)

    query_group = groups.add_parser("query").add_subparsers(dest="verb", required=True)
    query_run = query_group.add_parser("run")
    query_run.add_argument("--query", default=None, help="query JSON inline")
    query_run.add_argument("--file", default=None, help="query JSON file")
    query_run.set_defaults(handler=_cmd_query_run)
    query_save = query_group.add_parser("save")
    query_save.add_argument("--name", required=True)
    query_save.add_argument("--query", default=None)
    query_save.add_argument("--file", default=None)
    query_save.set_defaults(handler=_cmd_query_save)

    prov_group = groups.add_parser("prov").add_subparsers(dest="verb", required=True)
    prov_export = prov_group.add_parser("export")
    prov_export.add_argument("id")
    prov_export.add_argument("-o", "--output", default=None)
    prov_export.add_argument("--format", choices=("provn", "json"), default="provn")
    prov_export.set_defaults(handler=_cmd_prov_export)
    prov_validate = prov_group.add_parser("validate")
    prov_validate.add_argument("file")
    prov_validate.set_defaults(handler=_cmd_prov_validate)
    prov_diff = prov_group.add_parser("diff")
    prov_diff.add_argument("file_a")
    prov_diff.add_argument("file_b")
    prov_diff.set_defaults(handler=_cmd_prov_diff)

    archive_group = groups.add_parser("archive").add_subparsers(dest="verb", required=True)
    archive_export = archive_group.add_parser("export")
    archive_export.add_argument("-o", "--output", default=None)
    archive_export.set_defaults(handler=_cmd_archive_export)
    archive_import = archive_group.add_parser("import")
    archive_import.add_argument("file")
    archive_import.set_defaults(handler=_cmd_archive_import)

    serve = groups.add_parser("serve")
    serve.add_argument("--port", type=int, default=None)
    serve.set_defaults(handler=_cmd_serve)

    return parser


def _emit(payload: dict, as_json: bool, stream) -> None:
    if as_json:
        print(json.dumps(payload, sort_keys=True), file=stream)
        return
    for key, value in payload.items():
        if isinstance(value, (dict, list)):
            print(f"{key}: {json.dumps(value, sort_keys=True)}", file=stream)
        else:
            print(f"{key}: {value}", file=stream)


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = load_config(args.config)
    store_path = Path(args.store)
    handler: Callable = args.handler
    try:
        store = _load_store(store_path)
        payload, mutated = handler(store, args, config)
    except _Findings as findings:
        _emit(findings.payload, args.json, sys.stdout)
        return 1
    except ProvTrackError as exc:
        error_payload = {"error": error_name(exc), "detail": str(exc)}
        _emit(error_payload, args.json, sys.stdout if args.json else sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        # bad flag values or unreadable files are usage problems, not crashes
        _emit({"error": "Usage", "detail": str(exc)}, args.json,
              sys.stdout if args.json else sys.stderr)
        return 2
    if mutated:
        _save_store(store, store_path)
    _emit(payload, args.json, sys.stdout)
    return 0


def main() -> None:
    sys.exit(run_cli())
