"""JSON-over-HTTP front end.

Every endpoint is a thin adapter over the library API: submit analyses,
poll their status, run catalog/lineage queries, fetch PROV exports (PROV-N
text by default, the JSON mirror via content negotiation) and move whole
archives in or out. Domain errors map to 400/404/409; 500 is reserved for
actual bugs.

Runs execute on background workers after the submission response; each run
gets a fresh simulated broker so job ids cannot collide across analyses.
"""

from __future__ import annotations

import threading
from typing import Any

from fastapi import BackgroundTasks, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from . import archive, model, prov, query
from .broker import SimulatedBroker
from .clock import VirtualClock
from .config import AppConfig
from .engine import WorkflowEngine
from .errors import (
    NonEmptyTargetError,
    ProvTrackError,
    UnknownItemError,
    UnknownVersionError,
    WrongStateError,
    error_name,
)
from .store import ItemId, ItemStore

PROVN_MEDIA_TYPE = "text/provenance-notation"


class AnalysisRequest(BaseModel):
    owner: str
    purpose: str
    justification: str
    dataset: str
    pipeline: str
    parameters: dict[str, Any] = Field(default_factory=dict)


class ServiceState:
    """Shared mutable state behind the endpoints."""

    def __init__(self, store: ItemStore, config: AppConfig) -> None:
        self.config = config
        self.store = store
        self.engine = WorkflowEngine(store)
        self.clock = store.clock if isinstance(store.clock, VirtualClock) else None
        self._run_lock = threading.Lock()

    def new_broker(self) -> SimulatedBroker:
        return SimulatedBroker(self.config.sim, clock=self.clock)

    def run(self, analysis_id: ItemId) -> None:
        with self._run_lock:
            handle = self.engine.submit(analysis_id)
            self.engine.run_to_completion(handle, self.new_broker())


def _status_payload(report) -> dict[str, Any]:
    return {
        "analysis": str(report.analysis),
        "state": report.state.value,
        "jobs_completed": report.jobs_completed,
        "jobs_failed": report.jobs_failed,
        "elements": [
            {
                "element": str(element.element),
                "state": element.state.value,
                "steps_total": element.steps_total,
                "steps_completed": element.steps_completed,
                "steps_failed": element.steps_failed,
                "steps_pending": element.steps_pending,
                "steps_skipped": element.steps_skipped,
            }
            for element in report.elements
        ],
    }


def create_app(store: ItemStore | None = None, config: AppConfig | None = None) -> FastAPI:
    config = config or AppConfig()
    if store is None:
        bootstrap = config.data_dir / "store.xml"
        if bootstrap.exists():
            store = archive.import_archive(bootstrap.read_text(encoding="utf-8"))
        else:
            clock = VirtualClock() if config.virtual_time else None
            store = ItemStore(
                clock=clock, id_seed=config.sim.seed if config.virtual_time else None
            )
    state = ServiceState(store, config)
    app = FastAPI(title="provtrack", version="0.1.0")
    app.state.service = state

    @app.exception_handler(ProvTrackError)
    async def domain_error(_request: Request, exc: ProvTrackError) -> JSONResponse:
        if isinstance(exc, (UnknownItemError, UnknownVersionError)):
            status = 404
        elif isinstance(exc, (WrongStateError, NonEmptyTargetError)):
            status = 409
        else:
            status = 400
        return JSONResponse(
            status_code=status, content={"error": error_name(exc), "detail": str(exc)}
        )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"error": "MalformedBody", "detail": str(exc.errors())}
        )

    @app.post("/analyses", status_code=201)
    def submit_analysis(body: AnalysisRequest, background: BackgroundTasks) -> dict[str, Any]:
        analysis_id = model.create_analysis(
            state.store,
            owner=ItemId(body.owner),
            purpose=body.purpose,
            justification=body.justification,
            dataset=ItemId(body.dataset),
            pipeline=ItemId(body.pipeline),
            parameters=body.parameters,
        )
        elements = model.expand_analysis(state.store, analysis_id)
        background.add_task(state.run, analysis_id)
        return {
            "analysis": str(analysis_id),
            "state": model.get_analysis(state.store, analysis_id).state.value,
            "elements": [str(element) for element in elements],
        }

    @app.get("/analyses/{analysis_id}/status")
    def analysis_status(analysis_id: str) -> dict[str, Any]:
        return _status_payload(state.engine.status(ItemId(analysis_id)))

    @app.get("/analyses/{analysis_id}/prov")
    def analysis_prov(analysis_id: str, request: Request) -> Response:
        doc = prov.export_analysis(state.store, ItemId(analysis_id))
        accept = request.headers.get("accept", "")
        if "application/json" in accept:
            return JSONResponse(content=prov.to_json(doc))
        return PlainTextResponse(
            content=prov.serialize_provn(doc), media_type=PROVN_MEDIA_TYPE
        )

    @app.post("/queries")
    def run_query(body: dict[str, Any]) -> dict[str, Any]:
        parsed = query.Query.from_json(body)
        results = query.find_items(state.store, parsed)
        return {
            "results": [
                {"id": str(item_id), "version": version} for item_id, version in results
            ]
        }

    @app.get("/items/{item_id}")
    def get_item(item_id: str, version: int | None = None) -> dict[str, Any]:
        item = state.store.get_item(ItemId(item_id), version)
        return {
            "id": str(item.id),
            "kind": item.kind.value,
            "name": item.name,
            "version": item.version,
            "properties": item.properties,
            "payload": item.payload,
        }

    @app.get("/archive")
    def export_archive() -> Response:
        return Response(content=archive.export_all(state.store), media_type="application/xml")

    @app.post("/archive")
    async def import_archive(request: Request) -> dict[str, Any]:
        document = (await request.body()).decode("utf-8")
        archive.import_archive(document, into=state.store)
        return {
            "items": len(state.store.item_ids()),
            "events": len(state.store.event_log()),
        }

    return app


def serve(config: AppConfig, store: ItemStore | None = None) -> None:
    """Run the service with uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(store=store, config=config), host="127.0.0.1", port=config.port)
