"""provtrack - provenance-aware analysis tracking.

An event-sourced store of versioned items, a domain model for pipelines and
datasets, a simulated job broker, a workflow engine that records W7
provenance for every job, lineage queries, PROV-N export, and XML
archiving, fronted by a CLI and a JSON-over-HTTP service.
"""

from .broker import Broker, InlineBroker, JobResult, JobSpec, JobToken, SimConfig, SimulatedBroker
from .clock import SystemClock, VirtualClock
from .engine import AnalysisOutcome, RunHandle, RunPolicy, StatusReport, WorkflowEngine
from .store import (
    Change,
    Event,
    Item,
    ItemId,
    ItemKind,
    ItemRef,
    ItemStore,
    Transition,
    W7Record,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisOutcome",
    "Broker",
    "Change",
    "Event",
    "InlineBroker",
    "Item",
    "ItemId",
    "ItemKind",
    "ItemRef",
    "ItemStore",
    "JobResult",
    "JobSpec",
    "JobToken",
    "RunHandle",
    "RunPolicy",
    "SimConfig",
    "SimulatedBroker",
    "StatusReport",
    "SystemClock",
    "Transition",
    "VirtualClock",
    "W7Record",
    "WorkflowEngine",
    "__version__",
]
