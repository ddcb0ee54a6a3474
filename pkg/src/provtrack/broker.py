"""Pluggable execution backends for analysis-element steps.

The engine only ever talks to the two-method Broker protocol (submit a job,
await its result), so the execution substrate can be swapped without
touching orchestration or provenance capture. Two backends ship here:

* SimulatedBroker - a deterministic grid stand-in driven by virtual time.
  One root seed feeds every draw; draws are consumed in submission order,
  so identical submission sequences yield identical result sequences.
* InlineBroker - executes every job instantly in-process; the trivial
  backend the engine's replaceability tests run against.

Jobs carry everything by value; brokers share no mutable state with the
engine.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol

from .clock import VirtualClock
from .errors import DuplicateJobIdError, UnknownTokenError
from .store import ItemId


@dataclass(frozen=True)
class JobSpec:
    """One pipeline step of one analysis element, marshalled for execution."""

    job_id: str
    analysis: ItemId
    element: ItemId
    step_index: int
    command: str
    inputs: tuple[str, ...]
    parameters: Mapping[str, Any]


@dataclass(frozen=True)
class JobResult:
    job_id: str
    success: bool
    output: str | None
    duration: float
    node: str
    diagnostics: str = ""

    def __post_init__(self) -> None:
        if self.success != (self.output is not None):
            raise ValueError("output must be present exactly when the job succeeded")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")


@dataclass(frozen=True)
class JobToken:
    """Opaque handle returned by submit_job; redeem once via await_result."""

    job_id: str


@dataclass(frozen=True)
class SimConfig:
    """Knobs of the simulated broker; identical configs replay identically."""

    seed: int = 0
    workers: int = 4
    latency_min: float = 1.0
    latency_max: float = 10.0
    failure_probability: float = 0.0
    scripted_failures: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not (0 <= self.latency_min <= self.latency_max):
            raise ValueError("need 0 <= latency_min <= latency_max")
        if not (0.0 <= self.failure_probability <= 1.0):
            raise ValueError("failure_probability must be in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "workers": self.workers,
            "latency_min": self.latency_min,
            "latency_max": self.latency_max,
            "failure_probability": self.failure_probability,
            "scripted_failures": sorted(list(pair) for pair in self.scripted_failures),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SimConfig":
        defaults = cls()
        return cls(
            seed=int(raw.get("seed", defaults.seed)),
            workers=int(raw.get("workers", defaults.workers)),
            latency_min=float(raw.get("latency_min", defaults.latency_min)),
            latency_max=float(raw.get("latency_max", defaults.latency_max)),
            failure_probability=float(
                raw.get("failure_probability", defaults.failure_probability)
            ),
            scripted_failures=frozenset(
                (int(e), int(s)) for e, s in raw.get("scripted_failures", ())
            ),
        )


class Broker(Protocol):
    def submit_job(self, spec: JobSpec) -> JobToken: ...

    def await_result(self, token: JobToken) -> JobResult: ...


@dataclass
class _PendingJob:
    spec: JobSpec
    node: str
    latency: float
    success: bool
    completes_at: float
    diagnostics: str


class SimulatedBroker:
    """Deterministic simulated grid backend.

    Each submission is assigned a worker round-robin and consumes exactly
    two draws from the seeded stream (latency, then failure), so results
    depend only on the seed and the submission order. Scripted failures are
    keyed by (element index, step index), where an element's index is the
    order in which the broker first saw it within its analysis - with the
    engine's deterministic dispatch this equals dataset order.

    The virtual clock advances to a job's completion time when its result
    is awaited and never moves backwards.
    """

    def __init__(self, config: SimConfig, clock: VirtualClock | None = None) -> None:
        self.config = config
        self._clock = clock or VirtualClock()
        self._rng = random.Random(config.seed)
        self._lock = threading.Lock()
        self._pending: dict[str, _PendingJob] = {}
        self._seen_ids: set[str] = set()
        self._submissions = 0
        self._element_index: dict[tuple[ItemId, ItemId], int] = {}
        self._elements_per_analysis: dict[ItemId, int] = {}

    @property
    def clock(self) -> VirtualClock:
        return self._clock

    def _index_of(self, analysis: ItemId, element: ItemId) -> int:
        key = (analysis, element)
        if key not in self._element_index:
            index = self._elements_per_analysis.get(analysis, 0)
            self._element_index[key] = index
            self._elements_per_analysis[analysis] = index + 1
        return self._element_index[key]

    def submit_job(self, spec: JobSpec) -> JobToken:
        with self._lock:
            if spec.job_id in self._seen_ids:
                raise DuplicateJobIdError(f"job id {spec.job_id} was already submitted")
            self._seen_ids.add(spec.job_id)
            node = f"sim-{self._submissions % self.config.workers}"
            self._submissions += 1
            latency = self._rng.uniform(self.config.latency_min, self.config.latency_max)
            failure_draw = self._rng.random()
            element_index = self._index_of(spec.analysis, spec.element)
            scripted = (element_index, spec.step_index) in self.config.scripted_failures
            random_failure = failure_draw < self.config.failure_probability
            success = not scripted and not random_failure
            if scripted:
                diagnostics = f"scripted failure on {node}"
            elif random_failure:
                diagnostics = f"simulated failure on {node}"
            else:
                diagnostics = f"ok on {node}"
            self._pending[spec.job_id] = _PendingJob(
                spec=spec,
                node=node,
                latency=latency,
                success=success,
                completes_at=self._clock.elapsed() + latency,
                diagnostics=diagnostics,
            )
            return JobToken(job_id=spec.job_id)

    def await_result(self, token: JobToken) -> JobResult:
        with self._lock:
            pending = self._pending.pop(token.job_id, None)
            if pending is None:
                raise UnknownTokenError(f"no pending job for token {token.job_id}")
        self._clock.advance_to(pending.completes_at)
        return JobResult(
            job_id=token.job_id,
            success=pending.success,
            output=f"lfn:/sim/{token.job_id}" if pending.success else None,
            duration=pending.latency,
            node=pending.node,
            diagnostics=pending.diagnostics,
        )

    def virtual_now(self) -> float:
        """Current virtual time in seconds; 0 before any job completes."""
        return self._clock.elapsed()


class InlineBroker:
    """Executes every job instantly in-process.

    Useful as the no-infrastructure backend and to demonstrate that the
    engine depends only on the Broker protocol. An optional predicate can
    force failures for specific jobs.
    """

    def __init__(self, should_fail: Callable[[JobSpec], bool] | None = None) -> None:
        self._should_fail = should_fail
        self._pending: dict[str, JobResult] = {}
        self._seen_ids: set[str] = set()
        self._lock = threading.Lock()

    def submit_job(self, spec: JobSpec) -> JobToken:
        with self._lock:
            if spec.job_id in self._seen_ids:
                raise DuplicateJobIdError(f"job id {spec.job_id} was already submitted")
            self._seen_ids.add(spec.job_id)
            failed = self._should_fail is not None and self._should_fail(spec)
            self._pending[spec.job_id] = JobResult(
                job_id=spec.job_id,
                success=not failed,
                output=None if failed else f"lfn:/inline/{spec.job_id}",
                duration=0.0,
                node="inline-0",
                diagnostics="failed inline" if failed else "ok inline",
            )
            return JobToken(job_id=spec.job_id)

    def await_result(self, token: JobToken) -> JobResult:
        with self._lock:
            result = self._pending.pop(token.job_id, None)
        if result is None:
            raise UnknownTokenError(f"no pending job for token {token.job_id}")
        return result
