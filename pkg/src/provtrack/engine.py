"""Orchestration of submitted analyses.

Each pipeline step of each analysis element goes to the broker as a single
job; every returned result is logged as a JobCompleted/JobFailed event with
a full W7 record before the next dispatch decision. Steps within an element
are strictly sequential; elements are independent, and up to
`max_parallel_jobs` jobs may be in flight at once (results are collected in
submission order, so runs are deterministic for a given policy and broker).

When a step fails the element's remaining steps are skipped, other elements
keep running, and the analysis ends PartiallyCompleted unless everything
succeeded (Completed) or nothing did (Failed). Exactly one
WorkflowCompleted event is appended per run, whatever the outcome.

Job ids are derived from the analysis name plus element/step indices so
seeded runs in different stores stay byte-comparable; submitting two
same-named analyses to one broker instance is therefore rejected as a
duplicate job id - give each run a fresh broker.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from . import model
from .broker import Broker, JobResult, JobSpec, JobToken
from .errors import OutOfOrderStepError, UnknownItemError, WrongStateError
from .model import AnalysisState, ElementState
from .store import Event, ItemId, ItemRef, ItemStore, Transition, W7Record


@dataclass(frozen=True)
class RunPolicy:
    max_parallel_jobs: int = 1
    retries_per_job: int = 0

    def __post_init__(self) -> None:
        if self.max_parallel_jobs < 1:
            raise ValueError("max_parallel_jobs must be >= 1")
        if self.retries_per_job < 0:
            raise ValueError("retries_per_job must be >= 0")


@dataclass(frozen=True)
class RunHandle:
    """A submitted run: the analysis plus its deterministic dispatch order."""

    analysis: ItemId
    dispatch_order: tuple[tuple[int, int], ...]
    policy: RunPolicy


@dataclass(frozen=True)
class ElementStatus:
    element: ItemId
    state: ElementState
    steps_total: int
    steps_completed: int
    steps_failed: int
    steps_pending: int
    steps_skipped: int


@dataclass(frozen=True)
class StatusReport:
    analysis: ItemId
    state: AnalysisState
    elements: tuple[ElementStatus, ...]
    jobs_completed: int
    jobs_failed: int


@dataclass(frozen=True)
class AnalysisOutcome:
    analysis: ItemId
    state: AnalysisState
    result_link: str
    elements_succeeded: int
    elements_failed: int
    jobs_dispatched: int


@dataclass
class _ElementRun:
    index: int
    element_id: ItemId
    data_element: ItemRef
    next_step: int = 0
    attempt: int = 0
    failed: bool = False
    in_flight: bool = False
    outputs: list[str] = field(default_factory=list)
    durations: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class _Dispatched:
    token: JobToken
    run: _ElementRun
    step_index: int
    algorithm: ItemRef
    started_at: datetime


def _job_event_counts(store: ItemStore, element_id: ItemId) -> tuple[int, int]:
    completed = failed = 0
    for event in store.history(element_id):
        if event.transition is Transition.JOB_COMPLETED:
            completed += 1
        elif event.transition is Transition.JOB_FAILED:
            failed += 1
    return completed, failed


class WorkflowEngine:
    """Drives submitted analyses to completion against a Broker."""

    def __init__(self, store: ItemStore, policy: RunPolicy | None = None) -> None:
        self.store = store
        self.policy = policy or RunPolicy()

    # -- submission -------------------------------------------------------------

    def submit(self, analysis_id: ItemId) -> RunHandle:
        """Move a Submitted analysis to Running and fix its dispatch order."""
        analysis = model.get_analysis(self.store, analysis_id)
        if analysis.state is not AnalysisState.SUBMITTED:
            raise WrongStateError(
                f"analysis {analysis_id} is {analysis.state.value}, not Submitted"
            )
        pipeline = model.get_pipeline(
            self.store, analysis.pipeline.item_id, analysis.pipeline.version
        )
        order = tuple(
            (element_index, step_index)
            for element_index in range(len(analysis.elements))
            for step_index in range(len(pipeline.steps))
        )
        model.set_analysis_state(self.store, analysis_id, AnalysisState.RUNNING)
        return RunHandle(analysis=analysis_id, dispatch_order=order, policy=self.policy)

    # -- provenance -------------------------------------------------------------

    def record_job_provenance(
        self,
        element_id: ItemId,
        step_index: int,
        result: JobResult,
        started_at: datetime | None = None,
    ) -> Event:
        """Append the JobCompleted/JobFailed event for one returned job.

        The step must be the element's next undone step (the count of its
        JobCompleted events so far). W7 captures the executing node, the
        job's time span, and exactly the pinned data element and algorithm
        the step consumed.
        """
        element = model.get_element(self.store, element_id)
        if element.state is not ElementState.RUNNING:
            raise WrongStateError(f"element {element_id} is {element.state.value}, not Running")
        completed, _failed = _job_event_counts(self.store, element_id)
        if step_index != completed:
            raise OutOfOrderStepError(
                f"element {element_id} expects step {completed}, got {step_index}"
            )
        analysis = model.get_analysis(self.store, element.analysis)
        pipeline = model.get_pipeline(
            self.store, element.pipeline.item_id, element.pipeline.version
        )
        step = pipeline.steps[step_index]
        owner = self.store.get_item(analysis.owner)
        if started_at is None:
            when_end = self.store.clock.now()
            when_start = when_end - timedelta(seconds=result.duration)
        else:
            when_start = started_at
            when_end = started_at + timedelta(seconds=result.duration)
        w7 = W7Record(
            who=owner.name,
            what=f"execute step {step_index} of {pipeline.item.name}",
            when_start=when_start,
            when_end=when_end,
            where=result.node,
            which=(element.data_element, ItemRef(step.algorithm, step.algorithm_version)),
            how=f"broker job {result.job_id} on {result.node}",
            why=analysis.justification,
        )
        transition = Transition.JOB_COMPLETED if result.success else Transition.JOB_FAILED
        return self.store.append_job_event(
            element_id, transition, w7, annotation=result.diagnostics
        )

    # -- execution --------------------------------------------------------------

    def run_to_completion(self, handle: RunHandle, broker: Broker) -> AnalysisOutcome:
        """Dispatch every runnable job, log its provenance, and finalize.

        Broker failures propagate; provenance already appended is never
        rolled back.
        """
        analysis = model.get_analysis(self.store, handle.analysis)
        if analysis.state is not AnalysisState.RUNNING:
            raise WrongStateError(
                f"analysis {handle.analysis} is {analysis.state.value}, not Running"
            )
        pipeline = model.get_pipeline(
            self.store, analysis.pipeline.item_id, analysis.pipeline.version
        )
        steps = pipeline.steps
        runs = []
        for index, element_id in enumerate(analysis.elements):
            element = model.get_element(self.store, element_id)
            runs.append(
                _ElementRun(index=index, element_id=element_id,
                            data_element=element.data_element)
            )
        in_flight: deque[_Dispatched] = deque()
        dispatched = 0
        run_started: datetime | None = None

        def submit_next() -> None:
            nonlocal dispatched, run_started
            for run in runs:
                if len(in_flight) >= handle.policy.max_parallel_jobs:
                    return
                if run.failed or run.in_flight or run.next_step >= len(steps):
                    continue
                if run.next_step == 0 and run.attempt == 0:
                    current = model.get_element(self.store, run.element_id)
                    if current.state is ElementState.PENDING:
                        model.start_element(self.store, run.element_id)
                step = steps[run.next_step]
                data_location = self.store.get_item(
                    run.data_element.item_id, run.data_element.version
                ).payload["location"]
                inputs = (run.outputs[-1],) if run.outputs else (data_location,)
                algorithm = self.store.get_item(step.algorithm, step.algorithm_version)
                suffix = f"-r{run.attempt}" if run.attempt else ""
                spec = JobSpec(
                    job_id=f"{analysis.item.name}-e{run.index}-s{run.next_step}{suffix}",
                    analysis=handle.analysis,
                    element=run.element_id,
                    step_index=run.next_step,
                    command=algorithm.payload["command"],
                    inputs=inputs,
                    parameters={**step.bindings, **analysis.parameters},
                )
                started_at = self.store.clock.now()
                if run_started is None:
                    run_started = started_at
                token = broker.submit_job(spec)
                in_flight.append(
                    _Dispatched(
                        token=token,
                        run=run,
                        step_index=run.next_step,
                        algorithm=ItemRef(step.algorithm, step.algorithm_version),
                        started_at=started_at,
                    )
                )
                run.in_flight = True
                dispatched += 1

        def finalize_element(run: _ElementRun, success: bool) -> None:
            step_states = []
            for step_index in range(len(steps)):
                if step_index < run.next_step:
                    step_states.append("Completed")
                elif not success and step_index == run.next_step:
                    step_states.append("Failed")
                elif not success:
                    step_states.append("Skipped")
                else:
                    step_states.append("Completed")
            metrics: dict[str, float] = {"duration": sum(run.durations)}
            for step_index, duration in enumerate(run.durations):
                metrics[f"step_{step_index}_duration"] = duration
            model.attach_results(
                self.store,
                run.element_id,
                run.outputs[-1] if success else "",
                "success" if success else "failure",
                metrics=metrics,
                step_states=step_states,
            )
            run.failed = not success

        submit_next()
        while in_flight:
            job = in_flight.popleft()
            job.run.in_flight = False
            result = broker.await_result(job.token)
            self.record_job_provenance(
                job.run.element_id, job.step_index, result, started_at=job.started_at
            )
            job.run.durations.append(result.duration)
            if result.success:
                job.run.outputs.append(result.output)
                job.run.next_step += 1
                job.run.attempt = 0
                if job.run.next_step == len(steps):
                    finalize_element(job.run, success=True)
            else:
                if job.run.attempt < handle.policy.retries_per_job:
                    job.run.attempt += 1
                else:
                    finalize_element(job.run, success=False)
            submit_next()

        succeeded = sum(1 for run in runs if not run.failed)
        failed = len(runs) - succeeded
        owner = self.store.get_item(analysis.owner)
        now = self.store.clock.now()
        self.store.append_job_event(
            handle.analysis,
            Transition.WORKFLOW_COMPLETED,
            W7Record(
                who=owner.name,
                what=f"workflow finished: {succeeded}/{len(runs)} elements succeeded",
                when_start=run_started or now,
                when_end=now,
                where="workflow-engine",
                which=(analysis.dataset, analysis.pipeline),
                how=f"{dispatched} jobs dispatched",
                why=analysis.justification,
            ),
        )
        if succeeded == len(runs):
            final_state = AnalysisState.COMPLETED
        elif succeeded > 0:
            final_state = AnalysisState.PARTIALLY_COMPLETED
        else:
            final_state = AnalysisState.FAILED
        result_link = f"lfn:/analysis/{handle.analysis}/"
        model.set_analysis_state(
            self.store, handle.analysis, final_state,
            extra_changes={"payload.result_link": result_link},
        )
        return AnalysisOutcome(
            analysis=handle.analysis,
            state=final_state,
            result_link=result_link,
            elements_succeeded=succeeded,
            elements_failed=failed,
            jobs_dispatched=dispatched,
        )

    # -- observation ------------------------------------------------------------

    def status(self, analysis_id: ItemId) -> StatusReport:
        """Read-only progress report derived from item states and job events."""
        if not self.store.has_item(analysis_id):
            raise UnknownItemError(f"no item {analysis_id}")
        analysis = model.get_analysis(self.store, analysis_id)
        pipeline = model.get_pipeline(
            self.store, analysis.pipeline.item_id, analysis.pipeline.version
        )
        total = len(pipeline.steps)
        element_statuses = []
        jobs_completed = jobs_failed = 0
        for element_id in analysis.elements:
            element = model.get_element(self.store, element_id)
            completed, failed = _job_event_counts(self.store, element_id)
            jobs_completed += completed
            jobs_failed += failed
            if element.state is ElementState.FAILED:
                pending, skipped = 0, total - completed - failed
            else:
                pending, skipped = total - completed - failed, 0
            element_statuses.append(
                ElementStatus(
                    element=element_id,
                    state=element.state,
                    steps_total=total,
                    steps_completed=completed,
                    steps_failed=failed,
                    steps_pending=pending,
                    steps_skipped=skipped,
                )
            )
        return StatusReport(
            analysis=analysis_id,
            state=analysis.state,
            elements=tuple(element_statuses),
            jobs_completed=jobs_completed,
            jobs_failed=jobs_failed,
        )
