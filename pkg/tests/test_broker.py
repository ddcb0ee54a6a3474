"""Simulated and inline brokers: determinism, round-robin, virtual time."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provtrack import (
    InlineBroker,
    ItemId,
    JobResult,
    JobSpec,
    JobToken,
    SimConfig,
    SimulatedBroker,
    VirtualClock,
)
from provtrack.errors import DuplicateJobIdError, UnknownTokenError


def make_spec(job_id: str, element: str = "elem-1", step: int = 0) -> JobSpec:
    return JobSpec(
        job_id=job_id,
        analysis=ItemId("an-1"),
        element=ItemId(element),
        step_index=step,
        command="run --fast",
        inputs=("lfn:/in/1",),
        parameters={"alpha": 1},
    )


def test_first_job_lands_on_sim_zero():
    broker = SimulatedBroker(SimConfig(seed=1, workers=4))
    token = broker.submit_job(make_spec("j1"))
    result = broker.await_result(token)
    assert result.node == "sim-0"


def test_round_robin_across_eight_jobs_and_four_workers():
    broker = SimulatedBroker(SimConfig(seed=1, workers=4))
    nodes = []
    for i in range(8):
        token = broker.submit_job(make_spec(f"j{i}"))
        nodes.append(broker.await_result(token).node)
    assert nodes == [f"sim-{i % 4}" for i in range(8)]


def test_duplicate_job_id_rejected():
    broker = SimulatedBroker(SimConfig(seed=1))
    broker.submit_job(make_spec("dup"))
    with pytest.raises(DuplicateJobIdError):
        broker.submit_job(make_spec("dup"))


def test_zero_failure_probability_always_succeeds():
    broker = SimulatedBroker(SimConfig(seed=9, failure_probability=0.0))
    for i in range(20):
        result = broker.await_result(broker.submit_job(make_spec(f"j{i}")))
        assert result.success
        assert result.output == f"lfn:/sim/j{i}"


def test_certain_failure_probability_always_fails():
    broker = SimulatedBroker(SimConfig(seed=9, failure_probability=1.0))
    for i in range(20):
        result = broker.await_result(broker.submit_job(make_spec(f"j{i}")))
        assert not result.success
        assert result.output is None


def test_same_seed_same_submissions_identical_results():
    def run() -> list[JobResult]:
        broker = SimulatedBroker(SimConfig(seed=123, workers=3, failure_probability=0.3))
        tokens = [broker.submit_job(make_spec(f"j{i}", element=f"e{i % 2}")) for i in range(12)]
        return [broker.await_result(token) for token in tokens]

    assert run() == run()


def test_scripted_failures_force_specific_jobs_down():
    config = SimConfig(seed=5, scripted_failures=frozenset({(0, 1)}))
    broker = SimulatedBroker(config)
    ok = broker.await_result(broker.submit_job(make_spec("a", element="e0", step=0)))
    bad = broker.await_result(broker.submit_job(make_spec("b", element="e0", step=1)))
    other = broker.await_result(broker.submit_job(make_spec("c", element="e1", step=1)))
    assert ok.success
    assert not bad.success
    assert "scripted" in bad.diagnostics
    assert other.success  # second-seen element has index 1, not scripted


def test_virtual_now_starts_at_zero_and_covers_latency():
    broker = SimulatedBroker(SimConfig(seed=2, latency_min=3.0, latency_max=9.0))
    assert broker.virtual_now() == 0.0
    result = broker.await_result(broker.submit_job(make_spec("j")))
    assert broker.virtual_now() >= result.duration >= 3.0


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32),
    order=st.lists(st.integers(min_value=0, max_value=9), min_size=1, max_size=10, unique=True),
)
def test_virtual_now_is_monotone_over_any_await_order(seed, order):
    broker = SimulatedBroker(SimConfig(seed=seed, workers=2, latency_min=0.5, latency_max=20.0))
    tokens = {i: broker.submit_job(make_spec(f"j{i}")) for i in range(10)}
    last = broker.virtual_now()
    for index in order:
        broker.await_result(tokens[index])
        now = broker.virtual_now()
        assert now >= last
        last = now


def test_unknown_token_and_double_await():
    broker = SimulatedBroker(SimConfig(seed=1))
    with pytest.raises(UnknownTokenError):
        broker.await_result(JobToken(job_id="never-submitted"))
    token = broker.submit_job(make_spec("once"))
    broker.await_result(token)
    with pytest.raises(UnknownTokenError):
        broker.await_result(token)


def test_job_id_round_trips_through_broker():
    broker = SimulatedBroker(SimConfig(seed=1))
    token = broker.submit_job(make_spec("identity-check"))
    assert broker.await_result(token).job_id == "identity-check"


def test_result_invariant_output_iff_success():
    with pytest.raises(ValueError):
        JobResult(job_id="x", success=True, output=None, duration=1.0, node="n")
    with pytest.raises(ValueError):
        JobResult(job_id="x", success=False, output="lfn:/x", duration=1.0, node="n")


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(workers=0)
    with pytest.raises(ValueError):
        SimConfig(latency_min=5.0, latency_max=1.0)
    with pytest.raises(ValueError):
        SimConfig(failure_probability=1.5)


def test_sim_config_dict_round_trip():
    config = SimConfig(
        seed=77, workers=2, latency_min=0.5, latency_max=2.5,
        failure_probability=0.25, scripted_failures=frozenset({(1, 2), (0, 0)}),
    )
    assert SimConfig.from_dict(config.to_dict()) == config


def test_inline_broker_is_instant_and_can_fail_on_request():
    broker = InlineBroker(should_fail=lambda spec: spec.step_index == 1)
    ok = broker.await_result(broker.submit_job(make_spec("a", step=0)))
    bad = broker.await_result(broker.submit_job(make_spec("b", step=1)))
    assert ok.success and ok.duration == 0.0
    assert not bad.success
    with pytest.raises(DuplicateJobIdError):
        broker.submit_job(make_spec("a"))


def test_shared_virtual_clock_reflects_broker_time():
    clock = VirtualClock()
    broker = SimulatedBroker(SimConfig(seed=3, latency_min=2.0, latency_max=2.0), clock=clock)
    before = clock.now()
    broker.await_result(broker.submit_job(make_spec("j")))
    assert (clock.now() - before).total_seconds() == pytest.approx(2.0)
