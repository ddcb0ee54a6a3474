"""Shared fixtures: a seeded deterministic world and an independent replay oracle."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import pytest

from provtrack import (
    ItemId,
    ItemStore,
    SimConfig,
    SimulatedBroker,
    VirtualClock,
    WorkflowEngine,
)
from provtrack import model
from provtrack.engine import AnalysisOutcome


def fold_changes(seed_state: dict, events, upto_version: int) -> dict:
    """Brute-force replay oracle: fold change sets over the version-0 state.

    Deliberately independent of the store's own path machinery so the two
    implementations check each other.
    """
    state = copy.deepcopy(seed_state)
    for event in events:
        if event.transition.value not in ("Created", "Updated", "StateChanged"):
            continue
        if event.version_after == 0 or event.version_after > upto_version:
            continue
        for change in event.change_set:
            segments = change.path.split(".")
            node = state
            for segment in segments[:-1]:
                node = node[int(segment)] if isinstance(node, list) else node[segment]
            leaf = segments[-1]
            if isinstance(node, list):
                node[int(leaf)] = copy.deepcopy(change.new)
            else:
                node[leaf] = copy.deepcopy(change.new)
    return state


def item_seed_state(store: ItemStore, item_id: ItemId) -> dict:
    seed = store.initial_state(item_id)
    return {
        "name": seed.name,
        "properties": dict(seed.properties),
        "payload": copy.deepcopy(seed.payload),
    }


def w7_for(store: ItemStore, who: str = "alice", why: str = "testing") -> "model.W7Record":
    return model.system_w7(store, who=who, what="test setup", why=why)


@dataclass
class Scenario:
    store: ItemStore
    clock: VirtualClock
    user: ItemId
    user_name: str
    algorithms: list[ItemId]
    pipeline: ItemId
    dataset: ItemId
    data_elements: list[ItemId]


def build_scenario(
    n_elements: int = 2,
    n_steps: int = 3,
    id_seed: int = 42,
    user_name: str = "alice",
    pipeline_name: str = "pipe-A",
    dataset_name: str = "scans",
) -> Scenario:
    clock = VirtualClock()
    store = ItemStore(clock=clock, id_seed=id_seed)
    w7 = w7_for(store, who=user_name)
    user = model.register_user(store, user_name, w7)
    algorithms = [
        model.register_algorithm(store, f"alg-{i}", f"run-alg-{i} --fast", w7)
        for i in range(n_steps)
    ]
    pipeline = model.define_pipeline(
        store,
        pipeline_name,
        [model.Step(algorithm, 0, {"level": str(i)}) for i, algorithm in enumerate(algorithms)],
        w7,
    )
    dataset = model.register_dataset(
        store,
        dataset_name,
        [(f"lfn:/data/{dataset_name}/{i}", {"index": str(i)}) for i in range(n_elements)],
        w7,
    )
    data_elements = list(model.get_dataset(store, dataset).elements)
    return Scenario(
        store=store,
        clock=clock,
        user=user,
        user_name=user_name,
        algorithms=algorithms,
        pipeline=pipeline,
        dataset=dataset,
        data_elements=data_elements,
    )


def run_analysis(
    scenario: Scenario,
    purpose: str = "study-signal",
    sim: SimConfig | None = None,
    max_parallel: int = 1,
) -> tuple[ItemId, AnalysisOutcome]:
    store = scenario.store
    analysis = model.create_analysis(
        store, scenario.user, purpose, "verify the hypothesis",
        scenario.dataset, scenario.pipeline,
    )
    model.expand_analysis(store, analysis)
    from provtrack.engine import RunPolicy

    engine = WorkflowEngine(store, RunPolicy(max_parallel_jobs=max_parallel))
    handle = engine.submit(analysis)
    broker = SimulatedBroker(sim or SimConfig(seed=7, workers=4), clock=scenario.clock)
    outcome = engine.run_to_completion(handle, broker)
    return analysis, outcome


@pytest.fixture
def scenario() -> Scenario:
    return build_scenario()
