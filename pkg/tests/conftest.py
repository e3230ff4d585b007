"""Shared fixtures: the worked example graph, random graph generators, mock contexts."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from labhazard.annotations import ScenarioRecord
from labhazard.gateway import (
    EndpointRole,
    GatewayBudgets,
    MockBackend,
    ModelEndpoint,
    ProviderGateway,
    RetryPolicy,
)
from labhazard.pipeline import PipelineContext
from labhazard.scene_graph import (
    AttributeMap,
    GraphVariant,
    Node,
    Relationship,
    SceneGraph,
)
from labhazard.store import DatasetStore
from labhazard.templates_engine import load_template

DATA_DIR = Path(__file__).parent / "data"

_WORDS = (
    "beaker",
    "fume hood",
    "éther bottle",
    "burner",
    "gas valve",
    "shelf",
    "goggles",
    "dewar",
    "spill tray",
    "sample rack",
)
_STATES = ("open", "closed", "tilted", "in use", "sealed", "cracked", "", "N/A")
_HAZARDS = ("N/A", "flammable", "toxic", "spill risk", "breakable", "")
_PREDICATES = ("near", "placed_on", "stored_in", "exposed_to", "connected_to")


def random_graph(
    rng: random.Random,
    variant: GraphVariant = GraphVariant.FULL,
    min_nodes: int = 0,
    max_nodes: int = 6,
) -> SceneGraph:
    """A structurally valid random graph (unique names, closed endpoints)."""
    n = rng.randint(min_nodes, max_nodes)
    names = [f"{rng.choice(_WORDS)} {i}" for i in range(n)]
    nodes = tuple(
        Node(
            name,
            AttributeMap(
                state=rng.choice(_STATES),
                hazard=rng.choice(_HAZARDS) if variant is GraphVariant.FULL else None,
            ),
        )
        for name in names
    )
    edges: list[Relationship] = []
    seen: set[tuple[str, str, str]] = set()
    if n:
        for _ in range(rng.randint(0, 2 * n)):
            subject = rng.choice(names)
            obj = subject if rng.random() < 0.1 else rng.choice(names)
            triple = (subject, rng.choice(_PREDICATES), obj)
            if triple not in seen:
                seen.add(triple)
                edges.append(Relationship(*triple))
    return SceneGraph(nodes, tuple(edges), variant)


def populated_graph(rng: random.Random, variant: GraphVariant = GraphVariant.FULL) -> SceneGraph:
    """A random graph guaranteed to have nodes and at least one relationship."""
    while True:
        g = random_graph(rng, variant, min_nodes=2)
        if g.relationships:
            return g


@pytest.fixture(scope="session")
def worked_example_graph_text() -> str:
    """The one-shot example graph embedded in the shipped generation template."""
    template = load_template("scene_graph_generation")
    start = template.index("Expected Output:") + len("Expected Output:")
    end = template.index("Input Scenario:", start)
    return template[start:end].strip()


@pytest.fixture(scope="session")
def corpus() -> list[ScenarioRecord]:
    lines = (DATA_DIR / "scenarios_small.jsonl").read_text(encoding="utf-8").splitlines()
    return [ScenarioRecord.from_json_line(line) for line in lines if line.strip()]


@pytest.fixture(scope="session")
def reported_overall_rows() -> list[dict]:
    return json.loads((DATA_DIR / "reported_results.json").read_text(encoding="utf-8"))["rows"]


def mock_endpoints() -> dict[EndpointRole, ModelEndpoint]:
    return {
        role: ModelEndpoint(role=role, provider_id="mock", model_id=f"mock-{role.value}")
        for role in EndpointRole
    }


def make_context(
    store_dir: Path,
    seed: int = 7,
    script=None,
    transient_failures=None,
    workers: int = 1,
    backend: object | None = None,
) -> PipelineContext:
    """Deterministic mock pipeline context rooted at ``store_dir``."""
    store = DatasetStore(store_dir)
    if backend is None:
        backend = MockBackend(seed=seed, script=script, transient_failures=transient_failures)
    gateway = ProviderGateway(
        {"mock": backend},
        budgets=GatewayBudgets(global_inflight=8, per_endpoint_inflight=4),
        retry=RetryPolicy(max_attempts=3, base_delay=0.0, max_delay=0.0),
        image_loader=store.get_bytes,
        clock=lambda: 0.0,
        sleep=lambda _: None,
    )
    return PipelineContext(
        store=store,
        gateway=gateway,
        endpoints=mock_endpoints(),
        clock=lambda: 0.0,
        workers=workers,
    )


def install_corpus(store: DatasetStore, records: list[ScenarioRecord]) -> None:
    store.write_scenarios(records)


def hash_tree(root: Path) -> dict[str, str]:
    """Relative path -> sha256 for every file under root (byte-identity checks)."""
    import hashlib

    digests: dict[str, str] = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digests[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests
