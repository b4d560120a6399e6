from pathlib import Path

import pytest

from tpmgraph.convert import convert
from tpmgraph.engine import Engine
from tpmgraph.graph import TpmGraph
from tpmgraph.opm import load_opm_file

DATA = Path(__file__).parent / "data"
EXAMPLE1 = DATA / "example1.opm"


@pytest.fixture(scope="session")
def example1_opm():
    return load_opm_file(str(EXAMPLE1))


@pytest.fixture()
def example1_tpm(example1_opm):
    graph, _ = convert(example1_opm)
    return graph


@pytest.fixture()
def example1_engine(example1_tpm):
    return Engine(example1_tpm)


def grow_to(target: TpmGraph, full: TpmGraph, t: int) -> set:
    """Copy into target every node/edge of full that exists by time t.

    A node exists at its anchor; an edge once both endpoints do. Returns the
    ids touched, for feeding notify_change.
    """
    changed: set = set()
    nodes = sorted(
        (n for n in full.nodes() if n.anchor() <= t and n.node_id not in target),
        key=lambda n: (n.anchor(), n.node_id),
    )
    for node in nodes:
        target.add_node(node.copy())
        changed.add(node.node_id)
    for edge in sorted(full.edges, key=lambda e: e.key()):
        if edge.from_id in target and edge.to_id in target and not target.has_edge(
            edge.from_id, edge.relation, edge.to_id
        ):
            target.add_edge(edge)
            changed.add(edge.from_id)
            changed.add(edge.to_id)
    return changed
