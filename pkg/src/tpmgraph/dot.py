"""DOT (graphviz) export of TPM graphs and materialized nodes.

Node shapes follow the TPM notation: events are triangles, artifacts
circles, agents octagons, folder nodes boxes and path nodes dashed boxes.
happenedBefore and startedBefore edges are labeled with their weights.
"""

from __future__ import annotations

from .engine import MaterializedNode
from .graph import TpmGraph
from .model import NodeKind, NodeRecord, Relation, TpmError


class UnknownTargetError(TpmError):
    pass


_SHAPES = {
    NodeKind.EVENT: "triangle",
    NodeKind.ARTIFACT: "circle",
    NodeKind.AGENT: "octagon",
    NodeKind.FOLDER: "box",
    NodeKind.PATH: "box",
}


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _node_line(node: NodeRecord) -> str:
    shape = _SHAPES[node.kind]
    style = ' style=dashed' if node.kind == NodeKind.PATH else ""
    if node.is_container:
        label = f"{node.entity_id} ({node.start},{node.duration})"
    else:
        label = f"{node.entity_id}@{node.timestamp}"
    return f"  {_quote(node.node_id)} [shape={shape}{style} label={_quote(label)}];"


def _edge_line(edge) -> str:
    label = ""
    if edge.relation in (Relation.HAPPENED_BEFORE, Relation.STARTED_BEFORE):
        label = f' label="{edge.relation.value} ({edge.weight})"'
    else:
        label = f' label="{edge.relation.value}"'
    return f"  {_quote(edge.from_id)} -> {_quote(edge.to_id)} [{label.strip()}];"


def export_graph(graph: TpmGraph, name: str = "tpm") -> str:
    lines = [f"digraph {name} {{"]
    for node in sorted(graph.nodes(), key=lambda n: n.node_id):
        lines.append(_node_line(node))
    for edge in sorted(graph.edges, key=lambda e: e.key()):
        lines.append(_edge_line(edge))
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_materialized(graph: TpmGraph, mat: MaterializedNode) -> str:
    """The container plus its member subgraph (for path nodes: the path edges)."""
    container = graph.get(mat.node_id)
    if container is None:
        raise UnknownTargetError(f"no graph node for materialized {mat.name!r}")
    lines = [f"digraph {mat.name.replace('-', '_')} {{"]
    lines.append(_node_line(container))
    for member in sorted(mat.members):
        node = graph.get(member)
        if node is not None:
            lines.append(_node_line(node))
            lines.append(
                f"  {_quote(member)} -> {_quote(mat.node_id)} [label=\"isPartOf\" style=dotted];"
            )
    if mat.paths is not None:
        edges = sorted({e for p in mat.paths for e in p.edges}, key=lambda e: e.key())
    else:
        member_set = set(mat.members)
        edges = [
            e
            for e in sorted(graph.edges, key=lambda e: e.key())
            if e.from_id in member_set and e.to_id in member_set
        ]
    for edge in edges:
        lines.append(_edge_line(edge))
    lines.append("}")
    return "\n".join(lines) + "\n"
