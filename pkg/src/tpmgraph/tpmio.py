"""Native TPM graph persistence.

Mirrors the OPM line format with the extra node kinds and the
(start, duration) fields of containers::

    node <id> <kind> t=<ticks> entity=<id> [timed=true|false] [key=value ...]
    node <id> folder start=<ticks> dur=<ticks> entity=<id> ...
    edge <from> <relation> <to> [w=<weight>]

Serialization is canonical (sorted nodes, then sorted edges) so saved
graphs diff cleanly and round-trip byte-identically.
"""

from __future__ import annotations

import io
from typing import BinaryIO, TextIO

from .graph import TpmGraph
from .lineio import LineSyntaxError, format_kv, parse_kv, quote, split_tokens
from .model import EdgeRecord, NodeKind, NodeRecord, Relation

_RESERVED_KEYS = {"t", "start", "dur", "entity", "timed", "w"}


def save_tpm(graph: TpmGraph) -> str:
    lines: list[str] = []
    for node in sorted(graph.nodes(), key=lambda n: n.node_id):
        parts = ["node", quote(node.node_id), node.kind.value]
        if node.is_container:
            parts.append(f"start={node.start}")
            parts.append(f"dur={node.duration}")
        else:
            parts.append(f"t={node.timestamp}")
        parts.append(format_kv("entity", node.entity_id))
        if node.is_container:
            parts.append(f"timed={'true' if node.timed else 'false'}")
        parts += [format_kv(k, v) for k, v in sorted(node.attributes.items())]
        lines.append(" ".join(parts))
    for edge in sorted(graph.edges, key=lambda e: (e.from_id, e.relation.value, e.to_id)):
        parts = ["edge", quote(edge.from_id), edge.relation.value, quote(edge.to_id)]
        if edge.weight is not None:
            parts.append(f"w={edge.weight}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def load_tpm(source: str | bytes | TextIO | BinaryIO) -> TpmGraph:
    """Parse the native format, re-validating every node and edge on the way in."""
    if not isinstance(source, (str, bytes)):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    graph = TpmGraph()
    pending_edges: list[tuple[EdgeRecord, int, int]] = []
    for line_no, raw in enumerate(source.splitlines(), start=1):
        tokens = split_tokens(raw, line_no)
        if not tokens:
            continue
        head, col = tokens[0]
        if head == "node":
            graph.add_node(_parse_node(tokens, line_no, col))
        elif head == "edge":
            if len(tokens) < 4:
                raise LineSyntaxError("edge lines need: edge <from> <relation> <to>", line_no, col)
            rel_token, rel_col = tokens[2]
            try:
                relation = Relation(rel_token)
            except ValueError:
                raise LineSyntaxError(f"unknown relation {rel_token!r}", line_no, rel_col) from None
            weight = None
            for token, tcol in tokens[4:]:
                kv = parse_kv(token)
                if kv is None or kv[0] != "w":
                    raise LineSyntaxError(f"unexpected token {token!r}", line_no, tcol)
                weight = _int(kv[1], line_no, tcol)
            pending_edges.append(
                (EdgeRecord(tokens[1][0], tokens[3][0], relation, weight), line_no, col)
            )
        else:
            raise LineSyntaxError(f"unknown directive {head!r}", line_no, col)
    for edge, line_no, col in pending_edges:
        graph.add_edge(edge)
    return graph


def _parse_node(tokens, line_no: int, col: int) -> NodeRecord:
    if len(tokens) < 3:
        raise LineSyntaxError("node lines need: node <id> <kind>", line_no, col)
    node_id = tokens[1][0]
    kind_token, kind_col = tokens[2]
    try:
        kind = NodeKind(kind_token)
    except ValueError:
        raise LineSyntaxError(f"unknown node kind {kind_token!r}", line_no, kind_col) from None
    timestamp = start = duration = None
    entity = None
    timed = False
    attributes: dict[str, str] = {}
    for token, tcol in tokens[3:]:
        kv = parse_kv(token)
        if kv is None:
            raise LineSyntaxError(f"expected key=value, got {token!r}", line_no, tcol)
        key, value = kv
        if key == "t":
            timestamp = _int(value, line_no, tcol)
        elif key == "start":
            start = _int(value, line_no, tcol)
        elif key == "dur":
            duration = _int(value, line_no, tcol)
        elif key == "entity":
            entity = value
        elif key == "timed":
            timed = value == "true"
        else:
            attributes[key] = value
    if entity is None:
        raise LineSyntaxError(f"node {node_id!r} is missing entity=", line_no, col)
    return NodeRecord(
        node_id=node_id,
        kind=kind,
        entity_id=entity,
        timestamp=timestamp,
        start=start,
        duration=duration,
        attributes=attributes,
        timed=timed,
    )


def _int(value: str, line_no: int, col: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise LineSyntaxError(f"expected an integer, got {value!r}", line_no, col) from None


def load_tpm_file(path: str) -> TpmGraph:
    with io.open(path, "rb") as handle:
        return load_tpm(handle)
