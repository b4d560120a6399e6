"""Temporal provenance graphs: storage, OPM conversion, querying and

change-aware materialization of timed folder/path nodes.
"""

from .convert import ConversionReport, convert, expand_agents, expand_artifacts, expand_processes
from .engine import (
    AgentRegistration,
    DuplicateRegistrationError,
    Engine,
    EvolutionDelta,
    MaterializedNode,
    NotTimedError,
    PullMode,
    PushMode,
)
from .graph import TpmGraph
from .model import (
    CAUSAL_RELATIONS,
    EdgeRecord,
    NodeKind,
    NodeRecord,
    Path,
    Relation,
    Timestamp,
    TpmError,
)
from .opm import OpmEdge, OpmGraph, OpmKind, OpmNode, OpmRelation, parse_opm, serialize_opm, validate_opm
from .query import parse_path_regex, parse_query, resolve_time_keyword
from .query.eval import BindingSet, eval_select, interval_time_filter, time_filter
from .reachability import ClosureMatrix, eliminate_cycles, oracle_match, transitive_closure, traverse_paths
from .tpmio import load_tpm, save_tpm

__all__ = [
    "AgentRegistration",
    "BindingSet",
    "CAUSAL_RELATIONS",
    "ClosureMatrix",
    "ConversionReport",
    "DuplicateRegistrationError",
    "EdgeRecord",
    "Engine",
    "EvolutionDelta",
    "MaterializedNode",
    "NodeKind",
    "NodeRecord",
    "NotTimedError",
    "OpmEdge",
    "OpmGraph",
    "OpmKind",
    "OpmNode",
    "OpmRelation",
    "Path",
    "PullMode",
    "PushMode",
    "Relation",
    "Timestamp",
    "TpmError",
    "TpmGraph",
    "convert",
    "eliminate_cycles",
    "eval_select",
    "expand_agents",
    "expand_artifacts",
    "expand_processes",
    "interval_time_filter",
    "load_tpm",
    "oracle_match",
    "parse_opm",
    "parse_path_regex",
    "parse_query",
    "resolve_time_keyword",
    "save_tpm",
    "serialize_opm",
    "time_filter",
    "transitive_closure",
    "traverse_paths",
    "validate_opm",
]
