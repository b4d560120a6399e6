"""Command-line front end.

Subcommands: load, convert, query, repl, export-dot, bench, tick.
State lives in a workspace directory whose manifest records a sha256
checksum for every file; opening a workspace re-verifies them.

Exit codes: 0 ok, 2 parse error, 3 validation errors, 4 query error,
5 I/O or workspace error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import bench as bench_mod
from .convert import convert
from .dot import UnknownTargetError, export_graph, export_materialized
from .engine import Engine, EvolutionDelta, MaterializedNode, PullMode
from .graph import TpmGraph
from .lineio import LineSyntaxError
from .model import EdgeRecord, NodeKind, Path, Relation, TpmError
from .opm import (
    OpmGraph,
    UnknownKindError,
    UnknownRelationError,
    parse_opm,
    serialize_opm,
    validate_opm,
)
from .query.parser import QuerySyntaxError, parse_query
from .tpmio import load_tpm, save_tpm

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_QUERY = 4
EXIT_IO = 5


class WorkspaceError(TpmError):
    pass


class Workspace:
    """Directory of graph files, materialized-node files and agent logs,

    indexed by a checksummed manifest.
    """

    MANIFEST = "manifest.json"

    def __init__(self, root: str) -> None:
        self.root = root
        self.manifest: dict[str, str] = {}
        if os.path.isdir(root):
            self._load_manifest()

    def _manifest_path(self) -> str:
        return os.path.join(self.root, self.MANIFEST)

    def _load_manifest(self) -> None:
        path = self._manifest_path()
        if not os.path.exists(path):
            return
        with open(path, "r", encoding="utf-8") as handle:
            self.manifest = json.load(handle).get("files", {})
        for rel, checksum in self.manifest.items():
            full = os.path.join(self.root, rel)
            if not os.path.exists(full):
                raise WorkspaceError(f"manifest lists {rel!r} but the file is missing")
            if _sha256(full) != checksum:
                raise WorkspaceError(f"checksum mismatch for {rel!r}; workspace corrupted")

    def write(self, rel: str, content: str) -> None:
        full = os.path.join(self.root, rel)
        os.makedirs(os.path.dirname(full) or self.root, exist_ok=True)
        with open(full, "w", encoding="utf-8") as handle:
            handle.write(content)
        self.manifest[rel] = _sha256(full)
        self._save_manifest()

    def read(self, rel: str) -> str:
        full = os.path.join(self.root, rel)
        if not os.path.exists(full):
            raise WorkspaceError(f"workspace has no {rel!r} (run the earlier steps first)")
        with open(full, "r", encoding="utf-8") as handle:
            return handle.read()

    def has(self, rel: str) -> bool:
        return os.path.exists(os.path.join(self.root, rel))

    def materialized_files(self) -> list[str]:
        directory = os.path.join(self.root, "materialized")
        if not os.path.isdir(directory):
            return []
        return sorted(
            os.path.join("materialized", f)
            for f in os.listdir(directory)
            if f.endswith(".json")
        )

    def _save_manifest(self) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(self._manifest_path(), "w", encoding="utf-8") as handle:
            json.dump({"files": dict(sorted(self.manifest.items()))}, handle, indent=1)
            handle.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# -- materialized node persistence ---------------------------------------------


def _mat_to_json(mat: MaterializedNode) -> str:
    paths = None
    if mat.paths is not None:
        paths = [
            {
                "nodes": list(p.nodes),
                "edges": [[e.from_id, e.relation.value, e.to_id, e.weight] for e in p.edges],
            }
            for p in mat.paths
        ]
    payload = {
        "name": mat.name,
        "kind": mat.kind.value,
        "query": mat.query_text,
        "members": sorted(mat.members),
        "paths": paths,
        "log": [
            {
                "at": d.at,
                "added": sorted(d.added),
                "removed": sorted(d.removed),
                "agent": d.agent_id,
            }
            for d in mat.log
        ],
        "warnings": mat.warnings,
    }
    return json.dumps(payload, indent=1) + "\n"


def _mat_from_json(text: str) -> MaterializedNode:
    payload = json.loads(text)
    paths = None
    if payload.get("paths") is not None:
        paths = [
            Path(
                tuple(p["nodes"]),
                tuple(
                    EdgeRecord(f, t, Relation(r), w) for f, r, t, w in p["edges"]
                ),
            )
            for p in payload["paths"]
        ]
    mat = MaterializedNode(
        name=payload["name"],
        kind=NodeKind(payload["kind"]),
        query=parse_query(payload["query"]),
        members=set(payload["members"]),
        paths=paths,
        query_text=payload["query"],
        warnings=payload.get("warnings", []),
    )
    mat.log = [
        EvolutionDelta(
            entry["at"], frozenset(entry["added"]), frozenset(entry["removed"]), entry["agent"]
        )
        for entry in payload["log"]
    ]
    return mat


def _load_engine(workspace: Workspace) -> Engine:
    graph = load_tpm(workspace.read("graph.tpm"))
    engine = Engine(graph)
    for rel in workspace.materialized_files():
        engine.adopt(_mat_from_json(workspace.read(rel)))
    return engine


def _persist_engine(workspace: Workspace, engine: Engine) -> None:
    workspace.write("graph.tpm", save_tpm(engine.graph))
    for mat in engine.materialized.values():
        workspace.write(os.path.join("materialized", f"{mat.name}.json"), _mat_to_json(mat))
    log = engine.export_evolution_log()
    if log:
        workspace.write("agents.log", log + "\n")


# -- subcommands ------------------------------------------------------------------


def cmd_load(args: argparse.Namespace) -> int:
    workspace = Workspace(args.workspace)
    try:
        with open(args.file, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.file.endswith(".tpm"):
        try:
            graph = load_tpm(text)
        except TpmError as exc:
            print(f"parse error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        workspace.write("graph.tpm", save_tpm(graph))
        print(f"loaded TPM graph: {len(graph)} nodes, {len(graph.edges)} edges")
        return EXIT_OK
    try:
        opm = parse_opm(text)
    except (LineSyntaxError, UnknownKindError, UnknownRelationError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    report = validate_opm(opm)
    counts = opm.counts()
    print(
        f"{counts['artifacts']} artifacts, {counts['processes']} processes, "
        f"{counts['agents']} agents, {counts['edges']} edges"
    )
    print(report.format())
    workspace.write("graph.opm", serialize_opm(opm))
    if report.errors:
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_convert(args: argparse.Namespace) -> int:
    workspace = Workspace(args.workspace)
    if workspace.has("graph.tpm") and not args.force:
        print("workspace already converted; use --force to overwrite", file=sys.stderr)
        return EXIT_IO
    opm = parse_opm(workspace.read("graph.opm"))
    report = validate_opm(opm)
    if report.errors:
        print(report.format(), file=sys.stderr)
        return EXIT_VALIDATION
    graph, conversion = convert(opm, strict=False)
    workspace.write("graph.tpm", save_tpm(graph))
    print(conversion.format())
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    workspace = Workspace(args.workspace)
    engine = _load_engine(workspace)
    if args.expression is not None:
        text = args.expression
    else:
        with open(args.file, "r", encoding="utf-8") as handle:
            text = handle.read()
    try:
        result = engine.execute(text, now=args.now)
    except QuerySyntaxError as exc:
        print(f"query error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    except TpmError as exc:
        print(f"query error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    _print_result(result)
    _persist_engine(workspace, engine)
    return EXIT_OK


def _print_result(result) -> None:
    if isinstance(result, MaterializedNode):
        if result.paths is not None:
            print(f"{result.name} (path, {len(result.paths)} paths)")
        else:
            print(f"{result.name} (folder, {len(result.members)} members)")
        for warning in result.warnings:
            print(f"warning: {warning}")
    else:
        print(result.to_tsv())


def cmd_repl(args: argparse.Namespace) -> int:
    workspace = Workspace(args.workspace)
    engine = _load_engine(workspace)
    interactive = sys.stdin.isatty()
    buffer: list[str] = []
    if interactive:
        print("tpm repl; \\list, \\evolution <name> <t>, \\tick <t>, \\quit")
    while True:
        if interactive:
            sys.stdout.write("tpm> " if not buffer else "...> ")
            sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:
            break
        stripped = line.strip()
        if not buffer and stripped.startswith("\\"):
            if not _repl_command(engine, workspace, stripped):
                break
            continue
        if not stripped and not buffer:
            continue
        buffer.append(line)
        statement = "".join(buffer)
        if _balanced(statement):
            buffer.clear()
            try:
                result = engine.execute(statement)
                _print_result(result)
                _persist_engine(workspace, engine)
            except TpmError as exc:
                print(f"error: {exc}")
    return EXIT_OK


def _repl_command(engine: Engine, workspace: Workspace, line: str) -> bool:
    parts = line.split()
    command = parts[0]
    try:
        if command in ("\\quit", "\\q"):
            return False
        if command == "\\list":
            for name in sorted(engine.materialized):
                mat = engine.materialized[name]
                if mat.paths is not None:
                    print(f"{name} (path, {len(mat.paths)} paths)")
                else:
                    print(f"{name} (folder, {len(mat.members)} members)")
        elif command == "\\evolution":
            name, t = parts[1], int(parts[2].lstrip("t"))
            subgraph = engine.evolution_at(name, t)
            for node_id in sorted(n.node_id for n in subgraph.nodes()):
                print(node_id)
        elif command == "\\tick":
            t = int(parts[1].lstrip("t"))
            deltas = _tick_engine(engine, t)
            for delta in deltas:
                print(delta.format())
            _persist_engine(workspace, engine)
        else:
            print(f"unknown command {command}")
    except (TpmError, ValueError, IndexError) as exc:
        print(f"error: {exc}")
    return True


def _tick_engine(engine: Engine, now: int) -> list[EvolutionDelta]:
    for name in sorted(engine.materialized):
        mat = engine.materialized[name]
        node = engine.graph.get(mat.node_id)
        agent_id = f"agent:{name}"
        if node is not None and node.timed and agent_id not in engine.agents:
            engine.register(name, PullMode(1), now=now - 1)
    return engine.tick(now)


def _balanced(text: str) -> bool:
    depth_round = depth_brace = 0
    in_quote: str | None = None
    for ch in text:
        if in_quote:
            if ch == "'" :
                in_quote = None
            continue
        if ch in ("'", "`"):
            in_quote = "'"
        elif ch == "(":
            depth_round += 1
        elif ch == ")":
            depth_round -= 1
        elif ch == "{":
            depth_brace += 1
        elif ch == "}":
            depth_brace -= 1
    return depth_round <= 0 and depth_brace <= 0 and ("{" in text or "(" in text)


def cmd_export_dot(args: argparse.Namespace) -> int:
    workspace = Workspace(args.workspace)
    engine = _load_engine(workspace)
    try:
        if args.target == "graph":
            dot = export_graph(engine.graph)
        else:
            mat = engine.materialized.get(args.target)
            if mat is None:
                raise UnknownTargetError(f"no materialized node named {args.target!r}")
            dot = export_materialized(engine.graph, mat)
    except TpmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    try:
        if args.out == "-":
            sys.stdout.write(dot)
        else:
            with open(args.out, "w", encoding="utf-8") as handle:
                handle.write(dot)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s != ""]
    report = bench_mod.run_bench(sizes, args.seed, max_path_len=args.max_path_len)
    print(report.format())
    return EXIT_OK


def cmd_tick(args: argparse.Namespace) -> int:
    workspace = Workspace(args.workspace)
    engine = _load_engine(workspace)
    deltas = _tick_engine(engine, args.now)
    for delta in deltas:
        print(delta.format())
    _persist_engine(workspace, engine)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpm", description="temporal provenance graph engine"
    )
    parser.add_argument(
        "--workspace", default="tpm_workspace", help="workspace directory (default: %(default)s)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_load = sub.add_parser("load", help="load an .opm or .tpm graph file")
    p_load.add_argument("file")
    p_load.set_defaults(func=cmd_load)

    p_convert = sub.add_parser("convert", help="convert the loaded OPM graph to TPM")
    p_convert.add_argument("--force", action="store_true")
    p_convert.set_defaults(func=cmd_convert)

    p_query = sub.add_parser("query", help="run a query file or -e expression")
    p_query.add_argument("file", nargs="?")
    p_query.add_argument("-e", "--expression")
    p_query.add_argument("--now", type=int, default=None)
    p_query.set_defaults(func=cmd_query)

    p_repl = sub.add_parser("repl", help="interactive query loop")
    p_repl.set_defaults(func=cmd_repl)

    p_dot = sub.add_parser("export-dot", help="export the graph or a materialized node")
    p_dot.add_argument("target", help="'graph' or a materialized node name")
    p_dot.add_argument("-o", "--out", default="-")
    p_dot.set_defaults(func=cmd_export_dot)

    p_bench = sub.add_parser("bench", help="synthetic OPM-vs-TPM benchmark")
    p_bench.add_argument("--sizes", default="1000,2000,4000")
    p_bench.add_argument("--seed", type=int, default=7)
    p_bench.add_argument("--max-path-len", type=int, default=6)
    p_bench.set_defaults(func=cmd_bench)

    p_tick = sub.add_parser("tick", help="advance timed nodes to a logical time")
    p_tick.add_argument("now", type=int)
    p_tick.set_defaults(func=cmd_tick)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WorkspaceError as exc:
        print(f"workspace error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QuerySyntaxError as exc:
        print(f"query error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    except (LineSyntaxError, UnknownKindError, UnknownRelationError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except TpmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
