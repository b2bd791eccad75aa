"""Graph-interchange JSON: admit graphs built by industrial frontends.

One document, two arrays::

    {"nodes": [{"id", "file", "function", "line", "text", "kind"}, ...],
     "edges": [{"src", "dst", "kind"}, ...]}

Validation failures carry the JSON path of the offending field.
"""

from __future__ import annotations

import json
import re
from typing import Any, Dict, List, Tuple

from .model import (
    EDGE_KINDS,
    STATEMENT_KINDS,
    DependenceGraph,
    FunctionDef,
    GraphFormatError,
    Program,
    StatementNode,
)


def export_graph(graph: DependenceGraph) -> Dict[str, Any]:
    """Serialize a graph to the interchange document shape."""
    nodes = []
    for nid in graph.sorted_node_ids():
        node = graph.nodes[nid]
        nodes.append({
            "id": node.id,
            "file": node.file,
            "function": node.function,
            "line": node.line,
            "text": node.text,
            "kind": node.kind,
        })
    edges = [
        {"src": src, "dst": dst, "kind": kind}
        for src, dst, kind in sorted(graph.edges)
    ]
    return {"nodes": nodes, "edges": edges}


def dump_graph(graph: DependenceGraph) -> str:
    return json.dumps(export_graph(graph), indent=2, sort_keys=True) + "\n"


def _require(value: Any, typ, path: str, describe: str) -> Any:
    if typ is int and isinstance(value, bool):
        raise GraphFormatError(f"expected {describe}", path)
    if not isinstance(value, typ):
        raise GraphFormatError(f"expected {describe}", path)
    return value


def _field(obj: Dict[str, Any], name: str, typ, path: str, describe: str) -> Any:
    if name not in obj:
        raise GraphFormatError("missing required field", f"{path}.{name}")
    return _require(obj[name], typ, f"{path}.{name}", describe)


def import_graph(document: Any) -> Tuple[Program, DependenceGraph]:
    """Validate an interchange document and rebuild (Program, graph).

    Node texts and line numbers are preserved verbatim.  Accepts either a
    parsed document or its JSON text.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"not valid JSON: {exc.msg}", "$") from exc
    _require(document, dict, "$", "an object")
    raw_nodes = _field(document, "nodes", list, "$", "an array")
    raw_edges = _field(document, "edges", list, "$", "an array")

    nodes: List[StatementNode] = []
    seen = set()
    for i, item in enumerate(raw_nodes):
        path = f"$.nodes[{i}]"
        _require(item, dict, path, "an object")
        node_id = _field(item, "id", str, path, "a string")
        if node_id in seen:
            raise GraphFormatError(f"duplicate node id {node_id!r}", f"{path}.id")
        seen.add(node_id)
        file = _field(item, "file", str, path, "a string")
        function = _field(item, "function", str, path, "a string")
        line = _field(item, "line", int, path, "an integer")
        if line < 1:
            raise GraphFormatError("line must be >= 1", f"{path}.line")
        text = _field(item, "text", str, path, "a string")
        kind = _field(item, "kind", str, path, "a string")
        if kind not in STATEMENT_KINDS:
            raise GraphFormatError(
                f"kind must be one of {', '.join(STATEMENT_KINDS)}", f"{path}.kind"
            )
        nodes.append(StatementNode(
            id=node_id, file=file, function=function,
            line=line, text=text, kind=kind,
        ))

    by_id = {node.id: node for node in nodes}
    edges = []
    for i, item in enumerate(raw_edges):
        path = f"$.edges[{i}]"
        _require(item, dict, path, "an object")
        src = _field(item, "src", str, path, "a string")
        dst = _field(item, "dst", str, path, "a string")
        kind = _field(item, "kind", str, path, "a string")
        if kind not in EDGE_KINDS:
            raise GraphFormatError(
                f"kind must be one of {'|'.join(EDGE_KINDS)}", f"{path}.kind"
            )
        if src not in by_id:
            raise GraphFormatError(f"dangling edge: unknown node {src!r}", f"{path}.src")
        if dst not in by_id:
            raise GraphFormatError(f"dangling edge: unknown node {dst!r}", f"{path}.dst")
        edges.append((src, dst, kind))

    graph = DependenceGraph.build(nodes, edges)
    program = _reconstruct_program(graph)
    return program, graph


def _reconstruct_program(graph: DependenceGraph) -> Program:
    """Best-effort Program for an imported graph.

    Source text is synthesized per line from node texts, which is enough
    for slice rendering; parameters come from param-def nodes and
    callsites from call edges.
    """
    by_function: Dict[str, List[StatementNode]] = {}
    for nid in graph.sorted_node_ids():
        node = graph.nodes[nid]
        by_function.setdefault(node.function, []).append(node)

    entry_of = {}
    for name, members in by_function.items():
        for node in members:
            if node.kind == "entry":
                entry_of[node.id] = name

    calls_at_node: Dict[str, List[str]] = {}
    for src, dst, kind in sorted(graph.edges):
        if kind == "call" and dst in entry_of:
            calls_at_node.setdefault(src, []).append(entry_of[dst])

    # Call edges only exist for callees defined in the graph; callsites of
    # library functions are recovered from the statement text.
    call_pattern = re.compile(r"\b([A-Za-z_][A-Za-z0-9_]*)\s*\(")
    non_calls = {"if", "while", "for", "return", "sizeof", "switch"}
    for nid in graph.sorted_node_ids():
        node = graph.nodes[nid]
        if node.kind in ("entry", "param-def"):
            continue
        known = calls_at_node.setdefault(nid, [])
        for name in call_pattern.findall(node.text):
            if name not in non_calls and name not in known:
                known.append(name)

    callsites_by_function: Dict[str, List[Tuple[str, str]]] = {
        name: [] for name in by_function
    }
    for nid in graph.sorted_node_ids():
        for callee in calls_at_node.get(nid, ()):
            caller = graph.nodes[nid].function
            callsites_by_function.setdefault(caller, []).append((callee, nid))

    functions = []
    for name, members in sorted(by_function.items()):
        params = tuple(
            node.text for node in members if node.kind == "param-def"
        )
        functions.append(FunctionDef(
            name=name,
            file=members[0].file,
            params=params,
            statements=tuple(node.id for node in members),
            callsites=tuple(callsites_by_function.get(name, ())),
            start_line=min(node.line for node in members),
            end_line=max(node.line for node in members),
        ))

    files: Dict[str, Dict[int, str]] = {}
    for nid in graph.sorted_node_ids():
        node = graph.nodes[nid]
        files.setdefault(node.file, {})
        files[node.file].setdefault(node.line, node.text)
    file_texts = []
    for path in sorted(files):
        line_map = files[path]
        top = max(line_map)
        lines = [line_map.get(i, "") for i in range(1, top + 1)]
        file_texts.append((path, "\n".join(lines)))

    names = {fn.name for fn in functions}
    called = set()
    for fn in functions:
        for callee, _ in fn.callsites:
            if callee in names:
                called.add(callee)
    roots = [fn.name for fn in functions if fn.name not in called]
    if "main" in names:
        entry = "main"
    elif len(roots) == 1:
        entry = roots[0]
    else:
        entry = None

    return Program(
        files=tuple(file_texts),
        functions=tuple(functions),
        entry_function=entry,
    )
