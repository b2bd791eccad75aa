"""Program model: statements, functions, and the dependence graph they hang off.

Node identifiers are deterministic ``file:line:col`` strings so that two
parses of the same sources always produce the same graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

STATEMENT_KINDS = (
    "assign",
    "call",
    "branch",
    "loop-header",
    "return",
    "decl",
    "param-def",
    "entry",
)

EDGE_KINDS = ("data", "control", "call", "param")

EI_REASONS = ("external-call", "program-input-param")


class CodeModelError(Exception):
    """Base class for errors raised by the code model."""


class ParseError(CodeModelError):
    """Syntax error with a source location."""

    def __init__(self, message: str, file: str, line: int, col: int):
        super().__init__(f"{file}:{line}:{col}: {message}")
        self.message = message
        self.file = file
        self.line = line
        self.col = col


class UnsupportedConstructError(ParseError):
    """Input uses a construct outside the supported C subset."""

    def __init__(self, construct: str, file: str, line: int, col: int):
        super().__init__(f"unsupported construct: {construct}", file, line, col)
        self.construct = construct


class GraphFormatError(CodeModelError):
    """Graph-interchange document violates the schema.

    ``json_path`` points at the offending field, e.g. ``$.nodes[3].line``.
    """

    def __init__(self, message: str, json_path: str):
        super().__init__(f"{json_path}: {message}")
        self.message = message
        self.json_path = json_path


class UnknownNodeError(CodeModelError):
    """An operation referenced a node id absent from the graph."""

    def __init__(self, node_id: str):
        super().__init__(f"unknown node id: {node_id}")
        self.node_id = node_id


def node_id_for(file: str, line: int, col: int) -> str:
    return f"{file}:{line}:{col}"


@dataclass(frozen=True)
class StatementNode:
    """One statement-level vertex of the dependence graph."""

    id: str
    file: str
    function: str
    line: int
    text: str
    kind: str
    # Variables this node defines / uses; empty for imported graphs where
    # only the structural fields are known.
    defs: FrozenSet[str] = frozenset()
    uses: FrozenSet[str] = frozenset()

    def __post_init__(self):
        if self.kind not in STATEMENT_KINDS:
            raise ValueError(f"bad statement kind: {self.kind!r}")
        if self.line < 1:
            raise ValueError(f"line must be >= 1, got {self.line}")


@dataclass(frozen=True)
class FunctionDef:
    """A parsed function: its statement nodes plus call-graph info."""

    name: str
    file: str
    params: Tuple[str, ...]
    statements: Tuple[str, ...]          # node ids owned by this function
    callsites: Tuple[Tuple[str, str], ...]  # (callee name, node id)
    start_line: int
    end_line: int


@dataclass(frozen=True)
class Program:
    """A set of source files and the functions parsed out of them."""

    files: Tuple[Tuple[str, str], ...]   # (path, source text)
    functions: Tuple[FunctionDef, ...]
    entry_function: Optional[str] = None

    def __post_init__(self):
        names = [f.name for f in self.functions]
        if len(names) != len(set(names)):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate function names: {', '.join(dup)}")
        line_counts = {path: text.count("\n") + 1 for path, text in self.files}
        for fn in self.functions:
            limit = line_counts.get(fn.file)
            if limit is not None and fn.end_line > limit:
                raise ValueError(
                    f"function {fn.name} ends at line {fn.end_line}, "
                    f"but {fn.file} has only {limit} lines"
                )

    def function(self, name: str) -> FunctionDef:
        for fn in self.functions:
            if fn.name == name:
                return fn
        raise KeyError(name)

    def function_names(self) -> FrozenSet[str]:
        return frozenset(f.name for f in self.functions)

    def callers_of(self, callee: str) -> Tuple[str, ...]:
        """Names of functions containing a callsite of ``callee``, in definition order."""
        found = []
        for fn in self.functions:
            if any(name == callee for name, _ in fn.callsites) and fn.name not in found:
                found.append(fn.name)
        return tuple(found)

    def source_line(self, file: str, line: int) -> Optional[str]:
        for path, text in self.files:
            if path == file:
                lines = text.split("\n")
                if 1 <= line <= len(lines):
                    return lines[line - 1]
                return None
        return None


@dataclass(frozen=True)
class DependenceGraph:
    """Statement nodes plus typed dependence edges.

    An edge ``(u, v, kind)`` means v depends on u; slicing walks edges
    backward from the criterion and forward from the inputs.
    """

    nodes: Mapping[str, StatementNode]
    edges: FrozenSet[Tuple[str, str, str]]
    _succ: Dict[str, Tuple[Tuple[str, str], ...]] = field(
        default=None, repr=False, compare=False
    )
    _pred: Dict[str, Tuple[Tuple[str, str], ...]] = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        if self._succ is None or self._pred is None:
            succ: Dict[str, List[Tuple[str, str]]] = {nid: [] for nid in self.nodes}
            pred: Dict[str, List[Tuple[str, str]]] = {nid: [] for nid in self.nodes}
            for src, dst, kind in sorted(self.edges):
                succ[src].append((dst, kind))
                pred[dst].append((src, kind))
            object.__setattr__(self, "_succ", {k: tuple(v) for k, v in succ.items()})
            object.__setattr__(self, "_pred", {k: tuple(v) for k, v in pred.items()})

    @classmethod
    def build(
        cls,
        nodes: Iterable[StatementNode],
        edges: Iterable[Tuple[str, str, str]],
    ) -> "DependenceGraph":
        node_map = {}
        for node in nodes:
            if node.id in node_map:
                raise ValueError(f"duplicate node id: {node.id}")
            node_map[node.id] = node
        edge_set = set()
        for src, dst, kind in edges:
            if kind not in EDGE_KINDS:
                raise ValueError(f"bad edge kind: {kind!r}")
            if src not in node_map:
                raise ValueError(f"edge references missing node: {src}")
            if dst not in node_map:
                raise ValueError(f"edge references missing node: {dst}")
            edge_set.add((src, dst, kind))
        return cls(nodes=node_map, edges=frozenset(edge_set))

    def node(self, node_id: str) -> StatementNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def successors(self, node_id: str) -> Tuple[Tuple[str, str], ...]:
        self.node(node_id)
        return self._succ[node_id]

    def predecessors(self, node_id: str) -> Tuple[Tuple[str, str], ...]:
        self.node(node_id)
        return self._pred[node_id]

    def sorted_node_ids(self) -> List[str]:
        return sorted(self.nodes, key=lambda nid: self.sort_key(nid))

    def sort_key(self, node_id: str) -> Tuple[str, int, int]:
        node = self.node(node_id)
        col = int(node_id.rsplit(":", 1)[1]) if node_id.count(":") >= 2 else 0
        return (node.file, node.line, col)

    def nodes_at(self, file: str, line: int) -> List[str]:
        """All node ids attributed to a source line, in column order."""
        hits = [n for n in self.nodes.values() if n.file == file and n.line == line]
        return [n.id for n in sorted(hits, key=lambda n: self.sort_key(n.id))]


@dataclass(frozen=True)
class ExternalInputSet:
    """External-input sites: node id -> reason it qualifies."""

    reasons: Mapping[str, str]

    def __post_init__(self):
        for node_id, reason in self.reasons.items():
            if reason not in EI_REASONS:
                raise ValueError(f"bad EI reason for {node_id}: {reason!r}")

    @property
    def ids(self) -> FrozenSet[str]:
        return frozenset(self.reasons)

    def sorted_ids(self, graph: DependenceGraph) -> List[str]:
        return sorted(self.ids, key=graph.sort_key)

    def validate_against(self, graph: DependenceGraph) -> None:
        for node_id in self.reasons:
            graph.node(node_id)
