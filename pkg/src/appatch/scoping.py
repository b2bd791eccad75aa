"""Vulnerability-focused slicing over the dependence graph.

The slice for a (vulnerable statement, external input) pair is the set of
nodes lying on a dependence path from the input to the statement; the
overall result unions these over every pair, so statements no external
input can influence stay out of scope.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Set, Tuple

from .code_model.model import DependenceGraph, ExternalInputSet, Program

log = logging.getLogger(__name__)

_CWE_PATTERN = re.compile(r"^CWE-\d+$")


class ScopingError(Exception):
    """Raised when slicing inputs do not resolve against the graph."""


@dataclass(frozen=True)
class VulnSpec:
    """Where a vulnerability manifests and what kind it is."""

    vulnerable_lines: Tuple[Tuple[str, int], ...]   # (file, 1-based line)
    cwe_ids: Tuple[str, ...]

    def __post_init__(self):
        if not self.vulnerable_lines:
            raise ValueError("at least one vulnerable line is required")
        for cwe in self.cwe_ids:
            if not _CWE_PATTERN.match(cwe):
                raise ValueError(f"bad CWE id: {cwe!r}")


@dataclass(frozen=True)
class SliceResult:
    """Union slice plus bookkeeping about what produced each node."""

    node_ids: FrozenSet[str]
    sv_ids: FrozenSet[str]
    ei_ids: FrozenSet[str]           # external inputs inside the slice
    provenance: Mapping[str, FrozenSet[Tuple[str, str]]]  # node -> (sv, ei) pairs
    fallback: bool = False

    def __post_init__(self):
        if not self.sv_ids <= self.node_ids:
            raise ValueError("sv_ids must be a subset of node_ids")
        if not self.ei_ids <= self.node_ids:
            raise ValueError("ei_ids must be a subset of node_ids")

    def to_document(self, graph: DependenceGraph) -> Dict[str, object]:
        return {
            "nodes": sorted(self.node_ids, key=graph.sort_key),
            "sv": sorted(self.sv_ids, key=graph.sort_key),
            "ei": sorted(self.ei_ids, key=graph.sort_key),
            "fallback": self.fallback,
        }


@dataclass(frozen=True)
class RenderedSlice:
    """Slice text restricted to a demanded function set.

    ``text`` lists each surviving source line once, prefixed with its
    original line number, grouped per file and ordered by line.
    """

    text: str
    included_functions: FrozenSet[str]
    listed_ei: FrozenSet[str]
    empty: bool = False


def forward_reachable(graph: DependenceGraph, start: str) -> Set[str]:
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for succ, _kind in graph.successors(node):
            if succ not in seen:
                seen.add(succ)
                stack.append(succ)
    return seen


def backward_reachable(graph: DependenceGraph, start: str) -> Set[str]:
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for pred, _kind in graph.predecessors(node):
            if pred not in seen:
                seen.add(pred)
                stack.append(pred)
    return seen


def pair_slice(graph: DependenceGraph, sv: str, ei: str) -> FrozenSet[str]:
    """Nodes on some dependence path from ``ei`` to ``sv``.

    Reachability is reflexive, so ``sv == ei`` yields that single node.
    Empty when no path connects the pair.
    """
    graph.node(sv)
    graph.node(ei)
    forward = forward_reachable(graph, ei)
    if sv not in forward:
        return frozenset()
    backward = backward_reachable(graph, sv)
    return frozenset(forward & backward) | {sv, ei}


def resolve_vulnerable_nodes(
    graph: DependenceGraph, spec: VulnSpec
) -> FrozenSet[str]:
    """Map the given (file, line) pairs to node ids; all nodes on a line count."""
    resolved: Set[str] = set()
    missing: List[str] = []
    for file, line in spec.vulnerable_lines:
        hits = graph.nodes_at(file, line)
        if not hits:
            missing.append(f"{file}:{line}")
        resolved.update(hits)
    if missing:
        raise ScopingError(
            "vulnerable lines resolve to no graph node: " + ", ".join(missing)
        )
    return frozenset(resolved)


def vulnerability_semantics(
    graph: DependenceGraph,
    spec: VulnSpec,
    ei: ExternalInputSet,
) -> SliceResult:
    """Union of pair slices over every (external input, vulnerable node) pair.

    Resolved vulnerable nodes are always kept.  When no external input
    reaches any of them the full backward closure is used instead and the
    result is flagged as a fallback.
    """
    sv_ids = resolve_vulnerable_nodes(graph, spec)
    provenance: Dict[str, Set[Tuple[str, str]]] = {}
    union: Set[str] = set()
    for ei_id in sorted(ei.ids):
        for sv_id in sorted(sv_ids):
            members = pair_slice(graph, sv_id, ei_id)
            union |= members
            for node in members:
                provenance.setdefault(node, set()).add((sv_id, ei_id))

    fallback = not union
    if fallback:
        log.warning(
            "no external input reaches any vulnerable node; "
            "falling back to the backward closure of %d node(s)", len(sv_ids)
        )
        for sv_id in sorted(sv_ids):
            union |= backward_reachable(graph, sv_id)
    union |= sv_ids

    return SliceResult(
        node_ids=frozenset(union),
        sv_ids=sv_ids,
        ei_ids=frozenset(ei.ids & union),
        provenance={
            node: frozenset(pairs) for node, pairs in sorted(provenance.items())
        },
        fallback=fallback,
    )


def render_slice(
    result: SliceResult,
    program: Program,
    graph: DependenceGraph,
    functions: Iterable[str],
) -> RenderedSlice:
    """Project the slice onto a function set as numbered source text.

    Each included function contributes its signature line plus the slice
    lines it owns; external inputs outside the requested functions are
    dropped from ``listed_ei``.
    """
    wanted = frozenset(functions)
    if not wanted:
        raise ValueError("functions must be non-empty")

    lines: Set[Tuple[str, int]] = set()
    included: Set[str] = set()
    for node_id in result.node_ids:
        node = graph.node(node_id)
        if node.function in wanted:
            lines.add((node.file, node.line))
            included.add(node.function)

    empty = not lines
    if empty:
        log.warning("slice does not intersect functions %s", sorted(wanted))

    for fn in program.functions:
        if fn.name in included:
            lines.add((fn.file, fn.start_line))

    by_file: Dict[str, List[int]] = {}
    for file, line in lines:
        by_file.setdefault(file, []).append(line)

    chunks: List[str] = []
    for file in sorted(by_file):
        for line in sorted(set(by_file[file])):
            text = program.source_line(file, line)
            if text is None:
                candidates = graph.nodes_at(file, line)
                text = graph.node(candidates[0]).text if candidates else ""
            chunks.append(f"{line}: {text.rstrip()}")

    listed_ei = frozenset(
        node_id for node_id in result.ei_ids
        if graph.node(node_id).function in included
    )
    return RenderedSlice(
        text="\n".join(chunks),
        included_functions=frozenset(included),
        listed_ei=listed_ei,
        empty=empty,
    )


def functions_containing(graph: DependenceGraph, node_ids: Iterable[str]) -> FrozenSet[str]:
    return frozenset(graph.node(nid).function for nid in node_ids)
