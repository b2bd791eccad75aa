"""System dependence graph construction over the parsed program model.

Per function: a control-flow graph, reaching definitions over it, data
edges for surviving def-use pairs, and control edges from each branch or
loop header to the statements in its syntactic scope.  Across functions:
call edges from callsites to callee entries and param edges from the
statements defining each argument to the callee's param-def nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

from .model import (
    DependenceGraph,
    ExternalInputSet,
    Program,
    StatementNode,
    node_id_for,
)
from .parser import (
    ForStmt,
    FunctionIR,
    IfStmt,
    NodeInfo,
    SimpleStmt,
    WhileStmt,
    iter_nodes,
    program_ir,
)

# Curated call targets that introduce externally controlled data or state.
# Extendable through configuration; this is only the default.
DEFAULT_EXTERNAL_FUNCTIONS = frozenset({
    "malloc", "calloc", "realloc", "free",
    "read", "fread", "fgets", "gets", "scanf", "fscanf",
    "recv", "recvfrom", "getenv", "socket_recv",
})


@dataclass(frozen=True)
class FunctionFlow:
    """Intra-function flow facts used to assemble the SDG."""

    name: str
    file: str
    node_ids: Tuple[str, ...]                    # source order, entry first
    cfg_succ: Mapping[str, Tuple[str, ...]]
    control_scopes: Mapping[str, Tuple[str, ...]]  # header id -> governed ids
    infos: Mapping[str, NodeInfo]


def _nid(fn: FunctionIR, node: NodeInfo) -> str:
    return node_id_for(fn.file, node.line, node.col)


def build_function_flow(fn: FunctionIR) -> FunctionFlow:
    infos: Dict[str, NodeInfo] = {}
    order: List[str] = []
    for node in iter_nodes(fn):
        nid = _nid(fn, node)
        if nid in infos:
            raise ValueError(f"node id collision in {fn.name}: {nid}")
        infos[nid] = node
        order.append(nid)

    succ: Dict[str, Set[str]] = {nid: set() for nid in order}
    scopes: Dict[str, List[str]] = {}

    def link(preds: Sequence[str], target: str) -> None:
        for pred in preds:
            succ[pred].add(target)

    def subtree_ids(stmts) -> List[str]:
        ids: List[str] = []
        for stmt in stmts:
            if isinstance(stmt, SimpleStmt):
                ids.append(_nid(fn, stmt.node))
            elif isinstance(stmt, IfStmt):
                ids.append(_nid(fn, stmt.node))
                ids.extend(subtree_ids(stmt.then))
                ids.extend(subtree_ids(stmt.orelse))
            elif isinstance(stmt, WhileStmt):
                ids.append(_nid(fn, stmt.node))
                ids.extend(subtree_ids(stmt.body))
            elif isinstance(stmt, ForStmt):
                if stmt.init is not None:
                    ids.append(_nid(fn, stmt.init))
                ids.append(_nid(fn, stmt.node))
                if stmt.update is not None:
                    ids.append(_nid(fn, stmt.update))
                ids.extend(subtree_ids(stmt.body))
        return ids

    def wire(stmts, preds: List[str]) -> List[str]:
        current = preds
        for stmt in stmts:
            if isinstance(stmt, SimpleStmt):
                nid = _nid(fn, stmt.node)
                link(current, nid)
                current = [] if stmt.node.is_return else [nid]
            elif isinstance(stmt, IfStmt):
                nid = _nid(fn, stmt.node)
                link(current, nid)
                then_out = wire(stmt.then, [nid])
                governed = subtree_ids(stmt.then) + subtree_ids(stmt.orelse)
                scopes[nid] = governed
                if stmt.orelse:
                    else_out = wire(stmt.orelse, [nid])
                    current = then_out + else_out
                else:
                    current = then_out + [nid]
            elif isinstance(stmt, WhileStmt):
                nid = _nid(fn, stmt.node)
                link(current, nid)
                body_out = wire(stmt.body, [nid])
                link(body_out, nid)
                scopes[nid] = subtree_ids(stmt.body)
                current = [nid]
            elif isinstance(stmt, ForStmt):
                nid = _nid(fn, stmt.node)
                if stmt.init is not None:
                    init_id = _nid(fn, stmt.init)
                    link(current, init_id)
                    current = [init_id]
                link(current, nid)
                body_out = wire(stmt.body, [nid])
                governed = subtree_ids(stmt.body)
                if stmt.update is not None:
                    upd_id = _nid(fn, stmt.update)
                    link(body_out, upd_id)
                    link([upd_id], nid)
                    governed = governed + [upd_id]
                else:
                    link(body_out, nid)
                scopes[nid] = governed
                current = [nid]
            else:
                raise TypeError(stmt)
        return current

    # entry -> param defs -> body
    chain = [_nid(fn, fn.entry)]
    for param in fn.param_nodes:
        pid = _nid(fn, param)
        link(chain, pid)
        chain = [pid]
    wire(fn.body, chain)

    return FunctionFlow(
        name=fn.name,
        file=fn.file,
        node_ids=tuple(order),
        cfg_succ={nid: tuple(sorted(targets)) for nid, targets in succ.items()},
        control_scopes={nid: tuple(ids) for nid, ids in scopes.items()},
        infos=infos,
    )


def reaching_definitions(flow: FunctionFlow) -> Dict[str, FrozenSet[Tuple[str, str]]]:
    """IN sets of the classic reaching-definitions dataflow.

    Facts are ``(defining node id, variable)`` pairs.
    """
    gen: Dict[str, Set[Tuple[str, str]]] = {}
    kill_vars: Dict[str, FrozenSet[str]] = {}
    for nid in flow.node_ids:
        info = flow.infos[nid]
        gen[nid] = {(nid, var) for var in info.defs}
        kill_vars[nid] = info.defs

    preds: Dict[str, List[str]] = {nid: [] for nid in flow.node_ids}
    for src, targets in flow.cfg_succ.items():
        for dst in targets:
            preds[dst].append(src)

    in_sets: Dict[str, Set[Tuple[str, str]]] = {nid: set() for nid in flow.node_ids}
    out_sets: Dict[str, Set[Tuple[str, str]]] = {nid: set(gen[nid]) for nid in flow.node_ids}

    changed = True
    while changed:
        changed = False
        for nid in flow.node_ids:
            new_in: Set[Tuple[str, str]] = set()
            for pred in preds[nid]:
                new_in |= out_sets[pred]
            if new_in != in_sets[nid]:
                in_sets[nid] = new_in
            new_out = set(gen[nid]) | {
                fact for fact in new_in if fact[1] not in kill_vars[nid]
            }
            if new_out != out_sets[nid]:
                out_sets[nid] = new_out
                changed = True
    return {nid: frozenset(facts) for nid, facts in in_sets.items()}


def build_sdg(program: Program) -> DependenceGraph:
    """Assemble the interprocedural dependence graph for a parsed program.

    Calls to functions not defined in the program get no call or param
    edges; their return values act as plain definitions at the callsite.
    """
    flows = [build_function_flow(fn) for fn in program_ir(program)]
    flow_by_name = {flow.name: flow for flow in flows}

    nodes: List[StatementNode] = []
    for flow in flows:
        for nid in flow.node_ids:
            info = flow.infos[nid]
            nodes.append(
                StatementNode(
                    id=nid,
                    file=flow.file,
                    function=flow.name,
                    line=info.line,
                    text=info.text,
                    kind=info.kind,
                    defs=info.defs,
                    uses=info.uses,
                )
            )

    edges: Set[Tuple[str, str, str]] = set()
    entry_ids = {flow.name: flow.node_ids[0] for flow in flows}
    param_ids = {
        flow.name: [
            nid for nid in flow.node_ids if flow.infos[nid].kind == "param-def"
        ]
        for flow in flows
    }

    for flow in flows:
        in_sets = reaching_definitions(flow)
        for nid in flow.node_ids:
            info = flow.infos[nid]
            for var in info.uses:
                for def_id, def_var in in_sets[nid]:
                    if def_var == var:
                        edges.add((def_id, nid, "data"))
            for callee, arg_uses in info.calls:
                callee_flow = flow_by_name.get(callee)
                if callee_flow is None:
                    continue  # unresolved callsite: recorded, never an error
                edges.add((nid, entry_ids[callee], "call"))
                formals = param_ids[callee]
                for position, used in enumerate(arg_uses):
                    if position >= len(formals):
                        break
                    for var in used:
                        for def_id, def_var in in_sets[nid]:
                            if def_var == var:
                                edges.add((def_id, formals[position], "param"))
        for header, governed in flow.control_scopes.items():
            for target in governed:
                edges.add((header, target, "control"))

    return DependenceGraph.build(nodes, edges)


def identify_external_inputs(
    program: Program,
    graph: DependenceGraph,
    external_functions: Optional[FrozenSet[str]] = None,
) -> ExternalInputSet:
    """Callsites of curated external functions plus entry-point parameter
    definitions; the program entry point stands in for its input sites."""
    if external_functions is None:
        external_functions = DEFAULT_EXTERNAL_FUNCTIONS
    reasons: Dict[str, str] = {}
    for fn in program.functions:
        for callee, node_id in fn.callsites:
            if callee in external_functions:
                reasons[node_id] = "external-call"
    if program.entry_function is not None:
        entry_fn = program.function(program.entry_function)
        for node_id in entry_fn.statements:
            if graph.node(node_id).kind == "param-def":
                reasons[node_id] = "program-input-param"
    result = ExternalInputSet(reasons=reasons)
    result.validate_against(graph)
    return result
