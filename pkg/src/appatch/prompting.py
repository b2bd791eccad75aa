"""Progressive root-cause generation, exemplar selection, and patch requests.

One sample's run is inherently sequential: the root-cause loop feeds the
selection step, which feeds the patch request.  Function context grows
only when the model demands it via the ``context_funcs`` format.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

from . import diffs
from .code_model.model import DependenceGraph, Program
from .exemplars import Exemplar, ExemplarPool
from .gateway import Exchange, GatewayError, Provider, prompt_sha
from .prompts import (
    build_comparison_prompt,
    build_patch_prompt,
    build_root_cause_prompt,
    parse_verdict,
    render_cwes,
    render_ei,
    render_lines,
    serialize_exemplar,
)
from .scoping import (
    RenderedSlice,
    SliceResult,
    VulnSpec,
    functions_containing,
    render_slice,
)

log = logging.getLogger(__name__)

MAX_EXEMPLARS = 8
DEFAULT_DEMAND_ROUNDS = 10

_DEMAND_RE = re.compile(r"\{\s*\"context_funcs\"")
_CALLER_PREFIX = "CALLER_of_"


class PromptingError(Exception):
    """A prompting stage could not produce its artifact."""


class NoPatchesError(PromptingError):
    """The patch response contained no parseable patch block."""


@dataclass(frozen=True)
class ContextDemand:
    """Functions the model asked for, after placeholder resolution."""

    requested: Tuple[str, ...]
    raw: Tuple[str, ...]


@dataclass(frozen=True)
class RootCause:
    """Final reasoning text plus the expansion history that produced it."""

    text: str
    iterations: int
    functions_used: FrozenSet[str]
    transcript: Tuple[Tuple[str, str], ...]   # (prompt digest, response digest)
    forced_final: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class CandidatePatch:
    """One model-proposed patch, as a diff against original file lines."""

    ordinal: int
    diff: str
    raw_block: str
    prompt_digest: str


def parse_context_demand(
    response: str,
    program: Program,
) -> Optional[ContextDemand]:
    """Extract the first ``{"context_funcs": [...]}`` object, if any.

    ``CALLER_of_<name>`` placeholders resolve to every caller of ``name``
    in the call graph; a malformed object yields no demand.
    """
    match = _DEMAND_RE.search(response)
    if not match:
        return None
    decoder = json.JSONDecoder()
    try:
        obj, _ = decoder.raw_decode(response, match.start())
    except json.JSONDecodeError:
        log.warning("context demand found but not parseable as JSON; ignoring")
        return None
    names = obj.get("context_funcs")
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        log.warning("context_funcs is not a list of names; ignoring")
        return None
    raw = tuple(names)
    requested: List[str] = []
    for name in names:
        if name.startswith(_CALLER_PREFIX):
            target = name[len(_CALLER_PREFIX):]
            callers = program.callers_of(target)
            if not callers:
                log.warning("no callers known for %s; skipping placeholder", target)
            for caller in callers:
                if caller not in requested:
                    requested.append(caller)
        elif name not in requested:
            requested.append(name)
    return ContextDemand(requested=tuple(requested), raw=raw)


def generate_root_cause(
    graph: DependenceGraph,
    program: Program,
    spec: VulnSpec,
    result: SliceResult,
    provider: Provider,
    max_rounds: int = DEFAULT_DEMAND_ROUNDS,
) -> Tuple[RootCause, RenderedSlice, List[Exchange]]:
    """Iteratively prompt for the root cause, growing the slice on demand.

    Starts from the functions holding the vulnerable statements.  Each
    demanded function is added at most once; unknown names are skipped
    with a warning.  The loop stops on a demand-free answer, when every
    function is already included, or at the round ceiling; the latter two
    force the last response and set ``forced_final``.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    functions = set(functions_containing(graph, result.sv_ids))
    all_functions = program.function_names()
    transcript: List[Tuple[str, str]] = []
    exchanges: List[Exchange] = []
    rendered = None
    response = ""

    for round_number in range(1, max_rounds + 1):
        rendered = render_slice(result, program, graph, functions)
        prompt = build_root_cause_prompt(
            slice_text=rendered.text,
            cwes=render_cwes(spec.cwe_ids),
            lines=render_lines(spec.vulnerable_lines),
            ei=render_ei(graph, rendered.listed_ei),
        )
        try:
            exchange = provider.complete(prompt)
        except GatewayError as exc:
            raise PromptingError(f"root-cause generation failed: {exc}") from exc
        exchanges.append(exchange)
        response = exchange.response
        transcript.append((prompt_sha(prompt), prompt_sha(response)))

        demand = parse_context_demand(response, program)
        if demand is None:
            return (
                RootCause(
                    text=response,
                    iterations=round_number,
                    functions_used=frozenset(functions),
                    transcript=tuple(transcript),
                ),
                rendered,
                exchanges,
            )
        if functions >= all_functions:
            log.warning(
                "model still demands context but every function is included; "
                "forcing the last answer"
            )
            return (
                RootCause(
                    text=response,
                    iterations=round_number,
                    functions_used=frozenset(functions),
                    transcript=tuple(transcript),
                    forced_final=True,
                ),
                rendered,
                exchanges,
            )
        for name in demand.requested:
            if name not in all_functions:
                log.warning("demanded function %r is not defined; skipping", name)
            elif name not in functions:
                functions.add(name)

    log.warning("demand loop hit the %d-round ceiling; forcing the last answer",
                max_rounds)
    return (
        RootCause(
            text=response,
            iterations=max_rounds,
            functions_used=frozenset(functions),
            transcript=tuple(transcript),
            forced_final=True,
        ),
        rendered,
        exchanges,
    )


def select_exemplars(
    root_cause: RootCause,
    pool: ExemplarPool,
    provider: Provider,
    cwe_filter: bool = False,
    cwe_ids: Sequence[str] = (),
    limit: int = MAX_EXEMPLARS,
) -> Tuple[List[Exemplar], List[Exchange]]:
    """Scan the pool in insertion order, keeping pairwise-similar exemplars.

    Every candidate costs one yes/no comparison; the scan stops as soon as
    ``limit`` exemplars are chosen.  Anything but a leading "yes" counts
    as no.
    """
    chosen: List[Exemplar] = []
    exchanges: List[Exchange] = []
    wanted = set(cwe_ids)
    for exemplar in pool:
        if cwe_filter and wanted and not (set(exemplar.cwe_ids) & wanted):
            continue
        prompt = build_comparison_prompt(exemplar.root_cause, root_cause.text)
        try:
            exchange = provider.complete(prompt)
        except GatewayError as exc:
            log.warning("comparison against %s failed (%s); treating as no",
                        exemplar.sample_id, exc)
            continue
        exchanges.append(exchange)
        if parse_verdict(exchange.response):
            chosen.append(exemplar)
            if len(chosen) >= limit:
                break
    return chosen, exchanges


_PATCH_BLOCK_RE = re.compile(
    r"Patch\s+(\d+)\s*:\s*```[^\n]*\n(.*?)```",
    re.DOTALL,
)


def _function_line_ranges(program: Program, functions: FrozenSet[str]):
    ranges = {}
    for fn in program.functions:
        if fn.name in functions:
            ranges.setdefault(fn.file, []).append((fn.start_line, fn.end_line))
    return ranges


def _hunks_inside(diff_text: str, ranges) -> bool:
    try:
        per_file = diffs.touched_lines(diff_text)
    except diffs.DiffError:
        return False
    for file, spans in per_file.items():
        allowed = ranges.get(file)
        if not allowed:
            return False
        for start, end in spans:
            if not any(lo <= start and end <= hi for lo, hi in allowed):
                return False
    return True


def generate_patches(
    exemplars: Sequence[Exemplar],
    rendered_slice: RenderedSlice,
    spec: VulnSpec,
    root_cause: RootCause,
    provider: Provider,
    program: Optional[Program] = None,
) -> Tuple[List[CandidatePatch], Exchange]:
    """Ask for five candidate patches and parse the fenced blocks.

    Blocks whose hunks stray outside the rendered functions are dropped;
    fewer than five survivors is a warning, zero is an error.
    """
    serialized = [
        serialize_exemplar(
            slice_text=ex.slice_text,
            cwes=render_cwes(ex.cwe_ids),
            lines=render_lines(ex.vulnerable_lines),
            root_cause=ex.root_cause,
            fixing_strategy=ex.fixing_strategy,
            ground_truth_patch=ex.ground_truth_patch,
        )
        for ex in exemplars
    ]
    prompt = build_patch_prompt(
        serialized_exemplars=serialized,
        slice_text=rendered_slice.text,
        cwes=render_cwes(spec.cwe_ids),
        lines=render_lines(spec.vulnerable_lines),
        root_cause=root_cause.text,
    )
    try:
        exchange = provider.complete(prompt)
    except GatewayError as exc:
        raise PromptingError(f"patch generation failed: {exc}") from exc

    digest = prompt_sha(prompt)
    ranges = (
        _function_line_ranges(program, rendered_slice.included_functions)
        if program is not None else None
    )
    patches: List[CandidatePatch] = []
    for match in _PATCH_BLOCK_RE.finditer(exchange.response):
        diff_text = match.group(2)
        if ranges is not None and not _hunks_inside(diff_text, ranges):
            log.warning("patch block %s references lines outside the rendered "
                        "functions; dropping it", match.group(1))
            continue
        patches.append(CandidatePatch(
            ordinal=len(patches) + 1,
            diff=diff_text,
            raw_block=match.group(0),
            prompt_digest=digest,
        ))
        if len(patches) == 5:
            break
    total_blocks = len(_PATCH_BLOCK_RE.findall(exchange.response))
    if total_blocks > 5:
        log.warning("response contained %d patch blocks; keeping the first 5",
                    total_blocks)
    if not patches:
        raise NoPatchesError("response contained no parseable patch block")
    if len(patches) < 5:
        log.warning("expected 5 patches, parsed %d", len(patches))
    return patches, exchange
