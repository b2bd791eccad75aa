"""Exemplar mining: turn known-patched samples into worked examples.

Each sample is sliced, prompted with its ground-truth patch attached, and
the response is split into root-cause reasoning and a fixing strategy.
The resulting pool feeds exemplar selection during patch generation.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

from . import diffs
from .code_model import build_sdg, import_graph, parse_program
from .code_model.model import DependenceGraph, Program
from .code_model.sdg import identify_external_inputs
from .gateway import GatewayError, Provider, prompt_sha
from .prompts import (
    build_mining_prompt,
    render_cwes,
    render_ei,
    render_lines,
)
from .scoping import (
    VulnSpec,
    forward_reachable,
    functions_containing,
    render_slice,
    vulnerability_semantics,
)

log = logging.getLogger(__name__)

_SECTION_RE = re.compile(
    r"ROOT CAUSE:\s*(?P<cause>.*?)\s*FIXING STRATEGY:\s*(?P<strategy>.*)\s*\Z",
    re.DOTALL,
)


class DatasetError(Exception):
    """A dataset record is malformed or inconsistent."""


class MiningError(Exception):
    """Mining one sample failed; carries the sample id."""

    def __init__(self, sample_id: str, message: str):
        super().__init__(f"sample {sample_id!r}: {message}")
        self.sample_id = sample_id


class MalformedResponseError(MiningError):
    """The provider's answer lacked the required sections."""


@dataclass(frozen=True)
class DatasetSample:
    """One vulnerable sample, with its fix when the dataset knows it."""

    id: str
    vuln: VulnSpec
    sources: Optional[Tuple[Tuple[str, str], ...]] = None
    graph_document: Optional[Mapping[str, Any]] = None
    ground_truth_patch: Optional[str] = None
    provenance: str = ""
    entry: Optional[str] = None

    def __post_init__(self):
        if (self.sources is None) == (self.graph_document is None):
            raise DatasetError(
                f"sample {self.id!r} needs exactly one of 'sources' or 'graph'"
            )

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "DatasetSample":
        try:
            sample_id = doc["id"]
            vuln_doc = doc["vuln"]
            vuln = VulnSpec(
                vulnerable_lines=tuple(
                    (str(file), int(line)) for file, line in vuln_doc["lines"]
                ),
                cwe_ids=tuple(vuln_doc.get("cwes", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad sample record: {exc}") from exc
        sources = doc.get("sources")
        if sources is not None:
            sources = tuple((str(path), str(text)) for path, text in sources)
        return cls(
            id=str(sample_id),
            vuln=vuln,
            sources=sources,
            graph_document=doc.get("graph"),
            ground_truth_patch=doc.get("ground_truth_patch"),
            provenance=str(doc.get("provenance", "")),
            entry=doc.get("entry"),
        )

    def to_document(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "id": self.id,
            "vuln": {
                "lines": [[file, line] for file, line in self.vuln.vulnerable_lines],
                "cwes": list(self.vuln.cwe_ids),
            },
        }
        if self.sources is not None:
            doc["sources"] = [[path, text] for path, text in self.sources]
        if self.graph_document is not None:
            doc["graph"] = self.graph_document
        if self.ground_truth_patch is not None:
            doc["ground_truth_patch"] = self.ground_truth_patch
        if self.provenance:
            doc["provenance"] = self.provenance
        if self.entry is not None:
            doc["entry"] = self.entry
        return doc

    def materialize(self) -> Tuple[Program, DependenceGraph]:
        if self.graph_document is not None:
            return import_graph(self.graph_document)
        program = parse_program(self.sources, entry=self.entry)
        return program, build_sdg(program)

    def check_patch_applies(self) -> None:
        """Load-time invariant: the known fix must apply to the sources."""
        if self.ground_truth_patch is None or not self.ground_truth_patch.strip():
            return
        if self.sources is None:
            log.debug("sample %s: graph-backed, skipping patch apply check", self.id)
            return
        try:
            diffs.apply_patch(dict(self.sources), self.ground_truth_patch)
        except (diffs.ApplyError, diffs.DiffError) as exc:
            raise DatasetError(
                f"sample {self.id!r}: ground-truth patch does not apply: {exc}"
            ) from exc


def load_dataset(path: Union[str, Path], require_patch: bool = True) -> List[DatasetSample]:
    """Read a JSON-lines dataset, checking each ground-truth patch applies."""
    samples: List[DatasetSample] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}, line {lineno}: not valid JSON: {exc.msg}")
            sample = DatasetSample.from_document(doc)
            if require_patch and sample.ground_truth_patch is None:
                raise DatasetError(
                    f"{path}, line {lineno}: sample {sample.id!r} has no ground-truth patch"
                )
            sample.check_patch_applies()
            samples.append(sample)
    ids = [s.id for s in samples]
    if len(ids) != len(set(ids)):
        raise DatasetError(f"{path}: duplicate sample ids")
    return samples


@dataclass(frozen=True)
class Exemplar:
    """A mined demonstration: slice, reasoning, strategy, and the real fix."""

    sample_id: str
    slice_text: str
    cwe_ids: Tuple[str, ...]
    vulnerable_lines: Tuple[Tuple[str, int], ...]
    root_cause: str
    fixing_strategy: str
    ground_truth_patch: str
    provider_id: str
    prompt_digest: str

    def __post_init__(self):
        if not self.root_cause.strip():
            raise ValueError("root_cause must be non-empty")
        if not self.fixing_strategy.strip():
            raise ValueError("fixing_strategy must be non-empty")

    def to_document(self) -> Dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "slice_text": self.slice_text,
            "cwe_ids": list(self.cwe_ids),
            "vulnerable_lines": [[f, l] for f, l in self.vulnerable_lines],
            "root_cause": self.root_cause,
            "fixing_strategy": self.fixing_strategy,
            "ground_truth_patch": self.ground_truth_patch,
            "provider_id": self.provider_id,
            "prompt_digest": self.prompt_digest,
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "Exemplar":
        return cls(
            sample_id=doc["sample_id"],
            slice_text=doc["slice_text"],
            cwe_ids=tuple(doc["cwe_ids"]),
            vulnerable_lines=tuple((f, int(l)) for f, l in doc["vulnerable_lines"]),
            root_cause=doc["root_cause"],
            fixing_strategy=doc["fixing_strategy"],
            ground_truth_patch=doc["ground_truth_patch"],
            provider_id=doc["provider_id"],
            prompt_digest=doc["prompt_digest"],
        )


class ExemplarPool:
    """Insertion-ordered exemplar collection with a CWE index."""

    def __init__(self, exemplars: Sequence[Exemplar] = ()):
        self._items: List[Exemplar] = []
        self._ids: set = set()
        self._by_cwe: Dict[str, List[Exemplar]] = {}
        for exemplar in exemplars:
            self.add(exemplar)

    def add(self, exemplar: Exemplar) -> None:
        if exemplar.sample_id in self._ids:
            raise ValueError(f"duplicate sample id in pool: {exemplar.sample_id!r}")
        self._ids.add(exemplar.sample_id)
        self._items.append(exemplar)
        for cwe in exemplar.cwe_ids:
            self._by_cwe.setdefault(cwe, []).append(exemplar)

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, ExemplarPool) and self._items == other._items

    def by_cwe(self, cwe: str) -> List[Exemplar]:
        return list(self._by_cwe.get(cwe, ()))

    @property
    def cwe_ids(self) -> FrozenSet[str]:
        return frozenset(self._by_cwe)


def mining_slice(
    sample: DatasetSample,
    external_functions: Optional[FrozenSet[str]] = None,
):
    """Slice a sample the way Phase 1 presents it.

    The rendered functions are those holding the vulnerable statements
    plus those holding external inputs that can influence the patched
    lines, so the example stays focused on what the fix actually touched.
    """
    program, graph = sample.materialize()
    ei = identify_external_inputs(program, graph, external_functions)
    result = vulnerability_semantics(graph, sample.vuln, ei)

    patch_nodes: set = set()
    if sample.ground_truth_patch:
        try:
            ranges = diffs.touched_lines(sample.ground_truth_patch)
        except diffs.DiffError:
            ranges = {}
        for file, spans in ranges.items():
            for start, end in spans:
                for node in graph.nodes.values():
                    if node.file == file and start <= node.line <= end:
                        patch_nodes.add(node.id)

    reaching_ei = frozenset(
        ei_id for ei_id in ei.ids
        if patch_nodes and (forward_reachable(graph, ei_id) & patch_nodes)
    )
    if not reaching_ei:
        reaching_ei = result.ei_ids

    functions = functions_containing(graph, result.sv_ids)
    functions |= functions_containing(graph, reaching_ei)
    rendered = render_slice(result, program, graph, functions)
    return program, graph, result, rendered, reaching_ei


def split_sections(response: str) -> Tuple[str, str]:
    match = _SECTION_RE.search(response)
    if not match:
        raise ValueError("response lacks ROOT CAUSE / FIXING STRATEGY sections")
    cause = match.group("cause").strip()
    strategy = match.group("strategy").strip()
    if not cause or not strategy:
        raise ValueError("response sections are empty")
    return cause, strategy


def mine_exemplar(
    sample: DatasetSample,
    provider: Provider,
    external_functions: Optional[FrozenSet[str]] = None,
) -> Exemplar:
    """Phase-1 mining of one sample; the ground-truth patch rides along."""
    if not sample.ground_truth_patch:
        raise MiningError(sample.id, "mining needs a ground-truth patch")
    program, graph, result, rendered, reaching_ei = mining_slice(
        sample, external_functions
    )
    prompt = build_mining_prompt(
        slice_text=rendered.text,
        cwes=render_cwes(sample.vuln.cwe_ids),
        lines=render_lines(sample.vuln.vulnerable_lines),
        patch=sample.ground_truth_patch,
        ei=render_ei(graph, reaching_ei),
    )
    try:
        exchange = provider.complete(prompt)
    except GatewayError as exc:
        raise MiningError(sample.id, f"provider failed: {exc}") from exc
    try:
        root_cause, fixing_strategy = split_sections(exchange.response)
    except ValueError as exc:
        raise MalformedResponseError(sample.id, str(exc)) from exc
    return Exemplar(
        sample_id=sample.id,
        slice_text=rendered.text,
        cwe_ids=sample.vuln.cwe_ids,
        vulnerable_lines=sample.vuln.vulnerable_lines,
        root_cause=root_cause,
        fixing_strategy=fixing_strategy,
        ground_truth_patch=sample.ground_truth_patch,
        provider_id=provider.id,
        prompt_digest=prompt_sha(prompt),
    )


@dataclass(frozen=True)
class MiningFailure:
    sample_id: str
    message: str


def build_pool(
    dataset: Sequence[DatasetSample],
    provider: Provider,
    external_functions: Optional[FrozenSet[str]] = None,
    jobs: int = 1,
) -> Tuple[ExemplarPool, List[MiningFailure]]:
    """Mine a whole dataset; failures are reported, never fatal.

    Pool order follows dataset order regardless of completion order.
    """
    results: List[Optional[Exemplar]] = [None] * len(dataset)
    failures: List[MiningFailure] = []

    def work(index: int) -> None:
        sample = dataset[index]
        try:
            results[index] = mine_exemplar(sample, provider, external_functions)
        except MiningError as exc:
            failures.append(MiningFailure(sample.id, str(exc)))
        except Exception as exc:  # defensive: one bad sample must not sink the run
            log.exception("unexpected mining failure for %s", sample.id)
            failures.append(MiningFailure(sample.id, f"unexpected: {exc}"))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            list(executor.map(work, range(len(dataset))))
    else:
        for index in range(len(dataset)):
            work(index)

    pool = ExemplarPool(e for e in results if e is not None)
    failures.sort(key=lambda f: f.sample_id)
    return pool, failures


def save_pool(pool: ExemplarPool, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for exemplar in pool:
            handle.write(json.dumps(exemplar.to_document(), sort_keys=True))
            handle.write("\n")


def load_pool(path: Union[str, Path]) -> ExemplarPool:
    pool = ExemplarPool()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                doc = json.loads(raw)
                pool.add(Exemplar.from_document(doc))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}, line {lineno}: bad exemplar record: {exc}")
    return pool
