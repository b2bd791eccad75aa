"""Operator surface: slice, mine, patch, and eval over files.

Exit codes: 0 success, 1 pipeline error (parse/provider failures),
2 usage or configuration error.  Every run writes a manifest whose
contents are reproducible under a warm cache: timings come from recorded
exchange latencies, never the wall clock, and paths are relative.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import evaluation
from .code_model import (
    CodeModelError,
    build_sdg,
    identify_external_inputs,
    import_graph,
    parse_program,
)
from .code_model.sdg import DEFAULT_EXTERNAL_FUNCTIONS
from .exemplars import (
    DatasetError,
    DatasetSample,
    build_pool,
    load_dataset,
    load_pool,
    save_pool,
)
from .gateway import (
    ConfigurationError,
    Exchange,
    GatewayError,
    Provider,
    accounting_report,
    load_providers,
)
from .prompting import (
    DEFAULT_DEMAND_ROUNDS,
    NoPatchesError,
    PromptingError,
    generate_patches,
    generate_root_cause,
    select_exemplars,
)
from .scoping import ScopingError, functions_containing, render_slice, vulnerability_semantics
from .validation import validate_all

log = logging.getLogger(__name__)

CONFIG_ENV_VAR = "APPATCH_CONFIG"

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad flags, missing files, unusable configuration."""


class PipelineError(Exception):
    """The run itself failed (parse, slice, provider)."""


# ── small file helpers ───────────────────────────────────────────────────

def _write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _write_json_atomic(path: Path, doc: Any) -> None:
    _write_text_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require_file(path_text: str, what: str) -> Path:
    path = Path(path_text)
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


# ── configuration ────────────────────────────────────────────────────────

@dataclass
class Config:
    providers: Dict[str, Provider] = field(default_factory=dict)
    external_functions: frozenset = DEFAULT_EXTERNAL_FUNCTIONS
    demand_rounds: int = DEFAULT_DEMAND_ROUNDS
    path: Optional[Path] = None

    def provider(self, provider_id: str) -> Provider:
        if provider_id not in self.providers:
            known = ", ".join(sorted(self.providers)) or "(none configured)"
            raise UsageError(
                f"unknown provider id {provider_id!r}; configured: {known}"
            )
        return self.providers[provider_id]


def load_config(path_text: Optional[str]) -> Config:
    """Read the JSON config named by ``--config`` or $APPATCH_CONFIG.

    API keys never live in the file; http providers name the environment
    variable that holds theirs.
    """
    resolved = path_text or os.environ.get(CONFIG_ENV_VAR)
    if resolved is None:
        return Config()
    path = _require_file(resolved, "config file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: not valid JSON: {exc.msg}")
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path}: top level must be an object")
    try:
        providers = load_providers(doc.get("providers", []), base_dir=path.parent)
    except ConfigurationError as exc:
        raise UsageError(f"config file {path}: {exc}")
    external = doc.get("external_functions")
    external_set = (
        frozenset(external) if external is not None else DEFAULT_EXTERNAL_FUNCTIONS
    )
    rounds = doc.get("demand_rounds", DEFAULT_DEMAND_ROUNDS)
    if not isinstance(rounds, int) or rounds < 1:
        raise UsageError(f"config file {path}: demand_rounds must be a positive integer")
    return Config(
        providers=providers,
        external_functions=external_set,
        demand_rounds=rounds,
        path=path,
    )


# ── manifest ─────────────────────────────────────────────────────────────

@dataclass
class RunManifest:
    """Replayable record of one run.

    ``stage_seconds`` sums recorded exchange latencies per stage, so a
    warm-cache rerun reproduces the manifest byte for byte.
    """

    command: str
    config_digest: Optional[str]
    input_digests: Dict[str, str]
    outputs: List[str]
    stage_seconds: Dict[str, float]
    accounting: Dict[str, Any]
    flags: Dict[str, Any]

    def write(self, path: Path) -> None:
        _write_json_atomic(path, {
            "command": self.command,
            "config_digest": self.config_digest,
            "input_digests": self.input_digests,
            "outputs": sorted(self.outputs),
            "stage_seconds": self.stage_seconds,
            "accounting": self.accounting,
            "flags": self.flags,
        })


def _stage_seconds(exchanges: Sequence[Exchange]) -> float:
    return round(sum(e.latency for e in exchanges), 9)


# ── shared loaders ───────────────────────────────────────────────────────

def _load_sample_file(path: Path, require_patch: bool) -> DatasetSample:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        sample = DatasetSample.from_document(doc)
    except (json.JSONDecodeError, DatasetError) as exc:
        raise UsageError(f"sample file {path}: {exc}")
    if require_patch and sample.ground_truth_patch is None:
        raise UsageError(f"sample file {path}: missing ground-truth patch")
    try:
        sample.check_patch_applies()
    except DatasetError as exc:
        raise UsageError(str(exc))
    return sample


def _materialize(sample: DatasetSample):
    try:
        program, graph = sample.materialize()
    except CodeModelError as exc:
        raise PipelineError(f"cannot build the dependence graph: {exc}")
    return program, graph


def _external_functions(args: "argparse.Namespace", config: Config):
    flag = getattr(args, "external_functions", None)
    if flag:
        return frozenset(n.strip() for n in flag.split(",") if n.strip())
    return config.external_functions


def _parse_vuln_arg(vuln: str) -> List[Tuple[str, int]]:
    out: List[Tuple[str, int]] = []
    for part in vuln.split(","):
        part = part.strip()
        if not part:
            continue
        file, sep, line = part.rpartition(":")
        if not sep or not line.isdigit():
            raise UsageError(f"--vuln expects file:line, got {part!r}")
        out.append((file, int(line)))
    if not out:
        raise UsageError("--vuln needs at least one file:line")
    return out


# ── subcommands ──────────────────────────────────────────────────────────

def cmd_slice(args: argparse.Namespace) -> int:
    from .scoping import VulnSpec

    config = load_config(args.config)
    input_digests: Dict[str, str] = {}

    if args.graph:
        graph_path = _require_file(args.graph, "graph file")
        input_digests[f"graph:{graph_path.name}"] = _digest_file(graph_path)
        try:
            program, graph = import_graph(graph_path.read_text(encoding="utf-8"))
        except CodeModelError as exc:
            raise PipelineError(f"graph import failed: {exc}")
    else:
        sources = []
        for source_text in args.source or []:
            source_path = _require_file(source_text, "source file")
            sources.append((source_path.name, source_path.read_text(encoding="utf-8")))
            input_digests[f"source:{source_path.name}"] = _digest_file(source_path)
        if not sources:
            raise UsageError("either --source or --graph is required")
        try:
            program = parse_program(sources, entry=args.entry)
            graph = build_sdg(program)
        except CodeModelError as exc:
            raise PipelineError(f"parse failed: {exc}")

    spec = VulnSpec(
        vulnerable_lines=tuple(_parse_vuln_arg(args.vuln)),
        cwe_ids=tuple(c.strip() for c in (args.cwe or "").split(",") if c.strip()),
    )
    ei = identify_external_inputs(program, graph, _external_functions(args, config))
    try:
        result = vulnerability_semantics(graph, spec, ei)
    except ScopingError as exc:
        raise PipelineError(str(exc))

    functions = functions_containing(graph, result.node_ids)
    rendered = render_slice(result, program, graph, functions)

    out_path = Path(args.out)
    text_path = out_path.with_name(out_path.name + ".txt")
    _write_json_atomic(out_path, result.to_document(graph))
    _write_text_atomic(text_path, rendered.text + "\n")

    manifest = RunManifest(
        command="slice",
        config_digest=_digest_file(config.path) if config.path else None,
        input_digests=input_digests,
        outputs=[out_path.name, text_path.name],
        stage_seconds={"slice": 0.0},
        accounting={},
        flags={"fallback": result.fallback},
    )
    manifest.write(out_path.with_name(out_path.name + ".manifest.json"))
    print(f"slice: {len(result.node_ids)} nodes "
          f"({len(result.ei_ids)} external inputs, fallback={result.fallback})")
    return EXIT_OK


def cmd_mine(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    provider = config.provider(args.provider)
    dataset_path = _require_file(args.dataset, "dataset file")
    try:
        dataset = load_dataset(dataset_path)
    except DatasetError as exc:
        raise UsageError(str(exc))

    pool, failures = build_pool(
        dataset, provider,
        external_functions=_external_functions(args, config),
        jobs=args.jobs,
    )
    pool_path = Path(args.pool)
    pool_path.parent.mkdir(parents=True, exist_ok=True)
    save_pool(pool, pool_path)

    manifest = RunManifest(
        command="mine",
        config_digest=_digest_file(config.path) if config.path else None,
        input_digests={"dataset": _digest_file(dataset_path)},
        outputs=[pool_path.name],
        stage_seconds={"mine": _stage_seconds(provider.history)},
        accounting=accounting_report(provider.history),
        flags={
            "provider": args.provider,
            "samples": len(dataset),
            "mined": len(pool),
            "errors": [
                {"sample_id": f.sample_id, "message": f.message} for f in failures
            ],
        },
    )
    manifest.write(pool_path.with_name(pool_path.name + ".manifest.json"))
    print(f"mine: {len(pool)} exemplar(s), {len(failures)} failure(s)")
    return EXIT_OK


def cmd_patch(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    provider = config.provider(args.provider)
    validator_ids = [v.strip() for v in (args.validators or "").split(",") if v.strip()]
    validators = [config.provider(v) for v in validator_ids]

    sample_path = _require_file(args.sample, "sample file")
    pool_path = _require_file(args.pool, "pool file")
    sample = _load_sample_file(sample_path, require_patch=False)
    try:
        pool = load_pool(pool_path)
    except DatasetError as exc:
        raise UsageError(str(exc))

    program, graph = _materialize(sample)
    ei = identify_external_inputs(program, graph, _external_functions(args, config))
    try:
        result = vulnerability_semantics(graph, sample.vuln, ei)
    except ScopingError as exc:
        raise PipelineError(str(exc))

    try:
        root_cause, rendered, rc_exchanges = generate_root_cause(
            graph, program, sample.vuln, result, provider,
            max_rounds=args.max_rounds or config.demand_rounds,
        )
        chosen, sel_exchanges = select_exemplars(
            root_cause, pool, provider,
            cwe_filter=args.cwe_filter, cwe_ids=sample.vuln.cwe_ids,
        )
        patches, gen_exchange = generate_patches(
            chosen, rendered, sample.vuln, root_cause, provider, program,
        )
    except (PromptingError, GatewayError) as exc:
        raise PipelineError(str(exc))

    val_exchanges: List[Exchange] = []
    if validators:
        retained, verdicts, val_exchanges = validate_all(
            patches, validators, rendered, sample.vuln, jobs=args.jobs,
        )
        verdicts_doc = [
            {
                "ordinal": v.ordinal,
                "answers": {pid: answer for pid, answer in v.answers},
                "retained": v.retained,
            }
            for v in verdicts
        ]
    else:
        retained = list(patches)
        verdicts_doc = []

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: List[str] = []

    def emit_text(name: str, text: str) -> None:
        _write_text_atomic(out_dir / name, text)
        outputs.append(name)

    def emit_json(name: str, doc: Any) -> None:
        _write_json_atomic(out_dir / name, doc)
        outputs.append(name)

    emit_text("rendered_slice.txt", rendered.text + "\n")
    emit_json("slice.json", result.to_document(graph))
    emit_json("root_cause.json", {
        "text": root_cause.text,
        "iterations": root_cause.iterations,
        "functions_used": sorted(root_cause.functions_used),
        "forced_final": root_cause.forced_final,
        "transcript": [list(pair) for pair in root_cause.transcript],
    })
    emit_json("selected_exemplars.json", [ex.sample_id for ex in chosen])
    candidate_files = []
    for patch in patches:
        name = f"candidate_{patch.ordinal}.diff"
        emit_text(name, patch.diff if patch.diff.endswith("\n") else patch.diff + "\n")
        candidate_files.append({
            "ordinal": patch.ordinal,
            "file": name,
            "prompt_digest": patch.prompt_digest,
        })
    emit_json("verdicts.json", verdicts_doc)
    emit_json("result.json", {
        "sample_id": sample.id,
        "candidates": candidate_files,
        "retained": [p.ordinal for p in retained],
        "validated": bool(validators),
    })

    all_exchanges = rc_exchanges + sel_exchanges + [gen_exchange] + val_exchanges
    manifest = RunManifest(
        command="patch",
        config_digest=_digest_file(config.path) if config.path else None,
        input_digests={
            "sample": _digest_file(sample_path),
            "pool": _digest_file(pool_path),
        },
        outputs=outputs,
        stage_seconds={
            "root_cause": _stage_seconds(rc_exchanges),
            "select": _stage_seconds(sel_exchanges),
            "generate": _stage_seconds([gen_exchange]),
            "validate": _stage_seconds(val_exchanges),
        },
        accounting=accounting_report(all_exchanges),
        flags={
            "provider": args.provider,
            "validators": validator_ids,
            "no_validation": not validators,
            "exemplars_selected": len(chosen),
            "forced_final": root_cause.forced_final,
        },
    )
    manifest.write(out_dir / "manifest.json")
    print(f"patch: {len(patches)} candidate(s), {len(retained)} retained "
          f"({'validated' if validators else 'no validation'})")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    results_dir = Path(args.results)
    if not results_dir.is_dir():
        raise UsageError(f"results directory not found: {results_dir}")
    gt_path = _require_file(args.ground_truth, "ground-truth file")
    try:
        gt_samples = load_dataset(gt_path)
    except DatasetError as exc:
        raise UsageError(str(exc))

    human_labels = []
    labels_digest = None
    if args.labels:
        labels_path = _require_file(args.labels, "labels file")
        labels_digest = _digest_file(labels_path)
        try:
            human_labels = evaluation.load_labels(labels_path)
        except evaluation.EvaluationError as exc:
            raise UsageError(str(exc))

    auto_syneq: Dict[Tuple[str, int], bool] = {}
    generated: Dict[str, int] = {}
    retained_sets: Dict[str, set] = {}
    for sample in gt_samples:
        generated[sample.id] = 0
        retained_sets[sample.id] = set()
        result_path = results_dir / sample.id / "result.json"
        if not result_path.is_file():
            continue
        try:
            result_doc = json.loads(result_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{result_path}: not valid JSON: {exc.msg}")
        retained = set(result_doc.get("retained", []))
        candidates = {
            c["ordinal"]: c["file"] for c in result_doc.get("candidates", [])
        }
        generated[sample.id] = len(retained)
        retained_sets[sample.id] = retained
        for ordinal in sorted(retained):
            file_name = candidates.get(ordinal)
            if file_name is None:
                raise UsageError(
                    f"{result_path}: retained ordinal {ordinal} has no candidate file"
                )
            diff_text = (results_dir / sample.id / file_name).read_text(encoding="utf-8")
            if sample.sources is None:
                log.warning("sample %s is graph-backed; cannot auto-check SynEq",
                            sample.id)
                auto_syneq[(sample.id, ordinal)] = False
                continue
            try:
                is_syneq, note = evaluation.classify_syneq(
                    dict(sample.sources), diff_text, sample.ground_truth_patch,
                )
            except evaluation.EvaluationError as exc:
                raise UsageError(str(exc))
            if note:
                log.info("sample %s patch %d: %s", sample.id, ordinal, note)
            auto_syneq[(sample.id, ordinal)] = is_syneq

    # Labels for candidates that validation removed are outside the
    # evaluation universe: they count neither as generated nor as correct.
    kept_labels = []
    for label in human_labels:
        if label.ordinal in retained_sets.get(label.sample_id, set()):
            kept_labels.append(label)
        else:
            log.warning("label for %s patch %d ignored: not in the retained set",
                        label.sample_id, label.ordinal)
    labels = evaluation.merge_labels(auto_syneq, kept_labels)
    try:
        report = evaluation.compute_metrics(len(gt_samples), labels, generated)
    except evaluation.EvaluationError as exc:
        raise UsageError(str(exc))

    report_path = Path(args.report)
    _write_json_atomic(report_path, report.to_document())
    outputs = [report_path.name]
    if args.csv:
        report.write_csv(args.csv)
        outputs.append(Path(args.csv).name)

    input_digests = {"ground_truth": _digest_file(gt_path)}
    if labels_digest:
        input_digests["labels"] = labels_digest
    manifest = RunManifest(
        command="eval",
        config_digest=None,
        input_digests=input_digests,
        outputs=outputs,
        stage_seconds={"eval": 0.0},
        accounting={},
        flags={"labels": bool(args.labels), "samples": len(gt_samples)},
    )
    manifest.write(report_path.with_name(report_path.name + ".manifest.json"))
    correct = report.per_category["Correct"]
    print(f"eval: recall={correct.recall:.4f} precision={correct.precision:.4f} "
          f"f1={correct.f1:.4f} over {report.testing_samples} sample(s)")
    return EXIT_OK


# ── argument parsing ─────────────────────────────────────────────────────

def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="appatch",
        description="Slice, mine, patch, and evaluate vulnerability fixes.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_slice = sub.add_parser("slice", help="compute a vulnerability slice")
    p_slice.add_argument("--source", action="append",
                         help="mini-C source file (repeatable)")
    p_slice.add_argument("--graph", help="graph-interchange JSON file")
    p_slice.add_argument("--vuln", required=True,
                         help="vulnerable lines as file:line[,file:line...]")
    p_slice.add_argument("--cwe", default="", help="CWE ids, comma separated")
    p_slice.add_argument("--entry", help="entry function override")
    p_slice.add_argument("--config", help="configuration file")
    p_slice.add_argument("--external-functions",
                         help="override the external-function set, comma separated")
    p_slice.add_argument("--out", required=True, help="slice JSON output path")
    p_slice.set_defaults(func=cmd_slice)

    p_mine = sub.add_parser("mine", help="mine an exemplar pool from known patches")
    p_mine.add_argument("--dataset", required=True, help="JSONL dataset")
    p_mine.add_argument("--provider", required=True, help="provider id")
    p_mine.add_argument("--pool", required=True, help="pool JSONL output path")
    p_mine.add_argument("--config", help="configuration file")
    p_mine.add_argument("--external-functions",
                        help="override the external-function set, comma separated")
    p_mine.add_argument("--jobs", type=int, default=1, help="parallel samples")
    p_mine.set_defaults(func=cmd_mine)

    p_patch = sub.add_parser("patch", help="generate and validate candidate patches")
    p_patch.add_argument("--sample", required=True, help="sample JSON file")
    p_patch.add_argument("--pool", required=True, help="exemplar pool JSONL")
    p_patch.add_argument("--provider", required=True, help="generating provider id")
    p_patch.add_argument("--validators", default="",
                         help="validating provider ids, comma separated; "
                              "omit to skip validation")
    p_patch.add_argument("--out", required=True, help="output directory")
    p_patch.add_argument("--config", help="configuration file")
    p_patch.add_argument("--external-functions",
                         help="override the external-function set, comma separated")
    p_patch.add_argument("--cwe-filter", action="store_true",
                         help="pre-filter the pool to matching CWE ids")
    p_patch.add_argument("--max-rounds", type=int, default=None,
                         help="context-demand round ceiling")
    p_patch.add_argument("--jobs", type=int, default=1,
                         help="concurrent validators")
    p_patch.set_defaults(func=cmd_patch)

    p_eval = sub.add_parser("eval", help="score generated patches")
    p_eval.add_argument("--results", required=True,
                        help="directory of per-sample patch outputs")
    p_eval.add_argument("--ground-truth", required=True, help="JSONL dataset")
    p_eval.add_argument("--labels", help="human labels JSONL")
    p_eval.add_argument("--report", required=True, help="report JSON output path")
    p_eval.add_argument("--csv", help="also write a CSV table")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("APPATCH_LOG", "WARNING"))
    parser = build_arg_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (GatewayError, NoPatchesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
