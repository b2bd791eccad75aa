"""Patch classification and metrics.

Syntactic equivalence is decided automatically by comparing the patched
texts after whitespace/comment normalization.  Semantic equivalence and
plausibility only ever come from a human-authored labels file; each patch
lands in exactly one category, most specific first.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .diffs import ApplyError, DiffError, apply_patch  # noqa: F401  (module surface)

log = logging.getLogger(__name__)

CATEGORIES = ("SynEq", "SemEq", "Plausible", "Incorrect")
REPORT_CATEGORIES = ("SynEq", "SemEq", "Plausible", "Correct")
CORRECT_MEMBERS = ("SynEq", "SemEq", "Plausible")
LABEL_SOURCES = ("auto", "human")


class EvaluationError(Exception):
    """Inconsistent labels or counts."""


@dataclass(frozen=True)
class PatchLabel:
    sample_id: str
    ordinal: int
    category: str
    source: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"bad category: {self.category!r}")
        if self.source not in LABEL_SOURCES:
            raise ValueError(f"bad label source: {self.source!r}")

    def to_document(self) -> Dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "ordinal": self.ordinal,
            "category": self.category,
            "source": self.source,
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "PatchLabel":
        return cls(
            sample_id=str(doc["sample_id"]),
            ordinal=int(doc["ordinal"]),
            category=str(doc["category"]),
            source=str(doc.get("source", "human")),
        )


def load_labels(path: Union[str, Path]) -> List[PatchLabel]:
    labels: List[PatchLabel] = []
    seen: set = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                label = PatchLabel.from_document(json.loads(raw))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise EvaluationError(f"{path}, line {lineno}: bad label: {exc}")
            key = (label.sample_id, label.ordinal)
            if key in seen:
                raise EvaluationError(
                    f"{path}, line {lineno}: duplicate label for "
                    f"sample {label.sample_id!r} patch {label.ordinal}"
                )
            seen.add(key)
            labels.append(label)
    return labels


# ── SynEq classification ────────────────────────────────────────────────

_BLOCK_COMMENT_RE = re.compile(r"/\*.*?\*/", re.DOTALL)
_LINE_COMMENT_RE = re.compile(r"//[^\n]*")


def _strip_comments(text: str) -> str:
    """Remove // and /* */ comments, leaving string literals alone."""
    out: List[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in "\"'":
            quote = ch
            out.append(ch)
            i += 1
            while i < n and text[i] != quote:
                if text[i] == "\\" and i + 1 < n:
                    out.append(text[i : i + 2])
                    i += 2
                    continue
                out.append(text[i])
                i += 1
            if i < n:
                out.append(text[i])
                i += 1
            continue
        if text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j
            continue
        if text.startswith("/*", i):
            j = text.find("*/", i + 2)
            if j < 0:
                i = n
                continue
            newlines = text.count("\n", i, j)
            out.append("\n" * newlines)
            i = j + 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def normalize_code(text: str) -> str:
    """Comment-free text with whitespace runs collapsed and blank lines dropped."""
    stripped = _strip_comments(text)
    lines = []
    for line in stripped.split("\n"):
        collapsed = re.sub(r"[ \t]+", " ", line).strip()
        if collapsed:
            lines.append(collapsed)
    return "\n".join(lines)


def classify_syneq(
    sources: Mapping[str, str] | Sequence[Tuple[str, str]],
    patch_diff: str,
    ground_truth_diff: str,
) -> Tuple[bool, Optional[str]]:
    """Whether two diffs yield the same program text after normalization.

    Returns (equivalent, note); a patch that fails to apply is not
    equivalent and the note says why.
    """
    if not isinstance(sources, Mapping):
        sources = dict(sources)
    try:
        truth = apply_patch(sources, ground_truth_diff)
    except (ApplyError, DiffError) as exc:
        raise EvaluationError(f"ground-truth patch does not apply: {exc}") from exc
    try:
        patched = apply_patch(sources, patch_diff)
    except (ApplyError, DiffError) as exc:
        return False, f"patch does not apply: {exc}"
    if set(patched) != set(truth):
        return False, "patched file sets differ"
    for path in sorted(truth):
        if normalize_code(patched[path]) != normalize_code(truth[path]):
            return False, None
    return True, None


# ── metrics ─────────────────────────────────────────────────────────────

def f1_score(recall: float, precision: float) -> float:
    """Harmonic mean with the zero guard the report format requires."""
    if recall == 0 or precision == 0:
        return 0.0
    return 2 * recall * precision / (recall + precision)


@dataclass(frozen=True)
class CategoryMetrics:
    recall: float
    precision: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    per_category: Mapping[str, CategoryMetrics]   # SynEq/SemEq/Plausible/Correct
    testing_samples: int
    fixed_samples: int
    generated_patches: int
    correct_patches: int

    def to_document(self) -> Dict[str, Any]:
        return {
            "categories": {
                name: {
                    "recall": metrics.recall,
                    "precision": metrics.precision,
                    "f1": metrics.f1,
                }
                for name, metrics in self.per_category.items()
            },
            "counts": {
                "testing_samples": self.testing_samples,
                "fixed_samples": self.fixed_samples,
                "generated_patches": self.generated_patches,
                "correct_patches": self.correct_patches,
            },
        }

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["category", "recall", "precision", "f1"])
            for name in REPORT_CATEGORIES:
                metrics = self.per_category[name]
                writer.writerow([
                    name,
                    f"{metrics.recall:.6f}",
                    f"{metrics.precision:.6f}",
                    f"{metrics.f1:.6f}",
                ])


def compute_metrics(
    samples: int,
    labels: Sequence[PatchLabel],
    generated: Mapping[str, int],
) -> MetricsReport:
    """Recall/precision/F1 per category over the labeled patches.

    ``samples`` is the testing-set size (the recall denominator);
    ``generated`` maps sample id to its number of generated patches (their
    sum is the precision denominator).  Ordinals are identities rather
    than indexes, so they may be sparse after validation removed some
    candidates.  A patch with no label is incorrect.
    """
    if samples < 0:
        raise ValueError("samples must be >= 0")
    seen: set = set()
    for label in labels:
        key = (label.sample_id, label.ordinal)
        if key in seen:
            raise EvaluationError(
                f"duplicate label for sample {label.sample_id!r} patch {label.ordinal}"
            )
        seen.add(key)
        if label.sample_id not in generated:
            raise EvaluationError(f"label references unknown sample {label.sample_id!r}")

    total_generated = sum(generated.values())
    per_category: Dict[str, CategoryMetrics] = {}
    for category in REPORT_CATEGORIES:
        members = (
            CORRECT_MEMBERS if category == "Correct" else (category,)
        )
        matched = [label for label in labels if label.category in members]
        patch_count = len(matched)
        sample_count = len({label.sample_id for label in matched})
        recall = sample_count / samples if samples else 0.0
        precision = patch_count / total_generated if total_generated else 0.0
        per_category[category] = CategoryMetrics(
            recall=recall,
            precision=precision,
            f1=f1_score(recall, precision),
        )

    correct_labels = [l for l in labels if l.category in CORRECT_MEMBERS]
    return MetricsReport(
        per_category=per_category,
        testing_samples=samples,
        fixed_samples=len({l.sample_id for l in correct_labels}),
        generated_patches=total_generated,
        correct_patches=len(correct_labels),
    )


def merge_labels(
    auto_syneq: Mapping[Tuple[str, int], bool],
    human_labels: Sequence[PatchLabel],
) -> List[PatchLabel]:
    """Combine automatic SynEq results with human judgments.

    Most specific category wins: an automatic SynEq beats any human label
    for the same patch; otherwise the human label stands; everything else
    is Incorrect.
    """
    by_key = {(l.sample_id, l.ordinal): l for l in human_labels}
    merged: List[PatchLabel] = []
    for (sample_id, ordinal), is_syneq in sorted(auto_syneq.items()):
        if is_syneq:
            merged.append(PatchLabel(sample_id, ordinal, "SynEq", "auto"))
        elif (sample_id, ordinal) in by_key:
            merged.append(by_key[(sample_id, ordinal)])
        else:
            merged.append(PatchLabel(sample_id, ordinal, "Incorrect", "auto"))
    for key, label in sorted(by_key.items()):
        if key not in auto_syneq:
            merged.append(label)
    return merged
