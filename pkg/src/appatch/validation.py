"""Ensemble patch validation: keep a patch if any judge affirms it.

Deliberately OR-semantics rather than majority voting: the ensemble
exists to prune patches every judge rejects, not to demand consensus.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .gateway import Exchange, GatewayError, Provider
from .prompting import CandidatePatch
from .prompts import build_validation_prompt, parse_verdict, render_cwes, render_lines
from .scoping import RenderedSlice, VulnSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidationVerdict:
    """Per-provider answers for one candidate patch."""

    ordinal: int
    answers: Tuple[Tuple[str, str], ...]   # (provider id, "yes" | "no")
    retained: bool

    def __post_init__(self):
        if self.retained != any(answer == "yes" for _, answer in self.answers):
            raise ValueError("retained flag contradicts the answers")


def validate_patch(
    rendered_slice: RenderedSlice,
    spec: VulnSpec,
    patch: CandidatePatch,
    provider: Provider,
) -> Tuple[str, List[Exchange]]:
    """One judge, one patch: returns "yes" or "no".

    Provider failures count as "no" so a flaky judge can only lose votes,
    never abort the run.
    """
    prompt = build_validation_prompt(
        slice_text=rendered_slice.text,
        cwes=render_cwes(spec.cwe_ids),
        lines=render_lines(spec.vulnerable_lines),
        patch=patch.diff,
    )
    try:
        exchange = provider.complete(prompt)
    except GatewayError as exc:
        log.warning("validator %s failed on patch %d (%s); counting as no",
                    provider.id, patch.ordinal, exc)
        return "no", []
    return ("yes" if parse_verdict(exchange.response) else "no"), [exchange]


def validate_all(
    patches: Sequence[CandidatePatch],
    providers: Sequence[Provider],
    rendered_slice: RenderedSlice,
    spec: VulnSpec,
    jobs: int = 1,
) -> Tuple[List[CandidatePatch], List[ValidationVerdict], List[Exchange]]:
    """Judge every patch with every provider; drop only all-no patches.

    Retained patches keep candidate order.  Judges run independently, so
    they may be consulted concurrently; within one judge the patches stay
    sequential to keep scripted providers deterministic.
    """
    if not providers:
        raise ValueError("at least one validating provider is required")

    answers: Dict[Tuple[str, int], str] = {}
    exchanges_by_provider: Dict[str, List[Exchange]] = {}

    def judge(provider: Provider) -> None:
        collected: List[Exchange] = []
        for patch in patches:
            answer, exchange = validate_patch(rendered_slice, spec, patch, provider)
            answers[(provider.id, patch.ordinal)] = answer
            collected.extend(exchange)
        exchanges_by_provider[provider.id] = collected

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            list(executor.map(judge, providers))
    else:
        for provider in providers:
            judge(provider)

    verdicts: List[ValidationVerdict] = []
    retained: List[CandidatePatch] = []
    for patch in patches:
        per_provider = tuple(
            (provider.id, answers[(provider.id, patch.ordinal)])
            for provider in providers
        )
        keep = any(answer == "yes" for _, answer in per_provider)
        verdicts.append(ValidationVerdict(
            ordinal=patch.ordinal, answers=per_provider, retained=keep,
        ))
        if keep:
            retained.append(patch)

    exchanges: List[Exchange] = []
    for provider in providers:
        exchanges.extend(exchanges_by_provider.get(provider.id, []))
    return retained, verdicts, exchanges
