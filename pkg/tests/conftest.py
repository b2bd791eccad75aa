from __future__ import annotations

import json
from pathlib import Path

import pytest

from appatch.code_model import build_sdg, identify_external_inputs, parse_program
from appatch.gateway import ScriptedProvider

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def jsi_source() -> str:
    return (FIXTURES / "jsi_like.c").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def jsi_program(jsi_source):
    return parse_program([("jsi_like.c", jsi_source)])


@pytest.fixture(scope="session")
def jsi_graph(jsi_program):
    return build_sdg(jsi_program)


@pytest.fixture(scope="session")
def jsi_ei(jsi_program, jsi_graph):
    return identify_external_inputs(jsi_program, jsi_graph)


def scripted(responses, provider_id="scripted", **kwargs):
    kwargs.setdefault("backoff", 0.0)
    return ScriptedProvider(provider_id, responses, **kwargs)


def load_script(name: str):
    return json.loads((FIXTURES / "scripted" / name).read_text(encoding="utf-8"))
