"""Shared fixtures: the chest-pain demo knowledge base and its helpers."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from fuzzydx import dsl
from fuzzydx.kb import KnowledgeSnapshot, load_lexicon

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def angina_note() -> str:
    return (FIXTURES / "angina_note.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def angina_lexicon() -> dict[str, float]:
    return load_lexicon((FIXTURES / "hedges.tsv").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def angina_program() -> dsl.Program:
    return dsl.parse_program((FIXTURES / "angina.kb").read_text(encoding="utf-8"))


@pytest.fixture()
def angina_snapshot(angina_lexicon) -> KnowledgeSnapshot:
    """Rules + priors + hedge lexicon, as version 1."""
    program = dsl.parse_program((FIXTURES / "angina_full.kb").read_text(encoding="utf-8"))
    return KnowledgeSnapshot.create(
        tuple(program.rules), angina_lexicon, tuple(program.priors), timestamp=0.0
    )
