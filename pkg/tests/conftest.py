"""Shared fixtures: a hand-parsed 4-requirement corpus and the
deterministic synthesized benchmark dataset."""

from __future__ import annotations

from pathlib import Path

import pytest

from reqrel import nlp
from reqrel.fixtures import write_fixture_dataset
from reqrel.model import Corpus, Requirement

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    """Synthesized benchmark dataset written once per session."""
    directory = tmp_path_factory.mktemp("dataset")
    write_fixture_dataset(directory)
    return directory


def make_small_corpus() -> Corpus:
    return Corpus([
        Requirement("R1", "The driver shall be able to acknowledge the "
                          "message on the DMI.", "D1", 1),
        Requirement("R2", "The system shall display the message received "
                          "from the RBC.", "D1", 2),
        Requirement("R3", "The DMI shall indicate the permitted speed.",
                    "D1", 3),
        Requirement("R4", "If the line is fitted with LZB, the onboard "
                          "system shall contact the RBC.", "D2", 1),
    ])


@pytest.fixture()
def small_corpus() -> Corpus:
    return make_small_corpus()


def annotate(parsed: nlp.ParsedRequirement,
             gazetteer: list[tuple[str, str, str]] | None = None,
             ) -> nlp.ParsedRequirement:
    nlp.fallback_pos_tag(parsed)
    nlp.chunk_noun_phrases(parsed)
    nlp.extract_ngrams(parsed)
    if gazetteer:
        nlp.recognize_entities(parsed, gazetteer)
    return parsed


@pytest.fixture()
def small_parses(small_corpus) -> dict[str, nlp.ParsedRequirement]:
    """Fully annotated parses backed by the hand-written CoNLL-U file."""
    parses = nlp.ingest_conllu(small_corpus, FIXTURES / "sample.conllu")
    gazetteer = nlp.load_gazetteer(FIXTURES / "gazetteer.tsv")
    for parsed in parses.values():
        annotate(parsed, gazetteer)
    return parses


@pytest.fixture()
def small_coref(small_corpus, small_parses) -> list[nlp.CoreferenceLink]:
    synonyms = nlp.load_synonym_table(FIXTURES / "synonyms.tsv")
    return nlp.resolve_coreferences(small_corpus, small_parses, synonyms)
