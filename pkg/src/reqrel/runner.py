"""Shared extraction pipeline used by both the CLI and the HTTP service.

Keeping a single code path guarantees byte-identical prediction files
for identical inputs and seeds regardless of the entry point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import nlp
from .learning import kmeans_cluster, suggest_from_clusters
from .model import Corpus
from .retrieval import (
    ExtractorError,
    RelationPrediction,
    activation_relate,
    build_semantic_graph,
    build_syntactic_graph,
    detect_cross_references,
    graph_match,
    load_ontology,
    load_pattern_rules,
    match_patterns,
    ontology_match,
    tfidf_relate,
    embedding_relate,
)
from .vectors import (
    TokenFilter,
    load_embeddings,
    lsa_fit,
    lsa_project,
    sparse_matrix,
    tfidf_fit,
    tfidf_vectorize,
)

EXTRACT_METHODS = ("crossref", "pattern", "tfidf", "embedding",
                   "syngraph", "semgraph", "ontology")


@dataclass
class ExtractionInputs:
    corpus: Corpus
    conllu_path: Path | None = None
    gazetteer_path: Path | None = None
    synonyms_path: Path | None = None
    ontology_path: Path | None = None
    rules_path: Path | None = None
    embeddings_path: Path | None = None


def prepare_parses(inputs: ExtractionInputs) -> dict[str, nlp.ParsedRequirement]:
    """Preprocess every requirement, overlay external parses when a
    CoNLL-U file is provided, then tag, chunk and annotate mentions."""
    config = nlp.PreprocessConfig.default()
    parses = {req.id: nlp.preprocess(req, config) for req in inputs.corpus}
    if inputs.conllu_path is not None:
        parses.update(nlp.ingest_conllu(inputs.corpus, inputs.conllu_path))
    lexicon = nlp.load_pos_lexicon()
    gazetteer = (nlp.load_gazetteer(inputs.gazetteer_path)
                 if inputs.gazetteer_path else [])
    for parsed in parses.values():
        nlp.fallback_pos_tag(parsed, lexicon)
        nlp.chunk_noun_phrases(parsed)
        nlp.extract_ngrams(parsed)
        if gazetteer:
            nlp.recognize_entities(parsed, gazetteer)
    return parses


def default_rules_path() -> Path:
    return Path(str(resources.files("reqrel.data").joinpath("pattern_rules.json")))


def run_extraction(inputs: ExtractionInputs, method: str,
                   params: dict | None = None,
                   seed: int = 0) -> list[RelationPrediction]:
    params = params or {}
    if method not in EXTRACT_METHODS:
        raise ExtractorError(f"unknown extraction method: {method!r}")
    parses = prepare_parses(inputs)
    corpus = inputs.corpus
    threshold = float(params.get("threshold", 0.4))
    if method == "crossref":
        synonyms = (nlp.load_synonym_table(inputs.synonyms_path)
                    if inputs.synonyms_path else [])
        links = nlp.resolve_coreferences(corpus, parses, synonyms)
        return detect_cross_references(corpus, parses, links)
    if method == "pattern":
        rules_path = inputs.rules_path or default_rules_path()
        rules = load_pattern_rules(rules_path)
        ids = corpus.ids()
        scope = [(ids[i], ids[j])
                 for i in range(len(ids)) for j in range(i + 1, len(ids))]
        return match_patterns(parses, rules, scope)
    if method == "tfidf":
        model = tfidf_fit(parses.values())
        return tfidf_relate(model, parses, threshold)
    if method == "embedding":
        if inputs.embeddings_path is None:
            raise ExtractorError("embedding method needs an embeddings file")
        table = load_embeddings(inputs.embeddings_path)
        return embedding_relate(table, parses, threshold,
                                params.get("measure", "cosine"))
    if method == "syngraph":
        watched = params.get("watched_lemmas")
        if not watched:
            raise ExtractorError("syngraph method needs watched_lemmas")
        graph = build_syntactic_graph([])
        predictions: list[RelationPrediction] = []
        for req in corpus:
            predictions.extend(graph_match(graph, watched, parses[req.id]))
        return predictions
    if method == "semgraph":
        synonyms = (nlp.load_synonym_table(inputs.synonyms_path)
                    if inputs.synonyms_path else [])
        links = nlp.resolve_coreferences(corpus, parses, synonyms)
        graph = build_semantic_graph(parses, links)
        return activation_relate(
            graph, parses, threshold=threshold,
            decay=float(params.get("decay", 0.5)),
            hops=int(params.get("hops", 3)),
            floor=float(params.get("floor", 1e-4)))
    # ontology
    if inputs.ontology_path is None:
        raise ExtractorError("ontology method needs an ontology file")
    ontology = load_ontology(inputs.ontology_path)
    return ontology_match(ontology, parses)


def run_clustering(inputs: ExtractionInputs, k: int, seed: int = 0,
                   lsa_components: int | None = None,
                   per_cluster_limit: int = 3,
                   ) -> tuple[dict[str, int], list[RelationPrediction]]:
    """LSA-projected TF-IDF vectors clustered with k-means; suggested
    relations pair centroid-nearest requirements inside each cluster."""
    parses = prepare_parses(inputs)
    ids = inputs.corpus.ids()
    model = tfidf_fit([parses[i] for i in ids])
    vecs = [tfidf_vectorize(model, parses[i]) for i in ids]
    matrix = sparse_matrix(vecs, len(model.vocabulary))
    if lsa_components is None:
        lsa_components = min(50, min(matrix.shape))
    lsa = lsa_fit(matrix, lsa_components, seed=seed)
    points = {rid: lsa_project(lsa, matrix[i]) for i, rid in enumerate(ids)}
    result = kmeans_cluster(points, k, seed=seed)
    return result.assignments, suggest_from_clusters(result, points,
                                                     per_cluster_limit)
