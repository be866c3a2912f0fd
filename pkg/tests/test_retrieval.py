import json

import pytest

from conftest import FIXTURES, annotate, make_small_corpus
from reqrel.model import Corpus, Requirement, RelationType
from reqrel.nlp import DependencyArc, ParsedRequirement, Token, preprocess
from reqrel.retrieval import (
    ExtractorError,
    Ontology,
    PatternRule,
    RelationPrediction,
    SemanticGraph,
    SemanticNode,
    activation_relate,
    build_semantic_graph,
    build_syntactic_graph,
    detect_cross_references,
    dump_predictions,
    embedding_relate,
    graph_match,
    load_ontology,
    load_pattern_rules,
    load_predictions,
    map_requirements_to_concepts,
    match_patterns,
    ontology_match,
    spread_activation,
    tfidf_relate,
)
from reqrel.vectors import load_embeddings, tfidf_fit


class TestRelationPrediction:
    def test_confidence_bounds_enforced(self):
        with pytest.raises(ExtractorError, match="confidence"):
            RelationPrediction("A", "B", RelationType.REQUIRES, 1.5, "t")
        with pytest.raises(ExtractorError, match="confidence"):
            RelationPrediction("A", "B", RelationType.REQUIRES, -0.1, "t")

    def test_canonical_ordering(self):
        pred = RelationPrediction("B", "A", RelationType.IS_SIMILAR, 0.5, "t")
        assert pred.canonical().source_id == "A"
        directed = RelationPrediction("B", "A", RelationType.REQUIRES, 0.5, "t")
        assert directed.canonical().source_id == "B"

    def test_dump_load_roundtrip(self, tmp_path):
        preds = [
            RelationPrediction("A", "B", RelationType.REQUIRES, 0.75,
                               "pattern", {"rule_ids": ["r1"]}),
            RelationPrediction("A", "C", RelationType.IS_SIMILAR, 0.5, "tfidf"),
        ]
        path = tmp_path / "preds.jsonl"
        dump_predictions(preds, path)
        assert load_predictions(path) == preds
        first = json.loads(path.read_text().splitlines()[0])
        assert set(first) == {"source", "target", "type", "confidence",
                              "method", "evidence"}


class TestCrossReferences:
    def test_shared_entities_and_coref(self, small_corpus, small_parses,
                                       small_coref):
        preds = detect_cross_references(small_corpus, small_parses,
                                        small_coref)
        by_pair = {(p.source_id, p.target_id): p for p in preds}
        shared_dmi = by_pair[("R1", "R3")]
        assert shared_dmi.rtype is RelationType.IS_SIMILAR
        # one shared entity + one coreference link out of saturation 3
        assert shared_dmi.confidence == pytest.approx(2 / 3)
        assert shared_dmi.evidence["entities"] == ["DMI"]
        assert by_pair[("R1", "R2")].confidence == pytest.approx(1 / 3)

    def test_id_mention_becomes_directed_requirement(self):
        corpus = Corpus([Requirement("R1", "See R2 for the preconditions.",
                                     "D", 1),
                         Requirement("R2", "The system powers up.", "D", 2)])
        parses = {r.id: annotate(preprocess(r)) for r in corpus}
        preds = detect_cross_references(corpus, parses)
        assert len(preds) == 1
        pred = preds[0]
        assert pred.rtype is RelationType.REQUIRES
        assert (pred.source_id, pred.target_id) == ("R1", "R2")
        assert pred.evidence["id_refs"] == [["R1", "R2"]]

    def test_confidence_saturates_at_one(self):
        corpus = Corpus([Requirement("A", "x", "D", 1),
                         Requirement("B", "y", "D", 2)])
        parses = {r.id: preprocess(r) for r in corpus}
        links = []
        from reqrel.nlp import CoreferenceLink
        for i in range(5):
            links.append(CoreferenceLink("A", (i,), "B", (0,), "exact_entity"))
        preds = detect_cross_references(corpus, parses, links)
        assert preds[0].confidence == 1.0


class TestPatterns:
    def test_rule_needs_some_structure(self):
        with pytest.raises(ExtractorError, match="no keywords"):
            PatternRule(id="empty", rtype=RelationType.NONE)

    def test_bundled_rules_load(self):
        from reqrel.runner import default_rules_path
        rules = load_pattern_rules(default_rules_path())
        assert len(rules) >= 3
        assert all(r.keywords or r.dep_patterns for r in rules)

    def test_pair_fires_only_with_shared_anchor(self, small_parses):
        rule = PatternRule(id="subj-verb", rtype=RelationType.REQUIRES,
                           dep_patterns=(("VERB", "nsubj", "NOUN"),))
        pairs = [("R1", "R2"), ("R1", "R3"), ("R2", "R4"), ("R3", "R4")]
        preds = match_patterns(small_parses, [rule], pairs)
        got = {(p.source_id, p.target_id): p for p in preds}
        # R1/R2 share the "message" chunk; R2/R4 share the RBC entity
        assert set(got) == {("R1", "R2"), ("R2", "R4")}
        assert got[("R1", "R2")].evidence["anchors"] == ["message"]
        assert got[("R2", "R4")].confidence == pytest.approx(2 / 3)

    def test_require_root_filters_deep_keywords(self, small_parses):
        rule = PatternRule(id="root-rbc", rtype=RelationType.REQUIRES,
                           keywords=("rbc",), require_root=True)
        from reqrel.retrieval import _rule_side_matches
        # in R2 "RBC" hangs off an embedded participle, not the root verb
        assert not _rule_side_matches(small_parses["R2"], rule)
        # in R4 "RBC" is the object of the root verb
        assert _rule_side_matches(small_parses["R4"], rule)

    def test_direction_hint_flips_pair(self, small_parses):
        rule = PatternRule(id="rev", rtype=RelationType.REQUIRES,
                           dep_patterns=(("VERB", "nsubj", "NOUN"),),
                           direction_hint="target_to_source")
        preds = match_patterns(small_parses, [rule], [("R1", "R2")])
        assert (preds[0].source_id, preds[0].target_id) == ("R2", "R1")


class TestVectorRelatedness:
    def test_tfidf_thresholding(self, small_parses):
        model = tfidf_fit(small_parses.values())
        low = tfidf_relate(model, small_parses, 0.05)
        pairs = {(p.source_id, p.target_id) for p in low}
        assert pairs == {("R1", "R2"), ("R1", "R3"), ("R2", "R4")}
        assert all(p.rtype is RelationType.IS_SIMILAR for p in low)
        assert all(p.confidence >= 0.05 for p in low)
        high = tfidf_relate(model, small_parses, 0.12)
        assert {(p.source_id, p.target_id) for p in high} == {("R2", "R4")}

    def test_threshold_validated(self, small_parses):
        model = tfidf_fit(small_parses.values())
        with pytest.raises(ExtractorError, match="outside"):
            tfidf_relate(model, small_parses, 1.5)

    def test_embedding_relate_cosine(self, small_parses, fixtures_dir):
        table = load_embeddings(fixtures_dir / "embeddings.txt")
        preds = embedding_relate(table, small_parses, 0.5)
        assert preds, "expected at least one related pair"
        for pred in preds:
            assert 0.5 <= pred.confidence <= 1.0

    def test_all_oov_pairs_unrelated_under_distance(self):
        from reqrel.vectors import EmbeddingTable
        import numpy as np
        table = EmbeddingTable(2, {"known": np.array([1.0, 0.0])})
        parses = {
            "A": ParsedRequirement("A", tokens=[Token(0, "qq", "qq", "qq")],
                                   sentences=[(0, 1)]),
            "B": ParsedRequirement("B", tokens=[Token(0, "zz", "zz", "zz")],
                                   sentences=[(0, 1)]),
        }
        preds = embedding_relate(table, parses, 0.1, measure="euclidean")
        assert preds == []


class TestSyntacticGraph:
    def test_edge_weights_are_log_counts(self, small_parses):
        import math
        graph = build_syntactic_graph([small_parses["R2"],
                                       small_parses["R4"]])
        assert graph.counts[("rbc", "the", "det")] == 2
        assert graph.weight(("rbc", "the", "det")) == math.log2(3)
        assert graph.weight(("receive", "rbc", "obl")) == 1.0
        assert graph.weight(("missing", "edge", "dep")) == 0.0
        assert "rbc" in graph.nodes

    def test_incremental_match_on_watched_lemma(self, small_parses):
        graph = build_syntactic_graph([small_parses["R2"],
                                       small_parses["R4"]])
        new = ParsedRequirement(
            "R9",
            tokens=[Token(0, "Drivers", "drivers", "driver", "NOUN"),
                    Token(1, "contact", "contact", "contact", "VERB"),
                    Token(2, "the", "the", "the", "DET", True),
                    Token(3, "RBC", "rbc", "rbc", "PROPN")],
            arcs=[DependencyArc(1, 0, "nsubj"), DependencyArc(1, 1, "root"),
                  DependencyArc(3, 2, "det"), DependencyArc(1, 3, "obj")],
            sentences=[(0, 4)])
        preds = graph_match(graph, ["rbc"], new)
        got = {(p.source_id, p.target_id): p for p in preds}
        assert set(got) == {("R9", "R2"), ("R9", "R4")}
        # R4 shares both ("rbc","the","det") and ("contact","rbc","obj")
        assert got[("R9", "R4")].confidence == pytest.approx(2 / 3)
        assert ["contact", "rbc", "obj"] in got[("R9", "R4")].evidence["edges"]
        assert got[("R9", "R2")].confidence == pytest.approx(1 / 3)


class TestSemanticGraph:
    def test_roles_and_node_ownership(self, small_parses, small_coref):
        graph = build_semantic_graph(small_parses, small_coref)
        r2 = {(n.label, n.kind) for n in graph.nodes_of("R2")}
        assert ("display", "predicate") in r2
        assert ("system", "argument") in r2
        assert ("rbc", "argument") in r2
        agents = {(p.label, a.label) for p, role, a in graph.edges
                  if role == "agent"}
        assert ("display", "system") in agents
        assert ("contact", "onboard system") in agents

    def test_spread_activation_one_hop(self):
        graph = SemanticGraph()
        graph.add("show", "agent", "dmi", "Ra")
        graph.add("show", "object", "speed", "Ra")
        seed = SemanticNode("dmi", "argument")
        act = spread_activation(graph, [seed], decay=0.5, hops=1)
        assert act[seed] == 1.0
        assert act[SemanticNode("show", "predicate")] == pytest.approx(0.5)
        assert SemanticNode("speed", "argument") not in act

    def test_spread_activation_three_hops(self):
        graph = SemanticGraph()
        graph.add("show", "agent", "dmi", "Ra")
        graph.add("show", "object", "speed", "Ra")
        seed = SemanticNode("dmi", "argument")
        act = spread_activation(graph, [seed], decay=0.5, hops=3)
        assert act[seed] == pytest.approx(1.125)
        assert act[SemanticNode("show", "predicate")] == pytest.approx(0.625)
        assert act[SemanticNode("speed", "argument")] == pytest.approx(0.125)

    def test_floor_stops_propagation(self):
        graph = SemanticGraph()
        graph.add("show", "agent", "dmi", "Ra")
        seed = SemanticNode("dmi", "argument")
        act = spread_activation(graph, [seed], decay=0.5, hops=10, floor=0.3)
        assert act == {seed: 1.0, SemanticNode("show", "predicate"): 0.5}

    def test_decay_validated(self):
        with pytest.raises(ExtractorError, match="decay"):
            spread_activation(SemanticGraph(), [], decay=0.0)

    def test_activation_relate_scores(self, small_parses, small_coref):
        graph = build_semantic_graph(small_parses, small_coref)
        preds = activation_relate(graph, small_parses, threshold=0.01)
        by_pair = {(p.source_id, p.target_id): p.confidence for p in preds}
        assert by_pair[("R1", "R3")] == pytest.approx(0.629051, abs=1e-5)
        assert by_pair[("R2", "R4")] == pytest.approx(0.40625, abs=1e-9)
        assert all(0.0 < c <= 1.0 for c in by_pair.values())


class TestOntology:
    def test_load_counts_relation_types(self, fixtures_dir):
        ontology = load_ontology(fixtures_dir / "mini_ontology.json")
        counts = {}
        for _, _, rtype in ontology.relations:
            counts[rtype] = counts.get(rtype, 0) + 1
        assert counts == {RelationType.REQUIRES: 7,
                          RelationType.DETAILS: 17,
                          RelationType.CONFLICTS: 1}
        assert len(ontology.relations) == 25

    def test_validation_errors(self):
        from reqrel.retrieval import Concept
        with pytest.raises(ExtractorError, match="unknown parent"):
            Ontology({"a": Concept("a", "a", parent="zz")}, [])
        with pytest.raises(ExtractorError, match="cyclic"):
            Ontology({"a": Concept("a", "a", parent="b"),
                      "b": Concept("b", "b", parent="a")}, [])
        with pytest.raises(ExtractorError, match="not a concept"):
            Ontology({"a": Concept("a", "a")},
                     [("a", "zz", RelationType.REQUIRES)])

    def _three_reqs(self):
        corpus = Corpus([
            Requirement("Ra", "The DMI shall show the permitted speed.",
                        "D", 1),
            Requirement("Rb", "The train control system shall supervise "
                              "the movement.", "D", 2),
            Requirement("Rc", "The RBC shall send a message to the driver.",
                        "D", 3),
        ])
        return {r.id: annotate(preprocess(r)) for r in corpus}

    def test_concept_mapping_uses_synonyms_and_ngrams(self, fixtures_dir):
        ontology = load_ontology(fixtures_dir / "mini_ontology.json")
        matches = map_requirements_to_concepts(ontology, self._three_reqs())
        assert matches["dmi"] == {"Ra"}
        assert matches["speed"] == {"Ra"}          # bigram "permitted speed"
        assert matches["train_control"] == {"Rb"}  # bigram label
        assert matches["rbc"] == {"Rc"}

    def test_hierarchy_yields_details(self, fixtures_dir):
        ontology = load_ontology(fixtures_dir / "mini_ontology.json")
        preds = ontology_match(ontology, self._three_reqs())
        keyed = {(p.source_id, p.target_id, p.rtype) for p in preds}
        # child concept match Details the parent concept match
        assert ("Ra", "Rb", RelationType.DETAILS) in keyed
        assert ("Ra", "Rc", RelationType.REQUIRES) in keyed
        assert {p.rtype for p in preds} <= {RelationType.REQUIRES,
                                            RelationType.DETAILS,
                                            RelationType.CONFLICTS}

    def test_deterministic_order_and_no_duplicates(self, fixtures_dir):
        ontology = load_ontology(fixtures_dir / "mini_ontology.json")
        parses = self._three_reqs()
        preds = ontology_match(ontology, parses)
        assert preds == ontology_match(ontology, parses)
        keys = [(p.source_id, p.target_id, p.rtype) for p in preds]
        assert len(keys) == len(set(keys))
