"""Retrieval-based relation extractors.

Each extractor emits :class:`RelationPrediction` lists over a parsed
corpus: token cross-references, pattern rules, TF-IDF and embedding
relatedness, syntactic and semantic graphs with spreading activation,
and ontology concept matching.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import Corpus, Direction, RelationType
from .nlp import CoreferenceLink, ParsedRequirement
from .vectors import (
    EmbeddingTable,
    TfidfModel,
    TokenFilter,
    distance_to_similarity,
    embed_requirement,
    similarity,
    tfidf_vectorize,
)

# Shared-evidence count at which cross-reference confidence saturates.
CROSSREF_SATURATION = 3


class ExtractorError(ValueError):
    """Raised on bad extractor configuration or inputs."""


@dataclass(frozen=True)
class RelationPrediction:
    source_id: str
    target_id: str
    rtype: RelationType
    confidence: float
    method: str
    evidence: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ExtractorError(f"confidence {self.confidence} outside [0,1]")

    def canonical(self) -> "RelationPrediction":
        if (self.rtype.direction is Direction.BIDIRECTIONAL
                and self.source_id > self.target_id):
            return RelationPrediction(self.target_id, self.source_id, self.rtype,
                                      self.confidence, self.method, self.evidence)
        return self

    def to_json(self) -> dict:
        return {
            "source": self.source_id,
            "target": self.target_id,
            "type": self.rtype.value,
            "confidence": self.confidence,
            "method": self.method,
            "evidence": self.evidence,
        }


def dump_predictions(predictions: Iterable[RelationPrediction],
                     path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred.to_json(), sort_keys=True) + "\n")


def load_predictions(path: str | Path) -> list[RelationPrediction]:
    out: list[RelationPrediction] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(RelationPrediction(
                source_id=obj["source"], target_id=obj["target"],
                rtype=RelationType.parse(obj["type"]),
                confidence=float(obj["confidence"]),
                method=obj.get("method", "unknown"),
                evidence=obj.get("evidence", {}),
            ))
    return out


# ---------------------------------------------------------------------------
# Token cross-reference detection

def detect_cross_references(corpus: Corpus,
                            parses: dict[str, ParsedRequirement],
                            coref_links: Sequence[CoreferenceLink] = (),
                            symmetric_rtype: RelationType = RelationType.IS_SIMILAR,
                            id_reference_rtype: RelationType = RelationType.REQUIRES,
                            ) -> list[RelationPrediction]:
    """One prediction per pair with shared canonical entities, coref
    links or in-text mentions of another requirement's id; confidence
    is min(1, shared evidence / saturation)."""
    evidence: dict[tuple[str, str], dict] = {}

    def bucket(a: str, b: str) -> dict:
        key = (a, b) if a < b else (b, a)
        return evidence.setdefault(key, {"entities": [], "coref": 0, "id_refs": []})

    by_entity: dict[str, list[str]] = {}
    ids = set(corpus.ids())
    for rid in corpus.ids():
        parsed = parses.get(rid)
        if parsed is None:
            continue
        for canonical in sorted({m.canonical for m in parsed.mentions}):
            by_entity.setdefault(canonical, []).append(rid)
        for tok in parsed.tokens:
            if tok.surface in ids and tok.surface != rid:
                bucket(rid, tok.surface)["id_refs"].append((rid, tok.surface))
    for canonical, holders in by_entity.items():
        for i in range(len(holders)):
            for j in range(i + 1, len(holders)):
                bucket(holders[i], holders[j])["entities"].append(canonical)
    for link in coref_links:
        if link.from_requirement != link.to_requirement:
            bucket(link.from_requirement, link.to_requirement)["coref"] += 1

    predictions: list[RelationPrediction] = []
    for (a, b), ev in sorted(evidence.items()):
        matches = len(ev["entities"]) + ev["coref"] + len(ev["id_refs"])
        confidence = min(1.0, matches / CROSSREF_SATURATION)
        if ev["id_refs"]:
            source, target = ev["id_refs"][0]
            rtype = id_reference_rtype
        else:
            source, target, rtype = a, b, symmetric_rtype
        predictions.append(RelationPrediction(
            source, target, rtype, confidence, "crossref",
            {"entities": ev["entities"], "coref_links": ev["coref"],
             "id_refs": [list(p) for p in ev["id_refs"]]},
        ).canonical())
    return predictions


# ---------------------------------------------------------------------------
# Pattern matching

@dataclass(frozen=True)
class PatternRule:
    id: str
    rtype: RelationType
    keywords: tuple[str, ...] = ()
    require_root: bool = False
    dep_patterns: tuple[tuple[str, str, str], ...] = ()
    direction_hint: str = "undirected"  # source_to_target | target_to_source

    def __post_init__(self) -> None:
        if not self.keywords and not self.dep_patterns:
            raise ExtractorError(f"rule {self.id!r} has no keywords and no patterns")


def load_pattern_rules(path: str | Path) -> list[PatternRule]:
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    rules = []
    for obj in raw:
        rules.append(PatternRule(
            id=obj["id"],
            rtype=RelationType.parse(obj["type"]),
            keywords=tuple(obj.get("keywords", [])),
            require_root=bool(obj.get("require_root", False)),
            dep_patterns=tuple(tuple(p) for p in obj.get("dep_patterns", [])),
            direction_hint=obj.get("direction_hint", "undirected"),
        ))
    return rules


def _root_indices(parsed: ParsedRequirement) -> set[int]:
    return {a.child_index for a in parsed.arcs if a.is_root}


def _rule_side_matches(parsed: ParsedRequirement, rule: PatternRule) -> bool:
    keyword_hit = not rule.keywords
    if rule.keywords:
        roots = _root_indices(parsed)
        root_adjacent = set(roots)
        for arc in parsed.arcs:
            if arc.head_index in roots and not arc.is_root:
                root_adjacent.add(arc.child_index)
        for tok in parsed.tokens:
            if tok.lemma in rule.keywords:
                if rule.require_root and parsed.arcs and tok.index not in root_adjacent:
                    continue
                keyword_hit = True
                break
    dep_hit = not rule.dep_patterns
    if rule.dep_patterns and parsed.arcs:
        for head_pos, dep_label, child_pos in rule.dep_patterns:
            for arc in parsed.arcs:
                if arc.is_root or arc.dep_label != dep_label:
                    continue
                if (parsed.tokens[arc.head_index].pos == head_pos
                        and parsed.tokens[arc.child_index].pos == child_pos):
                    dep_hit = True
                    break
            if dep_hit:
                break
    elif rule.dep_patterns:
        dep_hit = False
    return keyword_hit and dep_hit


def _shared_anchors(pa: ParsedRequirement, pb: ParsedRequirement) -> list[str]:
    ents_a = {m.canonical for m in pa.mentions}
    ents_b = {m.canonical for m in pb.mentions}
    chunks_a = {c.label for c in pa.chunks}
    chunks_b = {c.label for c in pb.chunks}
    return sorted((ents_a & ents_b) | (chunks_a & chunks_b))


def match_patterns(parses: dict[str, ParsedRequirement],
                   rules: Sequence[PatternRule],
                   pair_scope: Sequence[tuple[str, str]],
                   ) -> list[RelationPrediction]:
    """A pair fires a rule when both requirements satisfy its structural
    side and they share at least one canonical entity or noun chunk."""
    side_cache: dict[tuple[str, str], bool] = {}

    def side(rid: str, rule: PatternRule) -> bool:
        key = (rid, rule.id)
        if key not in side_cache:
            side_cache[key] = _rule_side_matches(parses[rid], rule)
        return side_cache[key]

    predictions: list[RelationPrediction] = []
    for a, b in pair_scope:
        if a not in parses or b not in parses:
            continue
        fired = [r for r in rules if side(a, r) and side(b, r)]
        if not fired:
            continue
        anchors = _shared_anchors(parses[a], parses[b])
        if not anchors:
            continue
        for rule in fired:
            source, target = a, b
            if rule.direction_hint == "target_to_source":
                source, target = b, a
            predictions.append(RelationPrediction(
                source, target, rule.rtype,
                min(1.0, len(anchors) / CROSSREF_SATURATION),
                "pattern",
                {"rule_ids": [rule.id], "anchors": anchors},
            ).canonical())
    return predictions


# ---------------------------------------------------------------------------
# Vector relatedness

def tfidf_relate(model: TfidfModel, parses: dict[str, ParsedRequirement],
                 threshold: float,
                 pair_scope: Sequence[tuple[str, str]] | None = None,
                 token_filter: TokenFilter | None = None,
                 ) -> list[RelationPrediction]:
    """Cosine over TF-IDF vectors; pairs at or above the threshold are
    emitted as IsSimilar with the similarity as confidence."""
    if not 0.0 <= threshold <= 1.0:
        raise ExtractorError(f"threshold {threshold} outside [0,1]")
    vecs = {rid: tfidf_vectorize(model, parsed, token_filter)
            for rid, parsed in parses.items()}
    if pair_scope is None:
        ids = sorted(parses)
        pair_scope = [(ids[i], ids[j])
                      for i in range(len(ids)) for j in range(i + 1, len(ids))]
    predictions = []
    for a, b in pair_scope:
        sim = vecs[a].cosine(vecs[b])
        if sim >= threshold and sim > 0.0:
            predictions.append(RelationPrediction(
                a, b, RelationType.IS_SIMILAR, min(1.0, sim), "tfidf",
                {"similarity": sim},
            ).canonical())
    return predictions


def embedding_relate(table: EmbeddingTable,
                     parses: dict[str, ParsedRequirement],
                     threshold: float, measure: str = "cosine",
                     pair_scope: Sequence[tuple[str, str]] | None = None,
                     token_filter: TokenFilter | None = None,
                     ) -> list[RelationPrediction]:
    if not 0.0 <= threshold <= 1.0:
        raise ExtractorError(f"threshold {threshold} outside [0,1]")
    embedded = {rid: embed_requirement(table, parsed, token_filter)
                for rid, parsed in parses.items()}
    if pair_scope is None:
        ids = sorted(parses)
        pair_scope = [(ids[i], ids[j])
                      for i in range(len(ids)) for j in range(i + 1, len(ids))]
    predictions = []
    for a, b in pair_scope:
        (u, oov_a), (v, oov_b) = embedded[a], embedded[b]
        if measure == "cosine":
            sim = similarity(u, v, "cosine")
        else:
            if oov_a and oov_b:
                sim = 0.0  # two all-OOV documents compare as unrelated
            else:
                sim = distance_to_similarity(similarity(u, v, measure))
        if sim >= threshold and sim > 0.0:
            predictions.append(RelationPrediction(
                a, b, RelationType.IS_SIMILAR, min(1.0, max(0.0, sim)),
                "embedding", {"similarity": sim, "measure": measure},
            ).canonical())
    return predictions


# ---------------------------------------------------------------------------
# Syntactic graph

class SyntacticGraph:
    """Weighted directed lemma graph over dependency arcs.

    Edge weight is log2(1 + occurrence count) across the corpus; each
    edge remembers the requirements that contributed it.
    """

    def __init__(self) -> None:
        self.counts: dict[tuple[str, str, str], int] = {}
        self.occurrences: dict[tuple[str, str, str], set[str]] = {}

    def add_parse(self, parsed: ParsedRequirement) -> list[tuple[str, str, str]]:
        added: list[tuple[str, str, str]] = []
        for arc in parsed.arcs:
            if arc.is_root:
                continue
            key = (parsed.tokens[arc.head_index].lemma,
                   parsed.tokens[arc.child_index].lemma,
                   arc.dep_label)
            self.counts[key] = self.counts.get(key, 0) + 1
            self.occurrences.setdefault(key, set()).add(parsed.requirement_id)
            added.append(key)
        return added

    def weight(self, edge: tuple[str, str, str]) -> float:
        return math.log2(1 + self.counts.get(edge, 0))

    @property
    def nodes(self) -> set[str]:
        out: set[str] = set()
        for head, child, _ in self.counts:
            out.add(head)
            out.add(child)
        return out


def build_syntactic_graph(parses: Iterable[ParsedRequirement]) -> SyntacticGraph:
    graph = SyntacticGraph()
    for parsed in parses:
        graph.add_parse(parsed)
    return graph


def graph_match(graph: SyntacticGraph, watched_lemmas: Iterable[str],
                new_parse: ParsedRequirement,
                rtype: RelationType = RelationType.REQUIRES,
                ) -> list[RelationPrediction]:
    """Insert a new requirement into the graph and flag pairs whose
    shared edges end in a watched lemma."""
    watched = set(watched_lemmas)
    events: dict[str, list[tuple[str, str, str]]] = {}
    for edge in graph.add_parse(new_parse):
        head, child, dep = edge
        if child not in watched and head not in watched:
            continue
        for other in sorted(graph.occurrences[edge]):
            if other != new_parse.requirement_id:
                events.setdefault(other, []).append(edge)
    predictions = []
    for other, edges in sorted(events.items()):
        predictions.append(RelationPrediction(
            new_parse.requirement_id, other, rtype,
            min(1.0, len(edges) / CROSSREF_SATURATION), "syngraph",
            {"edges": [list(e) for e in edges]},
        ).canonical())
    return predictions


# ---------------------------------------------------------------------------
# Semantic (SRL-lite) graph and spreading activation

SUBJECT_DEPS = {"nsubj", "nsubj:pass", "csubj"}
OBJECT_DEPS = {"obj", "dobj", "iobj", "obl", "obl:agent"}


@dataclass(frozen=True)
class SemanticNode:
    label: str
    kind: str  # predicate | argument


class SemanticGraph:
    """Predicate-argument graph with coref-merged argument nodes."""

    def __init__(self) -> None:
        self.nodes: set[SemanticNode] = set()
        self.edges: set[tuple[SemanticNode, str, SemanticNode]] = set()
        self.occurrences: dict[SemanticNode, set[str]] = {}
        self._canonical_label: dict[str, str] = {}

    def _canon(self, label: str) -> str:
        seen = set()
        while label in self._canonical_label and label not in seen:
            seen.add(label)
            label = self._canonical_label[label]
        return label

    def merge_labels(self, a: str, b: str) -> None:
        ra, rb = self._canon(a), self._canon(b)
        if ra != rb:
            keep, drop = sorted((ra, rb))
            self._canonical_label[drop] = keep

    def add(self, predicate: str, role: str, argument: str, req_id: str) -> None:
        pred = SemanticNode(predicate, "predicate")
        arg = SemanticNode(self._canon(argument), "argument")
        self.nodes.add(pred)
        self.nodes.add(arg)
        self.edges.add((pred, role, arg))
        self.occurrences.setdefault(pred, set()).add(req_id)
        self.occurrences.setdefault(arg, set()).add(req_id)

    def neighbors(self, node: SemanticNode) -> list[SemanticNode]:
        out = []
        for pred, _, arg in self.edges:
            if pred == node:
                out.append(arg)
            elif arg == node:
                out.append(pred)
        return sorted(out, key=lambda n: (n.kind, n.label))

    def nodes_of(self, req_id: str) -> list[SemanticNode]:
        return sorted((n for n, reqs in self.occurrences.items() if req_id in reqs),
                      key=lambda n: (n.kind, n.label))


def build_semantic_graph(parses: dict[str, ParsedRequirement],
                         coref_links: Sequence[CoreferenceLink] = (),
                         ) -> SemanticGraph:
    """SRL-lite: verbs with subject/object dependents become predicate
    nodes; subject chunks take role ``agent`` and object-side chunks
    role ``object``. Arguments are merged via canonical labels and
    coreference links."""
    graph = SemanticGraph()

    def chunk_label_at(parsed: ParsedRequirement, index: int) -> str | None:
        for chunk in parsed.chunks:
            if index in chunk.token_indices:
                return chunk.label
        return None

    for link in sorted(coref_links, key=lambda l: (l.from_requirement, l.from_span)):
        pa, pb = link.from_requirement, link.to_requirement
        la = _span_label(parses.get(pa), link.from_span)
        lb = _span_label(parses.get(pb), link.to_span)
        if la and lb:
            graph.merge_labels(la, lb)

    for rid in sorted(parses):
        parsed = parses[rid]
        for arc in parsed.arcs:
            if arc.is_root:
                continue
            head = parsed.tokens[arc.head_index]
            if head.pos != "VERB":
                continue
            role = None
            if arc.dep_label in SUBJECT_DEPS:
                role = "agent"
            elif arc.dep_label in OBJECT_DEPS:
                role = "object"
            if role is None:
                continue
            label = chunk_label_at(parsed, arc.child_index)
            if label is None:
                label = parsed.tokens[arc.child_index].lemma
            graph.add(head.lemma, role, label, rid)
    return graph


def _span_label(parsed: ParsedRequirement | None, span: tuple[int, ...]) -> str | None:
    if parsed is None:
        return None
    try:
        return " ".join(parsed.tokens[i].lemma for i in span)
    except IndexError:
        return None


def spread_activation(graph: SemanticGraph, seeds: Iterable[SemanticNode],
                      decay: float = 0.5, hops: int = 3,
                      floor: float = 1e-4) -> dict[SemanticNode, float]:
    """Propagate decaying activation from seed nodes over undirected
    incidence; each hop distributes parent activation · decay evenly
    over the parent's neighbors, stopping at the hop limit or when all
    increments fall below the floor."""
    if not 0.0 < decay <= 1.0:
        raise ExtractorError(f"decay {decay} outside (0,1]")
    activation: dict[SemanticNode, float] = {s: 1.0 for s in seeds}
    frontier = dict(activation)
    for _ in range(hops):
        increments: dict[SemanticNode, float] = {}
        for node, act in frontier.items():
            neighbors = graph.neighbors(node)
            if not neighbors:
                continue
            share = act * decay / len(neighbors)
            for nb in neighbors:
                increments[nb] = increments.get(nb, 0.0) + share
        increments = {n: v for n, v in increments.items() if v >= floor}
        if not increments:
            break
        for node, inc in increments.items():
            activation[node] = activation.get(node, 0.0) + inc
        frontier = increments
    return activation


def activation_relate(graph: SemanticGraph,
                      parses: dict[str, ParsedRequirement],
                      threshold: float = 0.1, decay: float = 0.5,
                      hops: int = 3, floor: float = 1e-4,
                      rtype: RelationType = RelationType.IS_SIMILAR,
                      ) -> list[RelationPrediction]:
    """Seed activation from each requirement's nodes and score every
    other requirement by its mean node activation (clamped to [0,1])."""
    node_sets = {rid: graph.nodes_of(rid) for rid in sorted(parses)}
    predictions: dict[tuple[str, str], RelationPrediction] = {}
    for rid, seeds in node_sets.items():
        if not seeds:
            continue
        activation = spread_activation(graph, seeds, decay, hops, floor)
        for other, other_nodes in node_sets.items():
            if other == rid or not other_nodes:
                continue
            mass = sum(activation.get(n, 0.0) for n in other_nodes)
            score = min(1.0, mass / len(other_nodes))
            if score >= threshold and score > 0.0:
                pred = RelationPrediction(
                    rid, other, rtype, score, "semgraph",
                    {"activation_mass": mass, "nodes": len(other_nodes)},
                ).canonical()
                key = (pred.source_id, pred.target_id)
                if key not in predictions or pred.confidence > predictions[key].confidence:
                    predictions[key] = pred
    return [predictions[k] for k in sorted(predictions)]


# ---------------------------------------------------------------------------
# Ontology matching

@dataclass
class Concept:
    id: str
    label: str
    synonyms: tuple[str, ...] = ()
    parent: str | None = None


@dataclass
class Ontology:
    concepts: dict[str, Concept]
    relations: list[tuple[str, str, RelationType]]

    def __post_init__(self) -> None:
        for cid, concept in self.concepts.items():
            if concept.parent is not None and concept.parent not in self.concepts:
                raise ExtractorError(f"concept {cid!r} has unknown parent "
                                     f"{concept.parent!r}")
        for source, target, _ in self.relations:
            for cid in (source, target):
                if cid not in self.concepts:
                    raise ExtractorError(f"relation endpoint {cid!r} not a concept")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        for start in self.concepts:
            seen = set()
            node: str | None = start
            while node is not None:
                if node in seen:
                    raise ExtractorError(f"cyclic concept hierarchy at {start!r}")
                seen.add(node)
                node = self.concepts[node].parent


def load_ontology(path: str | Path) -> Ontology:
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    concepts = {}
    for obj in raw.get("concepts", []):
        concepts[obj["id"]] = Concept(
            id=obj["id"], label=obj["label"],
            synonyms=tuple(obj.get("synonyms", [])),
            parent=obj.get("parent"),
        )
    relations = [(r["source"], r["target"], RelationType.parse(r["type"]))
                 for r in raw.get("relations", [])]
    return Ontology(concepts=concepts, relations=relations)


def _concept_phrases(concept: Concept) -> list[tuple[str, ...]]:
    phrases = [concept.label, *concept.synonyms]
    return [tuple(p.lower().split()) for p in phrases if p.strip()]


def map_requirements_to_concepts(ontology: Ontology,
                                 parses: dict[str, ParsedRequirement],
                                 ) -> dict[str, set[str]]:
    """Map each concept id to the requirements matching its label or a
    synonym over lemmas, chunks and n-grams."""
    matches: dict[str, set[str]] = {cid: set() for cid in ontology.concepts}
    for rid in sorted(parses):
        parsed = parses[rid]
        lemmas = [t.lemma for t in parsed.tokens]
        surfaces = [t.normalized for t in parsed.tokens]
        phrases: set[tuple[str, ...]] = {(l,) for l in lemmas}
        phrases.update((s,) for s in surfaces)
        for gram in list(parsed.ngrams) + list(parsed.chunks):
            phrases.add(tuple(gram.label.split()))
            phrases.add(tuple(parsed.tokens[i].normalized
                              for i in gram.token_indices))
        for n in (2, 3):
            for i in range(len(lemmas) - n + 1):
                phrases.add(tuple(lemmas[i:i + n]))
                phrases.add(tuple(surfaces[i:i + n]))
        for cid, concept in ontology.concepts.items():
            for phrase in _concept_phrases(concept):
                if phrase in phrases:
                    matches[cid].add(rid)
                    break
    return matches


def ontology_match(ontology: Ontology,
                   parses: dict[str, ParsedRequirement],
                   ) -> list[RelationPrediction]:
    """Emit one prediction per ontology relation (c1, c2, d) and pair of
    requirements matching c1 and c2; a requirement matching a child
    concept additionally Details one matching its parent."""
    matches = map_requirements_to_concepts(ontology, parses)
    predictions: dict[tuple[str, str, RelationType], RelationPrediction] = {}
    for source_c, target_c, rtype in sorted(
            ontology.relations, key=lambda r: (r[0], r[1], r[2].value)):
        for ri in sorted(matches[source_c]):
            for rj in sorted(matches[target_c]):
                if ri == rj:
                    continue
                pred = RelationPrediction(
                    ri, rj, rtype, 1.0, "ontology",
                    {"source_concept": source_c, "target_concept": target_c},
                ).canonical()
                predictions.setdefault(
                    (pred.source_id, pred.target_id, pred.rtype), pred)
    for cid in sorted(ontology.concepts):
        parent = ontology.concepts[cid].parent
        if parent is None:
            continue
        for ri in sorted(matches[cid]):
            for rj in sorted(matches[parent]):
                if ri == rj:
                    continue
                pred = RelationPrediction(
                    ri, rj, RelationType.DETAILS, 1.0, "ontology",
                    {"source_concept": cid, "target_concept": parent,
                     "via": "hierarchy"},
                )
                predictions.setdefault(
                    (pred.source_id, pred.target_id, pred.rtype), pred)
    return [predictions[k] for k in sorted(predictions,
                                           key=lambda k: (k[0], k[1], k[2].value))]
