"""Machine-learning relation extractors.

Pair featurization over fitted vector models, three classic classifiers
(Gaussian naive Bayes, k-nearest-neighbours, one-vs-rest linear SVM via
SGD), agreement-based ensembles, weakly supervised pseudo-labeling, an
active-learning oracle loop, and k-means clustering with relation
suggestion. All training is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import RelationType
from .nlp import ParsedRequirement
from .retrieval import RelationPrediction
from .vectors import (
    EmbeddingTable,
    LsaModel,
    TfidfModel,
    TokenFilter,
    embed_requirement,
    lsa_project,
    similarity,
    tfidf_vectorize,
)


class LearningError(ValueError):
    """Raised on degenerate training inputs or misconfiguration."""


PairKey = tuple[str, str]


@dataclass(frozen=True)
class PairFeatures:
    pair: PairKey
    vector: np.ndarray
    recipe: str


@dataclass
class FeatureRecipe:
    """Featurization: |u−v| and u⊙v blocks over document vectors, a
    cosine scalar, then shared-entity and shared-chunk counts."""

    id: str = "default"
    vector_source: str = "tfidf"  # tfidf | embedding | lsa


class PairFeaturizer:
    def __init__(self, parses: dict[str, ParsedRequirement],
                 recipe: FeatureRecipe | None = None,
                 tfidf: TfidfModel | None = None,
                 embeddings: EmbeddingTable | None = None,
                 lsa: LsaModel | None = None,
                 token_filter: TokenFilter | None = None):
        self.parses = parses
        self.recipe = recipe or FeatureRecipe()
        self.token_filter = token_filter or TokenFilter()
        self._doc_vectors: dict[str, np.ndarray] = {}
        source = self.recipe.vector_source
        if source == "tfidf":
            if tfidf is None:
                raise LearningError("recipe uses tfidf but no model was fitted")
            dim = len(tfidf.vocabulary)
            for rid, parsed in parses.items():
                sparse = tfidf_vectorize(tfidf, parsed, self.token_filter)
                dense = np.zeros(dim)
                for idx, w in sparse.entries.items():
                    dense[idx] = w
                self._doc_vectors[rid] = dense
        elif source == "embedding":
            if embeddings is None:
                raise LearningError("recipe uses embeddings but none were loaded")
            for rid, parsed in parses.items():
                vec, _ = embed_requirement(embeddings, parsed, self.token_filter)
                self._doc_vectors[rid] = vec
        elif source == "lsa":
            if lsa is None or tfidf is None:
                raise LearningError("recipe uses lsa but no model was fitted")
            for rid, parsed in parses.items():
                sparse = tfidf_vectorize(tfidf, parsed, self.token_filter)
                self._doc_vectors[rid] = lsa_project(lsa, sparse)
        else:
            raise LearningError(f"unknown vector source: {source!r}")

    def featurize(self, pair: PairKey) -> PairFeatures:
        a, b = pair
        for rid in (a, b):
            if rid not in self._doc_vectors:
                raise LearningError(f"unknown requirement in pair: {rid!r}")
        u, v = self._doc_vectors[a], self._doc_vectors[b]
        pa, pb = self.parses[a], self.parses[b]
        shared_entities = len({m.canonical for m in pa.mentions}
                              & {m.canonical for m in pb.mentions})
        shared_chunks = len({c.label for c in pa.chunks}
                            & {c.label for c in pb.chunks})
        vector = np.concatenate([
            np.abs(u - v),
            u * v,
            [similarity(u, v, "cosine"), float(shared_entities),
             float(shared_chunks)],
        ])
        return PairFeatures(pair=pair, vector=vector, recipe=self.recipe.id)

    def featurize_all(self, pairs: Sequence[PairKey]) -> list[PairFeatures]:
        return [self.featurize(p) for p in pairs]


# ---------------------------------------------------------------------------
# Classifiers

@dataclass
class ClassifierModel:
    kind: str  # naive_bayes | knn | linear_svm
    classes: list[RelationType]
    parameters: dict
    trained_on: str = ""

    def predict_proba(self, vectors: np.ndarray) -> np.ndarray:
        if self.kind == "naive_bayes":
            return _nb_proba(self.parameters, vectors)
        if self.kind == "knn":
            return _knn_proba(self.parameters, vectors, len(self.classes))
        if self.kind == "linear_svm":
            return _svm_proba(self.parameters, vectors)
        raise LearningError(f"unknown classifier kind: {self.kind!r}")

    def predict(self, vectors: np.ndarray) -> list[RelationType]:
        proba = self.predict_proba(vectors)
        return [self.classes[i] for i in proba.argmax(axis=1)]


def _dataset_fingerprint(x: np.ndarray, y: Sequence[int]) -> str:
    import hashlib
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(x).tobytes())
    h.update(np.asarray(list(y)).tobytes())
    return h.hexdigest()[:16]


def train_classifier(kind: str, features: Sequence[PairFeatures],
                     labels: Sequence[RelationType],
                     hyper: dict | None = None, seed: int = 0) -> ClassifierModel:
    """Train one classifier; raises on single-class input."""
    hyper = hyper or {}
    classes = sorted(set(labels), key=lambda t: t.value)
    if len(classes) < 2:
        raise LearningError("degenerate training set: fewer than 2 classes")
    class_index = {c: i for i, c in enumerate(classes)}
    x = np.stack([f.vector for f in features])
    y = np.array([class_index[l] for l in labels])
    fingerprint = _dataset_fingerprint(x, y)
    if kind == "naive_bayes":
        params = _nb_fit(x, y, len(classes),
                         var_smoothing=hyper.get("var_smoothing", 1e-9))
    elif kind == "knn":
        params = {"x": x, "y": y, "k": int(hyper.get("k", 5))}
    elif kind == "linear_svm":
        params = _svm_fit(x, y, len(classes), seed,
                          epochs=int(hyper.get("epochs", 50)),
                          lr=float(hyper.get("lr", 0.05)),
                          l2=float(hyper.get("l2", 1e-4)))
    else:
        raise LearningError(f"unknown classifier kind: {kind!r}")
    return ClassifierModel(kind=kind, classes=classes, parameters=params,
                           trained_on=fingerprint)


def _nb_fit(x: np.ndarray, y: np.ndarray, n_classes: int,
            var_smoothing: float) -> dict:
    means, variances, priors = [], [], []
    eps = var_smoothing * max(x.var(axis=0).max(), 1e-12)
    for c in range(n_classes):
        xc = x[y == c]
        means.append(xc.mean(axis=0))
        variances.append(xc.var(axis=0) + eps)
        priors.append(len(xc) / len(x))
    return {"means": np.stack(means), "variances": np.stack(variances),
            "log_priors": np.log(priors)}


def _nb_proba(params: dict, x: np.ndarray) -> np.ndarray:
    means, variances = params["means"], params["variances"]
    log_joint = np.empty((len(x), len(means)))
    for c in range(len(means)):
        ll = -0.5 * (np.log(2 * np.pi * variances[c])
                     + (x - means[c]) ** 2 / variances[c]).sum(axis=1)
        log_joint[:, c] = params["log_priors"][c] + ll
    return _softmax(log_joint)


def _knn_proba(params: dict, x: np.ndarray, n_classes: int) -> np.ndarray:
    train_x, train_y, k = params["x"], params["y"], params["k"]
    k = min(k, len(train_x))
    out = np.zeros((len(x), n_classes))
    for i, row in enumerate(x):
        dists = np.linalg.norm(train_x - row, axis=1)
        nearest = np.argsort(dists, kind="stable")[:k]
        for idx in nearest:
            out[i, train_y[idx]] += 1.0
    return out / k


def _svm_fit(x: np.ndarray, y: np.ndarray, n_classes: int, seed: int,
             epochs: int, lr: float, l2: float) -> dict:
    """One-vs-rest hinge loss via SGD; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    n, d = x.shape
    weights = np.zeros((n_classes, d))
    bias = np.zeros(n_classes)
    for c in range(n_classes):
        target = np.where(y == c, 1.0, -1.0)
        w = np.zeros(d)
        b = 0.0
        for _ in range(epochs):
            for i in rng.permutation(n):
                margin = target[i] * (x[i] @ w + b)
                if margin < 1.0:
                    w = (1 - lr * l2) * w + lr * target[i] * x[i]
                    b += lr * target[i]
                else:
                    w = (1 - lr * l2) * w
        weights[c] = w
        bias[c] = b
    return {"weights": weights, "bias": bias}


def _svm_proba(params: dict, x: np.ndarray) -> np.ndarray:
    scores = x @ params["weights"].T + params["bias"]
    return _softmax(scores)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Ensemble

@dataclass
class EnsembleConfig:
    member_kinds: tuple[str, ...] = ("naive_bayes", "knn", "linear_svm")
    vote: str = "unanimous"  # unanimous | majority
    confidence_rule: str = "mean"  # mean | min

    def __post_init__(self) -> None:
        if len(self.member_kinds) < 2:
            raise LearningError("an ensemble needs at least 2 members")


@dataclass
class Ensemble:
    config: EnsembleConfig
    members: list[ClassifierModel]

    def __post_init__(self) -> None:
        class_sets = {tuple(m.classes) for m in self.members}
        if len(class_sets) > 1:
            raise LearningError("ensemble members trained on different class sets")

    @property
    def classes(self) -> list[RelationType]:
        return self.members[0].classes

    def predict(self, vectors: np.ndarray,
                ) -> list[tuple[RelationType | None, float, list[RelationType]]]:
        """Per row: (label or None for abstain, confidence, member votes)."""
        probas = [m.predict_proba(vectors) for m in self.members]
        results = []
        for i in range(len(vectors)):
            votes = [self.classes[int(p[i].argmax())] for p in probas]
            vote_probs = [float(p[i].max()) for p in probas]
            if self.config.vote == "unanimous":
                if len(set(votes)) == 1:
                    label = votes[0]
                else:
                    results.append((None, 0.0, votes))
                    continue
            else:
                tally: dict[RelationType, int] = {}
                for v in votes:
                    tally[v] = tally.get(v, 0) + 1
                top = max(tally.values())
                tied = [c for c, n in tally.items() if n == top]
                if len(tied) == 1:
                    label = tied[0]
                else:
                    mean_probs = {
                        c: float(np.mean([p[i][self.classes.index(c)]
                                          for p in probas]))
                        for c in tied
                    }
                    label = sorted(tied, key=lambda c: (-mean_probs[c], c.value))[0]
            member_conf = [float(p[i][self.classes.index(label)]) for p in probas]
            conf = (min(member_conf) if self.config.confidence_rule == "min"
                    else float(np.mean(member_conf)))
            results.append((label, conf, votes))
        return results


def train_ensemble(config: EnsembleConfig, features: Sequence[PairFeatures],
                   labels: Sequence[RelationType], hyper: dict | None = None,
                   seed: int = 0) -> Ensemble:
    members = [train_classifier(kind, features, labels, hyper, seed)
               for kind in config.member_kinds]
    return Ensemble(config=config, members=members)


# ---------------------------------------------------------------------------
# Weakly supervised learning

def wsl_run(featurizer: PairFeaturizer,
            labeled: dict[PairKey, RelationType],
            unlabeled: Iterable[PairKey],
            config: EnsembleConfig | None = None,
            max_iters: int = 10, hyper: dict | None = None, seed: int = 0,
            ) -> tuple[dict[PairKey, RelationType], list[RelationPrediction]]:
    """Iteratively pseudo-label unanimous ensemble predictions until no
    new pseudo-labels appear or the iteration cap is reached. Gold
    labels are never overwritten."""
    if not labeled:
        raise LearningError("WSL needs a non-empty labeled seed set")
    config = config or EnsembleConfig()
    gold_keys = set(labeled)
    expanded = dict(labeled)
    pool = [p for p in unlabeled if p not in expanded]
    predictions: list[RelationPrediction] = []
    for _ in range(max_iters):
        if not pool:
            break
        pairs = sorted(expanded)
        features = featurizer.featurize_all(pairs)
        ensemble = train_ensemble(config, features,
                                  [expanded[p] for p in pairs], hyper, seed)
        pool_feats = featurizer.featurize_all(pool)
        vectors = np.stack([f.vector for f in pool_feats])
        results = ensemble.predict(vectors)
        newly: list[tuple[PairKey, RelationType, float, list[RelationType]]] = []
        for pair, (label, conf, votes) in zip(pool, results):
            if label is not None:
                newly.append((pair, label, conf, votes))
        if not newly:
            break
        for pair, label, conf, votes in newly:
            assert pair not in gold_keys
            expanded[pair] = label
            predictions.append(RelationPrediction(
                pair[0], pair[1], label, conf, "wsl",
                {"votes": [v.value for v in votes], "provenance": "predicted"},
            ))
        pool = [p for p in pool if p not in expanded]
    return expanded, predictions


# ---------------------------------------------------------------------------
# Active learning

@dataclass
class OracleQuery:
    pair: PairKey
    confidence: float
    votes: list[str]


@dataclass
class AuditEvent:
    iteration: int
    pair: PairKey
    action: str  # auto_accepted | oracle_labeled
    label: str
    confidence: float
    timestamp: float

    def to_json(self) -> dict:
        return {"iter": self.iteration, "pair": list(self.pair),
                "action": self.action, "label": self.label,
                "confidence": self.confidence, "timestamp": self.timestamp}

    @classmethod
    def from_json(cls, obj: dict) -> "AuditEvent":
        return cls(iteration=obj["iter"], pair=tuple(obj["pair"]),
                   action=obj["action"], label=obj["label"],
                   confidence=obj["confidence"], timestamp=obj["timestamp"])


@dataclass
class ALSession:
    """Single-writer active-learning state machine.

    Pools stay disjoint; every pair leaving the unlabeled pool is
    recorded in the audit log with its reason.
    """

    id: str
    featurizer: PairFeaturizer
    labeled: dict[PairKey, RelationType]
    unlabeled: list[PairKey]
    low: float = 0.6
    high: float = 0.9
    oracle: str = "human_api"  # human_api | scripted_gold | external_tool
    gold: dict[PairKey, RelationType] | None = None
    config: EnsembleConfig = field(default_factory=EnsembleConfig)
    hyper: dict | None = None
    seed: int = 0
    iteration: int = 0
    audit_log: list[AuditEvent] = field(default_factory=list)
    pending_query: OracleQuery | None = None
    complete: bool = False
    _ensemble: Ensemble | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.low <= self.high <= 1.0:
            raise LearningError(
                f"thresholds must satisfy 0 <= low <= high <= 1, "
                f"got ({self.low}, {self.high})")
        overlap = set(self.labeled) & set(self.unlabeled)
        if overlap:
            raise LearningError(f"pools overlap on {sorted(overlap)[:3]}")
        if self.oracle == "scripted_gold" and self.gold is None:
            raise LearningError("scripted_gold oracle needs a gold map")

    def _retrain(self) -> None:
        pairs = sorted(self.labeled)
        features = self.featurizer.featurize_all(pairs)
        self._ensemble = train_ensemble(
            self.config, features, [self.labeled[p] for p in pairs],
            self.hyper, self.seed)

    def _record(self, pair: PairKey, action: str, label: RelationType,
                confidence: float) -> None:
        self.audit_log.append(AuditEvent(
            iteration=self.iteration, pair=pair, action=action,
            label=label.value, confidence=confidence, timestamp=time.time()))

    def step(self) -> OracleQuery | None:
        """Score the pool, auto-accept confident pairs, and surface the
        least-confident pair as an oracle query. Returns the pending
        query, if any."""
        if self.pending_query is not None:
            return self.pending_query
        if not self.unlabeled:
            self.complete = True
            return None
        if self._ensemble is None:
            self._retrain()
        assert self._ensemble is not None
        feats = self.featurizer.featurize_all(self.unlabeled)
        vectors = np.stack([f.vector for f in feats])
        results = self._ensemble.predict(vectors)
        changed = False
        uncertain: list[tuple[float, PairKey, list[RelationType]]] = []
        still_unlabeled: list[PairKey] = []
        for pair, (label, conf, votes) in zip(self.unlabeled, results):
            if label is not None and conf >= self.high:
                self.labeled[pair] = label
                self._record(pair, "auto_accepted", label, conf)
                changed = True
            else:
                still_unlabeled.append(pair)
                if conf <= self.low:
                    uncertain.append((conf, pair, votes))
        self.unlabeled = still_unlabeled
        query: OracleQuery | None = None
        if uncertain:
            uncertain.sort(key=lambda t: (t[0], t[1]))
            conf, pair, votes = uncertain[0]
            query = OracleQuery(pair=pair, confidence=conf,
                                votes=[v.value for v in votes])
            if self.oracle == "scripted_gold":
                assert self.gold is not None
                self.label_pair(pair, self.gold[pair], _query=query)
                changed = True
                query = None
            else:
                self.pending_query = query
        if changed:
            self._retrain()
        self.iteration += 1
        if not self.unlabeled and self.pending_query is None:
            self.complete = True
        elif not changed and self.pending_query is None and query is None:
            self.complete = True  # nothing acceptable, nothing uncertain
        return query if query is not None else self.pending_query

    def label_pair(self, pair: PairKey, label: RelationType,
                   _query: OracleQuery | None = None) -> None:
        query = _query or self.pending_query
        if query is None or query.pair != pair:
            raise LearningError(f"no pending oracle query for pair {pair}")
        if pair not in self.unlabeled:
            raise LearningError(f"pair {pair} is not in the unlabeled pool")
        self.unlabeled.remove(pair)
        self.labeled[pair] = label
        self._record(pair, "oracle_labeled", label, query.confidence)
        if _query is None:
            self.pending_query = None
            self._retrain()

    def state(self) -> dict:
        return {
            "id": self.id,
            "iteration": self.iteration,
            "labeled": len(self.labeled),
            "unlabeled": len(self.unlabeled),
            "complete": self.complete,
            "pending": (list(self.pending_query.pair)
                        if self.pending_query else None),
            "thresholds": [self.low, self.high],
            "oracle": self.oracle,
        }


# ---------------------------------------------------------------------------
# Clustering

@dataclass
class ClusteringResult:
    k: int
    assignments: dict[str, int]
    centroids: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)


def kmeans_cluster(vectors: dict[str, np.ndarray], k: int, seed: int = 0,
                   max_iters: int = 100) -> ClusteringResult:
    """Lloyd's algorithm with k-means++ initialization; empty clusters
    are re-seeded with the farthest point, so all k clusters stay
    non-empty. Inertia is non-increasing across iterations."""
    if k <= 0:
        raise LearningError(f"k must be positive, got {k}")
    ids = sorted(vectors)
    if k > len(ids):
        raise LearningError(f"k={k} exceeds the {len(ids)} available points")
    x = np.stack([vectors[i] for i in ids])
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(x, k, rng)
    history: list[float] = []
    assign = np.zeros(len(x), dtype=int)
    for _ in range(max_iters):
        dists = np.linalg.norm(x[:, None, :] - centroids[None, :, :], axis=2)
        new_assign = dists.argmin(axis=1)
        inertia = float((dists[np.arange(len(x)), new_assign] ** 2).sum())
        history.append(inertia)
        for c in range(k):
            members = x[new_assign == c]
            if len(members) == 0:
                own = np.linalg.norm(
                    x - centroids[new_assign], axis=1)
                far = int(own.argmax())
                centroids[c] = x[far]
                new_assign[far] = c
            else:
                centroids[c] = members.mean(axis=0)
        if np.array_equal(new_assign, assign) and len(history) > 1:
            assign = new_assign
            break
        assign = new_assign
    dists = np.linalg.norm(x[:, None, :] - centroids[None, :, :], axis=2)
    inertia = float((dists[np.arange(len(x)), assign] ** 2).sum())
    return ClusteringResult(
        k=k, assignments={rid: int(c) for rid, c in zip(ids, assign)},
        centroids=centroids, inertia=inertia, inertia_history=history)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((x - c) ** 2, axis=1) for c in centroids], axis=0)
        total = d2.sum()
        if total == 0.0:
            centroids.append(x[rng.integers(len(x))])
            continue
        probs = d2 / total
        centroids.append(x[rng.choice(len(x), p=probs)])
    return np.stack(centroids).astype(np.float64).copy()


def suggest_from_clusters(result: ClusteringResult,
                          vectors: dict[str, np.ndarray],
                          per_cluster_limit: int = 3,
                          ) -> list[RelationPrediction]:
    """Pair each cluster's centroid-nearest requirement with its next
    nearest neighbors; confidence is 1/(1+distance)."""
    suggestions: list[RelationPrediction] = []
    for c in range(result.k):
        members = sorted(rid for rid, a in result.assignments.items() if a == c)
        if len(members) < 2:
            continue
        centroid = result.centroids[c]
        by_dist = sorted(
            members,
            key=lambda rid: (float(np.linalg.norm(vectors[rid] - centroid)), rid))
        anchor = by_dist[0]
        for other in by_dist[1:per_cluster_limit + 1]:
            dist = float(np.linalg.norm(vectors[anchor] - vectors[other]))
            suggestions.append(RelationPrediction(
                anchor, other, RelationType.IS_SIMILAR,
                1.0 / (1.0 + dist), "clustering", {"cluster": c},
            ).canonical())
    return suggestions


# ---------------------------------------------------------------------------
# Model archive

def save_classifier(model: ClassifierModel, path) -> None:
    payload = {
        "kind": model.kind,
        "classes": [c.value for c in model.classes],
        "trained_on": model.trained_on,
        "parameters": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                       for k, v in model.parameters.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_classifier(path) -> ClassifierModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    params = {k: (np.array(v) if isinstance(v, list) else v)
              for k, v in payload["parameters"].items()}
    if "y" in params:
        params["y"] = params["y"].astype(int)
    return ClassifierModel(
        kind=payload["kind"],
        classes=[RelationType.parse(c) for c in payload["classes"]],
        parameters=params, trained_on=payload["trained_on"])
