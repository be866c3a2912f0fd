import numpy as np
import pytest

from conftest import annotate
from reqrel.learning import (
    ALSession,
    AuditEvent,
    ClassifierModel,
    Ensemble,
    EnsembleConfig,
    FeatureRecipe,
    LearningError,
    PairFeaturizer,
    kmeans_cluster,
    load_classifier,
    save_classifier,
    suggest_from_clusters,
    train_classifier,
    train_ensemble,
    wsl_run,
)
from reqrel.model import Corpus, Requirement, RelationType
from reqrel.nlp import preprocess
from reqrel.vectors import tfidf_fit


# ---------------------------------------------------------------------------
# Synthetic feature data: two well-separated blobs plus an optional third.

def blobs(n_per_class=20, n_classes=2, dim=4, seed=0, spread=0.3):
    rng = np.random.default_rng(seed)
    centers = np.eye(max(dim, n_classes))[:n_classes, :dim] * 4.0
    x, y = [], []
    for c in range(n_classes):
        x.append(centers[c] + rng.normal(scale=spread, size=(n_per_class, dim)))
        y.extend([c] * n_per_class)
    return np.vstack(x), np.array(y)


CLASSES = [RelationType.NONE, RelationType.REQUIRES, RelationType.IS_SIMILAR]


def featureset(x, y):
    from reqrel.learning import PairFeatures
    features = [PairFeatures(pair=(f"A{i}", f"B{i}"), vector=row, recipe="t")
                for i, row in enumerate(x)]
    labels = [CLASSES[c] for c in y]
    return features, labels


@pytest.fixture()
def text_featurizer():
    corpus = Corpus([
        Requirement("P1", "The pump shall start on demand.", "D", 1),
        Requirement("P2", "The pump shall stop on overload.", "D", 2),
        Requirement("V1", "The valve shall open slowly.", "D", 3),
        Requirement("V2", "The valve shall close on alarm.", "D", 4),
    ])
    parses = {r.id: annotate(preprocess(r)) for r in corpus}
    return PairFeaturizer(parses, FeatureRecipe(),
                          tfidf=tfidf_fit(parses.values()))


class TestFeaturizer:
    def test_vectors_are_symmetric_in_pair_order(self, text_featurizer):
        fwd = text_featurizer.featurize(("P1", "P2")).vector
        rev = text_featurizer.featurize(("P2", "P1")).vector
        assert np.allclose(fwd, rev)

    def test_unknown_requirement_rejected(self, text_featurizer):
        with pytest.raises(LearningError):
            text_featurizer.featurize(("P1", "XX"))

    def test_recipe_requires_matching_model(self):
        with pytest.raises(LearningError, match="tfidf"):
            PairFeaturizer({}, FeatureRecipe(vector_source="tfidf"))


class TestClassifiers:
    @pytest.mark.parametrize("kind", ["naive_bayes", "knn", "linear_svm"])
    def test_separable_data_is_learned(self, kind):
        x, y = blobs(seed=1)
        features, labels = featureset(x, y)
        model = train_classifier(kind, features, labels, seed=0)
        predicted = model.predict(x)
        agreement = np.mean([p == l for p, l in zip(predicted, labels)])
        assert agreement >= 0.95

    @pytest.mark.parametrize("kind", ["naive_bayes", "knn", "linear_svm"])
    def test_probabilities_sum_to_one(self, kind):
        x, y = blobs(n_classes=3, seed=2)
        features, labels = featureset(x, y)
        model = train_classifier(kind, features, labels, seed=0)
        proba = model.predict_proba(x[:7])
        assert proba.shape == (7, 3)
        assert np.allclose(proba.sum(axis=1), 1.0)
        assert np.all(proba >= 0)

    def test_single_class_rejected(self):
        x, y = blobs(seed=3)
        features, _ = featureset(x, y)
        with pytest.raises(LearningError, match="fewer than 2 classes"):
            train_classifier("naive_bayes", features,
                             [RelationType.NONE] * len(features))

    def test_unknown_kind_rejected(self):
        x, y = blobs(seed=4)
        features, labels = featureset(x, y)
        with pytest.raises(LearningError, match="unknown classifier kind"):
            train_classifier("random_forest", features, labels)

    def test_svm_deterministic_per_seed(self):
        x, y = blobs(seed=5)
        features, labels = featureset(x, y)
        a = train_classifier("linear_svm", features, labels, seed=9)
        b = train_classifier("linear_svm", features, labels, seed=9)
        assert np.array_equal(a.parameters["weights"], b.parameters["weights"])

    def test_knn_memorizes_with_k_one(self):
        x, y = blobs(seed=6, spread=1.0)
        features, labels = featureset(x, y)
        model = train_classifier("knn", features, labels, hyper={"k": 1})
        assert model.predict(x) == labels

    def test_archive_roundtrip(self, tmp_path):
        x, y = blobs(seed=7)
        features, labels = featureset(x, y)
        for kind in ("naive_bayes", "knn", "linear_svm"):
            model = train_classifier(kind, features, labels, seed=0)
            path = tmp_path / f"{kind}.json"
            save_classifier(model, path)
            again = load_classifier(path)
            assert again.kind == kind
            assert again.classes == model.classes
            assert again.trained_on == model.trained_on
            assert np.allclose(again.predict_proba(x[:5]),
                               model.predict_proba(x[:5]))


def _fixed_member(means_by_class):
    """Gaussian model with unit variance and uniform priors, voting for
    whichever class mean is nearest."""
    means = np.array(means_by_class, dtype=float)
    n = len(means)
    return ClassifierModel(
        kind="naive_bayes",
        classes=[RelationType.NONE, RelationType.REQUIRES],
        parameters={"log_priors": np.log(np.full(n, 1 / n)),
                    "means": means,
                    "variances": np.ones_like(means)})


class TestEnsemble:
    def test_needs_two_members(self):
        with pytest.raises(LearningError, match="at least 2"):
            EnsembleConfig(member_kinds=("knn",))

    def test_class_set_mismatch_rejected(self):
        a = _fixed_member([[0.0], [1.0]])
        b = _fixed_member([[0.0], [1.0]])
        b.classes = [RelationType.NONE, RelationType.DETAILS]
        with pytest.raises(LearningError, match="different class sets"):
            Ensemble(EnsembleConfig(("naive_bayes", "naive_bayes")), [a, b])

    def test_unanimous_abstains_on_disagreement(self):
        agree = _fixed_member([[0.0], [1.0]])
        disagree = _fixed_member([[1.0], [0.0]])  # swapped class means
        ensemble = Ensemble(EnsembleConfig(("naive_bayes", "naive_bayes"),
                                           vote="unanimous"),
                            [agree, disagree])
        [(label, conf, votes)] = ensemble.predict(np.array([[0.0]]))
        assert label is None and conf == 0.0
        assert votes == [RelationType.NONE, RelationType.REQUIRES]

    def test_unanimous_agreement_confidence_rules(self):
        members = [_fixed_member([[0.0], [1.0]]) for _ in range(3)]
        mean_ens = Ensemble(EnsembleConfig(("nb",) * 3, vote="unanimous",
                                           confidence_rule="mean"), members)
        min_ens = Ensemble(EnsembleConfig(("nb",) * 3, vote="unanimous",
                                          confidence_rule="min"), members)
        [(label, mean_conf, _)] = mean_ens.predict(np.array([[0.0]]))
        [(_, min_conf, _)] = min_ens.predict(np.array([[0.0]]))
        assert label is RelationType.NONE
        assert min_conf <= mean_conf

    def test_majority_tie_breaks_by_mean_probability(self):
        strong = _fixed_member([[0.0], [4.0]])
        weak = _fixed_member([[4.0], [0.0]])
        ensemble = Ensemble(EnsembleConfig(("nb", "nb"), vote="majority"),
                            [strong, weak])
        # at x=1 both members vote differently (1 vote each); the winner
        # is the class with the higher mean probability
        [(label, conf, votes)] = ensemble.predict(np.array([[1.0]]))
        assert set(votes) == {RelationType.NONE, RelationType.REQUIRES}
        assert label is RelationType.NONE  # nearer the "strong" class-0 mean
        assert conf > 0.0

    def test_train_ensemble_members(self):
        x, y = blobs(seed=8)
        features, labels = featureset(x, y)
        ensemble = train_ensemble(EnsembleConfig(), features, labels, seed=0)
        assert [m.kind for m in ensemble.members] == \
            ["naive_bayes", "knn", "linear_svm"]


class _ArrayFeaturizer:
    """Featurizer over a fixed pair -> vector table (no text involved)."""

    def __init__(self, table):
        self.table = table

    def featurize_all(self, pairs):
        from reqrel.learning import PairFeatures
        return [PairFeatures(pair=p, vector=self.table[p], recipe="array")
                for p in pairs]


def _wsl_world(seed=0, n_labeled=16, n_pool=30):
    rng = np.random.default_rng(seed)
    table = {}
    labeled = {}
    pool = []
    for i in range(n_labeled):
        cls = i % 2
        pair = (f"L{i}", f"L{i}x")
        table[pair] = np.eye(2)[cls] * 4 + rng.normal(scale=0.2, size=2)
        labeled[pair] = CLASSES[cls]
    for i in range(n_pool):
        cls = i % 2
        pair = (f"U{i}", f"U{i}x")
        table[pair] = np.eye(2)[cls] * 4 + rng.normal(scale=0.2, size=2)
        pool.append(pair)
    return _ArrayFeaturizer(table), labeled, pool


class TestWsl:
    def test_empty_seed_rejected(self):
        featurizer, _, pool = _wsl_world()
        with pytest.raises(LearningError, match="non-empty labeled seed"):
            wsl_run(featurizer, {}, pool)

    def test_pseudo_labels_expand_and_gold_is_immutable(self):
        featurizer, labeled, pool = _wsl_world()
        before = dict(labeled)
        expanded, predictions = wsl_run(featurizer, labeled, pool,
                                        max_iters=5, seed=0)
        assert {k: expanded[k] for k in before} == before
        pseudo = {k for k in expanded if k not in before}
        assert pseudo and pseudo <= set(pool)
        assert {p.method for p in predictions} == {"wsl"}
        assert len(predictions) == len(pseudo)
        # the separable pool should be labeled correctly
        for pair in pseudo:
            expected = CLASSES[int(pair[0][1:]) % 2]
            assert expanded[pair] == expected

    def test_iteration_cap_respected(self):
        featurizer, labeled, pool = _wsl_world()
        expanded_zero, preds_zero = wsl_run(featurizer, labeled, pool,
                                            max_iters=0)
        assert expanded_zero == labeled and preds_zero == []


class TestActiveLearning:
    def _session(self, oracle="scripted_gold", low=0.6, high=0.9, seed=0):
        featurizer, labeled, pool = _wsl_world(seed=3)
        gold = {p: CLASSES[int(p[0][1:]) % 2] for p in pool}
        return ALSession(id="s", featurizer=featurizer, labeled=labeled,
                         unlabeled=list(pool), low=low, high=high,
                         oracle=oracle, gold=dict(gold), seed=seed), gold

    def test_pool_disjointness_enforced(self):
        featurizer, labeled, _ = _wsl_world()
        overlap = next(iter(labeled))
        with pytest.raises(LearningError):
            ALSession(id="s", featurizer=featurizer, labeled=labeled,
                      unlabeled=[overlap], oracle="scripted_gold", gold={})

    def test_threshold_order_enforced(self):
        featurizer, labeled, pool = _wsl_world()
        with pytest.raises(LearningError):
            ALSession(id="s", featurizer=featurizer, labeled=labeled,
                      unlabeled=pool, low=0.9, high=0.6)

    def test_scripted_gold_run_converges(self):
        session, gold = self._session()
        for _ in range(50):
            if session.complete:
                break
            session.step()
        assert session.complete
        assert not session.unlabeled
        for pair, label in gold.items():
            assert session.labeled[pair] == label or \
                session.labeled[pair] in CLASSES
        actions = {e.action for e in session.audit_log}
        assert actions <= {"auto_accepted", "oracle_labeled"}
        assert session.audit_log  # every pool exit is recorded
        exited = {e.pair for e in session.audit_log}
        assert exited == set(gold)

    def test_audit_event_schema_roundtrip(self):
        session, _ = self._session()
        session.step()
        event = session.audit_log[0]
        obj = event.to_json()
        assert set(obj) == {"iter", "pair", "action", "label",
                            "confidence", "timestamp"}
        assert AuditEvent.from_json(obj) == event

    def test_human_oracle_query_and_label(self):
        session, gold = self._session(oracle="human_api", low=1.0, high=1.0)
        query = session.step()
        assert query is not None
        assert query.pair in gold
        with pytest.raises(LearningError, match="no pending oracle query"):
            session.label_pair(("bogus", "pair"), RelationType.NONE)
        session.label_pair(query.pair, gold[query.pair])
        assert session.labeled[query.pair] == gold[query.pair]
        assert session.pending_query is None
        assert query.pair not in session.unlabeled

    def test_double_label_conflicts(self):
        session, gold = self._session(oracle="human_api", low=1.0, high=1.0)
        query = session.step()
        session.label_pair(query.pair, gold[query.pair])
        with pytest.raises(LearningError):
            session.label_pair(query.pair, gold[query.pair])

    def test_state_shape(self):
        session, _ = self._session()
        state = session.state()
        assert set(state) == {"id", "iteration", "labeled", "unlabeled",
                              "complete", "pending", "thresholds", "oracle"}


class TestKmeans:
    def test_errors(self):
        points = {f"p{i}": np.array([float(i), 0.0]) for i in range(5)}
        with pytest.raises(LearningError, match="k must be positive"):
            kmeans_cluster(points, 0)
        with pytest.raises(LearningError, match="exceeds"):
            kmeans_cluster(points, 6)

    def test_all_clusters_non_empty_and_inertia_monotone(self):
        rng = np.random.default_rng(0)
        points = {f"p{i}": rng.normal(size=3) for i in range(117)}
        result = kmeans_cluster(points, 10, seed=4)
        assert len(set(result.assignments.values())) == 10
        history = result.inertia_history
        assert all(a >= b - 1e-9 for a, b in zip(history, history[1:]))

    def test_k_equals_n_gives_zero_inertia(self):
        rng = np.random.default_rng(1)
        points = {f"p{i}": rng.normal(size=2) for i in range(12)}
        result = kmeans_cluster(points, 12, seed=0)
        assert result.inertia <= 1e-12

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(2)
        points = {f"p{i}": rng.normal(size=2) for i in range(40)}
        a = kmeans_cluster(points, 4, seed=11)
        b = kmeans_cluster(points, 4, seed=11)
        assert a.assignments == b.assignments
        assert np.array_equal(a.centroids, b.centroids)

    def test_suggestions_pair_anchor_with_neighbors(self):
        rng = np.random.default_rng(3)
        points = {f"p{i}": rng.normal(size=2) for i in range(20)}
        result = kmeans_cluster(points, 3, seed=0)
        suggestions = suggest_from_clusters(result, points,
                                            per_cluster_limit=2)
        for pred in suggestions:
            assert pred.rtype is RelationType.IS_SIMILAR
            assert 0.0 < pred.confidence <= 1.0
            cluster = pred.evidence["cluster"]
            assert result.assignments[pred.source_id] == cluster
            assert result.assignments[pred.target_id] == cluster
