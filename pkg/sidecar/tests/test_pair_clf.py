import json
import math
import random

import pytest

from relsidecar.pair_clf import (
    ClfError,
    FinetuneConfig,
    compute_metrics,
    load_inputs,
    main,
    stratified_folds,
)

from reqrel.fixtures import write_fixture_dataset
from reqrel.metrics import build_report
from reqrel.model import (
    RelationType,
    load_relation_set,
    load_requirements,
)
from reqrel.retrieval import load_predictions


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


TINY_REQS = [
    {"id": "A", "text": "The pump shall start on demand."},
    {"id": "B", "text": "The pump shall stop on overload."},
    {"id": "C", "text": "The valve shall open slowly."},
]


class TestInputs:
    def test_refines_aliases_details(self, tmp_path):
        write_jsonl(tmp_path / "r.jsonl", TINY_REQS)
        write_jsonl(tmp_path / "g.jsonl",
                    [{"source": "A", "target": "B", "type": "refines"}])
        data = load_inputs(tmp_path / "r.jsonl", tmp_path / "g.jsonl")
        assert data.labels == ["details"]
        assert data.classes == ["details", "none"]

    def test_unknown_label_rejected(self, tmp_path):
        write_jsonl(tmp_path / "r.jsonl", TINY_REQS)
        write_jsonl(tmp_path / "g.jsonl",
                    [{"source": "A", "target": "B", "type": "blocks"}])
        with pytest.raises(ClfError, match="unknown label"):
            load_inputs(tmp_path / "r.jsonl", tmp_path / "g.jsonl")

    def test_unknown_requirement_rejected(self, tmp_path):
        write_jsonl(tmp_path / "r.jsonl", TINY_REQS)
        write_jsonl(tmp_path / "g.jsonl",
                    [{"source": "A", "target": "Z", "type": "none"}])
        with pytest.raises(ClfError, match="unknown requirement"):
            load_inputs(tmp_path / "r.jsonl", tmp_path / "g.jsonl")

    def test_unknown_config_field_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"temperature": 2}')
        with pytest.raises(ClfError, match="unknown config fields"):
            FinetuneConfig.load(cfg)


class TestFolds:
    def test_partition_is_disjoint_and_exhaustive(self):
        pairs = [(f"a{i}", f"b{i}") for i in range(40)]
        labels = [i % 3 for i in range(40)]
        folds = stratified_folds(pairs, labels, 10, seed=0)
        assert len(folds) == 40
        assert set(folds) == set(range(10))

    def test_per_class_balance_within_one(self):
        pairs = [(f"a{i}", f"b{i}") for i in range(100)]
        labels = [0] * 70 + [1] * 30
        folds = stratified_folds(pairs, labels, 10, seed=1)
        for cls in (0, 1):
            per_fold = [sum(1 for i, f in enumerate(folds)
                            if f == k and labels[i] == cls)
                        for k in range(10)]
            assert max(per_fold) - min(per_fold) <= 1

    def test_deterministic_for_fixed_seed(self):
        pairs = [(f"a{i}", f"b{i}") for i in range(25)]
        labels = [i % 2 for i in range(25)]
        assert stratified_folds(pairs, labels, 5, seed=3) == \
            stratified_folds(pairs, labels, 5, seed=3)


class TestMetricsAgreement:
    def test_matches_primary_reports_on_random_predictions(self):
        classes = ["none", "requires", "is_similar"]
        for seed in range(25):
            rng = random.Random(seed)
            pairs = [(f"A{i}", f"B{i}") for i in range(50)]
            gold = {p: rng.choice(classes) for p in pairs}
            predicted = {p: rng.choice(classes) for p in pairs}
            scores = {p: rng.random() for p in pairs}
            mine = compute_metrics(gold, predicted, scores, classes)
            theirs = build_report(
                {p: RelationType.parse(c) for p, c in gold.items()},
                {p: RelationType.parse(c) for p, c in predicted.items()},
                [RelationType.parse(c) for c in classes],
                scores).to_json()
            for key in ("accuracy", "macro_f1", "micro_f1", "map"):
                assert abs(mine[key] - theirs[key]) <= 1e-9
            for cls in classes:
                for stat in ("precision", "recall", "f1"):
                    assert abs(mine["per_class"][cls][stat] -
                               theirs["per_class"][cls][stat]) <= 1e-9


class TestEndToEnd:
    def test_degenerate_two_pair_dataset_runs(self, tmp_path):
        write_jsonl(tmp_path / "r.jsonl", TINY_REQS)
        write_jsonl(tmp_path / "g.jsonl", [
            {"source": "A", "target": "B", "type": "is_similar"},
            {"source": "A", "target": "C", "type": "none"},
        ])
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"folds": 2, "epochs": 1, "dim": 16,
                                   "heads": 2, "layers": 1, "ff_dim": 32,
                                   "max_len": 16}))
        code = main(["--reqs", str(tmp_path / "r.jsonl"),
                     "--gold", str(tmp_path / "g.jsonl"),
                     "--config", str(cfg),
                     "--out-pred", str(tmp_path / "pred.jsonl"),
                     "--out-metrics", str(tmp_path / "metrics.json")])
        assert code == 0
        rows = [json.loads(l)
                for l in (tmp_path / "pred.jsonl").read_text().splitlines()]
        assert len(rows) == 2
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert metrics["run"]["pooled_predictions"] == 2

    def test_bad_gold_exits_one(self, tmp_path, capsys):
        write_jsonl(tmp_path / "r.jsonl", TINY_REQS)
        write_jsonl(tmp_path / "g.jsonl",
                    [{"source": "A", "target": "B", "type": "blocks"}])
        code = main(["--reqs", str(tmp_path / "r.jsonl"),
                     "--gold", str(tmp_path / "g.jsonl"),
                     "--out-pred", str(tmp_path / "p.jsonl"),
                     "--out-metrics", str(tmp_path / "m.json")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")


class TestBenchmarkGate:
    """Full-dataset run: pooled coverage, baseline-beating macro-F1,
    all-pair inference counts, and metric agreement with the primary
    evaluation module."""

    def test_ten_fold_benchmark(self, tmp_path):
        write_fixture_dataset(tmp_path)
        reqs = tmp_path / "requirements.jsonl"
        gold_path = tmp_path / "relations_multiclass.jsonl"
        pred_path = tmp_path / "pred.jsonl"
        metrics_path = tmp_path / "metrics.json"
        all_pairs_path = tmp_path / "all_pairs.jsonl"
        code = main(["--reqs", str(reqs), "--gold", str(gold_path),
                     "--out-pred", str(pred_path),
                     "--out-metrics", str(metrics_path),
                     "--out-all-pairs", str(all_pairs_path)])
        assert code == 0

        corpus = load_requirements(reqs)
        pooled = list(load_predictions(pred_path))
        assert len(pooled) == 4_432
        assert len({(p.source_id, p.target_id) for p in pooled}) == 4_432

        metrics = json.loads(metrics_path.read_text())
        gold_instances, _ = load_relation_set(gold_path, corpus)
        gold = {g.pair_key(): g.rtype for g in gold_instances}
        none_count = sum(1 for t in gold.values()
                         if t == RelationType.NONE)
        p_none = none_count / len(gold)
        baseline_macro = (2 * p_none / (p_none + 1)) / 3
        assert metrics["macro_f1"] > baseline_macro

        predicted, scores = {}, {}
        for p in pooled:
            for key in ((p.source_id, p.target_id),
                        (p.target_id, p.source_id)):
                if key in gold:
                    predicted[key] = p.rtype
                    scores[key] = p.confidence
        classes = [RelationType.parse(c) for c in metrics["classes"]]
        theirs = build_report(gold, predicted, classes, scores).to_json()
        for key in ("accuracy", "macro_f1", "micro_f1", "map"):
            assert abs(metrics[key] - theirs[key]) <= 1e-9

        all_rows = list(load_predictions(all_pairs_path))
        assert len(all_rows) == math.comb(190, 2) == 17_955
