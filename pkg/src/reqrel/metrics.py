"""Correctness metrics, agreement, timing and cross-validated runs.

Zero-denominator conventions are explicit: precision and recall are 0
when their denominator is 0, F1 is 0 when p + r = 0, and average
precision is 0 (flagged) when a class has no gold positives.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .model import FoldAssignment, RelationType

PairKey = tuple[str, str]


class MetricsError(ValueError):
    """Raised on class or pair-universe mismatches."""


@dataclass
class ConfusionMatrix:
    classes: list[RelationType]
    counts: list[list[int]]  # rows = gold, cols = predicted

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def index(self, cls: RelationType) -> int:
        try:
            return self.classes.index(cls)
        except ValueError:
            raise MetricsError(f"class {cls} outside the declared list") from None


def confusion(gold: dict[PairKey, RelationType],
              predicted: dict[PairKey, RelationType],
              classes: Sequence[RelationType]) -> ConfusionMatrix:
    """Count gold-vs-predicted classes over the gold pair universe;
    a missing prediction counts as None."""
    classes = list(classes)
    matrix = ConfusionMatrix(classes=classes,
                             counts=[[0] * len(classes) for _ in classes])
    for pair, gold_cls in gold.items():
        pred_cls = predicted.get(pair, RelationType.NONE)
        matrix.counts[matrix.index(gold_cls)][matrix.index(pred_cls)] += 1
    return matrix


def precision_recall_f1(matrix: ConfusionMatrix,
                        cls: RelationType) -> tuple[float, float, float]:
    i = matrix.index(cls)
    tp = matrix.counts[i][i]
    predicted_pos = sum(row[i] for row in matrix.counts)
    actual_pos = sum(matrix.counts[i])
    p = tp / predicted_pos if predicted_pos else 0.0
    r = tp / actual_pos if actual_pos else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return p, r, f1


def accuracy(matrix: ConfusionMatrix) -> float:
    total = matrix.total
    if total == 0:
        return 0.0
    trace = sum(matrix.counts[i][i] for i in range(len(matrix.classes)))
    return trace / total


def macro_f1(matrix: ConfusionMatrix) -> float:
    if not matrix.classes:
        return 0.0
    return sum(precision_recall_f1(matrix, c)[2]
               for c in matrix.classes) / len(matrix.classes)


def micro_f1(matrix: ConfusionMatrix) -> float:
    tp = sum(matrix.counts[i][i] for i in range(len(matrix.classes)))
    total = matrix.total
    if total == 0:
        return 0.0
    # every pair gets exactly one predicted class, so micro P = R = accuracy
    return tp / total


@dataclass
class RankedPredictions:
    """Descending-score ranking with ties broken by pair key."""

    items: list[tuple[PairKey, RelationType, float]]
    gold: dict[PairKey, RelationType]

    def __post_init__(self) -> None:
        self.items = sorted(self.items, key=lambda t: (-t[2], t[0]))


def average_precision(ranked: RankedPredictions,
                      positive_class: RelationType) -> tuple[float, bool]:
    """AP by the step formula sum_n (R_n − R_{n−1}) · P_n; returns
    (ap, degenerate) where degenerate means no gold positives."""
    total_pos = sum(1 for c in ranked.gold.values() if c == positive_class)
    if total_pos == 0:
        return 0.0, True
    relevant = [pair for pair, cls, _ in ranked.items if cls == positive_class]
    ap = 0.0
    hits = 0
    prev_recall = 0.0
    for n, pair in enumerate(relevant, start=1):
        if ranked.gold.get(pair) == positive_class:
            hits += 1
        recall = hits / total_pos
        precision = hits / n
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap, False


def average_precision_from_relevance(relevance: Sequence[int]) -> float:
    """AP of a 0/1 relevance sequence already in rank order."""
    total_pos = sum(relevance)
    if total_pos == 0:
        return 0.0
    ap = 0.0
    hits = 0
    prev_recall = 0.0
    for n, rel in enumerate(relevance, start=1):
        hits += rel
        recall = hits / total_pos
        ap += (recall - prev_recall) * (hits / n)
        prev_recall = recall
    return ap


def mean_average_precision(per_class_aps: Sequence[float]) -> float:
    if not per_class_aps:
        return 0.0
    return sum(per_class_aps) / len(per_class_aps)


def map_over_classes(ranked: RankedPredictions,
                     classes: Sequence[RelationType]) -> float:
    """mAP over all classes, including None."""
    aps = []
    for cls in classes:
        sub = RankedPredictions(
            items=[(p, c, s) for p, c, s in ranked.items if c == cls],
            gold=ranked.gold)
        ap, _ = average_precision(sub, cls)
        aps.append(ap)
    return mean_average_precision(aps)


def cohens_kappa(annotations_a: dict[PairKey, RelationType],
                 annotations_b: dict[PairKey, RelationType],
                 ) -> tuple[float, bool]:
    """Chance-corrected agreement with marginal-product expectation;
    returns (kappa, degenerate) where degenerate flags p_e = 1."""
    if set(annotations_a) != set(annotations_b):
        raise MetricsError("annotation sets cover different pair universes")
    n = len(annotations_a)
    if n == 0:
        raise MetricsError("empty pair universe")
    observed = sum(1 for k in annotations_a
                   if annotations_a[k] == annotations_b[k]) / n
    classes = {*annotations_a.values(), *annotations_b.values()}
    expected = 0.0
    for cls in classes:
        pa = sum(1 for v in annotations_a.values() if v == cls) / n
        pb = sum(1 for v in annotations_b.values() if v == cls) / n
        expected += pa * pb
    if expected >= 1.0:
        return (1.0 if observed == 1.0 else 0.0), True
    return (observed - expected) / (1.0 - expected), False


# ---------------------------------------------------------------------------
# Timing

class Timings:
    def __init__(self) -> None:
        self.milliseconds: dict[str, float] = {}

    @contextmanager
    def timer(self, label: str):
        start = time.monotonic()
        try:
            yield
        finally:
            elapsed = (time.monotonic() - start) * 1000.0
            self.milliseconds[label] = self.milliseconds.get(label, 0.0) + elapsed


def time_run(label: str, operation: Callable, *args, **kwargs):
    """Run an operation under a monotonic wall clock; returns
    (result, milliseconds)."""
    start = time.monotonic()
    result = operation(*args, **kwargs)
    return result, (time.monotonic() - start) * 1000.0


# ---------------------------------------------------------------------------
# Report assembly and cross-validation

@dataclass
class MetricsReport:
    classes: list[RelationType]
    matrix: ConfusionMatrix
    per_class: dict[str, dict[str, float]]
    accuracy: float
    macro_f1: float
    micro_f1: float
    map: float
    kappa: float | None = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    run_metadata: dict = field(default_factory=dict)
    per_fold: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "classes": [c.value for c in self.classes],
            "confusion": self.matrix.counts,
            "per_class": self.per_class,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "map": self.map,
            "kappa": self.kappa,
            "timings_ms": self.timings_ms,
            "run": self.run_metadata,
            "per_fold": self.per_fold,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)


def build_report(gold: dict[PairKey, RelationType],
                 predicted: dict[PairKey, RelationType],
                 classes: Sequence[RelationType],
                 scores: dict[PairKey, float] | None = None,
                 timings_ms: dict[str, float] | None = None,
                 run_metadata: dict | None = None) -> MetricsReport:
    matrix = confusion(gold, predicted, classes)
    per_class = {}
    for cls in classes:
        p, r, f1 = precision_recall_f1(matrix, cls)
        per_class[cls.value] = {"precision": p, "recall": r, "f1": f1}
    ranked = RankedPredictions(
        items=[(pair, predicted.get(pair, RelationType.NONE),
                (scores or {}).get(pair, 1.0))
               for pair in gold],
        gold=gold)
    return MetricsReport(
        classes=list(classes), matrix=matrix, per_class=per_class,
        accuracy=accuracy(matrix), macro_f1=macro_f1(matrix),
        micro_f1=micro_f1(matrix), map=map_over_classes(ranked, classes),
        timings_ms=timings_ms or {}, run_metadata=run_metadata or {})


def cross_validate(labeled: dict[PairKey, RelationType],
                   folds: FoldAssignment,
                   trainer: Callable[[dict[PairKey, RelationType]], object],
                   predictor: Callable[[object, list[PairKey]],
                                       dict[PairKey, RelationType]],
                   classes: Sequence[RelationType],
                   run_metadata: dict | None = None) -> MetricsReport:
    """Train on k−1 folds, predict the held-out fold, pool predictions
    into one report with a per-fold breakdown and phase timings."""
    missing = [p for p in labeled if p not in folds.assignments]
    if missing:
        raise MetricsError(f"fold assignment misses pairs: {missing[:3]}")
    pooled: dict[PairKey, RelationType] = {}
    per_fold: list[dict] = []
    timings = Timings()
    for fold_index in range(folds.fold_count):
        test_pairs = sorted(p for p in labeled
                            if folds.assignments[p] == fold_index)
        train_set = {p: c for p, c in labeled.items()
                     if folds.assignments[p] != fold_index}
        try:
            with timings.timer("train"):
                model = trainer(train_set)
            with timings.timer("inference"):
                fold_preds = predictor(model, test_pairs)
        except Exception as exc:
            raise MetricsError(f"trainer failed on fold {fold_index}: {exc}") from exc
        pooled.update(fold_preds)
        fold_gold = {p: labeled[p] for p in test_pairs}
        fold_matrix = confusion(fold_gold, fold_preds, classes)
        per_fold.append({"fold": fold_index, "size": len(test_pairs),
                         "accuracy": accuracy(fold_matrix)})
    report = build_report(labeled, pooled, classes,
                          timings_ms=timings.milliseconds,
                          run_metadata=run_metadata)
    report.per_fold = per_fold
    return report
