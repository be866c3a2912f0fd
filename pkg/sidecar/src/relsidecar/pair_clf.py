"""pair-clf: transformer sequence-pair classifier for requirement
relations.

Fine-tunes a small word-level transformer encoder with stratified
k-fold cross-validation, pools the held-out predictions for every
labeled pair, and writes predictions/metrics in the shared JSONL/JSON
formats. Optionally scores every unordered requirement pair with a
model trained on the full gold set. Files are the only interface.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

LABELS = ["none", "requires", "conflicts", "contradicts", "is_a_variant",
          "is_similar", "details"]
ALIASES = {"refines": "details"}
_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")

PAD, CLS, SEP, UNK = 0, 1, 2, 3


class ClfError(ValueError):
    pass


@dataclass
class FinetuneConfig:
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ff_dim: int = 128
    epochs: int = 1
    batch_size: int = 32
    learning_rate: float = 3e-3
    max_len: int = 48
    folds: int = 10
    seed: int = 0
    min_batch_size: int = 8  # out-of-memory fallback floor

    @classmethod
    def load(cls, path: Path | None) -> "FinetuneConfig":
        if path is None:
            return cls()
        raw = json.loads(path.read_text("utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ClfError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def build_vocab(texts: dict[str, str]) -> dict[str, int]:
    vocab: dict[str, int] = {}
    for text in texts.values():
        for token in tokenize(text):
            if token not in vocab:
                vocab[token] = 0
            vocab[token] += 1
    return {token: i + 4 for i, token in enumerate(sorted(vocab))}


def encode_pair(vocab: dict[str, int], text_a: str, text_b: str,
                max_len: int) -> list[int]:
    half = (max_len - 3) // 2
    ids_a = [vocab.get(t, UNK) for t in tokenize(text_a)][:half]
    ids_b = [vocab.get(t, UNK) for t in tokenize(text_b)][:half]
    seq = [CLS] + ids_a + [SEP] + ids_b + [SEP]
    return seq[:max_len] + [PAD] * (max_len - len(seq))


class PairTransformer(nn.Module):
    def __init__(self, vocab_size: int, config: FinetuneConfig,
                 n_classes: int):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, config.dim, padding_idx=PAD)
        self.positions = nn.Embedding(config.max_len, config.dim)
        layer = nn.TransformerEncoderLayer(
            d_model=config.dim, nhead=config.heads,
            dim_feedforward=config.ff_dim, batch_first=True,
            dropout=0.0)
        self.encoder = nn.TransformerEncoder(layer, config.layers)
        self.head = nn.Linear(config.dim, n_classes)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        mask = ids == PAD
        pos = torch.arange(ids.shape[1], device=ids.device)
        hidden = self.embed(ids) + self.positions(pos)[None, :, :]
        hidden = self.encoder(hidden, src_key_padding_mask=mask)
        keep = (~mask).unsqueeze(-1).float()
        pooled = (hidden * keep).sum(1) / keep.sum(1).clamp(min=1.0)
        return self.head(pooled)


def stratified_folds(pairs: list[tuple[str, str]], labels: list[int],
                     k: int, seed: int) -> list[int]:
    """Per-class round robin with a cumulative offset: fold sizes differ
    by at most one overall and per class."""
    rng = np.random.default_rng(seed)
    fold_of = [0] * len(pairs)
    offset = 0
    for cls in sorted(set(labels)):
        members = [i for i, y in enumerate(labels) if y == cls]
        members.sort(key=lambda i: pairs[i])
        rng.shuffle(members)
        for j, i in enumerate(members):
            fold_of[i] = (j + offset) % k
        offset += len(members)
    return fold_of


def _train_one(model: PairTransformer, x: torch.Tensor, y: torch.Tensor,
               config: FinetuneConfig, generator: torch.Generator) -> None:
    optimizer = torch.optim.Adam(model.parameters(),
                                 lr=config.learning_rate)
    # tempered inverse-frequency class weights keep minority relations
    # learnable without collapsing majority-class precision
    counts = torch.bincount(
        y, minlength=model.head.out_features).clamp(min=1)
    weights = (counts.sum() / (len(counts) * counts.float())).sqrt()
    loss_fn = nn.CrossEntropyLoss(weight=weights)
    batch = config.batch_size
    model.train()
    for _ in range(config.epochs):
        order = torch.randperm(len(x), generator=generator)
        start = 0
        while start < len(x):
            idx = order[start:start + batch]
            try:
                optimizer.zero_grad()
                loss = loss_fn(model(x[idx]), y[idx])
                loss.backward()
                optimizer.step()
            except RuntimeError as exc:  # documented OOM fallback
                if "memory" in str(exc).lower() \
                        and batch > config.min_batch_size:
                    batch = max(config.min_batch_size, batch // 2)
                    print(f"warning: reducing batch size to {batch}",
                          file=sys.stderr)
                    continue
                raise
            start += len(idx)


@torch.no_grad()
def _predict(model: PairTransformer, x: torch.Tensor,
             batch: int) -> np.ndarray:
    model.eval()
    out = []
    for start in range(0, len(x), batch):
        logits = model(x[start:start + batch])
        out.append(torch.softmax(logits, dim=1).numpy())
    return np.concatenate(out) if out else np.zeros((0, 1))


@dataclass
class Dataset:
    texts: dict[str, str]
    pairs: list[tuple[str, str]]
    labels: list[str]
    classes: list[str] = field(init=False)

    def __post_init__(self) -> None:
        self.classes = sorted(set(self.labels) | {"none"})


def load_inputs(reqs_path: Path, gold_path: Path) -> Dataset:
    texts: dict[str, str] = {}
    with reqs_path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                texts[str(row["id"])] = str(row.get("text", ""))
    pairs: list[tuple[str, str]] = []
    labels: list[str] = []
    with gold_path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            label = ALIASES.get(str(row["type"]), str(row["type"]))
            if label not in LABELS:
                raise ClfError(f"line {line_no}: unknown label {label!r}")
            source, target = str(row["source"]), str(row["target"])
            for rid in (source, target):
                if rid not in texts:
                    raise ClfError(
                        f"line {line_no}: unknown requirement {rid!r}")
            pairs.append((source, target))
            labels.append(label)
    return Dataset(texts=texts, pairs=pairs, labels=labels)


def run_cross_validation(data: Dataset, config: FinetuneConfig
                         ) -> tuple[list[dict], dict]:
    """Per-fold fine-tune/predict; returns pooled prediction rows for
    every labeled pair plus timing metadata."""
    torch.manual_seed(config.seed)
    vocab = build_vocab(data.texts)
    class_index = {c: i for i, c in enumerate(data.classes)}
    y_all = [class_index[label] for label in data.labels]
    x_all = torch.tensor(
        [encode_pair(vocab, data.texts[a], data.texts[b], config.max_len)
         for a, b in data.pairs], dtype=torch.long)
    y_tensor = torch.tensor(y_all, dtype=torch.long)
    fold_of = stratified_folds(data.pairs, y_all, config.folds, config.seed)

    rows: list[dict] = []
    train_seconds = 0.0
    predict_seconds = 0.0
    for fold in range(config.folds):
        train_idx = [i for i, f in enumerate(fold_of) if f != fold]
        test_idx = [i for i, f in enumerate(fold_of) if f == fold]
        if not test_idx:
            continue
        generator = torch.Generator().manual_seed(config.seed + fold)
        torch.manual_seed(config.seed + fold)
        model = PairTransformer(len(vocab) + 4, config, len(data.classes))
        started = time.perf_counter()
        _train_one(model, x_all[train_idx], y_tensor[train_idx], config,
                   generator)
        train_seconds += time.perf_counter() - started
        started = time.perf_counter()
        probabilities = _predict(model, x_all[test_idx], config.batch_size)
        predict_seconds += time.perf_counter() - started
        for i, probs in zip(test_idx, probabilities):
            best = int(np.argmax(probs))
            source, target = data.pairs[i]
            rows.append({"source": source, "target": target,
                         "type": data.classes[best],
                         "confidence": float(probs[best]),
                         "method": "pair_clf",
                         "evidence": [f"fold={fold}"]})
    timings = {"train_s": round(train_seconds, 3),
               "predict_s": round(predict_seconds, 3)}
    return rows, timings


def run_all_pairs(data: Dataset, config: FinetuneConfig) -> list[dict]:
    """Train on the whole gold set, then score every unordered pair of
    requirements."""
    torch.manual_seed(config.seed)
    vocab = build_vocab(data.texts)
    class_index = {c: i for i, c in enumerate(data.classes)}
    x_gold = torch.tensor(
        [encode_pair(vocab, data.texts[a], data.texts[b], config.max_len)
         for a, b in data.pairs], dtype=torch.long)
    y_gold = torch.tensor([class_index[label] for label in data.labels],
                          dtype=torch.long)
    generator = torch.Generator().manual_seed(config.seed)
    model = PairTransformer(len(vocab) + 4, config, len(data.classes))
    _train_one(model, x_gold, y_gold, config, generator)

    ids = sorted(data.texts)
    all_pairs = [(ids[i], ids[j])
                 for i in range(len(ids)) for j in range(i + 1, len(ids))]
    x_all = torch.tensor(
        [encode_pair(vocab, data.texts[a], data.texts[b], config.max_len)
         for a, b in all_pairs], dtype=torch.long)
    probabilities = _predict(model, x_all, config.batch_size)
    rows = []
    for (source, target), probs in zip(all_pairs, probabilities):
        best = int(np.argmax(probs))
        rows.append({"source": source, "target": target,
                     "type": data.classes[best],
                     "confidence": float(probs[best]),
                     "method": "pair_clf", "evidence": []})
    return rows


# --- metrics (same conventions as the evaluation module's reports) --------

def compute_metrics(gold: dict[tuple[str, str], str],
                    predicted: dict[tuple[str, str], str],
                    scores: dict[tuple[str, str], float],
                    classes: list[str]) -> dict:
    full = {p: predicted.get(p, "none") for p in gold}
    counts = {g: {p: 0 for p in classes} for g in classes}
    for pair in gold:
        counts[gold[pair]][full[pair]] += 1
    n = len(gold)
    per_class = {}
    f1s = []
    tp_total = 0
    for cls in classes:
        tp = counts[cls][cls]
        fp = sum(counts[g][cls] for g in classes if g != cls)
        fn = sum(counts[cls][p] for p in classes if p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        per_class[cls] = {"precision": precision, "recall": recall,
                          "f1": f1}
        f1s.append(f1)
        tp_total += tp
    aps = []
    for cls in classes:
        ranked = sorted((p for p in gold if full[p] == cls),
                        key=lambda p: (-scores.get(p, 1.0), p))
        total_pos = sum(1 for p in gold if gold[p] == cls)
        if total_pos == 0:
            aps.append(0.0)
            continue
        ap, hits, prev_recall = 0.0, 0, 0.0
        for rank, pair in enumerate(ranked, start=1):
            if gold[pair] == cls:
                hits += 1
            recall = hits / total_pos
            ap += (recall - prev_recall) * (hits / rank)
            prev_recall = recall
        aps.append(ap)
    return {
        "classes": classes,
        "confusion": counts,
        "per_class": per_class,
        "accuracy": sum(counts[c][c] for c in classes) / n if n else 0.0,
        "macro_f1": sum(f1s) / len(f1s) if f1s else 0.0,
        "micro_f1": tp_total / n if n else 0.0,
        "map": sum(aps) / len(aps) if aps else 0.0,
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pair-clf",
        description="Fine-tune a transformer pair classifier over "
                    "requirement relations")
    parser.add_argument("--reqs", required=True)
    parser.add_argument("--gold", required=True)
    parser.add_argument("--config", help="fine-tuning config JSON")
    parser.add_argument("--out-pred", required=True)
    parser.add_argument("--out-metrics", required=True)
    parser.add_argument("--out-all-pairs",
                        help="also score every unordered requirement pair")
    args = parser.parse_args(argv)
    try:
        config = FinetuneConfig.load(
            Path(args.config) if args.config else None)
        data = load_inputs(Path(args.reqs), Path(args.gold))
        started = time.perf_counter()
        rows, timings = run_cross_validation(data, config)
        with open(args.out_pred, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        gold = {(p[0], p[1]): label
                for p, label in zip(data.pairs, data.labels)}
        predicted = {(r["source"], r["target"]): r["type"] for r in rows}
        scores = {(r["source"], r["target"]): r["confidence"]
                  for r in rows}
        metrics = compute_metrics(gold, predicted, scores, data.classes)
        metrics["run"] = {
            "config": config.__dict__,
            "pooled_predictions": len(rows),
            "wall_s": round(time.perf_counter() - started, 3),
            **timings,
        }
        with open(args.out_metrics, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2)
        if args.out_all_pairs:
            all_rows = run_all_pairs(data, config)
            with open(args.out_all_pairs, "w", encoding="utf-8") as fh:
                for row in all_rows:
                    fh.write(json.dumps(row) + "\n")
        return 0
    except (ClfError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
