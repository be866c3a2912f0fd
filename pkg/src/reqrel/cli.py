"""Command-line interface mirroring the HTTP service capabilities.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import runner
from .metrics import build_report, time_run
from .model import (
    CorpusError,
    RelationType,
    load_relation_set,
    load_requirements,
)
from .nlp import PipelineError, ingest_conllu
from .retrieval import ExtractorError, dump_predictions, load_predictions
from .vectors import VectorError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reqrel")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_corpus_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--reqs", required=True, help="requirements JSONL")
        p.add_argument("--format", default="jsonl",
                       choices=["jsonl", "csv-mapped"])
        p.add_argument("--csv-config", help="CSV column-mapping config JSON")

    p = sub.add_parser("load", help="validate a corpus and optional gold set")
    add_corpus_args(p)
    p.add_argument("--gold", help="relations JSONL to validate")

    p = sub.add_parser("parse-ingest", help="validate a CoNLL-U parse file")
    add_corpus_args(p)
    p.add_argument("--conllu", required=True)

    p = sub.add_parser("extract", help="run a retrieval extractor")
    add_corpus_args(p)
    p.add_argument("--method", required=True, choices=runner.EXTRACT_METHODS)
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--conllu")
    p.add_argument("--gazetteer")
    p.add_argument("--synonyms")
    p.add_argument("--ontology")
    p.add_argument("--rules")
    p.add_argument("--embeddings")
    p.add_argument("--watched-lemmas", nargs="*", default=[])
    p.add_argument("--out", required=True, help="predictions JSONL output")

    p = sub.add_parser("cluster", help="LSA + k-means relation suggestions")
    add_corpus_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--components", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a pair classifier")
    add_corpus_args(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--kind", default="linear_svm",
                   choices=["naive_bayes", "knn", "linear_svm"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model archive JSON")

    p = sub.add_parser("wsl", help="weakly supervised pseudo-labeling")
    add_corpus_args(p)
    p.add_argument("--gold", required=True, help="seed labels JSONL")
    p.add_argument("--max-iters", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="predictions JSONL output")

    p = sub.add_parser("al", help="scripted-oracle active learning run")
    add_corpus_args(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--seed-size", type=int, default=20)
    p.add_argument("--low", type=float, default=0.6)
    p.add_argument("--high", type=float, default=0.9)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--audit", required=True, help="audit log JSONL output")

    p = sub.add_parser("eval", help="evaluate predictions against gold")
    p.add_argument("--reqs", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", help="metrics JSON output")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir")

    p = sub.add_parser("report", help="pretty-print a metrics JSON file")
    p.add_argument("metrics", help="metrics JSON path")

    return parser


def _inputs_from_args(args) -> runner.ExtractionInputs:
    csv_config = None
    if args.csv_config:
        csv_config = json.loads(Path(args.csv_config).read_text("utf-8"))
    corpus = load_requirements(args.reqs, args.format, csv_config)
    opt = lambda name: Path(getattr(args, name)) if getattr(args, name, None) else None
    return runner.ExtractionInputs(
        corpus=corpus,
        conllu_path=opt("conllu"),
        gazetteer_path=opt("gazetteer"),
        synonyms_path=opt("synonyms"),
        ontology_path=opt("ontology"),
        rules_path=opt("rules"),
        embeddings_path=opt("embeddings"),
    )


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (CorpusError, PipelineError, ExtractorError, VectorError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "load":
        corpus = load_requirements(
            args.reqs, args.format,
            json.loads(Path(args.csv_config).read_text("utf-8"))
            if args.csv_config else None)
        summary = {"requirements": corpus.n}
        if args.gold:
            _, report = load_relation_set(args.gold, corpus)
            summary["relations"] = {
                "total": report.total,
                "counts": {t.value: c for t, c in report.counts.items()},
                "refines_aliased": report.refines_aliased,
            }
        print(json.dumps(summary, indent=2))
        return 0

    if args.command == "parse-ingest":
        corpus = load_requirements(args.reqs, args.format)
        parses = ingest_conllu(corpus, args.conllu)
        print(json.dumps({"documents": len(parses),
                          "sentences": sum(len(p.sentences)
                                           for p in parses.values())}))
        return 0

    if args.command == "extract":
        inputs = _inputs_from_args(args)
        params = {"threshold": args.threshold}
        if args.watched_lemmas:
            params["watched_lemmas"] = args.watched_lemmas
        predictions, ms = time_run(
            "extract", runner.run_extraction, inputs, args.method, params,
            args.seed)
        dump_predictions(predictions, args.out)
        print(json.dumps({"method": args.method,
                          "predictions": len(predictions),
                          "milliseconds": round(ms, 1)}))
        return 0

    if args.command == "cluster":
        inputs = _inputs_from_args(args)
        assignments, suggestions = runner.run_clustering(
            inputs, args.k, args.seed, args.components)
        dump_predictions(suggestions, args.out)
        print(json.dumps({"clusters": args.k,
                          "suggestions": len(suggestions)}))
        return 0

    if args.command in ("train", "wsl", "al"):
        return _dispatch_learning(args)

    if args.command == "eval":
        corpus = load_requirements(args.reqs)
        gold_instances, _ = load_relation_set(args.gold, corpus)
        gold = {g.pair_key(): g.rtype for g in gold_instances}
        predicted, scores = {}, {}
        for p in load_predictions(args.pred):
            for key in ((p.source_id, p.target_id),
                        (p.target_id, p.source_id)):
                if key in gold:
                    predicted[key] = p.rtype
                    scores[key] = p.confidence
        classes = sorted({*gold.values(), *predicted.values(),
                          RelationType.NONE}, key=lambda t: t.value)
        report = build_report(gold, predicted, classes, scores)
        if args.out:
            report.save(args.out)
        print(json.dumps({"accuracy": report.accuracy,
                          "macro_f1": report.macro_f1,
                          "map": report.map}))
        return 0

    if args.command == "serve":
        import uvicorn

        from .service import create_app
        uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)
        return 0

    if args.command == "report":
        payload = json.loads(Path(args.metrics).read_text("utf-8"))
        print(f"accuracy  {payload['accuracy']:.4f}")
        print(f"macro F1  {payload['macro_f1']:.4f}")
        print(f"micro F1  {payload['micro_f1']:.4f}")
        print(f"mAP       {payload['map']:.4f}")
        for cls, stats in payload["per_class"].items():
            print(f"  {cls:14s} p={stats['precision']:.4f} "
                  f"r={stats['recall']:.4f} f1={stats['f1']:.4f}")
        for phase, ms in payload.get("timings_ms", {}).items():
            print(f"  time[{phase}] {ms:.1f} ms")
        return 0

    raise ValueError(f"unhandled command {args.command!r}")


def _dispatch_learning(args) -> int:
    import numpy as np

    from .learning import (
        ALSession,
        FeatureRecipe,
        PairFeaturizer,
        save_classifier,
        train_classifier,
        wsl_run,
    )
    from .vectors import tfidf_fit

    inputs = _inputs_from_args(args)
    corpus = inputs.corpus
    parses = runner.prepare_parses(inputs)
    tfidf = tfidf_fit(parses.values())
    featurizer = PairFeaturizer(parses, FeatureRecipe(), tfidf=tfidf)
    gold_instances, _ = load_relation_set(args.gold, corpus)
    gold = {g.pair_key(): g.rtype for g in gold_instances}

    if args.command == "train":
        pairs = sorted(gold)
        features = featurizer.featurize_all(pairs)
        model = train_classifier(args.kind, features,
                                 [gold[p] for p in pairs], seed=args.seed)
        save_classifier(model, args.out)
        print(json.dumps({"kind": args.kind, "classes":
                          [c.value for c in model.classes]}))
        return 0

    if args.command == "wsl":
        labeled = dict(gold)
        from .model import enumerate_candidate_pairs
        pool = [p for p in enumerate_candidate_pairs(corpus)
                if p not in labeled][:500]
        expanded, predictions = wsl_run(featurizer, labeled, pool,
                                        max_iters=args.max_iters,
                                        seed=args.seed)
        dump_predictions(predictions, args.out)
        print(json.dumps({"seed_labels": len(labeled),
                          "pseudo_labels": len(expanded) - len(labeled)}))
        return 0

    # al (scripted gold oracle)
    pairs = sorted(gold)
    seed_pairs = pairs[:args.seed_size]
    pool = pairs[args.seed_size:]
    session = ALSession(
        id="cli", featurizer=featurizer,
        labeled={p: gold[p] for p in seed_pairs},
        unlabeled=list(pool), low=args.low, high=args.high,
        oracle="scripted_gold", gold=gold, seed=args.seed)
    for _ in range(args.steps):
        if session.complete:
            break
        session.step()
    with open(args.audit, "w", encoding="utf-8") as fh:
        for event in session.audit_log:
            fh.write(json.dumps(event.to_json()) + "\n")
    print(json.dumps(session.state()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
