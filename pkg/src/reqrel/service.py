"""HTTP service exposing corpora, extraction runs, evaluation and
active-learning sessions.

All state is persisted as plain files under the data directory
(``RELX_DATA_DIR`` or the ``data_dir`` argument); active-learning
sessions are rebuilt on restart by replaying their audit logs.
Mutating endpoints honor an ``Idempotency-Key`` header.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Request, Response

from . import runner
from .learning import (
    ALSession,
    AuditEvent,
    EnsembleConfig,
    FeatureRecipe,
    LearningError,
    PairFeaturizer,
)
from .metrics import build_report
from .model import Corpus, CorpusError, RelationType, load_relation_set, load_requirements
from .retrieval import dump_predictions, load_predictions
from .vectors import tfidf_fit


class ServiceState:
    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        self.lock = threading.Lock()
        self.corpus_locks: dict[str, threading.Lock] = {}
        self.sessions: dict[str, ALSession] = {}
        self.quarantined: list[str] = []
        self.idempotency: dict[str, dict] = {}
        for sub in ("corpora", "runs", "al"):
            (data_dir / sub).mkdir(parents=True, exist_ok=True)
        self._load_sessions()

    # -- corpora -----------------------------------------------------------
    def corpus_dir(self, corpus_id: str) -> Path:
        return self.data_dir / "corpora" / corpus_id

    def load_corpus(self, corpus_id: str) -> Corpus:
        path = self.corpus_dir(corpus_id) / "requirements.jsonl"
        if not path.exists():
            raise HTTPException(404, f"unknown corpus {corpus_id!r}")
        return load_requirements(path)

    def corpus_lock(self, corpus_id: str) -> threading.Lock:
        with self.lock:
            return self.corpus_locks.setdefault(corpus_id, threading.Lock())

    # -- active learning ---------------------------------------------------
    def session_dir(self, session_id: str) -> Path:
        return self.data_dir / "al" / session_id

    def persist_session(self, session: ALSession) -> None:
        sdir = self.session_dir(session.id)
        with (sdir / "audit.jsonl").open("w", encoding="utf-8") as fh:
            for event in session.audit_log:
                fh.write(json.dumps(event.to_json()) + "\n")
        snapshot = {
            "iteration": session.iteration,
            "complete": session.complete,
            "pending": (list(session.pending_query.pair)
                        if session.pending_query else None),
            "pending_confidence": (session.pending_query.confidence
                                   if session.pending_query else None),
            "pending_votes": (session.pending_query.votes
                              if session.pending_query else None),
        }
        (sdir / "state.json").write_text(json.dumps(snapshot), encoding="utf-8")

    def build_session(self, session_id: str, config: dict) -> ALSession:
        corpus = self.load_corpus(config["corpus_id"])
        parses = runner.prepare_parses(runner.ExtractionInputs(corpus=corpus))
        tfidf = tfidf_fit(parses.values())
        featurizer = PairFeaturizer(parses, FeatureRecipe(), tfidf=tfidf)
        labeled = {tuple(item["pair"]): RelationType.parse(item["type"])
                   for item in config["seed_labels"]}
        unlabeled = [tuple(p) for p in config["unlabeled"]]
        ensemble = config.get("ensemble", {})
        return ALSession(
            id=session_id, featurizer=featurizer, labeled=labeled,
            unlabeled=unlabeled,
            low=config["thresholds"][0], high=config["thresholds"][1],
            oracle=config.get("oracle", "human_api"),
            config=EnsembleConfig(
                member_kinds=tuple(ensemble.get(
                    "members", ["naive_bayes", "knn", "linear_svm"])),
                vote=ensemble.get("vote", "unanimous"),
                confidence_rule=ensemble.get("confidence_rule", "mean")),
            seed=int(config.get("seed", 0)))

    def _load_sessions(self) -> None:
        from .learning import OracleQuery
        for sdir in sorted((self.data_dir / "al").iterdir()):
            if not sdir.is_dir():
                continue
            session_id = sdir.name
            try:
                config = json.loads((sdir / "config.json").read_text("utf-8"))
                session = self.build_session(session_id, config)
                audit_path = sdir / "audit.jsonl"
                if audit_path.exists():
                    for line in audit_path.read_text("utf-8").splitlines():
                        if not line.strip():
                            continue
                        event = AuditEvent.from_json(json.loads(line))
                        session.audit_log.append(event)
                        if event.pair in session.unlabeled:
                            session.unlabeled.remove(event.pair)
                        session.labeled[event.pair] = RelationType.parse(event.label)
                state_path = sdir / "state.json"
                if state_path.exists():
                    snap = json.loads(state_path.read_text("utf-8"))
                    session.iteration = snap["iteration"]
                    session.complete = snap["complete"]
                    if snap["pending"] is not None:
                        session.pending_query = OracleQuery(
                            pair=tuple(snap["pending"]),
                            confidence=snap["pending_confidence"],
                            votes=snap["pending_votes"] or [])
                self.sessions[session_id] = session
            except Exception:
                self.quarantined.append(session_id)


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get("RELX_DATA_DIR", "./relx-data"))
    state = ServiceState(data_dir)
    app = FastAPI(title="reqrel")
    app.state.store = state

    def idempotent(key: str | None, compute):
        if key is None:
            return compute()
        with state.lock:
            if key in state.idempotency:
                return state.idempotency[key]
        result = compute()
        with state.lock:
            state.idempotency[key] = result
        return result

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    # -- corpora -----------------------------------------------------------
    @app.post("/corpora")
    async def post_corpus(request: Request,
                          idempotency_key: str | None = Header(default=None)):
        body = await request.body()

        def compute():
            corpus_id = uuid.uuid4().hex[:12]
            cdir = state.corpus_dir(corpus_id)
            cdir.mkdir(parents=True)
            path = cdir / "requirements.jsonl"
            path.write_bytes(body)
            try:
                load_requirements(path)
            except CorpusError as exc:
                path.unlink()
                cdir.rmdir()
                raise HTTPException(422, str(exc))
            return {"corpus_id": corpus_id}

        return idempotent(idempotency_key, compute)

    @app.get("/corpora/{corpus_id}")
    def get_corpus(corpus_id: str):
        path = state.corpus_dir(corpus_id) / "requirements.jsonl"
        if not path.exists():
            raise HTTPException(404, f"unknown corpus {corpus_id!r}")
        return Response(content=path.read_bytes(),
                        media_type="application/jsonl")

    @app.post("/corpora/{corpus_id}/parses")
    async def post_parses(corpus_id: str, request: Request):
        corpus = state.load_corpus(corpus_id)
        body = await request.body()
        path = state.corpus_dir(corpus_id) / "parses.conllu"
        path.write_bytes(body)
        from .nlp import PipelineError, ingest_conllu
        try:
            parses = ingest_conllu(corpus, path)
        except PipelineError as exc:
            path.unlink()
            raise HTTPException(422, str(exc))
        return {"documents": len(parses)}

    @app.post("/corpora/{corpus_id}/gold")
    async def post_gold(corpus_id: str, request: Request):
        corpus = state.load_corpus(corpus_id)
        body = await request.body()
        path = state.corpus_dir(corpus_id) / "gold.jsonl"
        path.write_bytes(body)
        try:
            _, report = load_relation_set(path, corpus)
        except CorpusError as exc:
            path.unlink()
            raise HTTPException(422, str(exc))
        return {"total": report.total,
                "counts": {t.value: c for t, c in report.counts.items()}}

    # -- runs ----------------------------------------------------------------
    @app.post("/runs")
    def post_run(body: dict,
                 idempotency_key: str | None = Header(default=None)):
        def compute():
            corpus_id = body["corpus_id"]
            corpus = state.load_corpus(corpus_id)
            run_id = uuid.uuid4().hex[:12]
            rdir = state.data_dir / "runs" / run_id
            rdir.mkdir(parents=True)
            descriptor = {
                "run_id": run_id, "method": body["method"],
                "params": body.get("params", {}),
                "corpus_id": corpus_id, "seed": int(body.get("seed", 0)),
                "status": "pending", "artifacts": {},
            }

            def save() -> None:
                (rdir / "descriptor.json").write_text(
                    json.dumps(descriptor), encoding="utf-8")

            save()
            lock = state.corpus_lock(corpus_id)
            with lock:  # one running extraction per corpus
                descriptor["status"] = "running"
                save()
                try:
                    inputs = _extraction_inputs(state, corpus_id, corpus,
                                                descriptor["params"])
                    predictions = runner.run_extraction(
                        inputs, descriptor["method"], descriptor["params"],
                        descriptor["seed"])
                    pred_path = rdir / "predictions.jsonl"
                    dump_predictions(predictions, pred_path)
                    descriptor["artifacts"]["predictions"] = str(pred_path)
                    descriptor["status"] = "done"
                except Exception as exc:
                    descriptor["status"] = "failed"
                    descriptor["error"] = str(exc)
                save()
            return descriptor

        return idempotent(idempotency_key, compute)

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        path = state.data_dir / "runs" / run_id / "descriptor.json"
        if not path.exists():
            raise HTTPException(404, f"unknown run {run_id!r}")
        return json.loads(path.read_text("utf-8"))

    @app.get("/runs/{run_id}/predictions")
    def get_predictions(run_id: str):
        path = state.data_dir / "runs" / run_id / "predictions.jsonl"
        if not path.exists():
            raise HTTPException(404, "no predictions for this run")
        return Response(content=path.read_bytes(),
                        media_type="application/jsonl")

    @app.get("/runs/{run_id}/metrics")
    def get_metrics(run_id: str):
        descriptor = get_run(run_id)
        pred_path = state.data_dir / "runs" / run_id / "predictions.jsonl"
        gold_path = state.corpus_dir(descriptor["corpus_id"]) / "gold.jsonl"
        if not pred_path.exists():
            raise HTTPException(404, "run has no predictions")
        if not gold_path.exists():
            raise HTTPException(404, "corpus has no gold relations")
        corpus = state.load_corpus(descriptor["corpus_id"])
        gold_instances, _ = load_relation_set(gold_path, corpus)
        gold = {g.pair_key(): g.rtype for g in gold_instances}
        preds = load_predictions(pred_path)
        predicted = {}
        scores = {}
        for p in preds:
            key = (p.source_id, p.target_id)
            for candidate in (key, (key[1], key[0])):
                if candidate in gold:
                    predicted[candidate] = p.rtype
                    scores[candidate] = p.confidence
        classes = sorted({*gold.values(), *predicted.values(),
                          RelationType.NONE}, key=lambda t: t.value)
        report = build_report(gold, predicted, classes, scores,
                              run_metadata={"run_id": run_id,
                                            "method": descriptor["method"]})
        return report.to_json()

    # -- active learning -----------------------------------------------------
    @app.post("/al/sessions")
    def post_session(body: dict,
                     idempotency_key: str | None = Header(default=None)):
        def compute():
            session_id = uuid.uuid4().hex[:12]
            corpus = state.load_corpus(body["corpus_id"])
            seed_pairs = {tuple(item["pair"]) for item in body["seed_labels"]}
            if "unlabeled" in body:
                unlabeled = [tuple(p) for p in body["unlabeled"]]
            else:
                from .model import enumerate_candidate_pairs
                unlabeled = [p for p in enumerate_candidate_pairs(corpus)
                             if p not in seed_pairs]
            config = {
                "corpus_id": body["corpus_id"],
                "seed_labels": body["seed_labels"],
                "unlabeled": [list(p) for p in unlabeled],
                "thresholds": body.get("thresholds", [0.6, 0.9]),
                "ensemble": body.get("ensemble", {}),
                "oracle": body.get("oracle", "human_api"),
                "seed": body.get("seed", 0),
            }
            sdir = state.session_dir(session_id)
            sdir.mkdir(parents=True)
            (sdir / "config.json").write_text(json.dumps(config),
                                              encoding="utf-8")
            try:
                session = state.build_session(session_id, config)
            except (LearningError, CorpusError) as exc:
                raise HTTPException(422, str(exc))
            state.sessions[session_id] = session
            state.persist_session(session)
            return {"session_id": session_id}

        return idempotent(idempotency_key, compute)

    def _session(session_id: str) -> ALSession:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    @app.get("/al/sessions/{session_id}/next")
    def next_query(session_id: str):
        session = _session(session_id)
        with state.lock:
            query = session.pending_query
            if query is None and not session.complete:
                try:
                    query = session.step()
                except LearningError as exc:
                    raise HTTPException(422, str(exc))
                state.persist_session(session)
        if query is None:
            return {"none": True, "complete": session.complete}
        corpus = state.load_corpus(
            json.loads((state.session_dir(session_id) / "config.json")
                       .read_text("utf-8"))["corpus_id"])
        a, b = query.pair
        return {"pair": list(query.pair),
                "texts": {a: corpus[a].text, b: corpus[b].text},
                "confidence": query.confidence, "votes": query.votes}

    @app.post("/al/sessions/{session_id}/label")
    def label(session_id: str, body: dict):
        session = _session(session_id)
        rtype = RelationType.parse(body["type"])
        with state.lock:
            try:
                session.label_pair(tuple(body["pair"]), rtype)
            except LearningError as exc:
                raise HTTPException(409, str(exc))
            state.persist_session(session)
        return session.state()

    @app.get("/al/sessions/{session_id}/state")
    def session_state(session_id: str):
        return _session(session_id).state()

    @app.get("/al/sessions/{session_id}/audit")
    def session_audit(session_id: str):
        session = _session(session_id)
        return [e.to_json() for e in session.audit_log]

    # -- pair review -----------------------------------------------------------
    @app.get("/pairs/{corpus_id}/{a}/{b}")
    def pair_view(corpus_id: str, a: str, b: str):
        corpus = state.load_corpus(corpus_id)
        for rid in (a, b):
            if rid not in corpus:
                raise HTTPException(404, f"unknown requirement {rid!r}")
        inputs = _extraction_inputs(state, corpus_id, corpus, {})
        parses = runner.prepare_parses(inputs)
        predictions = []
        runs_dir = state.data_dir / "runs"
        for rdir in sorted(runs_dir.iterdir()):
            desc_path = rdir / "descriptor.json"
            pred_path = rdir / "predictions.jsonl"
            if not desc_path.exists() or not pred_path.exists():
                continue
            descriptor = json.loads(desc_path.read_text("utf-8"))
            if descriptor["corpus_id"] != corpus_id:
                continue
            for p in load_predictions(pred_path):
                if {p.source_id, p.target_id} == {a, b}:
                    predictions.append({**p.to_json(),
                                        "run_id": descriptor["run_id"]})

        def summary(rid: str) -> dict:
            parsed = parses[rid]
            return {
                "tokens": len(parsed.tokens),
                "mentions": [{"span": list(m.token_indices),
                              "type": m.entity_type,
                              "canonical": m.canonical}
                             for m in parsed.mentions],
                "chunks": [c.label for c in parsed.chunks],
            }

        return {"texts": {a: corpus[a].text, b: corpus[b].text},
                "parses": {a: summary(a), b: summary(b)},
                "predictions": predictions}

    return app


def _extraction_inputs(state: ServiceState, corpus_id: str, corpus: Corpus,
                       params: dict) -> runner.ExtractionInputs:
    cdir = state.corpus_dir(corpus_id)
    conllu = cdir / "parses.conllu"
    return runner.ExtractionInputs(
        corpus=corpus,
        conllu_path=conllu if conllu.exists() else None,
        gazetteer_path=_opt_path(params.get("gazetteer")),
        synonyms_path=_opt_path(params.get("synonyms")),
        ontology_path=_opt_path(params.get("ontology")),
        rules_path=_opt_path(params.get("rules")),
        embeddings_path=_opt_path(params.get("embeddings")),
    )


def _opt_path(value: str | None) -> Path | None:
    return Path(value) if value else None
