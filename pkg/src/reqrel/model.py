"""Corpus data model, relation taxonomy, loaders and pair enumeration."""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class CorpusError(ValueError):
    """Raised on malformed corpora, relation sets or split requests."""


class Direction(Enum):
    UNIDIRECTIONAL = "U"
    BIDIRECTIONAL = "B"


class RelationType(Enum):
    """Relation taxonomy with a direction attribute per member.

    ``refines`` is accepted as an input alias of ``DETAILS``.
    """

    NONE = "none"
    REQUIRES = "requires"
    CONFLICTS = "conflicts"
    CONTRADICTS = "contradicts"
    IS_A_VARIANT = "is_a_variant"
    IS_SIMILAR = "is_similar"
    DETAILS = "details"

    @property
    def direction(self) -> Direction:
        return _DIRECTIONS[self]

    @classmethod
    def parse(cls, label: str) -> "RelationType":
        norm = label.strip().lower().replace("-", "_").replace(" ", "_")
        if norm == "refines":
            return cls.DETAILS
        for member in cls:
            if member.value == norm:
                return member
        raise CorpusError(f"unknown relation label: {label!r}")


_DIRECTIONS = {
    RelationType.NONE: Direction.BIDIRECTIONAL,
    RelationType.REQUIRES: Direction.UNIDIRECTIONAL,
    RelationType.CONFLICTS: Direction.UNIDIRECTIONAL,
    RelationType.CONTRADICTS: Direction.BIDIRECTIONAL,
    RelationType.IS_A_VARIANT: Direction.BIDIRECTIONAL,
    RelationType.IS_SIMILAR: Direction.BIDIRECTIONAL,
    RelationType.DETAILS: Direction.UNIDIRECTIONAL,
}


@dataclass(frozen=True)
class Requirement:
    id: str
    text: str
    doc_id: str = "default"
    order_index: int = 0
    metadata: dict[str, str] = field(default_factory=dict)


class Corpus:
    """Immutable ordered collection of requirements."""

    def __init__(self, requirements: Iterable[Requirement]):
        self._requirements: list[Requirement] = []
        self._by_id: dict[str, Requirement] = {}
        seen_order: set[tuple[str, int]] = set()
        for req in requirements:
            if not req.id:
                raise CorpusError("requirement with empty id")
            if req.id in self._by_id:
                raise CorpusError(f"duplicate requirement id: {req.id!r}")
            if not req.text.strip():
                raise CorpusError(f"requirement {req.id!r} has empty text")
            key = (req.doc_id, req.order_index)
            if key in seen_order:
                raise CorpusError(
                    f"duplicate order_index {req.order_index} in doc {req.doc_id!r}"
                )
            seen_order.add(key)
            self._requirements.append(req)
            self._by_id[req.id] = req

    @property
    def n(self) -> int:
        return len(self._requirements)

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Requirement]:
        return iter(self._requirements)

    def __contains__(self, req_id: str) -> bool:
        return req_id in self._by_id

    def __getitem__(self, req_id: str) -> Requirement:
        try:
            return self._by_id[req_id]
        except KeyError:
            raise CorpusError(f"unknown requirement id: {req_id!r}") from None

    def ids(self) -> list[str]:
        return [r.id for r in self._requirements]


@dataclass(frozen=True)
class RelationInstance:
    """A gold or predicted link between two requirements.

    Bidirectional types are stored in canonical order (source id
    lexicographically below target id); canonicalization is idempotent.
    """

    source_id: str
    target_id: str
    rtype: RelationType
    provenance: str = "gold"

    def __post_init__(self) -> None:
        if self.source_id == self.target_id:
            raise CorpusError(f"self-relation on {self.source_id!r}")

    def canonical(self) -> "RelationInstance":
        if (
            self.rtype.direction is Direction.BIDIRECTIONAL
            and self.source_id > self.target_id
        ):
            return RelationInstance(
                self.target_id, self.source_id, self.rtype, self.provenance
            )
        return self

    def pair_key(self) -> tuple[str, str]:
        return (self.source_id, self.target_id)


@dataclass
class LoadReport:
    """Per-type counts and notes produced by :func:`load_relation_set`."""

    total: int
    counts: dict[RelationType, int]
    refines_aliased: int = 0

    @property
    def none_count(self) -> int:
        return self.counts.get(RelationType.NONE, 0)

    @property
    def related_count(self) -> int:
        return self.total - self.none_count


def load_requirements(path: str | Path, format: str = "jsonl",
                      csv_config: dict | None = None) -> Corpus:
    """Load a corpus from a requirements JSONL file or a mapped CSV.

    ``order`` defaults to file order when absent; duplicate ids, empty
    text and malformed rows are rejected with the offending line.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    if format == "jsonl":
        rows = _read_jsonl_requirements(path)
    elif format == "csv-mapped":
        if csv_config is None:
            raise CorpusError("csv-mapped format requires a column-mapping config")
        rows = _read_csv_requirements(path, csv_config)
    else:
        raise CorpusError(f"unknown requirements format: {format!r}")
    return Corpus(rows)


def _read_jsonl_requirements(path: Path) -> list[Requirement]:
    rows: list[Requirement] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if "id" not in obj or "text" not in obj:
                raise CorpusError(f"{path}:{lineno}: missing 'id' or 'text'")
            rows.append(
                Requirement(
                    id=str(obj["id"]),
                    text=str(obj["text"]),
                    doc_id=str(obj.get("doc", "default")),
                    order_index=int(obj.get("order", len(rows))),
                    metadata={str(k): str(v) for k, v in obj.get("meta", {}).items()},
                )
            )
    return rows


def _read_csv_requirements(path: Path, config: dict) -> list[Requirement]:
    id_col = config["id_col"]
    text_col = config["text_col"]
    rows: list[Requirement] = []
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, record in enumerate(csv.DictReader(fh), 2):
            if id_col not in record or text_col not in record:
                raise CorpusError(f"{path}:{lineno}: missing mapped column")
            rows.append(
                Requirement(
                    id=str(record[id_col]),
                    text=str(record[text_col]),
                    order_index=len(rows),
                )
            )
    return rows


def load_relation_set(path: str | Path, corpus: Corpus,
                      provenance: str = "gold") -> tuple[list[RelationInstance], LoadReport]:
    """Load a relations JSONL file against a corpus.

    ``refines`` labels are normalized to ``DETAILS``; bidirectional
    instances are canonicalized. Unknown requirement ids and labels are
    rejected by name.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    instances: list[RelationInstance] = []
    counts: dict[RelationType, int] = {}
    aliased = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            source, target = str(obj["source"]), str(obj["target"])
            for rid in (source, target):
                if rid not in corpus:
                    raise CorpusError(f"{path}:{lineno}: unknown requirement id {rid!r}")
            raw_label = str(obj["type"])
            if raw_label.strip().lower() == "refines":
                aliased += 1
            rtype = RelationType.parse(raw_label)
            inst = RelationInstance(source, target, rtype, provenance).canonical()
            instances.append(inst)
            counts[rtype] = counts.get(rtype, 0) + 1
    return instances, LoadReport(total=len(instances), counts=counts,
                                 refines_aliased=aliased)


def dump_relation_set(instances: Iterable[RelationInstance], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "source": inst.source_id,
                "target": inst.target_id,
                "type": inst.rtype.value,
            }) + "\n")


def enumerate_candidate_pairs(corpus: Corpus, mode: str = "unordered") -> list[tuple[str, str]]:
    """Enumerate candidate pairs deterministically in corpus order.

    ``ordered`` yields n·(n−1) keys, ``unordered`` n·(n−1)/2 canonical
    keys (first id precedes second in corpus order).
    """
    if corpus.n < 2:
        raise CorpusError("pair enumeration needs a corpus with at least 2 requirements")
    ids = corpus.ids()
    if mode == "unordered":
        return [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]
    if mode == "ordered":
        return [(a, b) for a in ids for b in ids if a != b]
    raise CorpusError(f"unknown enumeration mode: {mode!r}")


@dataclass
class FoldAssignment:
    fold_count: int
    assignments: dict[tuple[str, str], int]
    stratified: bool

    def fold(self, index: int) -> list[tuple[str, str]]:
        return [pair for pair, f in self.assignments.items() if f == index]

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.fold_count
        for f in self.assignments.values():
            sizes[f] += 1
        return sizes


def kfold_split(pairs: list[tuple[tuple[str, str], RelationType]], k: int,
                stratified: bool = True, seed: int = 0) -> FoldAssignment:
    """Partition labeled pairs into k disjoint, exhaustive folds.

    Stratified splits keep per-fold class counts within one instance of
    the ideal proportion; assignment is deterministic for a fixed seed.
    """
    if k < 2:
        raise CorpusError(f"fold count must be >= 2, got {k}")
    if len(pairs) < k:
        raise CorpusError(f"cannot split {len(pairs)} pairs into {k} folds")
    rng = random.Random(seed)
    assignments: dict[tuple[str, str], int] = {}
    if stratified:
        by_class: dict[RelationType, list[tuple[str, str]]] = {}
        for pair, label in pairs:
            by_class.setdefault(label, []).append(pair)
        offset = 0
        for label in sorted(by_class, key=lambda t: t.value):
            members = sorted(by_class[label])
            rng.shuffle(members)
            for i, pair in enumerate(members):
                assignments[pair] = (i + offset) % k
            offset += len(members)
    else:
        keys = sorted(pair for pair, _ in pairs)
        rng.shuffle(keys)
        for i, pair in enumerate(keys):
            assignments[pair] = i % k
    return FoldAssignment(fold_count=k, assignments=assignments, stratified=stratified)
