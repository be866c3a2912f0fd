"""TF-IDF, embedding tables, similarity measures and truncated-SVD LSA.

TF weights are raw in-document counts and IDF is log base 2 of n over
the document frequency, with no smoothing. The truncated SVD is a
randomized subspace iteration (oversampling 10, 4 power iterations),
deterministic for a fixed seed up to column sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .nlp import ParsedRequirement


class VectorError(ValueError):
    """Raised on malformed embedding files or dimension mismatches."""


@dataclass
class TokenFilter:
    drop_stopwords: bool = True
    use_lemmas: bool = True
    min_token_len: int = 1

    def terms(self, parsed: ParsedRequirement) -> list[str]:
        out: list[str] = []
        for tok in parsed.tokens:
            if self.drop_stopwords and tok.is_stopword:
                continue
            term = tok.lemma if self.use_lemmas else tok.normalized
            if len(term) < self.min_token_len or not any(c.isalnum() for c in term):
                continue
            out.append(term)
        return out


@dataclass
class SparseVector:
    """Sparse weight vector with no explicit zero entries."""

    entries: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.entries = {k: v for k, v in self.entries.items() if v != 0.0}

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.entries.values()))

    def dot(self, other: "SparseVector") -> float:
        if len(other.entries) < len(self.entries):
            self, other = other, self
        return sum(v * other.entries.get(k, 0.0) for k, v in self.entries.items())

    def cosine(self, other: "SparseVector") -> float:
        denom = self.norm() * other.norm()
        if denom == 0.0:
            return 0.0
        return self.dot(other) / denom


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    document_frequency: dict[str, int]
    n: int
    sublinear: bool = False


def tfidf_fit(parses: Iterable[ParsedRequirement],
              token_filter: TokenFilter | None = None,
              sublinear: bool = False) -> TfidfModel:
    token_filter = token_filter or TokenFilter()
    parses = list(parses)
    if not parses:
        raise VectorError("cannot fit TF-IDF on an empty corpus")
    df: dict[str, int] = {}
    for parsed in parses:
        for term in set(token_filter.terms(parsed)):
            df[term] = df.get(term, 0) + 1
    vocabulary = {term: i for i, term in enumerate(sorted(df))}
    return TfidfModel(vocabulary=vocabulary, document_frequency=df,
                      n=len(parses), sublinear=sublinear)


def tfidf_vectorize(model: TfidfModel, parsed: ParsedRequirement,
                    token_filter: TokenFilter | None = None) -> SparseVector:
    """weight(t) = count(t) · log2(n / n_t); OOV and zero weights omitted."""
    token_filter = token_filter or TokenFilter()
    counts: dict[str, int] = {}
    for term in token_filter.terms(parsed):
        if term in model.vocabulary:
            counts[term] = counts.get(term, 0) + 1
    entries: dict[int, float] = {}
    for term, count in counts.items():
        tf = 1.0 + math.log2(count) if model.sublinear else float(count)
        idf = math.log2(model.n / model.document_frequency[term])
        weight = tf * idf
        if weight != 0.0:
            entries[model.vocabulary[term]] = weight
    return SparseVector(entries)


@dataclass
class EmbeddingTable:
    dimension: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, term: str) -> bool:
        return term in self.vectors


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load a whitespace-separated "token v1 … vd" text table.

    Dimension is set by the first line; duplicate tokens keep the last
    occurrence.
    """
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dimension: int | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            token, fields = parts[0], parts[1:]
            try:
                vec = np.array([float(x) for x in fields], dtype=np.float64)
            except ValueError as exc:
                raise VectorError(f"{path}:{lineno}: non-numeric field") from exc
            if dimension is None:
                if len(vec) == 0:
                    raise VectorError(f"{path}:{lineno}: empty vector")
                dimension = len(vec)
            elif len(vec) != dimension:
                raise VectorError(
                    f"{path}:{lineno}: dimension {len(vec)} != {dimension}")
            vectors[token] = vec
    if dimension is None:
        raise VectorError(f"{path}: empty embedding file")
    return EmbeddingTable(dimension=dimension, vectors=vectors)


def dump_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for token, vec in table.vectors.items():
            fh.write(token + " " + " ".join(f"{x:.9g}" for x in vec) + "\n")


def embed_requirement(table: EmbeddingTable, parsed: ParsedRequirement,
                      token_filter: TokenFilter | None = None,
                      ) -> tuple[np.ndarray, bool]:
    """Mean of in-vocabulary token vectors; all-OOV yields a flagged
    zero vector."""
    token_filter = token_filter or TokenFilter()
    hits = [table.vectors[t] for t in token_filter.terms(parsed) if t in table]
    if not hits:
        return np.zeros(table.dimension), True
    return np.mean(hits, axis=0), False


def similarity(u: np.ndarray, v: np.ndarray, measure: str = "cosine") -> float:
    """Cosine similarity, or euclidean/manhattan distances (callers
    convert distances via 1/(1+d)). Cosine of a zero vector is 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise VectorError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if measure == "cosine":
        denom = float(np.linalg.norm(u) * np.linalg.norm(v))
        if denom == 0.0:
            return 0.0
        return float(np.dot(u, v) / denom)
    if measure == "euclidean":
        return float(np.linalg.norm(u - v))
    if measure == "manhattan":
        return float(np.abs(u - v).sum())
    raise VectorError(f"unknown similarity measure: {measure!r}")


def distance_to_similarity(dist: float) -> float:
    return 1.0 / (1.0 + dist)


@dataclass
class LsaModel:
    k: int
    singular_values: np.ndarray
    term_basis: np.ndarray  # (n_terms, k)


def lsa_fit(matrix: np.ndarray, k: int, seed: int = 0,
            oversampling: int = 10, power_iters: int = 8) -> LsaModel:
    """Truncated SVD of a document-term matrix by randomized subspace
    iteration; deterministic for a fixed seed up to column sign."""
    matrix = np.asarray(matrix, dtype=np.float64)
    rows, cols = matrix.shape
    if not (1 <= k <= min(rows, cols)):
        raise VectorError(f"k={k} out of range for a {rows}x{cols} matrix")
    rng = np.random.default_rng(seed)
    p = min(k + oversampling, cols)
    omega = rng.standard_normal((cols, p))
    y = matrix @ omega
    q, _ = np.linalg.qr(y)
    for _ in range(power_iters):
        z, _ = np.linalg.qr(matrix.T @ q)
        q, _ = np.linalg.qr(matrix @ z)
    b = q.T @ matrix
    u_small, s, vt = np.linalg.svd(b, full_matrices=False)
    return LsaModel(k=k, singular_values=s[:k], term_basis=vt[:k].T.copy())


def lsa_project(model: LsaModel, vector: np.ndarray | SparseVector) -> np.ndarray:
    if isinstance(vector, SparseVector):
        dense = np.zeros(model.term_basis.shape[0])
        for idx, weight in vector.entries.items():
            dense[idx] = weight
        vector = dense
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape[0] != model.term_basis.shape[0]:
        raise VectorError("vector dimension does not match the LSA term basis")
    return vector @ model.term_basis


def sparse_matrix(vectors: Sequence[SparseVector], n_cols: int) -> np.ndarray:
    out = np.zeros((len(vectors), n_cols))
    for i, vec in enumerate(vectors):
        for idx, weight in vec.entries.items():
            out[i, idx] = weight
    return out
