"""Tokenization, parse ingestion, n-grams, chunks, NER and coreference.

Part-of-speech tags and dependency arcs are produced externally and
ingested from CoNLL-U; a lexicon-based fallback tagger covers corpora
with no parses available (dependency arcs remain absent in that case).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .model import Corpus, Requirement

NOUNISH = {"NOUN", "PROPN", "PRON"}
MODIFIER = {"ADJ", "NOUN", "PROPN"}

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:[-'/][A-Za-z0-9]+)*|[^\sA-Za-z0-9]")
_SENT_FINAL = {".", "!", "?", ";"}
_NOISE_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f]")


class PipelineError(ValueError):
    """Raised on malformed parses, gazetteers or lexica."""


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    normalized: str
    lemma: str
    pos: str = ""
    is_stopword: bool = False


@dataclass(frozen=True)
class DependencyArc:
    """One dependency edge; the root arc is a self-loop labeled ``root``."""

    head_index: int
    child_index: int
    dep_label: str

    @property
    def is_root(self) -> bool:
        return self.head_index == self.child_index


@dataclass(frozen=True)
class NGram:
    token_indices: tuple[int, ...]
    root_index: int
    label: str


@dataclass(frozen=True)
class EntityMention:
    token_indices: tuple[int, ...]
    entity_type: str
    canonical: str


@dataclass
class ParsedRequirement:
    requirement_id: str
    tokens: list[Token] = field(default_factory=list)
    arcs: list[DependencyArc] = field(default_factory=list)
    sentences: list[tuple[int, int]] = field(default_factory=list)
    ngrams: list[NGram] = field(default_factory=list)
    mentions: list[EntityMention] = field(default_factory=list)
    empty_after_cleaning: bool = False
    chunks: list[NGram] = field(default_factory=list)

    def sentence_of(self, index: int) -> tuple[int, int]:
        for start, end in self.sentences:
            if start <= index < end:
                return (start, end)
        raise PipelineError(f"token index {index} outside any sentence")

    def lemmas(self, drop_stopwords: bool = False) -> list[str]:
        return [t.lemma for t in self.tokens
                if not (drop_stopwords and t.is_stopword)]


@dataclass(frozen=True)
class CoreferenceLink:
    from_requirement: str
    from_span: tuple[int, ...]
    to_requirement: str
    to_span: tuple[int, ...]
    rule: str  # synonym_table | location_predecessor | exact_entity


@dataclass
class PreprocessConfig:
    lowercase: bool = True
    strip_noise: bool = True
    stopwords: frozenset[str] = field(default_factory=frozenset)
    lemma_table: dict[str, str] = field(default_factory=dict)
    stemming: bool = False

    @classmethod
    def default(cls) -> "PreprocessConfig":
        return cls(stopwords=load_default_stopwords(),
                   lemma_table=load_default_lemmas())


def _data_text(name: str) -> str:
    return resources.files("reqrel.data").joinpath(name).read_text(encoding="utf-8")


def load_default_stopwords() -> frozenset[str]:
    return frozenset(
        line.strip() for line in _data_text("stopwords.txt").splitlines()
        if line.strip() and not line.startswith("#")
    )


def load_default_lemmas() -> dict[str, str]:
    table: dict[str, str] = {}
    for line in _data_text("lemmas.tsv").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, lemma = line.split("\t")
        table[word] = lemma
    return table


def _stem(word: str) -> str:
    for suffix in ("ing", "edly", "ed", "ies", "es", "s"):
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            stem = word[: -len(suffix)]
            return stem + "y" if suffix == "ies" else stem
    return word


def preprocess(requirement: Requirement,
               config: PreprocessConfig | None = None) -> ParsedRequirement:
    """Tokenize a requirement: normalized forms, lemmas, stopword flags,
    punctuation-rule sentence spans. Stopwords are flagged, not removed."""
    config = config or PreprocessConfig.default()
    text = requirement.text
    if config.strip_noise:
        text = _NOISE_RE.sub(" ", text)
    surfaces = _TOKEN_RE.findall(text)
    if not surfaces:
        return ParsedRequirement(requirement.id, empty_after_cleaning=True)
    tokens: list[Token] = []
    for i, surface in enumerate(surfaces):
        normalized = surface.lower() if config.lowercase else surface
        lemma = config.lemma_table.get(normalized, normalized)
        if config.stemming:
            lemma = _stem(lemma)
        tokens.append(Token(
            index=i, surface=surface, normalized=surface.lower(), lemma=lemma,
            is_stopword=surface.lower() in config.stopwords,
        ))
    sentences: list[tuple[int, int]] = []
    start = 0
    for i, tok in enumerate(tokens):
        if tok.surface in _SENT_FINAL:
            sentences.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        sentences.append((start, len(tokens)))
    return ParsedRequirement(requirement.id, tokens=tokens, sentences=sentences)


# ---------------------------------------------------------------------------
# CoNLL-U ingestion

def ingest_conllu(corpus: Corpus, path: str | Path,
                  stopwords: frozenset[str] | None = None,
                  ) -> dict[str, ParsedRequirement]:
    """Ingest a CoNLL-U file keyed by ``# sent_id = <req_id>/<sent_index>``.

    Arcs are validated as one rooted tree per sentence; the returned
    parses replace any preprocess-only output for the same requirement.
    """
    path = Path(path)
    stopwords = load_default_stopwords() if stopwords is None else stopwords
    sentences = _split_conllu_sentences(path)
    parses: dict[str, ParsedRequirement] = {}
    for sent_id, rows in sentences:
        if "/" in sent_id:
            req_id, _, _ = sent_id.partition("/")
        else:
            req_id = sent_id
        if req_id not in corpus:
            raise PipelineError(f"unmatched document in CoNLL-U: {req_id!r}")
        parsed = parses.setdefault(req_id, ParsedRequirement(req_id))
        offset = len(parsed.tokens)
        heads: list[int] = []
        for row in rows:
            cols = row.split("\t")
            if len(cols) != 10:
                raise PipelineError(f"{path}: bad CoNLL-U row in {sent_id!r}: {row!r}")
            if "-" in cols[0] or "." in cols[0]:
                continue  # multiword/empty nodes are not used
            idx = offset + int(cols[0]) - 1
            surface, lemma, upos, head, dep = cols[1], cols[2], cols[3], cols[6], cols[7]
            parsed.tokens.append(Token(
                index=idx, surface=surface, normalized=surface.lower(),
                lemma=lemma.lower(), pos=upos,
                is_stopword=surface.lower() in stopwords,
            ))
            heads.append(int(head))
        n = len(heads)
        roots = sum(1 for h in heads if h == 0)
        if roots != 1:
            raise PipelineError(f"{path}: sentence {sent_id!r} has {roots} roots")
        arcs: list[DependencyArc] = []
        for local, (row, head) in enumerate(zip(rows, heads)):
            dep = row.split("\t")[7]
            child = offset + local
            if head == 0:
                arcs.append(DependencyArc(child, child, "root"))
            else:
                if not (1 <= head <= n):
                    raise PipelineError(f"{path}: head out of range in {sent_id!r}")
                arcs.append(DependencyArc(offset + head - 1, child, dep))
        _check_tree(arcs, sent_id)
        parsed.arcs.extend(arcs)
        parsed.sentences.append((offset, offset + n))
    return parses


def _split_conllu_sentences(path: Path) -> list[tuple[str, list[str]]]:
    sentences: list[tuple[str, list[str]]] = []
    sent_id: str | None = None
    rows: list[str] = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# sent_id"):
                sent_id = line.split("=", 1)[1].strip()
            elif line.startswith("#"):
                continue
            elif not line.strip():
                if rows:
                    if sent_id is None:
                        raise PipelineError(f"{path}: sentence without sent_id")
                    sentences.append((sent_id, rows))
                sent_id, rows = None, []
            else:
                rows.append(line)
    if rows:
        if sent_id is None:
            raise PipelineError(f"{path}: sentence without sent_id")
        sentences.append((sent_id, rows))
    return sentences


def _check_tree(arcs: Sequence[DependencyArc], sent_id: str) -> None:
    parent = {a.child_index: a.head_index for a in arcs}
    for start in parent:
        seen = set()
        node = start
        while parent[node] != node:
            if node in seen:
                raise PipelineError(f"malformed tree (cycle) in sentence {sent_id!r}")
            seen.add(node)
            node = parent[node]


# ---------------------------------------------------------------------------
# Fallback PoS tagging

def load_pos_lexicon(path: str | Path | None = None) -> dict[str, str]:
    if path is None:
        text = _data_text("pos_lexicon.tsv")
    else:
        p = Path(path)
        if not p.exists():
            raise PipelineError(f"missing PoS lexicon: {p}")
        text = p.read_text(encoding="utf-8")
    lexicon: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, tag = line.split("\t")[:2]
        lexicon[word] = tag
    return lexicon


_SUFFIX_RULES: list[tuple[str, str]] = [
    ("ing", "VERB"), ("ed", "VERB"), ("tion", "NOUN"), ("sion", "NOUN"),
    ("ment", "NOUN"), ("ness", "NOUN"), ("ity", "NOUN"), ("ance", "NOUN"),
    ("ence", "NOUN"), ("ish", "ADJ"), ("ous", "ADJ"), ("ive", "ADJ"),
    ("able", "ADJ"), ("ical", "ADJ"), ("al", "ADJ"), ("ly", "ADV"),
]


def fallback_pos_tag(parsed: ParsedRequirement,
                     lexicon: dict[str, str] | None = None) -> ParsedRequirement:
    """Fill PoS tags from a lexicon with suffix-rule fallback; arcs untouched."""
    if lexicon is None:
        lexicon = load_pos_lexicon()
    new_tokens: list[Token] = []
    for tok in parsed.tokens:
        if tok.pos:
            new_tokens.append(tok)
            continue
        tag = lexicon.get(tok.normalized)
        if tag is None:
            if not tok.normalized[0].isalnum():
                tag = "PUNCT"
            elif tok.normalized[0].isdigit():
                tag = "NUM"
            else:
                tag = next((t for s, t in _SUFFIX_RULES
                            if tok.normalized.endswith(s)), None)
                if tag is None:
                    tag = "PROPN" if tok.surface[0].isupper() else "NOUN"
        new_tokens.append(Token(tok.index, tok.surface, tok.normalized,
                                tok.lemma, tag, tok.is_stopword))
    parsed.tokens = new_tokens
    return parsed


# ---------------------------------------------------------------------------
# N-grams and noun phrase chunks

@dataclass(frozen=True)
class NgramPattern:
    """Either a contiguous chain over allowed PoS tags or a dependency
    triple (head_pos, dep_label, child_pos); dep patterns are skipped
    when arcs are absent."""

    id: str
    allowed_pos: frozenset[str] = frozenset()
    min_len: int = 2
    dep_triple: tuple[str, str, str] | None = None


DEFAULT_NGRAM_PATTERNS = [
    NgramPattern(id="noun-chain", allowed_pos=frozenset({"NOUN", "PROPN", "ADJ"})),
    NgramPattern(id="noun-compound", dep_triple=("NOUN", "compound", "NOUN")),
    NgramPattern(id="noun-amod", dep_triple=("NOUN", "amod", "ADJ")),
]


def _span_root(parsed: ParsedRequirement, span: tuple[int, ...]) -> int:
    span_set = set(span)
    if parsed.arcs:
        heads = {a.child_index: a.head_index for a in parsed.arcs}
        for i in span:
            if heads.get(i, i) not in span_set or heads.get(i, i) == i:
                return i
    return span[-1]


def _ngram_from_span(parsed: ParsedRequirement, span: tuple[int, ...]) -> NGram:
    return NGram(
        token_indices=span,
        root_index=_span_root(parsed, span),
        label=" ".join(parsed.tokens[i].lemma for i in span),
    )


def extract_ngrams(parsed: ParsedRequirement,
                   patterns: Sequence[NgramPattern] | None = None) -> list[NGram]:
    """Contiguous spans matching any pattern, nested matches included,
    ordered by (start, length); spans never cross sentence boundaries."""
    if patterns is None:
        patterns = DEFAULT_NGRAM_PATTERNS
    spans: set[tuple[int, ...]] = set()
    for pattern in patterns:
        if pattern.dep_triple is not None:
            if not parsed.arcs:
                continue
            head_pos, dep_label, child_pos = pattern.dep_triple
            for arc in parsed.arcs:
                if arc.is_root or arc.dep_label != dep_label:
                    continue
                if parsed.tokens[arc.head_index].pos != head_pos:
                    continue
                if parsed.tokens[arc.child_index].pos != child_pos:
                    continue
                lo, hi = sorted((arc.head_index, arc.child_index))
                sent = parsed.sentence_of(lo)
                if hi < sent[1]:
                    spans.add(tuple(range(lo, hi + 1)))
        elif pattern.allowed_pos:
            for start, end in parsed.sentences:
                run_start = None
                for i in range(start, end + 1):
                    in_run = i < end and parsed.tokens[i].pos in pattern.allowed_pos
                    if in_run and run_start is None:
                        run_start = i
                    elif not in_run and run_start is not None:
                        run = range(run_start, i)
                        for a in run:
                            for b in range(a + pattern.min_len - 1, i):
                                spans.add(tuple(range(a, b + 1)))
                        run_start = None
    ordered = sorted(spans, key=lambda s: (s[0], len(s)))
    ngrams = [_ngram_from_span(parsed, span) for span in ordered]
    parsed.ngrams = ngrams
    return ngrams


def chunk_noun_phrases(parsed: ParsedRequirement) -> list[NGram]:
    """Maximal {NOUN, PROPN, PRON} spans extended left over {ADJ, NOUN}
    modifiers; one chunk per maximal span."""
    chunks: list[NGram] = []
    for start, end in parsed.sentences:
        i = start
        while i < end:
            if parsed.tokens[i].pos in NOUNISH:
                run_end = i
                while run_end + 1 < end and parsed.tokens[run_end + 1].pos in NOUNISH:
                    run_end += 1
                run_start = i
                while (run_start - 1 >= start
                       and parsed.tokens[run_start - 1].pos in MODIFIER | {"ADJ"}):
                    run_start -= 1
                span = tuple(range(run_start, run_end + 1))
                chunks.append(_ngram_from_span(parsed, span))
                i = run_end + 1
            else:
                i += 1
    parsed.chunks = chunks
    return chunks


# ---------------------------------------------------------------------------
# Gazetteer NER

def load_gazetteer(path: str | Path) -> list[tuple[str, str, str]]:
    entries: list[tuple[str, str, str]] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise PipelineError(f"malformed gazetteer line {lineno}: {line!r}")
            entries.append((parts[0], parts[1], parts[2]))
    return entries


def recognize_entities(parsed: ParsedRequirement,
                       gazetteer: list[tuple[str, str, str]]) -> list[EntityMention]:
    """Longest-match, case-insensitive span matching over normalized
    tokens; overlapping shorter matches are suppressed."""
    by_first: dict[str, list[tuple[tuple[str, ...], str, str]]] = {}
    for term, etype, canonical in gazetteer:
        words = tuple(w.lower() for w in _TOKEN_RE.findall(term))
        if not words:
            continue
        by_first.setdefault(words[0], []).append((words, etype, canonical))
    for candidates in by_first.values():
        candidates.sort(key=lambda c: -len(c[0]))
    mentions: list[EntityMention] = []
    i = 0
    norm = [t.normalized for t in parsed.tokens]
    while i < len(norm):
        matched = False
        for words, etype, canonical in by_first.get(norm[i], []):
            if tuple(norm[i:i + len(words)]) == words:
                mentions.append(EntityMention(
                    token_indices=tuple(range(i, i + len(words))),
                    entity_type=etype, canonical=canonical,
                ))
                i += len(words)
                matched = True
                break
        if not matched:
            i += 1
    parsed.mentions = mentions
    return mentions


# ---------------------------------------------------------------------------
# Rule-based cross-document coreference

DEFAULT_COREF_TRIGGERS = ("the function", "the system", "the information")


def load_synonym_table(path: str | Path) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise PipelineError(f"malformed synonym line {lineno}: {line!r}")
            pairs.append((parts[0].lower(), parts[1].lower()))
    return pairs


def resolve_coreferences(corpus: Corpus,
                         parses: dict[str, ParsedRequirement],
                         synonym_pairs: Iterable[tuple[str, str]] = (),
                         triggers: Sequence[str] = DEFAULT_COREF_TRIGGERS,
                         ) -> list[CoreferenceLink]:
    """Cross-document links of three kinds: shared canonical entities,
    synonym-table pairs, and definite generic NPs resolved to the
    nearest preceding requirement in the same document."""
    links: list[CoreferenceLink] = []
    order = [r.id for r in corpus if r.id in parses]

    # exact_entity: same canonical mention in two requirements
    first_mention: dict[str, list[tuple[str, tuple[int, ...]]]] = {}
    for rid in order:
        seen: set[str] = set()
        for mention in parses[rid].mentions:
            if mention.canonical not in seen:
                seen.add(mention.canonical)
                first_mention.setdefault(mention.canonical, []).append(
                    (rid, mention.token_indices))
    for canonical in sorted(first_mention):
        holders = first_mention[canonical]
        for i in range(len(holders)):
            for j in range(i + 1, len(holders)):
                links.append(CoreferenceLink(
                    holders[i][0], holders[i][1],
                    holders[j][0], holders[j][1], "exact_entity"))

    # synonym_table: table rows linking chunks across requirements
    phrase_holders: dict[str, list[tuple[str, tuple[int, ...]]]] = {}
    for rid in order:
        parsed = parses[rid]
        for chunk in parsed.chunks:
            phrase = " ".join(parsed.tokens[i].normalized for i in chunk.token_indices)
            phrase_holders.setdefault(phrase, []).append((rid, chunk.token_indices))
            phrase_holders.setdefault(chunk.label, []).append((rid, chunk.token_indices))
    for a, b in synonym_pairs:
        for rid_a, span_a in phrase_holders.get(a, []):
            for rid_b, span_b in phrase_holders.get(b, []):
                if rid_a != rid_b:
                    links.append(CoreferenceLink(
                        rid_a, span_a, rid_b, span_b, "synonym_table"))

    # location_predecessor: definite generic NP -> immediate predecessor
    trigger_words = [tuple(t.lower().split()) for t in triggers]
    for rid in order:
        parsed = parses[rid]
        req = corpus[rid]
        norm = [t.normalized for t in parsed.tokens]
        for tw in trigger_words:
            for i in range(len(norm) - len(tw) + 1):
                if tuple(norm[i:i + len(tw)]) != tw:
                    continue
                pred = _nearest_predecessor(corpus, parses, req)
                if pred is None:
                    continue
                pred_id, pred_span = pred
                links.append(CoreferenceLink(
                    rid, tuple(range(i, i + len(tw))),
                    pred_id, pred_span, "location_predecessor"))
    return [l for l in links
            if (l.from_requirement, l.from_span) != (l.to_requirement, l.to_span)]


def _nearest_predecessor(corpus: Corpus, parses: dict[str, ParsedRequirement],
                         req: Requirement) -> tuple[str, tuple[int, ...]] | None:
    best: Requirement | None = None
    for other in corpus:
        if other.doc_id != req.doc_id or other.order_index >= req.order_index:
            continue
        if other.id not in parses:
            continue
        parsed = parses[other.id]
        if not parsed.mentions and not parsed.chunks:
            continue
        if best is None or other.order_index > best.order_index:
            best = other
    if best is None:
        return None
    parsed = parses[best.id]
    if parsed.mentions:
        return (best.id, parsed.mentions[0].token_indices)
    return (best.id, parsed.chunks[0].token_indices)
