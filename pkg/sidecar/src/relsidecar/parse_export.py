"""parse-export: dependency-parse requirements JSONL into CoNLL-U.

A deterministic rule-based parser: closed-class lexicon plus suffix
heuristics for tagging, and head-attachment rules that always yield a
single rooted, acyclic tree per sentence. Sentences are keyed
``sent_id = <requirement-id>/<sentence-index>`` so downstream loaders
can align them with the source corpus.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:[-'][A-Za-z0-9]+)*|[^\sA-Za-z0-9]")
_SENTENCE_END = frozenset(".!?;")

_DETS = frozenset({"the", "a", "an", "this", "that", "these", "those",
                   "each", "every", "any", "no", "all", "both"})
_AUX = frozenset({"shall", "will", "must", "may", "can", "should",
                  "would", "could", "is", "are", "was", "were", "be",
                  "been", "being", "has", "have", "had", "does", "do"})
_ADPS = frozenset({"of", "on", "in", "for", "with", "from", "to", "at",
                   "by", "before", "after", "during", "under", "over",
                   "into", "onto", "between", "within", "without",
                   "through", "via"})
_PRONOUNS = frozenset({"it", "its", "they", "them", "their", "he",
                       "she", "his", "her", "we", "our", "you", "your"})
_CCONJ = frozenset({"and", "or", "but", "nor"})
_SCONJ = frozenset({"if", "when", "while", "unless", "until", "once",
                    "because", "although", "whenever", "only"})
_ADVS = frozenset({"not", "also", "then", "separately", "immediately",
                   "automatically", "continuously", "again", "twice",
                   "always", "never"})
_COMMON_VERBS = frozenset({
    "display", "indicate", "transmit", "monitor", "record", "confirm",
    "acknowledge", "contact", "send", "receive", "show", "provide",
    "supervise", "apply", "open", "close", "start", "stop", "enter",
    "report", "store", "activate", "deactivate", "request", "accept",
    "reject", "verify", "check", "flash", "sound", "compute",
})


class ParseFailure(ValueError):
    """A requirement that cannot be turned into a valid tree."""


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def split_sentences(tokens: list[str]) -> list[list[str]]:
    sentences: list[list[str]] = []
    current: list[str] = []
    for token in tokens:
        current.append(token)
        if token in _SENTENCE_END:
            sentences.append(current)
            current = []
    if current:
        sentences.append(current)
    return sentences


def tag(tokens: list[str]) -> list[str]:
    tags: list[str] = []
    for i, token in enumerate(tokens):
        lower = token.lower()
        if not any(c.isalnum() for c in token):
            tags.append("PUNCT")
        elif token.isdigit():
            tags.append("NUM")
        elif lower in _DETS:
            tags.append("DET")
        elif lower in _AUX:
            tags.append("AUX")
        elif lower in _ADPS:
            tags.append("ADP")
        elif lower in _PRONOUNS:
            tags.append("PRON")
        elif lower in _CCONJ:
            tags.append("CCONJ")
        elif lower in _SCONJ:
            tags.append("SCONJ")
        elif lower in _ADVS or lower.endswith("ly"):
            tags.append("ADV")
        elif lower in _COMMON_VERBS:
            tags.append("VERB")
        elif tags and tags[-1] == "AUX" and lower.endswith("ed"):
            tags.append("VERB")  # passive participle after an auxiliary
        elif tags and tags[-1] == "AUX" and lower not in _DETS:
            tags.append("VERB")  # head verb right after the modal chain
        elif lower.endswith("ing") and len(lower) > 5:
            tags.append("VERB")
        elif token[:1].isupper() and i > 0:
            tags.append("PROPN")
        else:
            tags.append("NOUN")
    return tags


def lemma_of(token: str, pos: str) -> str:
    lower = token.lower()
    if pos == "VERB":
        for suffix, replacement in (("ied", "y"), ("ed", ""), ("ing", ""),
                                    ("s", "")):
            if lower.endswith(suffix) and len(lower) - len(suffix) >= 3:
                return lower[: len(lower) - len(suffix)] + replacement
    if pos in ("NOUN", "PROPN") and lower.endswith("s") \
            and not lower.endswith("ss") and len(lower) > 3:
        return lower[:-1]
    return lower


def _next_nominal(tags: list[str], start: int) -> int | None:
    for j in range(start, len(tags)):
        if tags[j] in ("NOUN", "PROPN", "PRON", "NUM"):
            return j
    return None


def attach(tokens: list[str], tags: list[str]) -> list[tuple[int, str]]:
    """Return (1-based head, deprel) per token; head 0 marks the root."""
    n = len(tokens)
    if n == 0:
        raise ParseFailure("empty sentence")
    root = next((i for i, t in enumerate(tags) if t == "VERB"), None)
    if root is None:
        root = _next_nominal(tags, 0)
    if root is None:
        root = 0
    arcs: list[tuple[int, str]] = [(0, "root")] * n
    subject_taken = False
    object_taken = False
    for i in range(n):
        if i == root:
            continue
        pos = tags[i]
        if pos == "DET":
            head = _next_nominal(tags, i + 1)
            arcs[i] = (head + 1 if head is not None else root + 1, "det")
        elif pos == "AUX":
            arcs[i] = (root + 1, "aux")
        elif pos == "ADP":
            head = _next_nominal(tags, i + 1)
            arcs[i] = (head + 1 if head is not None else root + 1, "case")
        elif pos in ("NOUN", "PROPN", "PRON", "NUM"):
            if i < root and not subject_taken:
                # compound-noun run: only the last nominal before the
                # root is the subject, earlier ones modify it
                nxt = _next_nominal(tags, i + 1)
                if nxt is not None and nxt < root:
                    arcs[i] = (nxt + 1, "compound")
                else:
                    arcs[i] = (root + 1, "nsubj")
                    subject_taken = True
            elif i < root:
                arcs[i] = (root + 1, "nmod")
            else:
                preceded_by_case = any(
                    tags[j] == "ADP" for j in range(max(root, i - 3), i))
                nxt = _next_nominal(tags, i + 1)
                if nxt is not None and all(
                        tags[j] in ("NOUN", "PROPN") for j in range(i, nxt)):
                    arcs[i] = (nxt + 1, "compound")
                elif preceded_by_case:
                    arcs[i] = (root + 1, "obl")
                elif not object_taken:
                    arcs[i] = (root + 1, "obj")
                    object_taken = True
                else:
                    arcs[i] = (root + 1, "nmod")
        elif pos == "PUNCT":
            arcs[i] = (root + 1, "punct")
        elif pos == "SCONJ":
            arcs[i] = (root + 1, "mark")
        elif pos == "CCONJ":
            arcs[i] = (root + 1, "cc")
        elif pos == "ADV":
            arcs[i] = (root + 1, "advmod")
        else:
            arcs[i] = (root + 1, "dep")
    _validate_tree(arcs)
    return arcs


def _validate_tree(arcs: list[tuple[int, str]]) -> None:
    n = len(arcs)
    roots = [i for i, (head, _) in enumerate(arcs) if head == 0]
    if len(roots) != 1:
        raise ParseFailure(f"{len(roots)} roots")
    for i, (head, _) in enumerate(arcs):
        seen = {i}
        node = i
        while arcs[node][0] != 0:
            node = arcs[node][0] - 1
            if node in seen:
                raise ParseFailure("cycle in dependency arcs")
            seen.add(node)
        if not (0 <= head <= n):
            raise ParseFailure("head out of range")


def parse_requirement(req_id: str, text: str) -> list[str]:
    """Return CoNLL-U blocks (one string per sentence) for one text."""
    tokens = tokenize(text)
    if not tokens:
        raise ParseFailure(f"{req_id}: no tokens")
    blocks: list[str] = []
    for index, sentence in enumerate(split_sentences(tokens)):
        tags = tag(sentence)
        arcs = attach(sentence, tags)
        lines = [f"# sent_id = {req_id}/{index}",
                 f"# text = {' '.join(sentence)}"]
        for i, (token, pos, (head, deprel)) in enumerate(
                zip(sentence, tags, arcs), start=1):
            lines.append("\t".join([
                str(i), token, lemma_of(token, pos), pos, "_", "_",
                str(head), deprel, "_", "_"]))
        blocks.append("\n".join(lines))
    return blocks


def export(in_path: Path, out_path: Path) -> int:
    """Write CoNLL-U for every parseable requirement; skipped documents
    are reported on stderr and make the exit status nonzero."""
    failures = 0
    blocks: list[str] = []
    with in_path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            req_id, text = str(row["id"]), str(row.get("text", ""))
            try:
                blocks.extend(parse_requirement(req_id, text))
            except ParseFailure as exc:
                failures += 1
                print(f"warning: line {line_no}: skipped {req_id!r}: {exc}",
                      file=sys.stderr)
    out_path.write_text(
        "\n\n".join(blocks) + ("\n" if blocks else ""), encoding="utf-8")
    return 1 if failures else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="parse-export",
        description="Dependency-parse requirements JSONL into CoNLL-U")
    parser.add_argument("--in", dest="in_path", required=True,
                        help="requirements JSONL")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="CoNLL-U output path")
    args = parser.parse_args(argv)
    try:
        return export(Path(args.in_path), Path(args.out_path))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
