"""Deterministic synthesized evaluation corpus.

The public annotated rail-domain dataset is not distributable with this
package, so the generators below synthesize a stand-in with identical
shape: 190 requirements, a binary relation set of 10,859 pairs (9,606
non-related, 1,253 related) and a multiclass set of 4,432 pairs (3,720
non-related, 378 requires, 334 is_similar). Related pairs share topic
vocabulary so the corpus carries a learnable signal.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

N_REQUIREMENTS = 190
BINARY_TOTAL = 10_859
BINARY_RELATED = 1_253
MULTI_NONE = 3_720
MULTI_REQUIRES = 378
MULTI_SIMILAR = 334

TOPICS = [
    ("pantograph", "power supply"),
    ("balise", "track message"),
    ("gradient", "speed profile"),
    ("breaker", "circuit command"),
    ("curve", "brake supervision"),
    ("border", "level transition"),
    ("announcement", "mode indication"),
    ("restriction", "speed limit"),
    ("signal", "movement authority"),
    ("authority", "train position"),
]

_BASE_TEMPLATES = [
    "The {topic} {aux} shall {verb} the {obj} to the driver on the DMI.",
    "The onboard system shall {verb} the {topic} {obj} received from the RBC.",
    "The {topic} status shall be {verb_pp} and the {obj} shall be recorded.",
    "The trackside equipment shall {verb} the {topic} data for the {obj}.",
]

_DEPENDENT_TEMPLATES = [
    "If the line is fitted with {topic} equipment, the driver shall {verb} "
    "the {obj} before entry.",
    "When the {topic} indication is active, the system shall {verb} the "
    "{obj} separately.",
    "Only when {topic} supervision applies, the {obj} shall be {verb_pp} "
    "on the DMI.",
]

_VERBS = [("display", "displayed"), ("indicate", "indicated"),
          ("transmit", "transmitted"), ("monitor", "monitored"),
          ("record", "recorded"), ("confirm", "confirmed")]

_AUX = ["equipment", "interface", "function", "component"]


def _requirements(seed: int = 7) -> list[dict]:
    rng = random.Random(seed)
    rows = []
    per_topic = N_REQUIREMENTS // len(TOPICS)
    for t, (topic, obj) in enumerate(TOPICS):
        for j in range(per_topic):
            idx = t * per_topic + j
            dependent = j >= per_topic // 2 + 1  # 9 base, 10 dependent
            templates = _DEPENDENT_TEMPLATES if dependent else _BASE_TEMPLATES
            template = templates[rng.randrange(len(templates))]
            verb, verb_pp = _VERBS[rng.randrange(len(_VERBS))]
            text = template.format(topic=topic, obj=obj, verb=verb,
                                   verb_pp=verb_pp,
                                   aux=_AUX[rng.randrange(len(_AUX))])
            rows.append({
                "id": f"R{idx + 1:03d}",
                "doc": "srs",
                "order": idx,
                "text": text,
                "meta": {"topic": topic,
                         "flavor": "dependent" if dependent else "base"},
            })
    return rows


def _topic_pairs(rows: list[dict]) -> dict[str, list]:
    """Pair inventories used to plant related labels."""
    by_topic: dict[str, list[dict]] = {}
    for row in rows:
        by_topic.setdefault(row["meta"]["topic"], []).append(row)
    same_topic, dep_base, same_flavor = [], [], []
    for topic in sorted(by_topic):
        members = by_topic[topic]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                a, b = members[i], members[j]
                same_topic.append((a["id"], b["id"]))
                fa, fb = a["meta"]["flavor"], b["meta"]["flavor"]
                if fa != fb:
                    dep = a if fa == "dependent" else b
                    base = b if dep is a else a
                    dep_base.append((dep["id"], base["id"]))
                else:
                    same_flavor.append((a["id"], b["id"]))
    return {"same_topic": same_topic, "dep_base": dep_base,
            "same_flavor": same_flavor}


def write_fixture_dataset(directory: str | Path, seed: int = 7) -> dict[str, Path]:
    """Write requirements, binary and multiclass relation JSONL files
    plus a gazetteer; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed + 1)
    rows = _requirements(seed)
    inventories = _topic_pairs(rows)

    req_path = directory / "requirements.jsonl"
    with req_path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")

    ids = [row["id"] for row in rows]
    all_pairs = [(ids[i], ids[j])
                 for i in range(len(ids)) for j in range(i + 1, len(ids))]
    same_topic = set(inventories["same_topic"])

    related = sorted(inventories["same_topic"])
    rng.shuffle(related)
    related = related[:BINARY_RELATED]
    unrelated_pool = sorted(p for p in all_pairs if p not in same_topic)
    rng.shuffle(unrelated_pool)
    binary_none = unrelated_pool[:BINARY_TOTAL - BINARY_RELATED]
    binary_path = directory / "relations_binary.jsonl"
    with binary_path.open("w", encoding="utf-8") as fh:
        for a, b in related:
            fh.write(json.dumps({"source": a, "target": b,
                                 "type": "is_similar"}) + "\n")
        for a, b in binary_none:
            fh.write(json.dumps({"source": a, "target": b,
                                 "type": "none"}) + "\n")

    requires = sorted(inventories["dep_base"])
    rng.shuffle(requires)
    requires = requires[:MULTI_REQUIRES]
    similar = sorted(inventories["same_flavor"])
    rng.shuffle(similar)
    similar = similar[:MULTI_SIMILAR]
    multi_none = unrelated_pool[-MULTI_NONE:]
    multi_path = directory / "relations_multiclass.jsonl"
    with multi_path.open("w", encoding="utf-8") as fh:
        for a, b in requires:
            fh.write(json.dumps({"source": a, "target": b,
                                 "type": "requires"}) + "\n")
        for a, b in similar:
            fh.write(json.dumps({"source": a, "target": b,
                                 "type": "is_similar"}) + "\n")
        for a, b in multi_none:
            fh.write(json.dumps({"source": a, "target": b,
                                 "type": "none"}) + "\n")

    gaz_path = directory / "gazetteer.tsv"
    with gaz_path.open("w", encoding="utf-8") as fh:
        fh.write("DMI\tComponent\tDMI\n")
        fh.write("RBC\tComponent\tRBC\n")
        fh.write("Radio Block Center\tComponent\tRBC\n")
        for topic, obj in TOPICS:
            fh.write(f"{topic}\tConcept\t{topic}\n")
            fh.write(f"{obj}\tConcept\t{obj}\n")

    return {"requirements": req_path, "binary": binary_path,
            "multiclass": multi_path, "gazetteer": gaz_path}
