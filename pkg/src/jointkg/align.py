"""Anchor-based mention tokenization and distant-supervision labeling of sentences."""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .vocab import DataFormatError, TripleStore, Vocabulary

TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def default_mention(entity: str) -> str:
    return re.sub(r"\s+", "_", entity.strip())


@dataclass
class TokenizedSentence:
    tokens: list[str]
    mentions: list[tuple[int, str]]  # (token position, entity name)


@dataclass
class LabeledSentence:
    tokens: list[str]
    head_pos: int
    tail_pos: int
    relation: str
    head: str
    tail: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)


@dataclass
class AlignmentStats:
    sentences_in: int = 0
    sentences_labeled: int = 0
    records: int = 0
    triples: int = 0
    relations: int = 0
    entities: int = 0
    relation_sentence_counts: dict[str, int] = field(default_factory=dict)


def tokenize_with_anchors(
    text: str,
    anchors: Sequence[dict],
    mention_of: Callable[[str], str] = default_mention,
    where: str = "",
) -> TokenizedSentence:
    """Split text into word/punctuation tokens, collapsing each anchor span to one token."""
    spans = []
    for a in anchors:
        start, end, entity = int(a["start"]), int(a["end"]), str(a["entity"])
        if not 0 <= start < end <= len(text):
            raise DataFormatError(f"{where}anchor [{start}, {end}) outside text of length {len(text)}")
        spans.append((start, end, entity))
    spans.sort()
    for (s0, e0, _), (s1, e1, _) in zip(spans, spans[1:]):
        if s1 < e0:
            raise DataFormatError(f"{where}overlapping anchors [{s0}, {e0}) and [{s1}, {e1})")

    tokens: list[str] = []
    mentions: list[tuple[int, str]] = []
    cursor = 0
    for start, end, entity in spans:
        tokens.extend(TOKEN_RE.findall(text[cursor:start]))
        mentions.append((len(tokens), entity))
        tokens.append(mention_of(entity))
        cursor = end
    tokens.extend(TOKEN_RE.findall(text[cursor:]))
    return TokenizedSentence(tokens, mentions)


def read_raw_corpus(
    path: str | Path, mention_of: Callable[[str], str] = default_mention
) -> list[TokenizedSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}: "
            try:
                rec = json.loads(line)
                text, anchors = rec["text"], rec.get("anchors", [])
            except (ValueError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{where}bad raw record ({exc})") from None
            out.append(tokenize_with_anchors(text, anchors, mention_of, where))
    return out


def train_relations_by_pair(store: TripleStore) -> dict[tuple[int, int], list[int]]:
    index: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in store.train.tolist():
        index[h, t].add(r)
    return {k: sorted(v) for k, v in index.items()}


def distant_label(
    sentences: Iterable[TokenizedSentence], store: TripleStore, vocab: Vocabulary
) -> tuple[list[LabeledSentence], AlignmentStats]:
    """Label each ordered mention pair with every train relation holding between its entities."""
    by_pair = train_relations_by_pair(store)
    relation_names = vocab.relation_names()
    stats = AlignmentStats()
    out: list[LabeledSentence] = []
    triples, relations, entities = set(), set(), set()
    rel_counts: dict[str, int] = defaultdict(int)
    for sent in sentences:
        stats.sentences_in += 1
        ids = [(pos, name, vocab.entity_ids.get(name)) for pos, name in sent.mentions]
        ids = [m for m in ids if m[2] is not None]
        labeled = False
        seen_rel: set[int] = set()
        for hp, hname, h in ids:
            for tp, tname, t in ids:
                if hp == tp:
                    continue
                for r in by_pair.get((h, t), ()):
                    out.append(LabeledSentence(list(sent.tokens), hp, tp, relation_names[r], hname, tname))
                    labeled = True
                    triples.add((h, r, t))
                    relations.add(r)
                    entities.update((h, t))
                    seen_rel.add(r)
        for r in seen_rel:
            rel_counts[relation_names[r]] += 1
        stats.sentences_labeled += labeled
    stats.records = len(out)
    stats.triples = len(triples)
    stats.relations = len(relations)
    stats.entities = len(entities)
    stats.relation_sentence_counts = dict(sorted(rel_counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return out, stats


def write_labeled(path: str | Path, records: Iterable[LabeledSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def write_anchor_file(
    path: str | Path,
    sentences: Iterable[TokenizedSentence],
    mention_of: Callable[[str], str] = default_mention,
) -> int:
    """Write ``entity<TAB>mention`` for every entity seen as an anchor; returns the count."""
    seen: dict[str, str] = {}
    for sent in sentences:
        for _, name in sent.mentions:
            seen.setdefault(name, mention_of(name))
    with open(path, "w", encoding="utf-8") as fh:
        for name, mention in seen.items():
            fh.write(f"{name}\t{mention}\n")
    return len(seen)
