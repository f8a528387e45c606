"""Symbol tables, triple splits, relation classes and the aligned sentence corpus."""

from __future__ import annotations

import enum
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CLASS_THRESHOLD = 1.5


class DataFormatError(ValueError):
    """Raised when an input file does not follow its line format."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class RelationClass(str, enum.Enum):
    ONE_TO_ONE = "1-to-1"
    ONE_TO_MANY = "1-to-N"
    MANY_TO_ONE = "N-to-1"
    MANY_TO_MANY = "N-to-N"


@dataclass
class Vocabulary:
    """Dense id maps for entities, relations and words.

    ``anchor_map`` sends an entity id to the word id of its mention token.
    """

    entity_ids: dict[str, int] = field(default_factory=dict)
    relation_ids: dict[str, int] = field(default_factory=dict)
    word_ids: dict[str, int] = field(default_factory=dict)
    anchor_map: dict[int, int] = field(default_factory=dict)

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def n_relations(self) -> int:
        return len(self.relation_ids)

    @property
    def n_words(self) -> int:
        return len(self.word_ids)

    def entity_names(self) -> list[str]:
        return list(self.entity_ids)

    def relation_names(self) -> list[str]:
        return list(self.relation_ids)

    def word_names(self) -> list[str]:
        return list(self.word_ids)

    def mention_entities(self) -> dict[int, int]:
        """Inverse of ``anchor_map``: word id -> entity id."""
        return {w: e for e, w in self.anchor_map.items()}

    def add_entity(self, name: str) -> int:
        return self.entity_ids.setdefault(name, len(self.entity_ids))

    def add_relation(self, name: str) -> int:
        return self.relation_ids.setdefault(name, len(self.relation_ids))

    def add_word(self, token: str) -> int:
        return self.word_ids.setdefault(token, len(self.word_ids))

    def add_anchor(self, entity: str, mention: str) -> None:
        eid = self.entity_ids[entity]
        wid = self.add_word(mention)
        known = self.anchor_map.get(eid)
        if known is not None and known != wid:
            raise DataFormatError(f"entity {entity!r} anchored to two different mentions")
        owner = self.mention_entities().get(wid)
        if owner is not None and owner != eid:
            raise DataFormatError(f"mention {mention!r} anchored to two different entities")
        self.anchor_map[eid] = wid

    def to_json(self) -> str:
        payload = {
            "entities": self.entity_names(),
            "relations": self.relation_names(),
            "words": self.word_names(),
            "anchors": sorted([e, w] for e, w in self.anchor_map.items()),
        }
        return json.dumps(payload, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        payload = json.loads(text)
        return cls(
            entity_ids={n: i for i, n in enumerate(payload["entities"])},
            relation_ids={n: i for i, n in enumerate(payload["relations"])},
            word_ids={n: i for i, n in enumerate(payload["words"])},
            anchor_map={int(e): int(w) for e, w in payload["anchors"]},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def read_triple_lines(path: str | Path) -> list[tuple[str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise DataFormatError(f"{path}:{lineno}: expected head<TAB>relation<TAB>tail")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def read_anchor_lines(path: str | Path) -> list[tuple[str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise DataFormatError(f"{path}:{lineno}: expected entity<TAB>mention_token")
            rows.append((parts[0], parts[1]))
    return rows


def read_corpus_records(path: str | Path) -> list[dict]:
    """Parse an aligned corpus: one JSON object per line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tokens = rec["tokens"]
                head_pos, tail_pos = int(rec["head_pos"]), int(rec["tail_pos"])
                relation = rec["relation"]
            except (ValueError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: bad aligned record ({exc})") from None
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise DataFormatError(f"{path}:{lineno}: tokens must be a list of strings")
            if not isinstance(relation, str):
                raise DataFormatError(f"{path}:{lineno}: relation must be a string")
            records.append(
                {"tokens": tokens, "head_pos": head_pos, "tail_pos": tail_pos, "relation": relation}
            )
    return records


def build_vocabulary(
    triple_files: Sequence[str | Path],
    corpus: str | Path | None = None,
    anchors: str | Path | None = None,
) -> Vocabulary:
    """Assign ids in first-seen order: triple files, then anchor mentions, then corpus tokens.

    Anchors naming an entity that occurs in none of the triple files are ignored.
    """
    vocab = Vocabulary()
    for path in triple_files:
        for h, r, t in read_triple_lines(path):
            vocab.add_entity(h)
            vocab.add_relation(r)
            vocab.add_entity(t)
    if anchors is not None:
        skipped = 0
        for entity, mention in read_anchor_lines(anchors):
            if entity not in vocab.entity_ids:
                skipped += 1
                continue
            vocab.add_anchor(entity, mention)
        if skipped:
            logger.info("ignored %d anchors for entities outside the triple files", skipped)
    if corpus is not None:
        for rec in read_corpus_records(corpus):
            for tok in rec["tokens"]:
                vocab.add_word(tok)
    return vocab


def _encode(triples: np.ndarray, n_entities: int, n_relations: int) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (triples[:, 0] * n_relations + triples[:, 1]) * n_entities + triples[:, 2]


class TripleStore:
    """Train/valid/test triples as ``(n, 3)`` int arrays of (head, relation, tail) ids.

    Membership queries run over the union of the three splits; corruption filtering
    uses :meth:`in_train` only.
    """

    def __init__(
        self,
        train: np.ndarray,
        valid: np.ndarray | None = None,
        test: np.ndarray | None = None,
        *,
        n_entities: int,
        n_relations: int,
    ):
        self.n_entities = int(n_entities)
        self.n_relations = int(n_relations)
        empty = np.zeros((0, 3), dtype=np.int64)
        self.train = np.asarray(train, dtype=np.int64).reshape(-1, 3)
        self.valid = empty if valid is None else np.asarray(valid, dtype=np.int64).reshape(-1, 3)
        self.test = empty if test is None else np.asarray(test, dtype=np.int64).reshape(-1, 3)
        for name, arr in (("train", self.train), ("valid", self.valid), ("test", self.test)):
            if len(arr) and (
                arr[:, [0, 2]].min() < 0
                or arr[:, [0, 2]].max() >= self.n_entities
                or arr[:, 1].min() < 0
                or arr[:, 1].max() >= self.n_relations
            ):
                raise ValueError(f"{name} split holds ids outside the vocabulary")

        self._train_keys = np.unique(_encode(self.train, self.n_entities, self.n_relations))
        every = np.concatenate([self.train, self.valid, self.test])
        self._known = set(_encode(every, self.n_entities, self.n_relations).tolist())

        hr: dict[tuple[int, int], list[int]] = defaultdict(list)
        rt: dict[tuple[int, int], list[int]] = defaultdict(list)
        ht: dict[tuple[int, int], list[int]] = defaultdict(list)
        for h, r, t in every.tolist():
            hr[h, r].append(t)
            rt[r, t].append(h)
            ht[h, t].append(r)
        self._tails = {k: np.unique(v) for k, v in hr.items()}
        self._heads = {k: np.unique(v) for k, v in rt.items()}
        self._relations = {k: np.unique(v) for k, v in ht.items()}

        pairs: dict[int, set[tuple[int, int]]] = defaultdict(set)
        for h, r, t in self.train.tolist():
            pairs[r].add((h, t))
        self.pairs_by_relation = dict(pairs)

    @classmethod
    def from_files(
        cls,
        vocab: Vocabulary,
        train: str | Path,
        valid: str | Path | None = None,
        test: str | Path | None = None,
    ) -> "TripleStore":
        def load(path):
            if path is None:
                return None
            rows = []
            for lineno, (h, r, t) in enumerate(read_triple_lines(path), 1):
                try:
                    rows.append(
                        (vocab.entity_ids[h], vocab.relation_ids[r], vocab.entity_ids[t])
                    )
                except KeyError as exc:
                    raise DataFormatError(f"{path}: triple {lineno} uses unknown symbol {exc}") from None
            return np.array(rows, dtype=np.int64).reshape(-1, 3)

        return cls(
            load(train),
            load(valid),
            load(test),
            n_entities=vocab.n_entities,
            n_relations=vocab.n_relations,
        )

    def known_triple(self, h: int, r: int, t: int) -> bool:
        """True iff (h, r, t) is in train, valid or test."""
        return (int(h) * self.n_relations + int(r)) * self.n_entities + int(t) in self._known

    def in_train(self, triples: np.ndarray) -> np.ndarray:
        keys = _encode(triples, self.n_entities, self.n_relations)
        idx = np.searchsorted(self._train_keys, keys)
        idx = np.minimum(idx, max(len(self._train_keys) - 1, 0))
        if len(self._train_keys) == 0:
            return np.zeros(len(keys), dtype=bool)
        return self._train_keys[idx] == keys

    def known_tails(self, h: int, r: int) -> np.ndarray:
        return self._tails.get((int(h), int(r)), np.zeros(0, dtype=np.int64))

    def known_heads(self, r: int, t: int) -> np.ndarray:
        return self._heads.get((int(r), int(t)), np.zeros(0, dtype=np.int64))

    def known_relations(self, h: int, t: int) -> np.ndarray:
        return self._relations.get((int(h), int(t)), np.zeros(0, dtype=np.int64))

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            train=self.train,
            valid=self.valid,
            test=self.test,
            dims=np.array([self.n_entities, self.n_relations]),
        )

    @classmethod
    def load(cls, path: str | Path) -> "TripleStore":
        with np.load(path) as data:
            n_e, n_r = data["dims"].tolist()
            return cls(data["train"], data["valid"], data["test"], n_entities=n_e, n_relations=n_r)


def relation_cardinalities(store: TripleStore) -> dict[int, tuple[float, float]]:
    """Mean tails per head and mean heads per tail for each relation, over train."""
    stats = {}
    for r in range(store.n_relations):
        pairs = store.pairs_by_relation.get(r)
        if not pairs:
            continue
        heads = {h for h, _ in pairs}
        tails = {t for _, t in pairs}
        stats[r] = (len(pairs) / len(heads), len(pairs) / len(tails))
    return stats


def classify_relations(store: TripleStore) -> dict[int, RelationClass]:
    if len(store.train) == 0:
        raise ValueError("cannot classify relations without train triples")
    stats = relation_cardinalities(store)
    classes = {}
    missing = []
    for r in range(store.n_relations):
        if r not in stats:
            missing.append(r)
            classes[r] = RelationClass.ONE_TO_ONE
            continue
        tph, hpt = stats[r]
        left = "N" if hpt > CLASS_THRESHOLD else "1"
        right = "N" if tph > CLASS_THRESHOLD else "1"
        classes[r] = RelationClass(f"{left}-to-{right}")
    if missing:
        logger.warning("%d relations have no train triples; classed 1-to-1", len(missing))
    return classes


def untrained_relations(store: TripleStore) -> list[int]:
    return [r for r in range(store.n_relations) if r not in store.pairs_by_relation]


@dataclass(frozen=True)
class AlignedSentence:
    tokens: tuple[int, ...]
    head_pos: int
    tail_pos: int
    relation: int
    source_pair: tuple[int, int]

    @property
    def length(self) -> int:
        return len(self.tokens)


def make_sentence(
    vocab: Vocabulary, tokens: Iterable[int], head_pos: int, tail_pos: int, relation: int
) -> AlignedSentence:
    tokens = tuple(int(t) for t in tokens)
    n = len(tokens)
    if head_pos == tail_pos or not (0 <= head_pos < n and 0 <= tail_pos < n):
        raise ValueError(f"bad mention positions {head_pos}, {tail_pos} for length {n}")
    owners = vocab.mention_entities()
    try:
        pair = (owners[tokens[head_pos]], owners[tokens[tail_pos]])
    except KeyError:
        raise ValueError("mention positions must hold anchored entity tokens") from None
    return AlignedSentence(tokens, head_pos, tail_pos, int(relation), pair)


def load_aligned_corpus(vocab: Vocabulary, path: str | Path) -> list[AlignedSentence]:
    sentences = []
    for lineno, rec in enumerate(read_corpus_records(path), 1):
        try:
            tokens = [vocab.word_ids[t] for t in rec["tokens"]]
            relation = vocab.relation_ids[rec["relation"]]
            sentences.append(make_sentence(vocab, tokens, rec["head_pos"], rec["tail_pos"], relation))
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return sentences


def sentence_record(vocab: Vocabulary, sentence: AlignedSentence) -> dict:
    words = vocab.word_names()
    return {
        "tokens": [words[i] for i in sentence.tokens],
        "head_pos": sentence.head_pos,
        "tail_pos": sentence.tail_pos,
        "relation": vocab.relation_names()[sentence.relation],
    }


def write_aligned_corpus(vocab: Vocabulary, sentences: Iterable[AlignedSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(sentence_record(vocab, s), ensure_ascii=False) + "\n")
