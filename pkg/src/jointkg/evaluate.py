"""Entity prediction (Hits@10), relation prediction (Top-1) and text relation classification."""

from __future__ import annotations

import json
import os
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cnn import clip_sentence, encode_sentence
from .params import ConvParams, EmbeddingBank
from .vocab import AlignedSentence, RelationClass, TripleStore, classify_relations, untrained_relations

CLASS_ORDER = [c.value for c in RelationClass]
HITS_AT = 10


def _distances(v: np.ndarray, squared: bool) -> np.ndarray:
    sq = np.einsum("ij,ij->i", v, v)
    return sq if squared else np.sqrt(sq)


def entity_scores(bank: EmbeddingBank, h: int, r: int, t: int, direction: str, squared=False) -> np.ndarray:
    """Scores of every candidate entity for the head or tail slot of (h, r, t)."""
    ent = bank.entity_mat
    rel = bank.relation_mat[r]
    if direction == "tail":
        return _distances((ent - ent[h]) - rel, squared)
    if direction == "head":
        return _distances((ent[t] - ent) - rel, squared)
    raise ValueError(f"direction must be 'head' or 'tail', got {direction!r}")


def rank_of(scores: np.ndarray, gold: int, exclude: np.ndarray | None = None) -> int:
    """1 + number of candidates scoring strictly lower than the gold one (ties go to gold)."""
    better = scores < scores[gold]
    if exclude is not None and len(exclude):
        better[exclude] = False
    return 1 + int(better.sum())


def rank_entities(
    bank: EmbeddingBank,
    triple: Sequence[int],
    direction: str,
    filtered: bool,
    store: TripleStore,
    squared: bool = False,
) -> int:
    h, r, t = map(int, triple)
    scores = entity_scores(bank, h, r, t, direction, squared)
    if direction == "tail":
        gold, known = t, store.known_tails(h, r) if filtered else None
    else:
        gold, known = h, store.known_heads(r, t) if filtered else None
    return rank_of(scores, gold, known)


def rank_relation(
    bank: EmbeddingBank, triple: Sequence[int], filtered: bool, store: TripleStore, squared=False
) -> int:
    h, r, t = map(int, triple)
    ent = bank.entity_mat
    scores = _distances((ent[t] - ent[h]) - bank.relation_mat, squared)
    return rank_of(scores, r, store.known_relations(h, t) if filtered else None)


def _parallel_map(fn, items: Sequence, threads: int | None) -> list:
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunks = np.array_split(np.arange(len(items)), threads * 4)

    def run(idx):
        return [fn(items[i]) for i in idx]

    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(run, chunks))
    return [x for part in parts for x in part]


def _pct(hits: Iterable[float]) -> float | None:
    hits = list(hits)
    return 100.0 * float(np.mean(hits)) if hits else None


@dataclass
class EntityPredictionReport:
    head: dict[str, float | None]
    tail: dict[str, float | None]
    triple_avg: float
    relation_avg: float
    setting: str
    untrained_relations: int = 0

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "Predicting Head": self.head,
            "Predicting Tail": self.tail,
            "Overall": {"Triple Avg.": self.triple_avg, "Relation Avg.": self.relation_avg},
            "untrained_relations": self.untrained_relations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def entity_prediction_eval(
    bank: EmbeddingBank,
    store: TripleStore,
    filtered: bool = True,
    classes: dict[int, RelationClass] | None = None,
    squared: bool = False,
    threads: int | None = 1,
) -> EntityPredictionReport:
    if len(store.test) == 0:
        raise ValueError("test split is empty")
    classes = classes if classes is not None else classify_relations(store)
    test = store.test.tolist()

    def ranks(triple):
        return (
            rank_entities(bank, triple, "head", filtered, store, squared),
            rank_entities(bank, triple, "tail", filtered, store, squared),
        )

    results = _parallel_map(ranks, test, threads)
    head_hits = defaultdict(list)
    tail_hits = defaultdict(list)
    per_relation = defaultdict(list)
    every = []
    for (h, r, t), (hr, tr) in zip(test, results):
        cls = classes[r].value
        hh, th = float(hr <= HITS_AT), float(tr <= HITS_AT)
        head_hits[cls].append(hh)
        tail_hits[cls].append(th)
        per_relation[r] += [hh, th]
        every += [hh, th]
    return EntityPredictionReport(
        head={c: _pct(head_hits[c]) for c in CLASS_ORDER},
        tail={c: _pct(tail_hits[c]) for c in CLASS_ORDER},
        triple_avg=_pct(every),
        relation_avg=float(np.mean([_pct(v) for v in per_relation.values()])),
        setting="filtered" if filtered else "raw",
        untrained_relations=len(untrained_relations(store)),
    )


@dataclass
class RelationPredictionReport:
    by_class: dict[str, float | None]
    overall: float
    setting: str

    def to_dict(self) -> dict:
        return {"setting": self.setting, "Relation Prediction": {**self.by_class, "All": self.overall}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def relation_prediction_eval(
    bank: EmbeddingBank,
    store: TripleStore,
    filtered: bool = True,
    classes: dict[int, RelationClass] | None = None,
    squared: bool = False,
    threads: int | None = 1,
) -> RelationPredictionReport:
    """Top-1 accuracy of predicting r in (h, ?, t) for every test triple."""
    if len(store.test) == 0:
        raise ValueError("test split is empty")
    classes = classes if classes is not None else classify_relations(store)
    test = store.test.tolist()
    ranks = _parallel_map(lambda tr: rank_relation(bank, tr, filtered, store, squared), test, threads)
    hits = defaultdict(list)
    every = []
    for (h, r, t), rank in zip(test, ranks):
        hits[classes[r].value].append(float(rank == 1))
        every.append(float(rank == 1))
    return RelationPredictionReport(
        by_class={c: _pct(hits[c]) for c in CLASS_ORDER},
        overall=_pct(every),
        setting="filtered" if filtered else "raw",
    )


@dataclass
class PrCurve:
    points: list[tuple[float, float]]  # (recall, precision)
    total_correct: int = 0
    candidates: int = 0
    excluded_pairs: int = 0
    relations: list[int] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["recall,precision"]
        lines += [f"{r!r},{p!r}" for r, p in self.points]
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def top_relations(counts: dict[int, int], top_k: int) -> list[int]:
    """The ``top_k`` most frequent relations; equal counts go to the lower id."""
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [r for r, _ in ranked[:top_k]]


def sweep(scores: np.ndarray, correct: np.ndarray, total_correct: int) -> list[tuple[float, float]]:
    """Cumulative (recall, precision) walking candidates in ascending score order.

    Equal scores keep input order.
    """
    order = np.argsort(scores, kind="stable")
    hits = np.cumsum(correct[order])
    seen = np.arange(1, len(order) + 1)
    recall = hits / total_correct if total_correct else np.zeros(len(order))
    precision = hits / seen
    return [(float(r), float(p)) for r, p in zip(recall, precision)]


def relation_classification_eval(
    bank: EmbeddingBank,
    conv: ConvParams,
    sentences: Sequence[AlignedSentence],
    store: TripleStore,
    top_k_relations: int = 100,
    pairs: Sequence[tuple[int, int]] | None = None,
    relation_counts: dict[int, int] | None = None,
    aggregate: str = "min",
) -> PrCurve:
    """Rank (entity pair, relation) candidates by sentence evidence alone.

    A candidate's score is the min (or mean) over the pair's sentences of the distance
    between the sentence encoding and the relation vector.  Candidates forming a known
    triple are correct.  Only the ``top_k_relations`` relations with most sentences are
    candidates; recall is measured against every known triple of the evaluated pairs.
    """
    if aggregate not in ("min", "mean"):
        raise ValueError("aggregate must be 'min' or 'mean'")
    if relation_counts is None:
        relation_counts = Counter(s.relation for s in sentences)
    relations = top_relations(relation_counts, top_k_relations)

    by_pair: dict[tuple[int, int], dict] = {}
    for s in sentences:
        key = (s.tokens, s.head_pos, s.tail_pos)
        by_pair.setdefault(s.source_pair, {}).setdefault(key, s)
    all_pairs = list(by_pair)
    for p in pairs or ():
        p = (int(p[0]), int(p[1]))
        if p not in by_pair:
            all_pairs.append(p)
            by_pair[p] = {}

    total_correct = sum(len(store.known_relations(h, t)) for h, t in all_pairs)
    rel_arr = np.array(relations, dtype=np.int64)
    rel_vecs = bank.relation_mat[rel_arr]
    scores, correct = [], []
    excluded = 0
    for h, t in all_pairs:
        group = list(by_pair[h, t].values())
        if not group:
            excluded += 1
            continue
        enc = np.stack([encode_sentence(bank, conv, clip_sentence(s)).output for s in group])
        dist = np.sqrt(((enc[:, None, :] - rel_vecs[None, :, :]) ** 2).sum(axis=2))
        agg = dist.min(axis=0) if aggregate == "min" else dist.mean(axis=0)
        scores.append(agg)
        correct.append([store.known_triple(h, r, t) for r in relations])
    if scores:
        flat_scores = np.concatenate(scores)
        flat_correct = np.concatenate([np.asarray(c, dtype=float) for c in correct])
    else:
        flat_scores = flat_correct = np.zeros(0)
    return PrCurve(
        points=sweep(flat_scores, flat_correct, total_correct),
        total_correct=total_correct,
        candidates=len(flat_scores),
        excluded_pairs=excluded,
        relations=relations,
    )


def write_report(path: str | Path, report) -> None:
    Path(path).write_text(report.to_json(), encoding="utf-8")
