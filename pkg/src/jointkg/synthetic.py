"""Synthetic typed KG plus a template corpus, where some entities are known only from text."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vocab import AlignedSentence, TripleStore, Vocabulary, make_sentence, write_aligned_corpus


@dataclass
class SyntheticJoint:
    vocab: Vocabulary
    store: TripleStore  # train = KG facts, test = facts withheld from the KG
    corpus: list[AlignedSentence]
    text_only_entities: np.ndarray


def typed_triples(
    rng: np.random.Generator,
    n_entities: int,
    n_relations: int,
    per_relation: int,
    n_types: int,
    skew: float,
) -> np.ndarray:
    """Facts whose relation is fixed by the (head type, tail type) pair.

    Endpoints are drawn with Pareto popularity, so degrees are uneven.
    """
    types = np.arange(n_entities) % n_types
    pairs = [(a, b) for a in range(n_types) for b in range(n_types) if a != b]
    if n_relations > len(pairs):
        raise ValueError("not enough type pairs for one relation each")
    chosen = rng.choice(len(pairs), size=n_relations, replace=False)
    popularity = rng.pareto(skew, size=n_entities) + 1.0
    rows: set[tuple[int, int, int]] = set()
    for r, p in enumerate(chosen):
        a, b = pairs[p]
        heads = np.flatnonzero(types == a)
        tails = np.flatnonzero(types == b)
        ph = popularity[heads] / popularity[heads].sum()
        pt = popularity[tails] / popularity[tails].sum()
        target = len(rows) + per_relation
        for _ in range(50 * per_relation):
            if len(rows) >= target:
                break
            rows.add((int(rng.choice(heads, p=ph)), r, int(rng.choice(tails, p=pt))))
    return np.array(sorted(rows), dtype=np.int64)


def make_synthetic(
    seed: int = 0,
    n_entities: int = 200,
    n_relations: int = 20,
    n_types: int = 16,
    per_relation: int = 15,
    skew: float = 1.0,
    withheld_fraction: float = 0.3,
    sentences_per_triple: int = 4,
    n_fillers: int = 30,
    swap_rate: float = 0.5,
) -> SyntheticJoint:
    """Build the dataset.

    Randomly chosen entities have all their facts removed from the KG until
    ``withheld_fraction`` of the facts are gone; those facts form the test split.
    Every fact, withheld or not, is stated by ``sentences_per_triple`` template
    sentences ``<mention> filler* trigger filler* <mention>`` where each relation owns
    one trigger word and ``swap_rate`` of sentences put the tail first.
    """
    rng = np.random.default_rng(seed)
    triples = typed_triples(rng, n_entities, n_relations, per_relation, n_types, skew)
    n_held = int(round(withheld_fraction * len(triples)))
    held_mask = np.zeros(len(triples), dtype=bool)
    text_only = []
    for e in rng.permutation(n_entities):
        if held_mask.sum() >= n_held:
            break
        hit = (triples[:, 0] == e) | (triples[:, 2] == e)
        if hit.any():
            text_only.append(int(e))
            held_mask |= hit
    held, kg = triples[held_mask], triples[~held_mask]

    vocab = Vocabulary()
    for e in range(n_entities):
        vocab.add_entity(f"ent{e}")
    for r in range(n_relations):
        vocab.add_relation(f"rel{r}")
    for e in range(n_entities):
        vocab.add_anchor(f"ent{e}", f"ENT{e}")
    triggers = [vocab.add_word(f"trig{r}") for r in range(n_relations)]
    fillers = [vocab.add_word(f"w{i}") for i in range(n_fillers)]
    store = TripleStore(kg, None, held, n_entities=n_entities, n_relations=n_relations)

    corpus = []
    for h, r, t in triples.tolist():
        for _ in range(sentences_per_triple):
            left = rng.choice(fillers, size=rng.integers(0, 3)).tolist()
            right = rng.choice(fillers, size=rng.integers(0, 3)).tolist()
            words = left + [triggers[r]] + right
            if rng.random() >= swap_rate:
                tokens = [vocab.anchor_map[h]] + words + [vocab.anchor_map[t]]
                hp, tp = 0, len(tokens) - 1
            else:
                tokens = [vocab.anchor_map[t]] + words + [vocab.anchor_map[h]]
                hp, tp = len(tokens) - 1, 0
            corpus.append(make_sentence(vocab, tokens, hp, tp, r))
    return SyntheticJoint(vocab, store, corpus, np.array(sorted(text_only), dtype=np.int64))


def write_synthetic(data: SyntheticJoint, directory: str | Path) -> dict[str, Path]:
    """Write the dataset as triple files, an anchor file and an aligned corpus."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ents, rels = data.vocab.entity_names(), data.vocab.relation_names()
    paths = {
        "train": directory / "train.txt",
        "test": directory / "test.txt",
        "anchors": directory / "anchors.tsv",
        "corpus": directory / "aligned.jsonl",
    }
    for split in ("train", "test"):
        rows = getattr(data.store, split).tolist()
        with open(paths[split], "w", encoding="utf-8") as fh:
            for h, r, t in rows:
                fh.write(f"{ents[h]}\t{rels[r]}\t{ents[t]}\n")
    words = data.vocab.word_names()
    with open(paths["anchors"], "w", encoding="utf-8") as fh:
        for e, w in data.vocab.anchor_map.items():
            fh.write(f"{ents[e]}\t{words[w]}\n")
    write_aligned_corpus(data.vocab, data.corpus, paths["corpus"])
    return paths
