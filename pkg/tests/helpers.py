"""Small builders shared by the test modules."""

import numpy as np

from jointkg.params import init_params
from jointkg.vocab import TripleStore, Vocabulary, make_sentence


def make_vocab(n_entities, n_relations, n_words=0, anchored=0):
    vocab = Vocabulary()
    for e in range(n_entities):
        vocab.add_entity(f"e{e}")
    for r in range(n_relations):
        vocab.add_relation(f"r{r}")
    for e in range(anchored):
        vocab.add_anchor(f"e{e}", f"E{e}")
    for w in range(n_words):
        vocab.add_word(f"w{w}")
    return vocab


def random_triples(rng, n_entities, n_relations, n):
    """``n`` distinct random triples (fewer if the space is too small)."""
    rows = set()
    for _ in range(50 * n):
        if len(rows) >= n:
            break
        rows.add((int(rng.integers(n_entities)), int(rng.integers(n_relations)), int(rng.integers(n_entities))))
    return np.array(sorted(rows), dtype=np.int64).reshape(-1, 3)


def random_store(rng, n_entities, n_relations, n_train, n_valid=0, n_test=0):
    triples = random_triples(rng, n_entities, n_relations, n_train + n_valid + n_test)
    triples = triples[rng.permutation(len(triples))]
    a, b = n_train, n_train + n_valid
    return TripleStore(
        triples[:a], triples[a:b], triples[b:], n_entities=n_entities, n_relations=n_relations
    )


def random_sentence(rng, vocab, length, relation=None):
    """Sentence over plain words with two anchored mentions at random positions."""
    mentions = list(vocab.anchor_map.values())
    plain = [w for w in range(vocab.n_words) if w not in set(mentions)]
    tokens = [int(rng.choice(plain)) for _ in range(length)]
    hp, tp = rng.choice(length, size=2, replace=False)
    h_word, t_word = rng.choice(mentions, size=2, replace=False)
    tokens[hp], tokens[tp] = int(h_word), int(t_word)
    if relation is None:
        relation = int(rng.integers(vocab.n_relations))
    return make_sentence(vocab, tokens, int(hp), int(tp), relation)


def small_model(n_entities=6, n_relations=3, n_words=5, anchored=4, k=4, seed=0, k_p=2, window=3, d_max=4):
    vocab = make_vocab(n_entities, n_relations, n_words, anchored)
    bank, conv = init_params(vocab, k, seed, k_p=k_p, window=window, d_max=d_max)
    return vocab, bank, conv
