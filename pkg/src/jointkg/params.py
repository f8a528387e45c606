"""Learnable parameters: entity/relation/word embeddings and the sentence CNN."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vocab import Vocabulary

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingBank:
    """Entity, relation and word vectors of dimension ``k``.

    Entities and plain (non-mention) words live in one ``table``; entity ``e`` is row
    ``e`` and word ``w`` is row ``word_rows[w]``.  An anchored mention's row is its
    entity's row, so writes through either id land in the same storage.
    """

    table: np.ndarray
    relation_mat: np.ndarray
    word_rows: np.ndarray
    n_entities: int
    seed: int = 0

    @property
    def k(self) -> int:
        return self.table.shape[1]

    @property
    def n_relations(self) -> int:
        return self.relation_mat.shape[0]

    @property
    def n_words(self) -> int:
        return len(self.word_rows)

    @property
    def entity_mat(self) -> np.ndarray:
        return self.table[: self.n_entities]

    @property
    def word_mat(self) -> np.ndarray:
        """Copy of the |V| x k word matrix as seen through the sharing redirect."""
        return self.table[self.word_rows]

    @property
    def share_map(self) -> dict[int, int]:
        shared = np.flatnonzero(self.word_rows < self.n_entities)
        return {int(w): int(self.word_rows[w]) for w in shared}

    def word_vector(self, word: int) -> np.ndarray:
        return self.table[self.word_rows[word]]

    def set_word_vector(self, word: int, value: np.ndarray) -> None:
        self.table[self.word_rows[word]] = value


@dataclass
class ConvParams:
    kernel: np.ndarray  # k_c x (window * k_w)
    bias: np.ndarray
    pos_head: np.ndarray  # (2 * d_max + 1) x k_p
    pos_tail: np.ndarray
    window: int
    d_max: int

    @property
    def k_p(self) -> int:
        return self.pos_head.shape[1]

    @property
    def k_c(self) -> int:
        return self.kernel.shape[0]

    @property
    def k_w(self) -> int:
        return self.kernel.shape[1] // self.window


def init_bound(k: int) -> float:
    return 6.0 / np.sqrt(k)


def init_params(
    vocab: Vocabulary,
    k: int = 150,
    seed: int = 0,
    *,
    k_p: int = 5,
    window: int = 3,
    d_max: int = 30,
) -> tuple[EmbeddingBank, ConvParams]:
    """Uniform(-6/sqrt(k), 6/sqrt(k)) init for every embedding table and the kernel.

    Entity rows are then scaled to unit length; the bias starts at zero.
    """
    for name, value in (("k", k), ("k_p", k_p), ("window", window), ("d_max", d_max)):
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
    if vocab.n_entities <= 0 or vocab.n_relations <= 0:
        raise ValueError("vocabulary needs at least one entity and one relation")
    if window % 2 == 0:
        raise ValueError("window size must be odd")

    rng = np.random.default_rng(seed)
    bound = init_bound(k)
    n_e = vocab.n_entities
    word_rows = np.empty(vocab.n_words, dtype=np.int64)
    shared = vocab.mention_entities()
    next_row = n_e
    for w in range(vocab.n_words):
        if w in shared:
            word_rows[w] = shared[w]
        else:
            word_rows[w] = next_row
            next_row += 1

    table = rng.uniform(-bound, bound, size=(next_row, k))
    relation_mat = rng.uniform(-bound, bound, size=(vocab.n_relations, k))
    k_w = k + 2 * k_p
    kernel = rng.uniform(-bound, bound, size=(k, window * k_w))
    pos_head = rng.uniform(-bound, bound, size=(2 * d_max + 1, k_p))
    pos_tail = rng.uniform(-bound, bound, size=(2 * d_max + 1, k_p))

    bank = EmbeddingBank(table, relation_mat, word_rows, n_e, seed)
    normalize_entities(bank)
    conv = ConvParams(kernel, np.zeros(k), pos_head, pos_tail, window, d_max)
    return bank, conv


def normalize_entities(bank: EmbeddingBank, rows: np.ndarray | None = None) -> None:
    """Scale entity rows (all, or just ``rows``) to unit L2 norm in place.

    A zero row is replaced by a random unit vector seeded from the bank seed and row id.
    """
    ent = bank.entity_mat
    if rows is None:
        rows = np.arange(bank.n_entities)
    else:
        rows = np.unique(np.asarray(rows, dtype=np.int64))
    norms = np.linalg.norm(ent[rows], axis=1)
    zero = norms == 0.0
    for r in rows[zero]:
        v = np.random.default_rng([bank.seed, int(r)]).standard_normal(bank.k)
        ent[r] = v / np.linalg.norm(v)
    live = rows[~zero]
    ent[live] /= norms[~zero][:, None]


def read_word_vectors(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'count dim'")
        dim = int(header[1])
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    return dim, vectors


def write_word_vectors(path: str | Path, tokens: list[str], vectors: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(tokens)} {vectors.shape[1]}\n")
        for tok, vec in zip(tokens, vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def load_word_vectors(path: str | Path, bank: EmbeddingBank, vocab: Vocabulary) -> int:
    """Overwrite rows for words found in a word-vector file; returns how many were loaded."""
    dim, vectors = read_word_vectors(path)
    if dim != bank.k:
        raise ValueError(f"word vectors have dimension {dim}, bank has {bank.k}")
    loaded = skipped = 0
    for token, vec in vectors.items():
        wid = vocab.word_ids.get(token)
        if wid is None:
            skipped += 1
            continue
        bank.set_word_vector(wid, vec)
        loaded += 1
    logger.info("loaded %d word vectors, skipped %d unknown words", loaded, skipped)
    return loaded


def save_checkpoint(path: str | Path, bank: EmbeddingBank, conv: ConvParams) -> None:
    with open(path, "wb") as fh:
        np.savez(
            fh,
            table=bank.table,
            relation_mat=bank.relation_mat,
            word_rows=bank.word_rows,
            n_entities=np.int64(bank.n_entities),
            seed=np.int64(bank.seed),
            kernel=conv.kernel,
            bias=conv.bias,
            pos_head=conv.pos_head,
            pos_tail=conv.pos_tail,
            window=np.int64(conv.window),
            d_max=np.int64(conv.d_max),
        )


def load_checkpoint(path: str | Path) -> tuple[EmbeddingBank, ConvParams]:
    with np.load(path) as data:
        bank = EmbeddingBank(
            data["table"].copy(),
            data["relation_mat"].copy(),
            data["word_rows"].copy(),
            int(data["n_entities"]),
            int(data["seed"]),
        )
        conv = ConvParams(
            data["kernel"].copy(),
            data["bias"].copy(),
            data["pos_head"].copy(),
            data["pos_tail"].copy(),
            int(data["window"]),
            int(data["d_max"]),
        )
    return bank, conv
