"""Translation scoring, corrupted-triple sampling and margin-ranking SGD on the KG."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .params import EmbeddingBank, normalize_entities
from .vocab import Triple, TripleStore, relation_cardinalities

HEAD, TAIL, RELATION = 0, 1, 2
SLOT_NAMES = ("head", "tail", "relation")
# triple column replaced by each slot
_SLOT_COLUMN = np.array([0, 2, 1])
MAX_ATTEMPTS = 100


def latent_relation(h_vec: np.ndarray, t_vec: np.ndarray) -> np.ndarray:
    h_vec = np.asarray(h_vec, dtype=float)
    t_vec = np.asarray(t_vec, dtype=float)
    if h_vec.shape != t_vec.shape:
        raise ValueError(f"dimension mismatch: {h_vec.shape} vs {t_vec.shape}")
    return t_vec - h_vec


def score_triple(bank: EmbeddingBank, h: int, r: int, t: int, squared: bool = False) -> float:
    """Distance of (t - h) from r; lower means more plausible."""
    ent = bank.entity_mat
    v = latent_relation(ent[h], ent[t]) - bank.relation_mat[r]
    d = float(np.sqrt(np.dot(v, v)))
    return d * d if squared else d


def score_triples(bank: EmbeddingBank, triples: np.ndarray, squared: bool = False) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    ent = bank.entity_mat
    v = ent[triples[:, 2]] - ent[triples[:, 0]] - bank.relation_mat[triples[:, 1]]
    sq = np.einsum("ij,ij->i", v, v)
    return sq if squared else np.sqrt(sq)


def slot_probabilities(store: TripleStore, triples: np.ndarray, scheme="uniform") -> np.ndarray:
    """Per-triple probabilities of corrupting (head, tail, relation).

    ``scheme`` is ``"uniform"`` (1/3 each), ``"unif"`` (head/tail 1/2 each), ``"bern"``
    (head with probability tph / (tph + hpt), no relation corruption) or an explicit
    weight triple.
    """
    n = len(triples)
    if isinstance(scheme, str):
        if scheme == "uniform":
            return np.full((n, 3), 1.0 / 3.0)
        if scheme == "unif":
            return np.tile([0.5, 0.5, 0.0], (n, 1))
        if scheme == "bern":
            card = relation_cardinalities(store)
            p_head = np.empty(n)
            for i, r in enumerate(np.asarray(triples)[:, 1].tolist()):
                tph, hpt = card.get(r, (1.0, 1.0))
                p_head[i] = tph / (tph + hpt)
            return np.stack([p_head, 1.0 - p_head, np.zeros(n)], axis=1)
        raise ValueError(f"unknown corruption scheme {scheme!r}")
    w = np.asarray(scheme, dtype=float)
    if w.shape != (3,) or (w < 0).any() or w.sum() <= 0:
        raise ValueError("corruption weights must be three non-negative numbers")
    return np.tile(w / w.sum(), (n, 1))


def sample_corruptions(
    rng: np.random.Generator,
    triples: np.ndarray,
    store: TripleStore,
    scheme="uniform",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Corrupt one slot of every triple, avoiding triples of the train split.

    Returns ``(negatives, slots, ok)``; rows with ``ok == False`` found no valid
    corruption within ``MAX_ATTEMPTS`` draws and must be skipped.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n = len(triples)
    probs = slot_probabilities(store, triples, scheme)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(n)
    slots = (u >= cum[:, 0]).astype(np.int64) + (u >= cum[:, 1])
    slots = np.minimum(slots, 2)
    cols = _SLOT_COLUMN[slots]
    sizes = np.where(slots == RELATION, store.n_relations, store.n_entities)
    if (sizes < 2).any():
        raise ValueError("corruption needs at least two entities and two relations")

    original = triples[np.arange(n), cols]
    negatives = triples.copy()
    pending = np.arange(n)
    for _ in range(MAX_ATTEMPTS):
        if len(pending) == 0:
            break
        draw = rng.integers(0, sizes[pending] - 1)
        draw += draw >= original[pending]
        negatives[pending, cols[pending]] = draw
        pending = pending[store.in_train(negatives[pending])]
    ok = np.ones(n, dtype=bool)
    ok[pending] = False
    negatives[pending] = triples[pending]
    return negatives, slots, ok


def sample_corruption(
    rng: np.random.Generator, triple: Triple, store: TripleStore, scheme="uniform"
) -> tuple[Triple, str] | None:
    """Single-triple form of :func:`sample_corruptions`; ``None`` means skip this positive."""
    neg, slots, ok = sample_corruptions(rng, np.array([tuple(triple)]), store, scheme)
    if not ok[0]:
        return None
    return Triple(*map(int, neg[0])), SLOT_NAMES[slots[0]]


@dataclass
class KgBatch:
    positives: np.ndarray
    negatives: np.ndarray
    corrupted_slot: np.ndarray

    def __post_init__(self):
        self.positives = np.ascontiguousarray(self.positives, dtype=np.int64).reshape(-1, 3)
        self.negatives = np.ascontiguousarray(self.negatives, dtype=np.int64).reshape(-1, 3)
        self.corrupted_slot = np.asarray(self.corrupted_slot, dtype=np.int64).reshape(-1)
        if not (len(self.positives) == len(self.negatives) == len(self.corrupted_slot)):
            raise ValueError("positives, negatives and slots must have equal length")

    def __len__(self):
        return len(self.positives)


@numba.njit(cache=True)
def _distance_grad(v, squared, out):
    """Writes d f / d v into ``out`` and returns f; the kink at v = 0 gets gradient 0."""
    sq = 0.0
    for j in range(v.shape[0]):
        sq += v[j] * v[j]
    if squared:
        for j in range(v.shape[0]):
            out[j] = 2.0 * v[j]
        return sq
    d = np.sqrt(sq)
    for j in range(v.shape[0]):
        out[j] = v[j] / d if d > 0.0 else 0.0
    return d


@numba.njit(cache=True)
def _renorm(ent, row, zero_rows):
    sq = 0.0
    for j in range(ent.shape[1]):
        sq += ent[row, j] * ent[row, j]
    if sq == 0.0:
        zero_rows.append(row)
        return
    d = np.sqrt(sq)
    for j in range(ent.shape[1]):
        ent[row, j] /= d


@numba.njit(cache=True)
def _sgd_batches(ent, rel, pos, neg, batch_size, first, last, lr, margin, squared, normalize):
    """Margin-ranking SGD over batches ``first..last-1`` of the pair lists.

    Gradients inside one batch are taken at the batch's starting parameters.
    Returns the summed hinge loss before each update.
    """
    n = pos.shape[0]
    k = ent.shape[1]
    total = 0.0
    v = np.empty(k)
    zero_rows = [np.int64(-1)]
    zero_rows.pop()
    for b in range(first, last):
        lo = b * batch_size
        hi = min(lo + batch_size, n)
        m = hi - lo
        g_pos = np.zeros((m, k))
        g_neg = np.zeros((m, k))
        active = np.zeros(m, dtype=np.bool_)
        for i in range(m):
            p = pos[lo + i]
            q = neg[lo + i]
            for j in range(k):
                v[j] = ent[p[2], j] - ent[p[0], j] - rel[p[1], j]
            f_pos = _distance_grad(v, squared, g_pos[i])
            for j in range(k):
                v[j] = ent[q[2], j] - ent[q[0], j] - rel[q[1], j]
            f_neg = _distance_grad(v, squared, g_neg[i])
            hinge = margin + f_pos - f_neg
            if hinge > 0.0:
                total += hinge
                active[i] = True
        for i in range(m):
            if not active[i]:
                continue
            p = pos[lo + i]
            q = neg[lo + i]
            for j in range(k):
                gp = lr * g_pos[i, j]
                ent[p[2], j] -= gp
                ent[p[0], j] += gp
                rel[p[1], j] += gp
                gn = lr * g_neg[i, j]
                ent[q[2], j] += gn
                ent[q[0], j] -= gn
                rel[q[1], j] -= gn
        if normalize:
            for i in range(m):
                if active[i]:
                    _renorm(ent, pos[lo + i, 0], zero_rows)
                    _renorm(ent, pos[lo + i, 2], zero_rows)
                    _renorm(ent, neg[lo + i, 0], zero_rows)
                    _renorm(ent, neg[lo + i, 2], zero_rows)
    out = np.empty(len(zero_rows), dtype=np.int64)
    for i in range(len(zero_rows)):
        out[i] = zero_rows[i]
    return total, out


def run_batches(
    bank: EmbeddingBank,
    positives: np.ndarray,
    negatives: np.ndarray,
    batch_size: int,
    first: int,
    last: int,
    lr: float,
    margin: float,
    squared: bool = False,
) -> float:
    """Apply :func:`kg_batch_step` to consecutive batches of a pre-sampled epoch."""
    total, zero_rows = _sgd_batches(
        bank.entity_mat,
        bank.relation_mat,
        positives,
        negatives,
        int(batch_size),
        int(first),
        int(last),
        float(lr),
        float(margin),
        bool(squared),
        True,
    )
    if len(zero_rows):
        normalize_entities(bank, zero_rows)
    return total


def kg_batch_step(
    bank: EmbeddingBank, batch: KgBatch, lr: float, margin: float, squared: bool = False
) -> float:
    """One SGD step on the hinge of every (positive, negative) pair, then unit-norm entities.

    Returns the summed hinge evaluated before the update.
    """
    if len(batch) == 0:
        return 0.0
    return run_batches(
        bank, batch.positives, batch.negatives, len(batch), 0, 1, lr, margin, squared
    )


def kg_hinge(
    bank: EmbeddingBank, positives: np.ndarray, negatives: np.ndarray, margin: float, squared=False
) -> float:
    f_pos = score_triples(bank, positives, squared)
    f_neg = score_triples(bank, negatives, squared)
    return float(np.maximum(0.0, margin + f_pos - f_neg).sum())


def kg_gradients(
    bank: EmbeddingBank, batch: KgBatch, margin: float, squared: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the batch hinge w.r.t. (entity matrix, relation matrix).

    Read off a unit-rate, unnormalized step of the training kernel on copies.
    """
    ent = bank.entity_mat.copy()
    rel = bank.relation_mat.copy()
    _sgd_batches(
        ent, rel, batch.positives, batch.negatives, len(batch), 0, 1, 1.0, float(margin),
        bool(squared), False,
    )
    return bank.entity_mat - ent, bank.relation_mat - rel
