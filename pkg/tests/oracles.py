"""Independent reference computations: finite differences, exhaustive ranking and sweeps."""

from collections import defaultdict

import numpy as np

from jointkg.cnn import encode_sentence
from jointkg.transe import score_triple
from jointkg.vocab import classify_relations


def numeric_grad(fn, arr, rows=None, eps=1e-6):
    g = np.zeros_like(arr)
    index = np.ndindex(arr.shape) if rows is None else ((r, j) for r in rows for j in range(arr.shape[1]))
    for idx in index:
        old = arr[idx]
        arr[idx] = old + eps
        up = fn()
        arr[idx] = old - eps
        down = fn()
        arr[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def rel_error(a, b, floor=1e-8):
    """Max difference relative to the larger gradient, ignoring differences below ``floor``.

    Central differences with eps=1e-6 carry ~1e-10 of round-off, which would dominate
    the ratio where the true gradient is exactly zero.
    """
    err = np.abs(a - b).max()
    if err <= floor:
        return 0.0
    return err / max(np.abs(a).max(), np.abs(b).max())


def dense_text_grads(bank, conv, g):
    word = np.zeros_like(bank.table)
    np.add.at(word, g.word_rows, g.word_grad)
    head = np.zeros_like(conv.pos_head)
    np.add.at(head, g.head_idx, g.head_grad)
    tail = np.zeros_like(conv.pos_tail)
    np.add.at(tail, g.tail_idx, g.tail_grad)
    rel = np.zeros_like(bank.relation_mat)
    rel[g.relation] += g.relation_grad
    rel[g.negative] += g.negative_grad
    return {"kernel": g.kernel, "bias": g.bias, "table": word, "pos_head": head, "pos_tail": tail, "relation_mat": rel}


def oracle_rank(bank, triple, direction, filtered, store):
    """Sort every allowed candidate, gold first among equal scores, and read off gold's place."""
    h, r, t = triple
    cands = []
    for e in range(bank.n_entities):
        cand = (e, r, t) if direction == "head" else (h, r, e)
        gold = cand == tuple(triple)
        if filtered and not gold and store.known_triple(*cand):
            continue
        cands.append((score_triple(bank, *cand), 0 if gold else 1, gold))
    cands.sort()
    return 1 + [c[2] for c in cands].index(True)


def oracle_relation_rank(bank, triple, filtered, store):
    h, r, t = triple
    cands = []
    for rr in range(bank.n_relations):
        gold = rr == r
        if filtered and not gold and store.known_triple(h, rr, t):
            continue
        cands.append((score_triple(bank, h, rr, t), 0 if gold else 1, gold))
    cands.sort()
    return 1 + [c[2] for c in cands].index(True)


def brute_entity_report(bank, store, filtered):
    classes = classify_relations(store)
    cells = {"head": defaultdict(list), "tail": defaultdict(list)}
    per_rel = defaultdict(list)
    every = []
    for triple in store.test.tolist():
        for d in ("head", "tail"):
            hit = oracle_rank(bank, triple, d, filtered, store) <= 10
            cells[d][classes[triple[1]].value].append(hit)
            per_rel[triple[1]].append(hit)
            every.append(hit)
    pct = lambda xs: 100.0 * sum(xs) / len(xs) if xs else None
    return (
        {d: {c: pct(v) for c, v in cells[d].items()} for d in cells},
        pct(every),
        sum(pct(v) for v in per_rel.values()) / len(per_rel),
    )


def oracle_pr(bank, conv, sentences, store, relations):
    groups = defaultdict(list)
    for s in sentences:
        groups[s.source_pair].append(s)
    cands = []
    for pair, group in groups.items():
        outs = [encode_sentence(bank, conv, s).output for s in group]
        for r in relations:
            score = min(float(np.linalg.norm(o - bank.relation_mat[r])) for o in outs)
            cands.append((score, len(cands), store.known_triple(pair[0], r, pair[1])))
    total = sum(len(store.known_relations(*p)) for p in groups)
    cands.sort()
    points, hits = [], 0
    for i, (_, _, ok) in enumerate(cands, 1):
        hits += ok
        points.append((hits / total, hits / i))
    return points
