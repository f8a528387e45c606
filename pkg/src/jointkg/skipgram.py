"""Skip-Gram with negative sampling, used to pretrain word vectors."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np


@dataclass
class SkipGramResult:
    vectors: np.ndarray
    context: np.ndarray
    epoch_losses: list[float]


def read_plain_corpus(path: str | Path) -> tuple[list[str], list[list[int]]]:
    """Whitespace-tokenized lines -> (token list in first-seen order, id sequences)."""
    index: dict[str, int] = {}
    lines = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if toks:
                lines.append([index.setdefault(t, len(index)) for t in toks])
    return list(index), lines


def unigram_table(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    """Cumulative noise distribution proportional to count**power."""
    weights = counts.astype(float) ** power
    cum = np.cumsum(weights)
    return cum / cum[-1]


@numba.njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@numba.njit(cache=True)
def _sgns_epoch(center, context, tokens, offsets, window, negatives, noise_cdf, lr0, done, total):
    """One pass over all (center, context) pairs; returns (loss sum, pairs seen)."""
    k = center.shape[1]
    grad = np.empty(k)
    loss = 0.0
    seen = 0
    for s in range(offsets.shape[0] - 1):
        lo = offsets[s]
        hi = offsets[s + 1]
        for i in range(lo, hi):
            c = tokens[i]
            for j in range(max(lo, i - window), min(hi, i + window + 1)):
                if j == i:
                    continue
                lr = lr0 * max(1.0 - (done + seen) / total, 1e-4)
                o = tokens[j]
                for d in range(k):
                    grad[d] = 0.0
                for n in range(negatives + 1):
                    if n == 0:
                        target = o
                        label = 1.0
                    else:
                        target = np.searchsorted(noise_cdf, np.random.random(), side="right")
                        if target >= noise_cdf.shape[0]:
                            target = noise_cdf.shape[0] - 1
                        if target == o:
                            continue
                        label = 0.0
                    dot = 0.0
                    for d in range(k):
                        dot += center[c, d] * context[target, d]
                    if label == 1.0:
                        loss += np.log1p(np.exp(-dot)) if dot > -30 else -dot
                    else:
                        loss += np.log1p(np.exp(dot)) if dot < 30 else dot
                    sig = 1.0 / (1.0 + np.exp(-dot))
                    g = (label - sig) * lr
                    for d in range(k):
                        grad[d] += g * context[target, d]
                        context[target, d] += g * center[c, d]
                for d in range(k):
                    center[c, d] += grad[d]
                seen += 1
    return loss, seen


def count_pairs(lengths: np.ndarray, window: int) -> int:
    total = 0
    for n in lengths.tolist():
        for i in range(n):
            total += min(n, i + window + 1) - max(0, i - window) - 1
    return total


def train_skipgram(
    corpus: Sequence[Sequence[int]],
    vocab_size: int,
    dim: int,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    seed: int = 0,
) -> SkipGramResult:
    """Train center/context vectors; ``vectors`` are the center vectors (vocab_size x dim).

    The learning rate decays linearly to zero over all pairs of all epochs.
    """
    lengths = np.array([len(s) for s in corpus], dtype=np.int64)
    if len(corpus) == 0 or lengths.sum() == 0:
        raise ValueError("empty corpus")
    tokens = np.concatenate([np.asarray(s, dtype=np.int64) for s in corpus if len(s)])
    if tokens.min() < 0 or tokens.max() >= vocab_size:
        raise ValueError("token id outside the vocabulary")
    offsets = np.concatenate([[0], np.cumsum(lengths[lengths > 0])]).astype(np.int64)

    rng = np.random.default_rng(seed)
    center = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim))
    context = np.zeros((vocab_size, dim))
    counts = np.bincount(tokens, minlength=vocab_size)
    noise = unigram_table(counts)

    per_epoch = count_pairs(lengths, window)
    losses: list[float] = []
    if per_epoch == 0:
        return SkipGramResult(center, context, losses)
    total = float(per_epoch * epochs)
    _seed(int(rng.integers(0, 2**31 - 1)))
    done = 0
    for _ in range(epochs):
        loss, seen = _sgns_epoch(
            center, context, tokens, offsets, window, negatives, noise, lr, float(done), total
        )
        done += seen
        losses.append(loss / seen)
    return SkipGramResult(center, context, losses)
