"""Simultaneous SGD on the KG margin loss and the tau-weighted sentence loss."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .cnn import clip_sentence, text_batch_step
from .params import ConvParams, EmbeddingBank, normalize_entities
from .skipgram import SkipGramResult, train_skipgram
from .transe import run_batches, sample_corruptions
from .vocab import AlignedSentence, TripleStore

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr_kg: float = 0.001
    lr_text: float = 0.025
    tau: float = 0.0001
    lam: float = 1.0
    margin: float = 1.0
    dim: int = 150
    kg_rounds: int = 3000
    text_rounds: int = 10
    seed: int = 0
    corruption: str = "uniform"
    batch_size: int = 1
    squared: bool = False
    k_p: int = 5
    window: int = 3
    d_max: int = 30

    def validate(self) -> None:
        if self.lr_kg <= 0 or self.lr_text <= 0:
            raise ValueError("learning rates must be positive")
        if self.tau < 0 or self.lam < 0:
            raise ValueError("harmonic factors must be non-negative")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.kg_rounds < 0 or self.text_rounds < 0:
            raise ValueError("round counts must be non-negative")
        if self.batch_size < 1 or self.dim < 1:
            raise ValueError("batch size and dimension must be positive")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EpochLoss:
    epoch: int
    kg_loss: float
    text_loss: float


@dataclass
class TrainResult:
    history: list[EpochLoss] = field(default_factory=list)
    kg_batches: int = 0
    text_steps: int = 0


def _corruption_scheme(name: str):
    if "," in name:
        return [float(x) for x in name.split(",")]
    return name


class _KgEpochs:
    """Feeds pre-sampled KG epochs to the SGD kernel batch range by batch range."""

    def __init__(self, store: TripleStore, config: TrainConfig, rng: np.random.Generator):
        self.store = store
        self.config = config
        self.rng = rng
        self.scheme = _corruption_scheme(config.corruption)
        self.n_batches = max(1, math.ceil(len(store.train) / config.batch_size))
        self.epoch = 0
        self.batch = 0
        self.loss = 0.0
        self.count = 0
        self._sample()

    def _sample(self):
        pos = self.store.train[self.rng.permutation(len(self.store.train))]
        neg, _, ok = sample_corruptions(self.rng, pos, self.store, self.scheme)
        if not ok.all():
            logger.debug("epoch %d: skipped %d positives without a corruption", self.epoch, (~ok).sum())
        self.pos = np.ascontiguousarray(pos[ok])
        self.neg = np.ascontiguousarray(neg[ok])
        self.epoch_batches = math.ceil(len(self.pos) / self.config.batch_size)

    @property
    def finished(self) -> bool:
        return self.epoch >= self.config.kg_rounds

    def progress_units(self) -> int:
        return self.epoch * self.n_batches + self.batch

    def run(self, bank: EmbeddingBank, stop: int) -> bool:
        """Run batches of the current epoch up to nominal index ``stop``; True at epoch end."""
        stop = min(stop, self.n_batches)
        first = min(self.batch, self.epoch_batches)
        last = min(stop, self.epoch_batches)
        if last > first:
            cfg = self.config
            self.loss += run_batches(
                bank, self.pos, self.neg, cfg.batch_size, first, last, cfg.lr_kg, cfg.margin, cfg.squared
            )
            self.count += last - first
        self.batch = stop
        if self.batch < self.n_batches:
            return False
        self.last_epoch_loss = self.loss / max(len(self.pos), 1)
        self.epoch += 1
        self.batch = 0
        self.loss = 0.0
        if not self.finished:
            self._sample()
        return True


def joint_train(
    config: TrainConfig,
    store: TripleStore,
    corpus: Sequence[AlignedSentence],
    bank: EmbeddingBank,
    conv: ConvParams,
) -> TrainResult:
    """Interleave KG batches and sentence steps until both sides finish their rounds.

    Before each sentence step, KG batches run while the KG side's completed fraction
    is not ahead of the text side's (exact integer comparison).  With
    ``text_rounds == 0`` this is plain TransE training.
    """
    config.validate()
    if config.text_rounds > 0 and len(corpus) == 0:
        raise ValueError("text_rounds > 0 needs a non-empty corpus")
    if config.kg_rounds > 0 and len(store.train) == 0:
        raise ValueError("kg_rounds > 0 needs train triples")

    kg_seq, text_seq = np.random.SeedSequence(config.seed).spawn(2)
    kg_rng = np.random.default_rng(kg_seq)
    text_rng = np.random.default_rng(text_seq)

    result = TrainResult()
    kg = _KgEpochs(store, config, kg_rng) if config.kg_rounds > 0 else None
    sentences = [clip_sentence(s) for s in corpus]
    n_sent = len(sentences)
    text_total = config.text_rounds * n_sent
    text_done = 0
    text_loss = 0.0
    text_count = 0
    order: np.ndarray = np.zeros(0, dtype=np.int64)

    def flush_row(epoch: int, kg_loss: float) -> None:
        nonlocal text_loss, text_count
        mean_text = text_loss / text_count if text_count else 0.0
        result.history.append(EpochLoss(epoch, kg_loss, mean_text))
        text_loss, text_count = 0.0, 0

    while True:
        text_finished = text_done >= text_total
        while kg is not None and not kg.finished:
            if text_finished:
                stop = kg.n_batches
            else:
                # first nominal unit at which the KG fraction exceeds the text fraction
                target = (text_done * config.kg_rounds * kg.n_batches) // text_total + 1
                stop = target - kg.epoch * kg.n_batches
                if stop <= kg.batch:
                    break
            before = kg.count
            if kg.run(bank, stop):
                flush_row(kg.epoch, kg.last_epoch_loss)
            result.kg_batches += kg.count - before
        if text_finished:
            break
        pos = text_done % n_sent
        if pos == 0:
            order = text_rng.permutation(n_sent)
        hinge = text_batch_step(
            bank,
            conv,
            sentences[order[pos]],
            text_rng,
            config.lr_text,
            config.margin,
            config.tau,
            config.lam,
        )
        text_loss += hinge
        text_count += 1
        text_done += 1
        result.text_steps += 1
        if kg is None and text_done % n_sent == 0:
            flush_row(text_done // n_sent, 0.0)
    if text_count:
        flush_row(len(result.history) + 1, 0.0)
    return result


def train_transe(
    config: TrainConfig, store: TripleStore, bank: EmbeddingBank, conv: ConvParams
) -> TrainResult:
    """KG-only training: the joint loop with no text rounds."""
    cfg = TrainConfig(**{**config.__dict__, "text_rounds": 0})
    return joint_train(cfg, store, [], bank, conv)


def init_from_skipgram(
    bank: EmbeddingBank,
    sentences: Sequence[Sequence[int]],
    epochs: int = 5,
    window: int = 5,
    negatives: int = 5,
    lr: float = 0.025,
    seed: int = 0,
) -> SkipGramResult:
    """Overwrite every word row (so every anchored entity row) with Skip-Gram vectors.

    ``sentences`` are word-id sequences over the bank's vocabulary.
    """
    result = train_skipgram(
        sentences, bank.n_words, bank.k, window, negatives, epochs, lr, seed
    )
    bank.table[bank.word_rows] = result.vectors
    normalize_entities(bank)
    return result


def write_loss_history(path: str | Path, history: Sequence[EpochLoss]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(f"{row.epoch}\t{float(row.kg_loss)!r}\t{float(row.text_loss)!r}\n")
