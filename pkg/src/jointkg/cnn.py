"""Sentence CNN: word + position input layer, one convolution, max-pooling, and its SGD step.

Everything here is written out by hand in numpy, forward and backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ConvParams, EmbeddingBank, normalize_entities
from .vocab import AlignedSentence

MAX_LENGTH = 120


def clip_sentence(sentence: AlignedSentence, max_len: int = MAX_LENGTH) -> AlignedSentence:
    """Cut a long sentence to ``max_len`` tokens, keeping both mentions and centring on them.

    If the mentions themselves are further apart than ``max_len`` the span between them
    is kept whole.
    """
    n = sentence.length
    if n <= max_len:
        return sentence
    lo = min(sentence.head_pos, sentence.tail_pos)
    hi = max(sentence.head_pos, sentence.tail_pos)
    spare = max_len - (hi - lo + 1)
    if spare <= 0:
        start, stop = lo, hi + 1
    else:
        start = max(0, lo - spare // 2)
        stop = min(n, start + max_len)
        start = max(0, stop - max_len)
    return AlignedSentence(
        sentence.tokens[start:stop],
        sentence.head_pos - start,
        sentence.tail_pos - start,
        sentence.relation,
        sentence.source_pair,
    )


def position_index(entity_pos: int, word_pos: np.ndarray, d_max: int) -> np.ndarray:
    """Row of a position table for each word: entity position minus word position, clipped."""
    return np.clip(entity_pos - word_pos, -d_max, d_max) + d_max


@dataclass
class InputMatrix:
    rows: np.ndarray  # n x k_w
    word_rows: np.ndarray  # bank.table row of each token
    head_idx: np.ndarray  # pos_head row of each token
    tail_idx: np.ndarray


@dataclass
class EncodeTrace:
    input: InputMatrix
    windows: np.ndarray  # n x (m * k_w), the concatenated x'_i
    hidden: np.ndarray  # n x k_c
    argmax: np.ndarray  # k_c
    output: np.ndarray  # k_c


def build_input(bank: EmbeddingBank, conv: ConvParams, sentence: AlignedSentence) -> InputMatrix:
    n = sentence.length
    positions = np.arange(n)
    word_rows = bank.word_rows[np.asarray(sentence.tokens, dtype=np.int64)]
    head_idx = position_index(sentence.head_pos, positions, conv.d_max)
    tail_idx = position_index(sentence.tail_pos, positions, conv.d_max)
    rows = np.concatenate(
        [bank.table[word_rows], conv.pos_head[head_idx], conv.pos_tail[tail_idx]], axis=1
    )
    return InputMatrix(rows, word_rows, head_idx, tail_idx)


def window_matrix(rows: np.ndarray, window: int) -> np.ndarray:
    """Row i is the concatenation of rows i-(m-1)/2 .. i+(m-1)/2, zero beyond the ends."""
    n, k_w = rows.shape
    half = (window - 1) // 2
    padded = np.zeros((n + window - 1, k_w))
    padded[half : half + n] = rows
    return np.lib.stride_tricks.sliding_window_view(padded, (window, k_w))[:, 0].reshape(
        n, window * k_w
    )


def max_pool(hidden: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    argmax = np.argmax(hidden, axis=0)
    return hidden[argmax, np.arange(hidden.shape[1])], argmax


def encode_sentence(bank: EmbeddingBank, conv: ConvParams, sentence: AlignedSentence) -> EncodeTrace:
    inp = build_input(bank, conv, sentence)
    windows = window_matrix(inp.rows, conv.window)
    hidden = np.tanh(windows @ conv.kernel.T + conv.bias)
    output, argmax = max_pool(hidden)
    return EncodeTrace(inp, windows, hidden, argmax, output)


def sentence_score(trace: EncodeTrace | np.ndarray, r_vec: np.ndarray) -> float:
    r_s = trace.output if isinstance(trace, EncodeTrace) else np.asarray(trace, dtype=float)
    r_vec = np.asarray(r_vec, dtype=float)
    if r_s.shape != r_vec.shape:
        raise ValueError(f"dimension mismatch: {r_s.shape} vs {r_vec.shape}")
    d = r_s - r_vec
    return float(np.sqrt(np.dot(d, d)))


def text_hinge(
    bank: EmbeddingBank,
    conv: ConvParams,
    sentence: AlignedSentence,
    negative: int,
    margin: float,
) -> float:
    trace = encode_sentence(bank, conv, sentence)
    f_pos = sentence_score(trace, bank.relation_mat[sentence.relation])
    f_neg = sentence_score(trace, bank.relation_mat[negative])
    return max(0.0, margin + f_pos - f_neg)


@dataclass
class TextGradients:
    """Gradient of one sentence hinge, grouped by parameter block.

    Row-sparse blocks keep the row ids next to per-occurrence gradient rows; repeated
    ids must be accumulated (``np.add.at``).
    """

    hinge: float
    kernel: np.ndarray
    bias: np.ndarray
    word_rows: np.ndarray
    word_grad: np.ndarray
    head_idx: np.ndarray
    head_grad: np.ndarray
    tail_idx: np.ndarray
    tail_grad: np.ndarray
    relation: int
    relation_grad: np.ndarray
    negative: int
    negative_grad: np.ndarray


def _unit(v: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.dot(v, v))
    return v / d if d > 0.0 else np.zeros_like(v)


def text_gradients(
    bank: EmbeddingBank,
    conv: ConvParams,
    sentence: AlignedSentence,
    negative: int,
    margin: float,
) -> TextGradients | None:
    """Backpropagate the hinge of (sentence, negative relation); ``None`` if it is zero."""
    trace = encode_sentence(bank, conv, sentence)
    r_pos = bank.relation_mat[sentence.relation]
    r_neg = bank.relation_mat[negative]
    f_pos = sentence_score(trace, r_pos)
    f_neg = sentence_score(trace, r_neg)
    hinge = margin + f_pos - f_neg
    if hinge <= 0.0:
        return None

    u_pos = _unit(trace.output - r_pos)
    u_neg = _unit(trace.output - r_neg)
    d_out = u_pos - u_neg

    n, k_c = trace.hidden.shape
    cols = np.arange(k_c)
    d_pre = np.zeros((n, k_c))
    y = trace.hidden[trace.argmax, cols]
    d_pre[trace.argmax, cols] = d_out * (1.0 - y * y)

    d_kernel = d_pre.T @ trace.windows
    d_bias = d_pre.sum(axis=0)
    d_windows = (d_pre @ conv.kernel).reshape(n, conv.window, -1)
    half = (conv.window - 1) // 2
    d_padded = np.zeros((n + conv.window - 1, d_windows.shape[2]))
    for j in range(conv.window):
        d_padded[j : j + n] += d_windows[:, j]
    d_rows = d_padded[half : half + n]

    k = bank.k
    k_p = conv.k_p
    inp = trace.input
    return TextGradients(
        hinge=float(hinge),
        kernel=d_kernel,
        bias=d_bias,
        word_rows=inp.word_rows,
        word_grad=d_rows[:, :k],
        head_idx=inp.head_idx,
        head_grad=d_rows[:, k : k + k_p],
        tail_idx=inp.tail_idx,
        tail_grad=d_rows[:, k + k_p :],
        relation=sentence.relation,
        relation_grad=-u_pos,
        negative=int(negative),
        negative_grad=u_neg,
    )


def apply_text_gradients(
    bank: EmbeddingBank, conv: ConvParams, grads: TextGradients, step: float, decay: float
) -> None:
    """SGD update of every block, L2 decay on kernel and bias, then re-unit touched entities."""
    conv.kernel -= step * (grads.kernel + decay * conv.kernel)
    conv.bias -= step * (grads.bias + decay * conv.bias)
    np.add.at(conv.pos_head, grads.head_idx, -step * grads.head_grad)
    np.add.at(conv.pos_tail, grads.tail_idx, -step * grads.tail_grad)
    np.add.at(bank.table, grads.word_rows, -step * grads.word_grad)
    bank.relation_mat[grads.relation] -= step * grads.relation_grad
    bank.relation_mat[grads.negative] -= step * grads.negative_grad
    touched = grads.word_rows[grads.word_rows < bank.n_entities]
    if len(touched):
        normalize_entities(bank, touched)


def sample_negative_relation(rng: np.random.Generator, relation: int, n_relations: int) -> int:
    if n_relations < 2:
        raise ValueError("need at least two relations to draw a negative")
    draw = int(rng.integers(0, n_relations - 1))
    return draw + (draw >= relation)


def text_batch_step(
    bank: EmbeddingBank,
    conv: ConvParams,
    sentence: AlignedSentence,
    rng: np.random.Generator,
    lr: float,
    margin: float,
    tau: float,
    decay: float = 1.0,
    negative: int | None = None,
) -> float:
    """One SGD step on a sentence against one sampled wrong relation; returns the hinge.

    The step size is ``tau * lr``.  ``decay`` is the L2 coefficient on kernel and bias,
    applied only on steps with a positive hinge.
    """
    if negative is None:
        negative = sample_negative_relation(rng, sentence.relation, bank.n_relations)
    grads = text_gradients(bank, conv, clip_sentence(sentence), negative, margin)
    if grads is None:
        return 0.0
    apply_text_gradients(bank, conv, grads, tau * lr, decay)
    return grads.hinge
