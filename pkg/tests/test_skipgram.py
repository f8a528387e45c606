import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jointkg.skipgram import count_pairs, read_plain_corpus, train_skipgram, unigram_table


def ppmi_rows(corpus, vocab_size, window):
    counts = np.zeros((vocab_size, vocab_size))
    for line in corpus:
        for i, c in enumerate(line):
            for j in range(max(0, i - window), min(len(line), i + window + 1)):
                if j != i:
                    counts[c, line[j]] += 1
    total = counts.sum()
    p_w = counts.sum(axis=1, keepdims=True) / total
    p_c = counts.sum(axis=0, keepdims=True) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts / total / (p_w * p_c))
    return np.where(counts > 0, np.maximum(pmi, 0.0), 0.0)


def cosine(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def pairing_corpus():
    # ids: a=0, b=1, c=2, d=3; 10,000 repetitions of "a b" and distractor lines of "c d"
    ab = [[0, 1] * 5 for _ in range(2000)]
    cd = [[2, 3] * 5 for _ in range(1000)]
    corpus = ab + cd
    np.random.default_rng(0).shuffle(corpus)
    return corpus


def test_nearest_neighbour_follows_pmi_oracle():
    corpus = pairing_corpus()
    rows = ppmi_rows(corpus, 4, 5)
    oracle = max((1, 2, 3), key=lambda w: cosine(rows[0], rows[w]))
    assert oracle == 1
    result = train_skipgram(corpus, 4, 20, window=5, negatives=5, epochs=3, seed=1)
    vec = result.vectors
    learned = max((1, 2, 3), key=lambda w: cosine(vec[0], vec[w]))
    assert learned == oracle
    assert result.epoch_losses[-1] < result.epoch_losses[0]


def test_no_pairs_leaves_init_untouched():
    corpus = [[0], [1], [2], [1]]
    result = train_skipgram(corpus, 3, 8, epochs=4, seed=5)
    init = np.random.default_rng(5).uniform(-0.5 / 8, 0.5 / 8, size=(3, 8))
    assert np.array_equal(result.vectors, init)
    assert result.epoch_losses == []


def test_fixed_seed_is_bit_identical():
    corpus = [list(np.random.default_rng(i).integers(0, 30, size=12)) for i in range(50)]
    a = train_skipgram(corpus, 30, 10, seed=3)
    b = train_skipgram(corpus, 30, 10, seed=3)
    assert np.array_equal(a.vectors, b.vectors) and a.epoch_losses == b.epoch_losses
    c = train_skipgram(corpus, 30, 10, seed=4)
    assert not np.array_equal(a.vectors, c.vectors)


def test_output_shape_and_errors():
    result = train_skipgram([[0, 1, 2]], 5, 7, epochs=1)
    assert result.vectors.shape == (5, 7)
    with pytest.raises(ValueError):
        train_skipgram([], 3, 4)
    with pytest.raises(ValueError):
        train_skipgram([[], []], 3, 4)
    with pytest.raises(ValueError):
        train_skipgram([[0, 3]], 3, 4)


def test_pair_count_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        lengths = rng.integers(0, 9, size=5)
        window = int(rng.integers(1, 4))
        brute = sum(1 for n in lengths for i in range(n) for j in range(n) if i != j and abs(i - j) <= window)
        assert count_pairs(lengths, window) == brute


def test_unigram_table():
    cdf = unigram_table(np.array([1, 16, 0]))
    assert np.allclose(cdf, [1 / 9, 1.0, 1.0])


def test_read_plain_corpus(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("the cat sat\n\nthe dog\n", encoding="utf-8")
    tokens, lines = read_plain_corpus(path)
    assert tokens == ["the", "cat", "sat", "dog"]
    assert lines == [[0, 1, 2], [0, 3]]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.integers(0, 9), min_size=2, max_size=15), min_size=20, max_size=60), st.integers(0, 1000))
def test_last_epoch_loss_below_first_on_nontrivial_corpora(corpus, seed):
    result = train_skipgram(corpus, 10, 8, epochs=5, seed=seed)
    assert result.epoch_losses[-1] < result.epoch_losses[0]
