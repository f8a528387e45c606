import math

import numpy as np
import pytest

import jointkg.train as train_mod
from helpers import make_vocab, random_sentence, random_store
from jointkg.params import init_params
from jointkg.skipgram import train_skipgram
from jointkg.synthetic import make_synthetic
from jointkg.train import TrainConfig, init_from_skipgram, joint_train, train_transe, write_loss_history


def toy(seed=0, n_train=24, n_sent=10, k=6):
    rng = np.random.default_rng(seed)
    vocab = make_vocab(10, 3, n_words=6, anchored=10)
    store = random_store(rng, 10, 3, n_train, 0, 4)
    corpus = [random_sentence(rng, vocab, int(rng.integers(2, 7))) for _ in range(n_sent)]
    return vocab, store, corpus


def fresh(vocab, k=6, seed=0):
    return init_params(vocab, k, seed, k_p=2, d_max=5)


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.lr_kg, cfg.lr_text, cfg.tau, cfg.dim, cfg.margin) == (0.001, 0.025, 0.0001, 150, 1.0)
    assert (cfg.kg_rounds, cfg.text_rounds, cfg.lam) == (3000, 10, 1.0)


@pytest.mark.parametrize("kw", [dict(lr_kg=0), dict(lr_text=-1), dict(margin=0), dict(kg_rounds=-1), dict(text_rounds=-2), dict(tau=-1)])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw).validate()


def test_empty_corpus_with_text_rounds_is_an_error():
    vocab, store, _ = toy()
    bank, conv = fresh(vocab)
    with pytest.raises(ValueError):
        joint_train(TrainConfig(dim=6, kg_rounds=2, text_rounds=1), store, [], bank, conv)


def test_zero_text_rounds_is_bitwise_transe():
    vocab, store, corpus = toy()
    a_bank, a_conv = fresh(vocab)
    b_bank, b_conv = fresh(vocab)
    cfg = TrainConfig(dim=6, kg_rounds=15, text_rounds=0, lr_kg=0.01, seed=4)
    ra = joint_train(cfg, store, corpus, a_bank, a_conv)
    rb = train_transe(TrainConfig(dim=6, kg_rounds=15, text_rounds=7, lr_kg=0.01, seed=4), store, b_bank, b_conv)
    assert np.array_equal(a_bank.table, b_bank.table)
    assert np.array_equal(a_bank.relation_mat, b_bank.relation_mat)
    assert [h.kg_loss for h in ra.history] == [h.kg_loss for h in rb.history]


@pytest.mark.parametrize("batch_size,n_train", [(1, 24), (4, 24), (5, 24)])
def test_work_accounting(batch_size, n_train):
    vocab, store, corpus = toy(n_train=n_train)
    bank, conv = fresh(vocab)
    cfg = TrainConfig(dim=6, kg_rounds=7, text_rounds=3, batch_size=batch_size, lr_kg=0.01, seed=1)
    result = joint_train(cfg, store, corpus, bank, conv)
    per_epoch = math.ceil(n_train / batch_size)
    assert result.kg_batches == cfg.kg_rounds * per_epoch
    if n_train % batch_size == 0:
        assert abs(result.kg_batches - cfg.kg_rounds * n_train / batch_size) <= 1
    assert result.text_steps == cfg.text_rounds * len(corpus)
    assert len(result.history) == cfg.kg_rounds
    assert all(np.isfinite([h.kg_loss, h.text_loss]).all() and h.kg_loss >= 0 and h.text_loss >= 0 for h in result.history)


def test_schedule_keeps_progress_fractions_together(monkeypatch):
    vocab, store, corpus = toy()
    bank, conv = fresh(vocab)
    cfg = TrainConfig(dim=6, kg_rounds=5, text_rounds=4, lr_kg=0.01, seed=2)
    kg_done = [0]
    log = []
    real_run, real_text = train_mod.run_batches, train_mod.text_batch_step

    def run_batches(bank, pos, neg, bs, first, last, *args):
        kg_done[0] += last - first
        return real_run(bank, pos, neg, bs, first, last, *args)

    def text_step(*args, **kw):
        log.append((kg_done[0], len(log)))
        return real_text(*args, **kw)

    monkeypatch.setattr(train_mod, "run_batches", run_batches)
    monkeypatch.setattr(train_mod, "text_batch_step", text_step)
    joint_train(cfg, store, corpus, bank, conv)
    kg_total = cfg.kg_rounds * len(store.train)
    text_total = cfg.text_rounds * len(corpus)
    for kg, text in log:
        lead = kg / kg_total - text / text_total
        assert 0 < lead <= 1 / kg_total + 1e-12


def test_entities_unit_norm_and_finite_after_run():
    data = make_synthetic(seed=0, n_entities=40, n_relations=5, n_types=6, per_relation=8, sentences_per_triple=2)
    bank, conv = init_params(data.vocab, 8, seed=0)
    result = joint_train(TrainConfig(dim=8, kg_rounds=20, text_rounds=3, lr_kg=0.01, tau=0.1), data.store, data.corpus, bank, conv)
    assert np.abs(np.linalg.norm(bank.entity_mat, axis=1) - 1).max() <= 1e-9
    for arr in (bank.table, bank.relation_mat, conv.kernel, conv.bias, conv.pos_head, conv.pos_tail):
        assert np.isfinite(arr).all()
    assert result.history[-1].text_loss >= 0


def test_same_seed_same_result():
    vocab, store, corpus = toy()
    out = []
    for _ in range(2):
        bank, conv = fresh(vocab)
        res = joint_train(TrainConfig(dim=6, kg_rounds=6, text_rounds=2, seed=9, tau=0.5), store, corpus, bank, conv)
        out.append((bank.table.copy(), conv.kernel.copy(), [(h.kg_loss, h.text_loss) for h in res.history]))
    assert np.array_equal(out[0][0], out[1][0]) and np.array_equal(out[0][1], out[1][1])
    assert out[0][2] == out[1][2]


def test_text_only_training_records_rows():
    vocab, store, corpus = toy()
    bank, conv = fresh(vocab)
    res = joint_train(TrainConfig(dim=6, kg_rounds=0, text_rounds=3, tau=1.0), store, corpus, bank, conv)
    assert [h.epoch for h in res.history] == [1, 2, 3] and res.kg_batches == 0


def test_loss_history_file(tmp_path):
    vocab, store, corpus = toy()
    bank, conv = fresh(vocab)
    res = joint_train(TrainConfig(dim=6, kg_rounds=3, text_rounds=1), store, corpus, bank, conv)
    write_loss_history(tmp_path / "loss.tsv", res.history)
    lines = (tmp_path / "loss.tsv").read_text().splitlines()
    assert len(lines) == 3
    for i, line in enumerate(lines, 1):
        epoch, kg, text = line.split("\t")
        assert int(epoch) == i and float(kg) >= 0 and float(text) >= 0


def test_skipgram_init_writes_shared_rows():
    vocab, store, corpus = toy()
    bank, _ = fresh(vocab)
    lines = [s.tokens for s in corpus]
    result = init_from_skipgram(bank, lines, epochs=2, seed=3)
    again = train_skipgram(lines, vocab.n_words, bank.k, epochs=2, seed=3).vectors
    plain = [w for w in range(vocab.n_words) if w not in vocab.mention_entities()]
    assert np.array_equal(bank.word_mat[plain], again[plain])
    for e, w in vocab.anchor_map.items():
        assert np.allclose(bank.entity_mat[e], again[w] / np.linalg.norm(again[w]), rtol=1e-12)
    assert np.array_equal(result.vectors, again)
