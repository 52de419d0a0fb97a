"""Language model scoring, training, and perplexity."""

import math

import numpy as np
import pytest

from ssnt.errors import InputError
from ssnt.lm import (LmConfig, LmModel, lm_logprob, lm_prefix_logprobs,
                     lm_train_epoch, perplexity)
from ssnt.nn import make_rng
from ssnt.vocab import EOS_ID


def make_lm(seed=0, vocab=8, hidden=4, embed=3, layers=1):
    return LmModel(LmConfig(vocab_size=vocab, hidden_dim=hidden,
                            embed_dim=embed, layers=layers), make_rng(seed))


def test_zero_weight_model_is_uniform():
    model = make_lm(vocab=8)
    for p in model.parameters():
        p.value[...] = 0.0
    lp = lm_logprob(model, np.array([3, 4, 5]))
    assert abs(lp - 3 * math.log(1 / 8)) < 1e-12


def test_incremental_prefix_consistency():
    model = make_lm(1)
    y = np.array([3, 4, 5, 3, EOS_ID])
    prefix = lm_prefix_logprobs(model, y)
    running = 0.0
    states = model.score_init()
    for j, tok in enumerate(y):
        logp, states = model.score_step(states, int(tok))
        running += logp
        assert prefix[j] == running
    assert prefix[-1] == lm_logprob(model, y)


def test_next_token_distribution_normalized():
    model = make_lm(2)
    states = model.score_init()
    for tok in (3, 4, 5):
        dist = model.next_log_dist(states)
        assert abs(np.exp(dist).sum() - 1.0) < 1e-12
        _, states = model.score_step(states, tok)


def test_unknown_id_is_input_error():
    model = make_lm(0, vocab=5)
    with pytest.raises(InputError):
        lm_logprob(model, np.array([3, 17, EOS_ID]))


def test_perplexity_uniform_model():
    model = make_lm(vocab=8)
    for p in model.parameters():
        p.value[...] = 0.0
    corpus = [np.array([3, 4, EOS_ID]), np.array([5, EOS_ID])]
    assert abs(perplexity(model, corpus) - 8.0) < 1e-9


def test_perplexity_at_least_one():
    model = make_lm(3)
    corpus = [np.array([3, EOS_ID]), np.array([4, 5, EOS_ID])]
    assert perplexity(model, corpus) >= 1.0


def test_training_reduces_nll_and_learns_bigram():
    # token 4 always follows token 3
    rng = make_rng(7)
    corpus = []
    for _ in range(300):
        n = int(rng.integers(1, 4))
        corpus.append(np.array([3, 4] * n + [EOS_ID]))
    model = make_lm(5, vocab=6, hidden=8, embed=4)
    steps_per = (len(corpus) + 7) // 8
    nll1 = lm_train_epoch(model, corpus, lr=0.01, batch_size=8, rng=make_rng([1, 1]))
    nlls = [nll1]
    for e in range(2, 21):
        nlls.append(lm_train_epoch(model, corpus, lr=0.01, batch_size=8,
                                   rng=make_rng([1, e]),
                                   step_offset=(e - 1) * steps_per))
    assert nlls[1] < nlls[0]
    states = model.score_init()
    _, states = model.score_step(states, 3)
    p_4_after_3 = math.exp(model.next_log_dist(states)[4])
    assert p_4_after_3 > 0.9


def test_overfit_single_sentence_drives_perplexity_down():
    corpus = [np.array([3, 4, 5, EOS_ID])] * 40
    model = make_lm(6, vocab=6, hidden=8, embed=4)
    for epoch in range(30):
        lm_train_epoch(model, corpus, lr=0.02, batch_size=4,
                       rng=make_rng([2, epoch]), step_offset=epoch * 10)
    assert perplexity(model, corpus[:1]) < 1.25


def test_empty_corpus_errors():
    model = make_lm(0)
    with pytest.raises(InputError):
        lm_train_epoch(model, [], rng=make_rng(0))
    with pytest.raises(InputError):
        perplexity(model, [])


def test_two_layer_lm_scores():
    model = make_lm(8, layers=2)
    lp = lm_logprob(model, np.array([3, 4, EOS_ID]))
    assert np.isfinite(lp) and lp < 0


def test_per_token_nll_nonnegative():
    model = make_lm(9)
    corpus = [np.array([3, 4, EOS_ID])]
    nll = lm_train_epoch(model, corpus, lr=1e-4, rng=make_rng(0))
    assert nll >= 0.0


def test_lm_train_epoch_default_lr():
    import inspect
    assert inspect.signature(lm_train_epoch).parameters["lr"].default == 1e-4
