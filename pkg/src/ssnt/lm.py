"""Recurrent language model over the target vocabulary.

p(y) decomposes into next-token distributions conditioned on the prefix,
computed by an embedding, one or more LSTM layers, and a softmax projection.
Scoring is incremental (one step per token), which the noisy-channel decoder
relies on; training follows the same tape/optimizer machinery as the
transduction model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, InputError
from .nn import LstmParams, LstmState, Parameter, uniform_init
from .tape import Tape
from .vocab import BOS_ID


@dataclass
class LmConfig:
    vocab_size: int
    hidden_dim: int = 64
    embed_dim: int = 32
    layers: int = 1
    dropout: float = 0.0

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ConfigError("vocab_size must be >= 3 (reserved ids)")
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


class LmModel:
    def __init__(self, config: LmConfig, rng: np.random.Generator):
        self.config = config
        c = config
        self.emb = Parameter("lm_emb", uniform_init(rng, (c.vocab_size, c.embed_dim)))
        self.lstms = [LstmParams(f"lm_lstm{l}", c.embed_dim if l == 0 else c.hidden_dim,
                                 c.hidden_dim, rng)
                      for l in range(c.layers)]
        self.w_out = Parameter("lm_w_out", uniform_init(rng, (c.vocab_size, c.hidden_dim)))
        self.b_out = Parameter("lm_b_out", np.zeros(c.vocab_size))

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def parameters(self) -> list[Parameter]:
        out = [self.emb]
        for layer in self.lstms:
            out += layer.parameters()
        return out + [self.w_out, self.b_out]

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    # -- incremental scoring -------------------------------------------------

    def _advance(self, states: list[LstmState], token: int) -> list[LstmState]:
        x = self.emb.value[token]
        new_states = []
        for layer, st in zip(self.lstms, states):
            st = nn.lstm_step(layer, x, st)
            new_states.append(st)
            x = st.h
        return new_states

    def score_init(self) -> list[LstmState]:
        """State after consuming BOS, ready to score the first token."""
        states = [LstmState.zeros(self.config.hidden_dim) for _ in self.lstms]
        return self._advance(states, BOS_ID)

    def next_log_dist(self, states: list[LstmState]) -> np.ndarray:
        return nn.log_softmax(self.w_out.value @ states[-1].h + self.b_out.value)

    def score_step(self, states: list[LstmState], token: int):
        """(log p(token | prefix), state with token consumed)."""
        token = int(token)
        if not 0 <= token < self.config.vocab_size:
            raise InputError(f"token id {token} outside the vocabulary")
        logp = float(self.next_log_dist(states)[token])
        return logp, self._advance(states, token)


def lm_logprob(model: LmModel, y_ids) -> float:
    """log p(y) = sum_j log p(y_j | y_1^{j-1}); y must end with EOS."""
    y_ids = np.asarray(y_ids, dtype=np.int64)
    if y_ids.size == 0:
        raise InputError("cannot score an empty sequence")
    states = model.score_init()
    total = 0.0
    for tok in y_ids:
        logp, states = model.score_step(states, int(tok))
        total += logp
    return total


def lm_prefix_logprobs(model: LmModel, y_ids) -> np.ndarray:
    """Running log p(y_1^j) for j = 1..J; the last entry equals lm_logprob."""
    y_ids = np.asarray(y_ids, dtype=np.int64)
    states = model.score_init()
    out = np.empty(len(y_ids))
    total = 0.0
    for j, tok in enumerate(y_ids):
        logp, states = model.score_step(states, int(tok))
        total += logp
        out[j] = total
    return out


def lm_loss_graph(model: LmModel, t: Tape, y_ids,
                  rng: np.random.Generator | None, training: bool):
    """Tape node for the sequence NLL (its value is the exact loss)."""
    c = model.config
    J = len(y_ids)
    rate = c.dropout if training else 0.0
    dec_in = [BOS_ID] + [int(tok) for tok in y_ids[:-1]]
    xs = [t.lookup(model.emb, tok) for tok in dec_in]
    for layer_idx, layer in enumerate(model.lstms):
        if rate > 0.0:
            masks = nn.dropout_mask(J * xs[0].value.shape[0], rate, rng, training)
            masks = masks.reshape(J, -1)
            xs = [t.mul_const(x, masks[j]) for j, x in enumerate(xs)]
        state = None
        hs = []
        for x in xs:
            state = t.lstm_step(layer, x, state)
            hs.append(state[0])
        xs = hs
    h_mat = t.stack(xs)
    if rate > 0.0:
        mask = nn.dropout_mask(J * c.hidden_dim, rate, rng, training).reshape(J, -1)
        h_mat = t.mul_const(h_mat, mask)
    logits = t.rows_affine(h_mat, t.param(model.w_out), t.param(model.b_out))
    lsm = t.log_softmax_rows(logits)
    picked = t.take_cols(lsm, np.asarray(y_ids, dtype=np.int64))
    return t.weighted_sum(picked, -np.ones(J))


def lm_example_gradient(model: LmModel, y_ids, *,
                        rng: np.random.Generator | None = None,
                        training: bool = True) -> float:
    """Accumulate gradients of the sequence NLL; returns the NLL."""
    y_ids = np.asarray(y_ids, dtype=np.int64)
    if y_ids.size == 0:
        raise InputError("cannot train on an empty sequence")
    t = Tape()
    loss = lm_loss_graph(model, t, y_ids, rng, training)
    t.backward(loss)
    return float(loss.value)


def lm_train_epoch(model: LmModel, corpus, *, lr: float = 1e-4, batch_size: int = 32,
                   clip_norm: float = 5.0, rng: np.random.Generator | None = None,
                   shuffle: bool = True, step_offset: int = 0) -> float:
    """One pass of batched Adam over a monolingual corpus of id arrays.

    Returns the mean per-token NLL of the epoch (EOS counted as a token).
    """
    if len(corpus) == 0:
        raise InputError("lm_train_epoch: empty corpus")
    params = model.parameters()
    order = np.arange(len(corpus))
    if shuffle:
        if rng is None:
            raise InputError("shuffling requires an rng stream")
        order = rng.permutation(len(corpus))
    total_nll = 0.0
    total_tokens = 0
    step = step_offset
    for start in range(0, len(order), batch_size):
        batch = order[start:start + batch_size]
        for idx in batch:
            y = corpus[idx]
            total_nll += lm_example_gradient(model, y, rng=rng)
            total_tokens += len(y)
        nn.clip_gradients(params, clip_norm)
        step += 1
        nn.adam_step(params, lr, step_count=step)
    return total_nll / total_tokens


def perplexity(model: LmModel, corpus) -> float:
    """exp(mean per-token NLL) over a corpus of id arrays (EOS counted)."""
    if len(corpus) == 0:
        raise InputError("perplexity: empty corpus")
    total = 0.0
    tokens = 0
    for y in corpus:
        total -= lm_logprob(model, y)
        tokens += len(y)
    return float(np.exp(total / tokens))
