"""The segment-to-segment transduction model.

The joint model factorises over output positions j as

    p(y, z | x) = prod_j p(z_j | z_{j-1}, x_1^{z_j}, y_1^{j-1})
                         * p(y_j | x_1^{z_j}, y_1^{j-1})

with a monotone latent alignment z (z_j = index of the last input token read
before emitting y_j). Input and output are encoded by independent LSTMs; the
word distribution reads the concatenation [h_i; s_j]; alignment transitions
decompose into per-position shift/emit decisions, parameterised either by a
single geometric emission probability or by a small MLP on [h_i; s_j].

Charts are (I, J) float64 arrays in log space, 0-based: column j corresponds
to output step j+1. All valid alignments must end at cell (I-1, J-1): the full
input is consumed when the terminal EOS is emitted. The forward chart masks
the final column accordingly, and the backward recurrence only allows the
transition into (I-1, J-1) out of the last column, so that
sum_i alpha(i,j) * beta(i,j) equals the marginal for every j.

Training gradients are the posterior-weighted sums from the forward-backward
charts: gamma weights on word and emit log-probabilities, aggregated two-slice
posteriors on shift log-probabilities, all treated as constants and pushed
through the op tape.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import BudgetError, ConfigError, InputError, UsageError
from .nn import LstmParams, LstmState, Parameter, uniform_init
from .tape import Node, Tape
from .vocab import BOS_ID

MAX_LATTICE_CELLS = 4096


@dataclass
class SsntConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    hidden_dim: int = 32
    embed_dim: int = 32
    encoder: str = "uni"                 # "uni" | "bi"
    transition_kind: str = "neural"      # "neural" | "geometric"
    transition_hidden_dim: int | None = None
    dropout: float = 0.0

    def __post_init__(self):
        if self.encoder not in ("uni", "bi"):
            raise ConfigError(f"encoder must be 'uni' or 'bi', got {self.encoder!r}")
        if self.transition_kind not in ("neural", "geometric"):
            raise ConfigError(
                f"transition_kind must be 'neural' or 'geometric', got {self.transition_kind!r}")
        if min(self.src_vocab_size, self.tgt_vocab_size) < 3:
            raise ConfigError("vocabulary sizes must be >= 3 (reserved ids)")
        if min(self.hidden_dim, self.embed_dim) < 1:
            raise ConfigError("hidden_dim and embed_dim must be >= 1")
        if self.transition_hidden_dim is None:
            self.transition_hidden_dim = self.hidden_dim
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def enc_dim(self) -> int:
        return 2 * self.hidden_dim if self.encoder == "bi" else self.hidden_dim


class SsntModel:
    """All trainable state of one transduction model."""

    def __init__(self, config: SsntConfig, rng: np.random.Generator):
        self.config = config
        c = config
        self.src_emb = Parameter("src_emb", uniform_init(rng, (c.src_vocab_size, c.embed_dim)))
        self.tgt_emb = Parameter("tgt_emb", uniform_init(rng, (c.tgt_vocab_size, c.embed_dim)))
        self.enc_fwd = LstmParams("enc_fwd", c.embed_dim, c.hidden_dim, rng)
        self.enc_bwd = (LstmParams("enc_bwd", c.embed_dim, c.hidden_dim, rng)
                        if c.encoder == "bi" else None)
        self.dec = LstmParams("dec", c.embed_dim, c.hidden_dim, rng)
        pair_dim = c.enc_dim + c.hidden_dim
        self.w_word = Parameter("w_word", uniform_init(rng, (c.tgt_vocab_size, pair_dim)))
        self.b_word = Parameter("b_word", np.zeros(c.tgt_vocab_size))
        th = c.transition_hidden_dim
        # Present for both kinds; unused (zero gradient) under geometric.
        self.w_trans = Parameter("w_trans", uniform_init(rng, (th, pair_dim)))
        self.b_trans = Parameter("b_trans", np.zeros(th))
        self.w_trans_out = Parameter("w_trans_out", uniform_init(rng, (th,)))
        self.b_trans_out = Parameter("b_trans_out", np.zeros(1))
        # Geometric emission probability; estimated by MLE, never by gradient.
        self.emission = Parameter("emission", np.array([0.5]))

    def parameters(self) -> list[Parameter]:
        out = [self.src_emb, self.tgt_emb]
        out += self.enc_fwd.parameters()
        if self.enc_bwd is not None:
            out += self.enc_bwd.parameters()
        out += self.dec.parameters()
        out += [self.w_word, self.b_word, self.w_trans, self.b_trans,
                self.w_trans_out, self.b_trans_out, self.emission]
        return out

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def set_emission(self, e: float):
        if not 0.0 < e < 1.0:
            raise ConfigError(f"emission probability must be in (0, 1), got {e}")
        self.emission.value[0] = e

    # -- plain (non-tape) forward helpers, used by charts and decoding -------

    @property
    def tgt_vocab_size(self) -> int:
        return self.config.tgt_vocab_size

    @property
    def src_vocab_size(self) -> int:
        return self.config.src_vocab_size

    def encode_states(self, x_ids: np.ndarray) -> np.ndarray:
        """Encoder states as an (I, enc_dim) array; see encode()."""
        x_ids = np.asarray(x_ids, dtype=np.int64)
        if x_ids.size == 0:
            raise InputError("cannot encode an empty input sequence")
        if int(x_ids.max()) >= self.config.src_vocab_size:
            raise InputError("input id out of range for the source vocabulary")
        hdim = self.config.hidden_dim
        state = LstmState.zeros(hdim)
        fwd = []
        for tok in x_ids:
            state = nn.lstm_step(self.enc_fwd, self.src_emb.value[tok], state)
            fwd.append(state.h)
        if self.enc_bwd is None:
            return np.stack(fwd)
        state = LstmState.zeros(hdim)
        bwd = [None] * len(x_ids)
        for i in range(len(x_ids) - 1, -1, -1):
            state = nn.lstm_step(self.enc_bwd, self.src_emb.value[x_ids[i]], state)
            bwd[i] = state.h
        return np.concatenate([np.stack(fwd), np.stack(bwd)], axis=1)

    def dec_init(self) -> LstmState:
        """Decoder state after consuming BOS only (s_1)."""
        return nn.lstm_step(self.dec, self.tgt_emb.value[BOS_ID],
                            LstmState.zeros(self.config.hidden_dim))

    def dec_step(self, state: LstmState, token: int) -> LstmState:
        return nn.lstm_step(self.dec, self.tgt_emb.value[token], state)

    def decoder_states(self, y_ids: np.ndarray) -> np.ndarray:
        """Prefix states s_1..s_J as a (J, H) array; s_j excludes y_j."""
        y_ids = np.asarray(y_ids, dtype=np.int64)
        if y_ids.size == 0:
            raise InputError("output sequence must be nonempty")
        state = self.dec_init()
        rows = [state.h]
        for tok in y_ids[:-1]:
            state = self.dec_step(state, int(tok))
            rows.append(state.h)
        return np.stack(rows)

    @staticmethod
    def _state_vec(s) -> np.ndarray:
        # Decoders pass opaque decoder states; charts pass plain h-vectors.
        return s.h if isinstance(s, LstmState) else s

    def word_log_rows(self, h_rows: np.ndarray, s) -> np.ndarray:
        """Log word distributions for each encoder row paired with one s."""
        s = self._state_vec(s)
        pairs = np.concatenate(
            [h_rows, np.broadcast_to(s, (h_rows.shape[0], s.shape[0]))], axis=1)
        return nn.log_softmax_rows(pairs @ self.w_word.value.T + self.b_word.value)

    def word_log_pairs(self, h: np.ndarray, s_rows: np.ndarray) -> np.ndarray:
        """Log word distributions for one h paired with each decoder row."""
        pairs = np.concatenate(
            [np.broadcast_to(h, (s_rows.shape[0], h.shape[0])), s_rows], axis=1)
        return nn.log_softmax_rows(pairs @ self.w_word.value.T + self.b_word.value)

    def _emit_logits(self, pairs: np.ndarray) -> np.ndarray:
        hidden = np.tanh(pairs @ self.w_trans.value.T + self.b_trans.value)
        return hidden @ self.w_trans_out.value + self.b_trans_out.value[0]

    def transition_cols(self, h_rows: np.ndarray, s):
        """(log_emit, log_shift) per encoder row for one decoder state."""
        n = h_rows.shape[0]
        if self.config.transition_kind == "geometric":
            e = self.emission.value[0]
            return np.full(n, np.log(e)), np.full(n, np.log1p(-e))
        s = self._state_vec(s)
        pairs = np.concatenate([h_rows, np.broadcast_to(s, (n, s.shape[0]))], axis=1)
        logits = self._emit_logits(pairs)
        return nn.log_sigmoid(logits), nn.log_sigmoid(-logits)

    def transition_pairs(self, h: np.ndarray, s_rows: np.ndarray):
        """(log_emit, log_shift) per decoder row for one encoder state."""
        n = s_rows.shape[0]
        if self.config.transition_kind == "geometric":
            e = self.emission.value[0]
            return np.full(n, np.log(e)), np.full(n, np.log1p(-e))
        pairs = np.concatenate([np.broadcast_to(h, (n, h.shape[0])), s_rows], axis=1)
        logits = self._emit_logits(pairs)
        return nn.log_sigmoid(logits), nn.log_sigmoid(-logits)


# ---------------------------------------------------------------------------
# Spec-level operations on the model
# ---------------------------------------------------------------------------


def encode(model: SsntModel, x_ids) -> np.ndarray:
    """Encoder states h_1..h_I, one row per input token.

    Unidirectional: row i depends only on x_1..x_i (online property).
    Bidirectional: rows are [h_i_forward; h_i_backward] of width 2H.
    """
    return model.encode_states(np.asarray(x_ids, dtype=np.int64))


def decoder_prefix_states(model: SsntModel, y_ids) -> np.ndarray:
    """States s_1..s_J; s_j encodes BOS, y_1..y_{j-1} and never consumes y_j."""
    return model.decoder_states(np.asarray(y_ids, dtype=np.int64))


def word_log_dist(model: SsntModel, h_i: np.ndarray, s_j: np.ndarray) -> np.ndarray:
    """log softmax(W_word [h_i; s_j] + b_word) over the target vocabulary."""
    return model.word_log_rows(h_i[None, :], s_j)[0]


def emit_logprob(model: SsntModel, h_i: np.ndarray, s_j: np.ndarray):
    """(log_emit, log_shift) for the neural transition model."""
    if model.config.transition_kind != "neural":
        raise UsageError("emit_logprob requires transition_kind='neural'")
    le, ls = model.transition_cols(h_i[None, :], s_j)
    return float(le[0]), float(ls[0])


def mle_emission(pairs) -> float:
    """Closed-form geometric emission: sum(J_n) / (sum(I_n) + sum(J_n)).

    Lengths include the terminal EOS on both sides.
    """
    total_i = total_j = 0
    for src, tgt in pairs:
        total_i += len(src)
        total_j += len(tgt)
    if total_i + total_j == 0:
        raise InputError("mle_emission: empty corpus")
    return total_j / (total_i + total_j)


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------


@dataclass
class Lattice:
    """Per-pair log-domain tables and charts, all (I, J) float64."""

    I: int
    J: int
    log_word: np.ndarray
    log_emit: np.ndarray
    log_shift: np.ndarray
    log_alpha: np.ndarray | None = None
    log_beta: np.ndarray | None = None
    cumshift: np.ndarray = field(init=False)   # (I+1, J): sum_{i'<i} log_shift

    def __post_init__(self):
        self.cumshift = np.vstack(
            [np.zeros((1, self.J)), np.cumsum(self.log_shift, axis=0)])

    @property
    def log_marginal(self) -> float:
        return float(self.log_alpha[self.I - 1, self.J - 1])


@dataclass
class Posteriors:
    """gamma[i, j] = p(z_{j+1} = i+1 | x, y) and the two-slice posteriors.

    xi[j, k, i] = p(z_j = k+1, z_{j+1} = i+1 | x, y) for j >= 1 (the first
    slice is all zeros: step 1 has no predecessor).
    """

    gamma: np.ndarray
    xi: np.ndarray


def forward_log_alpha(log_word, log_emit, log_shift) -> np.ndarray:
    """Forward chart; the final column is masked to enforce ending at I."""
    I, J = log_word.shape
    cs = np.vstack([np.zeros((1, J)), np.cumsum(log_shift, axis=0)])
    la = np.empty((I, J))
    la[:, 0] = cs[:I, 0] + log_emit[:, 0] + log_word[:, 0]
    for j in range(1, J):
        prev = la[:, j - 1] - cs[:I, j]
        prefix = np.logaddexp.accumulate(prev)
        la[:, j] = log_word[:, j] + log_emit[:, j] + cs[:I, j] + prefix
    la[: I - 1, J - 1] = -np.inf
    return la


def backward_log_beta(log_word, log_emit, log_shift) -> np.ndarray:
    """Backward chart; stored base column is 0 for every row.

    The recurrence out of the final column only admits the end cell (I-1, J-1)
    so that the chart identity sum_i alpha * beta = marginal holds at every j.
    """
    I, J = log_word.shape
    cs = np.vstack([np.zeros((1, J)), np.cumsum(log_shift, axis=0)])
    lb = np.zeros((I, J))
    for j in range(J - 2, -1, -1):
        beta_next = lb[:, j + 1].copy()
        if j + 1 == J - 1:
            beta_next[: I - 1] = -np.inf
        terms = beta_next + cs[:I, j + 1] + log_emit[:, j + 1] + log_word[:, j + 1]
        suffix = np.logaddexp.accumulate(terms[::-1])[::-1]
        lb[:, j] = suffix - cs[:I, j + 1]
    return lb


def _lattice_tables(model: SsntModel, x_ids, y_ids):
    x_ids = np.asarray(x_ids, dtype=np.int64)
    y_ids = np.asarray(y_ids, dtype=np.int64)
    if y_ids.size == 0:
        raise InputError("output sequence must be nonempty")
    I, J = len(x_ids), len(y_ids)
    if I * J > MAX_LATTICE_CELLS:
        raise BudgetError(f"lattice {I}x{J} exceeds the {MAX_LATTICE_CELLS}-cell budget")
    h_rows = model.encode_states(x_ids)
    s_rows = model.decoder_states(y_ids)
    log_word = np.empty((I, J))
    log_emit = np.empty((I, J))
    log_shift = np.empty((I, J))
    for j in range(J):
        log_word[:, j] = model.word_log_rows(h_rows, s_rows[j])[:, y_ids[j]]
        log_emit[:, j], log_shift[:, j] = model.transition_cols(h_rows, s_rows[j])
    return log_word, log_emit, log_shift


def forward_chart(model: SsntModel, x_ids, y_ids) -> Lattice:
    """Build the per-pair tables and fill the forward chart."""
    log_word, log_emit, log_shift = _lattice_tables(model, x_ids, y_ids)
    lat = Lattice(*log_word.shape, log_word, log_emit, log_shift)
    lat.log_alpha = forward_log_alpha(log_word, log_emit, log_shift)
    return lat


def backward_chart(lattice: Lattice) -> Lattice:
    """Fill the backward chart on a lattice whose forward chart is done."""
    if lattice.log_alpha is None:
        raise UsageError("backward_chart requires a completed forward chart")
    lattice.log_beta = backward_log_beta(
        lattice.log_word, lattice.log_emit, lattice.log_shift)
    return lattice


def transition_logprob(lattice: Lattice, k: int | None, i: int, j: int) -> float:
    """log p(z_{j+1} = i+1 | z_j = k+1) from the cached lattice tables.

    Indices are 0-based. For j == 0 the start convention applies: the walk
    begins at input position 0, so k must be 0 (or None).
    """
    I, J = lattice.I, lattice.J
    if not (0 <= i < I and 0 <= j < J):
        raise UsageError(f"cell ({i}, {j}) outside the {I}x{J} lattice")
    if j == 0:
        if k not in (None, 0):
            raise UsageError("the first output step starts at input position 0")
        k = 0
    else:
        if not 0 <= k < I:
            raise UsageError(f"predecessor {k} outside the lattice")
        if i < k:
            return -np.inf
    shifts = lattice.cumshift[i, j] - lattice.cumshift[k, j]
    return float(shifts + lattice.log_emit[i, j])


def nll_loss(model: SsntModel, x_ids, y_ids) -> float:
    """-log p(y | x), the exact marginal over monotone alignments."""
    lat = forward_chart(model, x_ids, y_ids)
    m = lat.log_marginal
    if not np.isfinite(m):
        raise InputError("pair has zero probability under the alignment constraints")
    return -m


def posteriors(lattice: Lattice) -> Posteriors:
    """Alignment posteriors from the completed forward and backward charts."""
    if lattice.log_alpha is None or lattice.log_beta is None:
        raise UsageError("posteriors require both charts")
    I, J = lattice.I, lattice.J
    la, lb = lattice.log_alpha, lattice.log_beta
    m = lattice.log_marginal
    gamma = np.exp(la + lb - m)
    xi = np.zeros((J, I, I))
    tri = np.triu(np.ones((I, I)))     # rows k, cols i, nonzero for k <= i
    for j in range(1, J):
        beta_eff = lb[:, j].copy()
        if j == J - 1:
            beta_eff[: I - 1] = -np.inf
        from_k = la[:, j - 1] - lattice.cumshift[:I, j]
        to_i = (lattice.cumshift[:I, j] + lattice.log_emit[:, j]
                + lattice.log_word[:, j] + beta_eff - m)
        xi[j] = np.exp(from_k[:, None] + to_i[None, :]) * tri
    return Posteriors(gamma, xi)


def shift_posterior_weights(post: Posteriors) -> np.ndarray:
    """Expected number of times the shift at cell (i, j) is taken.

    At step 1 a walk emitting at position i shifts through every position
    below i; at later steps the transitions k -> i shift through k..i-1.
    Summed over the whole lattice these weights total exactly I - 1.
    """
    I, J = post.gamma.shape
    ws = np.zeros((I, J))
    incl = np.cumsum(post.gamma[::-1, 0])[::-1]
    ws[:, 0] = np.concatenate([incl[1:], [0.0]])
    for j in range(1, J):
        s_incl = np.cumsum(post.xi[j][:, ::-1], axis=1)[:, ::-1]
        excl = np.zeros((I, I))
        excl[:, :-1] = s_incl[:, 1:]
        ws[:, j] = np.diagonal(np.cumsum(excl, axis=0))
    return ws


# ---------------------------------------------------------------------------
# Training graph and the per-example gradient
# ---------------------------------------------------------------------------


@dataclass
class _TrainGraph:
    log_word: np.ndarray
    log_emit: np.ndarray
    log_shift: np.ndarray
    word_node: Node
    emit_node: Node | None
    shift_node: Node | None


def _build_train_graph(model: SsntModel, t: Tape, x_ids, y_ids,
                       rng: np.random.Generator | None, training: bool) -> _TrainGraph:
    c = model.config
    I, J = len(x_ids), len(y_ids)
    if I * J > MAX_LATTICE_CELLS:
        raise BudgetError(f"lattice {I}x{J} exceeds the {MAX_LATTICE_CELLS}-cell budget")
    rate = c.dropout if training else 0.0
    if rate > 0.0 and rng is None:
        raise UsageError("dropout requires an rng stream")

    def masks(n, dim):
        if rate == 0.0:
            return None
        return nn.dropout_mask(n * dim, rate, rng, training).reshape(n, dim)

    in_mask_x = masks(I, c.embed_dim)
    out_mask_h = masks(I, c.enc_dim)
    in_mask_y = masks(J, c.embed_dim)
    out_mask_s = masks(J, c.hidden_dim)

    x_emb = [t.lookup(model.src_emb, int(tok)) for tok in x_ids]
    if in_mask_x is not None:
        x_emb = [t.mul_const(e, in_mask_x[i]) for i, e in enumerate(x_emb)]
    state = None
    fwd = []
    for e in x_emb:
        state = t.lstm_step(model.enc_fwd, e, state)
        fwd.append(state[0])
    if model.enc_bwd is not None:
        state = None
        bwd = [None] * I
        for i in range(I - 1, -1, -1):
            state = t.lstm_step(model.enc_bwd, x_emb[i], state)
            bwd[i] = state[0]
        h_mat = t.stack([t.concat(fwd[i], bwd[i]) for i in range(I)])
    else:
        h_mat = t.stack(fwd)
    if out_mask_h is not None:
        h_mat = t.mul_const(h_mat, out_mask_h)

    dec_in = [BOS_ID] + [int(tok) for tok in y_ids[:-1]]
    y_emb = [t.lookup(model.tgt_emb, tok) for tok in dec_in]
    if in_mask_y is not None:
        y_emb = [t.mul_const(e, in_mask_y[j]) for j, e in enumerate(y_emb)]
    state = None
    s_nodes = []
    for e in y_emb:
        state = t.lstm_step(model.dec, e, state)
        s_nodes.append(state[0])
    s_mat = t.stack(s_nodes)
    if out_mask_s is not None:
        s_mat = t.mul_const(s_mat, out_mask_s)

    pairs = t.pair_table(h_mat, s_mat)   # row j*I + i holds [h_i; s_j]
    word_logits = t.rows_affine(pairs, t.param(model.w_word), t.param(model.b_word))
    word_lsm = t.log_softmax_rows(word_logits)
    cols = np.repeat(np.asarray(y_ids, dtype=np.int64), I)
    word_node = t.take_cols(word_lsm, cols)
    log_word = word_node.value.reshape(J, I).T

    if c.transition_kind == "neural":
        hidden = t.tanh(t.rows_affine(pairs, t.param(model.w_trans), t.param(model.b_trans)))
        logits = t.rows_dot(hidden, t.param(model.w_trans_out), t.param(model.b_trans_out))
        emit_node = t.log_sigmoid(logits)
        shift_node = t.log_sigmoid(t.neg(logits))
        log_emit = emit_node.value.reshape(J, I).T
        log_shift = shift_node.value.reshape(J, I).T
    else:
        e = model.emission.value[0]
        emit_node = shift_node = None
        log_emit = np.full((I, J), np.log(e))
        log_shift = np.full((I, J), np.log1p(-e))

    return _TrainGraph(log_word, log_emit, log_shift, word_node, emit_node, shift_node)


def example_gradient(model: SsntModel, x_ids, y_ids, *,
                     rng: np.random.Generator | None = None,
                     training: bool = True) -> float:
    """Accumulate d(-log p(y|x))/d(theta) into the model's gradients.

    Returns the negative log marginal of the example. The posterior weights
    gamma and xi are computed from the charts and enter the backward pass as
    constants; under the geometric transition model the transition tables
    contribute no gradient at all.
    """
    x_ids = np.asarray(x_ids, dtype=np.int64)
    y_ids = np.asarray(y_ids, dtype=np.int64)
    if y_ids.size == 0 or x_ids.size == 0:
        raise InputError("both sides of a training pair must be nonempty")
    t = Tape()
    graph = _build_train_graph(model, t, x_ids, y_ids, rng, training)
    la = forward_log_alpha(graph.log_word, graph.log_emit, graph.log_shift)
    marginal = float(la[-1, -1])
    if not np.isfinite(marginal):
        raise InputError("pair has zero probability under the alignment constraints")
    lb = backward_log_beta(graph.log_word, graph.log_emit, graph.log_shift)
    lat = Lattice(len(x_ids), len(y_ids), graph.log_word, graph.log_emit,
                  graph.log_shift, la, lb)
    post = posteriors(lat)
    gamma_flat = post.gamma.T.reshape(-1)
    loss = t.weighted_sum(graph.word_node, -gamma_flat)
    if graph.emit_node is not None:
        w_shift = shift_posterior_weights(post)
        loss = t.add(loss, t.weighted_sum(graph.emit_node, -gamma_flat))
        loss = t.add(loss, t.weighted_sum(graph.shift_node, -w_shift.T.reshape(-1)))
    t.backward(loss)
    return -marginal


# ---------------------------------------------------------------------------
# Enumeration oracle
# ---------------------------------------------------------------------------


def brute_force_marginal(model: SsntModel, x_ids, y_ids) -> float:
    """p(y | x) by enumerating every monotone alignment ending at I.

    Linear-space products over the same per-cell tables the charts use; this
    is the independent check for the forward recurrence. Refuses instances
    beyond I, J <= 6.
    """
    x_ids = np.asarray(x_ids, dtype=np.int64)
    y_ids = np.asarray(y_ids, dtype=np.int64)
    if y_ids.size == 0:
        return 0.0
    I, J = len(x_ids), len(y_ids)
    if I > 6 or J > 6:
        raise UsageError(f"brute force refused for {I}x{J} (limit 6x6)")
    log_word, log_emit, log_shift = _lattice_tables(model, x_ids, y_ids)
    p_word, p_emit, p_shift = np.exp(log_word), np.exp(log_emit), np.exp(log_shift)
    total = 0.0
    for z in itertools.combinations_with_replacement(range(I), J):
        if z[-1] != I - 1:
            continue
        prob = 1.0
        prev = 0
        for j, zi in enumerate(z):
            for pos in range(prev, zi):
                prob *= p_shift[pos, j]
            prob *= p_emit[zi, j] * p_word[zi, j]
            prev = zi
        total += prob
    return total
