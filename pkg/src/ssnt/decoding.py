"""Generate-and-align decoding: greedy DP, per-cell beams, noisy channel.

All three searches walk an I x J_max grid of cells (i, j) = "read i+1 input
tokens, emitted j+1 output tokens", extending cells of column j-1 into column
j with one output token and a monotone alignment jump. EOS may only be emitted
at i = I-1 (an alignment that ends before consuming the input has probability
zero under the model's end constraint), and cells whose hypothesis already
emitted EOS are terminal.

Stopping follows the DP search scheme: after filling a column, if the best
hypothesis of the column ends with EOS the search stops. The best
EOS-terminated hypothesis seen anywhere is tracked and returned, which makes
saturating-width beam search exactly equal to exhaustive argmax of p(y, z | x);
if no hypothesis ever emits EOS the best partial hypothesis of row I is
returned instead (the no-EOS fallback).

Tie-breaking everywhere: higher score, then lower token id, then lower
predecessor k, then source-beam rank.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, InternalError
from .lm import LmModel
from .model import SsntModel
from .nn import LstmState, lstm_step
from .vocab import EOS_ID


@dataclass
class CombinationWeights:
    """Interpolation weights of the decoding objective.

    direct/channel/lm scale the respective log scores; length_bias is added
    once per output token (positive values favour longer candidates).
    """

    direct: float = 1.0
    channel: float = 0.0
    lm: float = 0.0
    length_bias: float = 0.0


def combination_score(weights: CombinationWeights, direct_lp: float,
                      channel_lp: float, lm_lp: float, out_len: int) -> float:
    return (weights.direct * direct_lp + weights.channel * channel_lp
            + weights.lm * lm_lp + weights.length_bias * out_len)


@dataclass
class DecodeResult:
    tokens: list[int]          # emitted ids, terminal EOS stripped
    alignment: list[int]       # 1-based input position per emission, EOS step included
    score: float
    complete: bool             # True iff the hypothesis ended with EOS


def default_j_max(input_len: int, cap: int = 64) -> int:
    return min(2 * input_len + 10, cap)


def _finish(prefix, align, score) -> DecodeResult:
    prefix = list(prefix)
    complete = bool(prefix) and prefix[-1] == EOS_ID
    tokens = prefix[:-1] if complete else prefix
    return DecodeResult(tokens, [a + 1 for a in align], float(score), complete)


def _extension_tables(model, enc, state, k):
    """Transition and word scores for extending from source row k.

    state is the opaque decoder state of the hypothesis being extended.
    Returns (trans, word): trans[r] is the alignment log-probability of the
    jump k -> k+r, word[r] the log word distribution at row k+r with EOS
    masked everywhere except the last input position.
    """
    log_emit, log_shift = model.transition_cols(enc, state)
    cum = np.concatenate([[0.0], np.cumsum(log_shift)])
    trans = cum[k:-1] - cum[k] + log_emit[k:]
    word = model.word_log_rows(enc[k:], state).copy()
    word[:-1, EOS_ID] = -np.inf
    return trans, word


# ---------------------------------------------------------------------------
# Greedy search over a path-probability chart
# ---------------------------------------------------------------------------


def greedy_decode(model, x_ids, j_max: int) -> DecodeResult:
    """Fill Q/bp/W cell by cell, keeping the single best path per cell."""
    if j_max < 1:
        raise ConfigError(f"j_max must be >= 1, got {j_max}")
    x_ids = np.asarray(x_ids, dtype=np.int64)
    if x_ids.size == 0:
        raise InputError("cannot decode an empty input")
    enc = model.encode_states(x_ids)
    I = len(x_ids)
    Q = np.full((I, j_max), -np.inf)
    bp = np.full((I, j_max), -1, dtype=np.int64)
    W = np.full((I, j_max), -1, dtype=np.int64)
    states: list[list[LstmState | None]] = [[None] * j_max for _ in range(I)]
    best_complete = None       # (score, i, j)

    s1 = model.dec_init()
    trans, word = _extension_tables(model, enc, s1, 0)
    for i in range(I):
        tok = int(np.argmax(word[i]))
        cand = trans[i] + word[i, tok]
        if np.isfinite(cand):
            Q[i, 0] = cand
            W[i, 0] = tok
            states[i][0] = model.dec_step(s1, tok)
    j_last = 0
    for j in range(j_max):
        if j > 0:
            for k in range(I):
                if not np.isfinite(Q[k, j - 1]) or W[k, j - 1] == EOS_ID:
                    continue
                q = Q[k, j - 1]
                trans, word = _extension_tables(model, enc, states[k][j - 1], k)
                for r in range(I - k):
                    i = k + r
                    tok = int(np.argmax(word[r]))
                    cand = q + trans[r] + word[r, tok]
                    if not np.isfinite(cand):
                        continue
                    if cand > Q[i, j] or (cand == Q[i, j] and tok < W[i, j]):
                        Q[i, j] = cand
                        W[i, j] = tok
                        bp[i, j] = k
            for i in range(I):
                if np.isfinite(Q[i, j]):
                    states[i][j] = model.dec_step(states[bp[i, j]][j - 1], int(W[i, j]))
        j_last = j
        for i in range(I):
            if np.isfinite(Q[i, j]) and W[i, j] == EOS_ID:
                if best_complete is None or Q[i, j] > best_complete[0]:
                    best_complete = (Q[i, j], i, j)
        i_best = int(np.argmax(Q[:, j]))
        if not np.isfinite(Q[i_best, j]):
            break
        if W[i_best, j] == EOS_ID:
            break

    if best_complete is not None:
        _, i_end, j_end = best_complete
    else:
        i_end = I - 1
        j_end = int(np.argmax(Q[I - 1, : j_last + 1]))
    prefix, align = [], []
    i, j = i_end, j_end
    while j >= 0:
        prefix.append(int(W[i, j]))
        align.append(i)
        i, j = int(bp[i, j]), j - 1
    prefix.reverse()
    align.reverse()
    return _finish(prefix, align, Q[i_end, j_end])


# ---------------------------------------------------------------------------
# Per-cell beam search
# ---------------------------------------------------------------------------


@dataclass
class _BeamHyp:
    prefix: tuple
    align: tuple
    score: float
    state: LstmState


def beam_decode(model, x_ids, j_max: int, k: int) -> DecodeResult:
    """Track the k best partial hypotheses per cell; k=1 reproduces greedy."""
    if j_max < 1:
        raise ConfigError(f"j_max must be >= 1, got {j_max}")
    if k < 1:
        raise ConfigError(f"beam width must be >= 1, got {k}")
    x_ids = np.asarray(x_ids, dtype=np.int64)
    if x_ids.size == 0:
        raise InputError("cannot decode an empty input")
    enc = model.encode_states(x_ids)
    I = len(x_ids)
    vocab = model.tgt_vocab_size
    best_complete: _BeamHyp | None = None
    fallback: _BeamHyp | None = None

    s1 = model.dec_init()
    trans, word = _extension_tables(model, enc, s1, 0)
    prev_col: list[list[_BeamHyp]] = [[] for _ in range(I)]
    for i in range(I):
        cands = sorted(
            ((trans[i] + word[i, tok], tok) for tok in range(vocab)
             if np.isfinite(trans[i] + word[i, tok])),
            key=lambda c: (-c[0], c[1]))[:k]
        prev_col[i] = [
            _BeamHyp((tok,), (i,), sc, model.dec_step(s1, tok)) for sc, tok in cands]

    for j in range(j_max):
        if j > 0:
            per_cell: list[list] = [[] for _ in range(I)]
            for src in range(I):
                for rank, hyp in enumerate(prev_col[src]):
                    if hyp.prefix[-1] == EOS_ID:
                        continue
                    trans, word = _extension_tables(model, enc, hyp.state, src)
                    for r in range(I - src):
                        i = src + r
                        base = hyp.score + trans[r]
                        row = word[r]
                        for tok in range(vocab):
                            sc = base + row[tok]
                            if np.isfinite(sc):
                                per_cell[i].append((sc, tok, src, rank, hyp))
            col: list[list[_BeamHyp]] = [[] for _ in range(I)]
            for i in range(I):
                best = sorted(per_cell[i], key=lambda c: (-c[0], c[1], c[2], c[3]))[:k]
                col[i] = [
                    _BeamHyp(h.prefix + (tok,), h.align + (i,), sc,
                             model.dec_step(h.state, tok))
                    for sc, tok, _, _, h in best]
            prev_col = col
        for i in range(I):
            for hyp in prev_col[i]:
                if hyp.prefix[-1] == EOS_ID:
                    if best_complete is None or hyp.score > best_complete.score:
                        best_complete = hyp
        col_best = None
        for i in range(I):
            if prev_col[i] and (col_best is None or prev_col[i][0].score > col_best.score):
                col_best = prev_col[i][0]
        if col_best is None:
            break
        if prev_col[I - 1] and (fallback is None
                                or prev_col[I - 1][0].score > fallback.score):
            fallback = prev_col[I - 1][0]
        if col_best.prefix[-1] == EOS_ID:
            break

    chosen = best_complete if best_complete is not None else fallback
    return _finish(chosen.prefix, chosen.align, chosen.score)


# ---------------------------------------------------------------------------
# Incremental channel chart
# ---------------------------------------------------------------------------


@dataclass
class ChannelColumn:
    """Forward-chart row of the channel model for one hypothesis prefix.

    log_alpha[b] = log p(x_1^{b+1}, alignment at row `length` | y_1^length);
    log_prefix[b] carries the running inner sum of the forward recurrence and
    log_shift[b] the shift scores of this row, both needed to extend the chart
    by one more hypothesis token in O(|x|). Columns are append-only: extending
    returns a new column and never mutates the cached one.
    """

    length: int
    log_alpha: np.ndarray
    log_prefix: np.ndarray
    log_shift: np.ndarray
    enc_state: LstmState


class ChannelScorer:
    """Incremental p(x_1^i | y_1^j) under a channel model (maps y -> x)."""

    def __init__(self, channel: SsntModel, x_ids):
        if channel.config.encoder != "uni":
            raise ConfigError("the channel model must use a unidirectional encoder")
        self.channel = channel
        self.x_ids = np.asarray(x_ids, dtype=np.int64)
        self.n_out = len(self.x_ids)
        self.dec_rows = channel.decoder_states(self.x_ids)

    def initial_column(self) -> ChannelColumn:
        b = self.n_out
        return ChannelColumn(0, np.full(b, -np.inf), np.full(b, -np.inf),
                             np.zeros(b),
                             LstmState.zeros(self.channel.config.hidden_dim))

    def extend(self, column: ChannelColumn, token: int) -> ChannelColumn:
        if column.log_alpha.shape[0] != self.n_out:
            raise InternalError("stale channel column: output length mismatch")
        ch = self.channel
        enc_state = lstm_step(ch.enc_fwd, ch.src_emb.value[int(token)],
                              column.enc_state)
        log_emit, log_shift = ch.transition_pairs(enc_state.h, self.dec_rows)
        log_word = ch.word_log_pairs(enc_state.h, self.dec_rows)[
            np.arange(self.n_out), self.x_ids]
        new_alpha = np.empty(self.n_out)
        new_prefix = np.empty(self.n_out)
        for b in range(self.n_out):
            if b == 0:
                prev_alpha = 0.0 if column.length == 0 else -np.inf
            else:
                prev_alpha = new_alpha[b - 1]
            carried = (column.log_shift[b] + column.log_prefix[b]
                       if column.length > 0 else -np.inf)
            new_prefix[b] = np.logaddexp(carried, prev_alpha)
            new_alpha[b] = log_word[b] + log_emit[b] + new_prefix[b]
        return ChannelColumn(column.length + 1, new_alpha, new_prefix,
                             log_shift, enc_state)


def extend_channel_column(scorer: ChannelScorer, column: ChannelColumn,
                          token: int) -> ChannelColumn:
    """Append one hypothesis token to a cached channel chart column."""
    return scorer.extend(column, token)


# ---------------------------------------------------------------------------
# Noisy-channel decoding
# ---------------------------------------------------------------------------


@dataclass
class Hypothesis:
    """A noisy-channel beam item at cell (i, j)."""

    prefix: tuple
    align: tuple
    i: int
    direct_score: float
    lm_score: float
    channel_col: ChannelColumn
    dec_state: LstmState
    lm_state: list
    total: float

    @property
    def channel_score(self) -> float:
        return float(self.channel_col.log_alpha[self.i])

    def recompute_total(self, weights: CombinationWeights) -> float:
        return combination_score(weights, self.direct_score, self.channel_score,
                                 self.lm_score, len(self.prefix))


def noisy_channel_decode(direct: SsntModel, channel: SsntModel, lm: LmModel,
                         x_ids, weights: CombinationWeights,
                         k1: int = 20, k2: int = 10,
                         j_max: int | None = None) -> DecodeResult:
    """Propose with the direct model, rescore with channel + LM + length bias.

    Per cell, the direct model scores every (token, predecessor) extension;
    the top k1 candidate prefixes are rescored by the combination objective
    (channel marginal of the consumed input prefix, language model score,
    length bias) and the k2 best survive. Termination and backtracking follow
    the direct search.
    """
    if direct.tgt_vocab_size != channel.src_vocab_size:
        raise ConfigError(
            "vocabulary mismatch: direct target side vs channel source side "
            f"({direct.tgt_vocab_size} vs {channel.src_vocab_size})")
    if direct.tgt_vocab_size != lm.vocab_size:
        raise ConfigError(
            "vocabulary mismatch: direct target side vs language model "
            f"({direct.tgt_vocab_size} vs {lm.vocab_size})")
    if direct.src_vocab_size != channel.tgt_vocab_size:
        raise ConfigError(
            "vocabulary mismatch: direct source side vs channel target side "
            f"({direct.src_vocab_size} vs {channel.tgt_vocab_size})")
    if k1 < 1 or k2 < 1:
        raise ConfigError("k1 and k2 must be >= 1")
    x_ids = np.asarray(x_ids, dtype=np.int64)
    if x_ids.size == 0:
        raise InputError("cannot decode an empty input")
    if j_max is None:
        j_max = default_j_max(len(x_ids))

    enc = direct.encode_states(x_ids)
    scorer = ChannelScorer(channel, x_ids)
    I = len(x_ids)
    vocab = direct.tgt_vocab_size
    best_complete: Hypothesis | None = None
    fallback: Hypothesis | None = None

    empty_col = scorer.initial_column()
    lm_init = lm.score_init()

    def make_hyp(parent_prefix, parent_align, i, tok, direct_sc, parent_dec,
                 lm_total, lm_state, chan_col, out_len):
        total = combination_score(
            weights, direct_sc, float(chan_col.log_alpha[i]), lm_total, out_len)
        return Hypothesis(parent_prefix + (tok,), parent_align + (i,), i,
                          direct_sc, lm_total, chan_col,
                          direct.dec_step(parent_dec, tok), lm_state, total)

    prev_col: list[list[Hypothesis]] = [[] for _ in range(I)]
    s1 = direct.dec_init()
    trans, word = _extension_tables(direct, enc, s1, 0)
    ext_cache: dict = {}
    for i in range(I):
        proposals = sorted(
            ((trans[i] + word[i, tok], tok) for tok in range(vocab)
             if np.isfinite(trans[i] + word[i, tok])),
            key=lambda c: (-c[0], c[1]))[:k1]
        scored = []
        for direct_sc, tok in proposals:
            if tok not in ext_cache:
                logp, lm_state = lm.score_step(lm_init, tok)
                ext_cache[tok] = (logp, lm_state, scorer.extend(empty_col, tok))
            lm_total, lm_state, chan_col = ext_cache[tok]
            total = combination_score(
                weights, direct_sc, float(chan_col.log_alpha[i]), lm_total, 1)
            scored.append((total, tok, 0, 0, direct_sc, lm_total, lm_state, chan_col))
        scored.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
        prev_col[i] = [
            make_hyp((), (), i, tok, dsc, s1, lmt, lms, ccol, 1)
            for _, tok, _, _, dsc, lmt, lms, ccol in scored[:k2]]

    for j in range(j_max):
        if j > 0:
            per_cell: list[list] = [[] for _ in range(I)]
            for src in range(I):
                for rank, hyp in enumerate(prev_col[src]):
                    if hyp.prefix[-1] == EOS_ID:
                        continue
                    trans, word = _extension_tables(direct, enc, hyp.dec_state, src)
                    for r in range(I - src):
                        i = src + r
                        base = hyp.direct_score + trans[r]
                        row = word[r]
                        for tok in range(vocab):
                            sc = base + row[tok]
                            if np.isfinite(sc):
                                per_cell[i].append((sc, tok, src, rank, hyp))
            col: list[list[Hypothesis]] = [[] for _ in range(I)]
            ext_cache = {}
            for i in range(I):
                proposals = sorted(
                    per_cell[i], key=lambda c: (-c[0], c[1], c[2], c[3]))[:k1]
                scored = []
                for direct_sc, tok, src, rank, hyp in proposals:
                    key = (src, rank, tok)
                    if key not in ext_cache:
                        logp, lm_state = lm.score_step(hyp.lm_state, tok)
                        ext_cache[key] = (hyp.lm_score + logp, lm_state,
                                          scorer.extend(hyp.channel_col, tok))
                    lm_total, lm_state, chan_col = ext_cache[key]
                    total = combination_score(
                        weights, direct_sc, float(chan_col.log_alpha[i]),
                        lm_total, j + 1)
                    scored.append((total, tok, src, rank, direct_sc, lm_total,
                                   lm_state, chan_col, hyp))
                scored.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
                col[i] = [
                    make_hyp(h.prefix, h.align, i, tok, dsc, h.dec_state,
                             lmt, lms, ccol, j + 1)
                    for _, tok, _, _, dsc, lmt, lms, ccol, h in scored[:k2]]
            prev_col = col
        for i in range(I):
            for hyp in prev_col[i]:
                if hyp.prefix[-1] == EOS_ID:
                    if best_complete is None or hyp.total > best_complete.total:
                        best_complete = hyp
        col_best = None
        for i in range(I):
            if prev_col[i] and (col_best is None or prev_col[i][0].total > col_best.total):
                col_best = prev_col[i][0]
        if col_best is None:
            break
        if prev_col[I - 1] and (fallback is None
                                or prev_col[I - 1][0].total > fallback.total):
            fallback = prev_col[I - 1][0]
        if col_best.prefix[-1] == EOS_ID:
            break

    chosen = best_complete if best_complete is not None else fallback
    return _finish(chosen.prefix, chosen.align, chosen.total)


def decode_components(direct: SsntModel, channel: SsntModel, lm: LmModel,
                      x_ids, weights: CombinationWeights, k1: int, k2: int,
                      j_max: int | None = None):
    """noisy_channel_decode plus the winner's component scores.

    Returns (result, (direct, channel, lm, length, total)); the total is the
    weighted sum of the components.
    """
    result = noisy_channel_decode(direct, channel, lm, x_ids, weights, k1, k2, j_max)
    y_full = list(result.tokens) + ([EOS_ID] if result.complete else [])
    scorer = ChannelScorer(channel, x_ids)
    col = scorer.initial_column()
    for tok in y_full:
        col = scorer.extend(col, tok)
    channel_lp = float(col.log_alpha[result.alignment[-1] - 1])
    lm_lp = 0.0
    states = lm.score_init()
    for tok in y_full:
        logp, states = lm.score_step(states, tok)
        lm_lp += logp
    direct_lp = _direct_path_score(direct, x_ids, y_full, result.alignment)
    total = combination_score(weights, direct_lp, channel_lp, lm_lp, len(y_full))
    return result, (direct_lp, channel_lp, lm_lp, len(y_full), total)


def _direct_path_score(model: SsntModel, x_ids, y_full, alignment_1based) -> float:
    """Joint score of one (y, z) path under the direct model."""
    enc = model.encode_states(x_ids)
    state = model.dec_init()
    total = 0.0
    prev = 0
    for tok, pos in zip(y_full, alignment_1based):
        i = pos - 1
        log_emit, log_shift = model.transition_cols(enc, state)
        cum = np.concatenate([[0.0], np.cumsum(log_shift)])
        total += cum[i] - cum[prev] + log_emit[i]
        total += model.word_log_rows(enc[i:i + 1], state)[0, tok]
        state = model.dec_step(state, tok)
        prev = i
    return float(total)


def tune_combination_weights(direct: SsntModel, channel: SsntModel, lm: LmModel,
                             dev_pairs, grid_values, k1: int, k2: int,
                             j_max: int | None = None) -> tuple[CombinationWeights, float]:
    """Grid-search the combination weights on dev exact-match accuracy.

    dev_pairs is a list of (x_ids, reference_token_ids_without_eos). Returns
    the first-best weights in grid order and their accuracy.
    """
    best = None
    for l1, l2, l3, l4 in itertools.product(grid_values, repeat=4):
        weights = CombinationWeights(l1, l2, l3, l4)
        hits = 0
        for x_ids, ref in dev_pairs:
            res = noisy_channel_decode(direct, channel, lm, x_ids, weights,
                                       k1, k2, j_max)
            if list(res.tokens) == list(ref):
                hits += 1
        acc = hits / len(dev_pairs)
        if best is None or acc > best[1]:
            best = (weights, acc)
    return best


def exhaustive_best(model: SsntModel, x_ids, j_max: int):
    """Exact argmax of p(y, z | x) over EOS-terminated outputs, |y| <= j_max.

    Enumeration oracle for tiny instances; scores every (y, z) pair by the
    joint path probability. Returns (y_with_eos, z_0based, score).
    """
    x_ids = np.asarray(x_ids, dtype=np.int64)
    I = len(x_ids)
    vocab = model.tgt_vocab_size
    if vocab ** j_max > 20000 or I > 4:
        raise InputError("exhaustive search refused: instance too large")
    best = None
    for length in range(1, j_max + 1):
        for body in itertools.product(
                [t for t in range(vocab) if t != EOS_ID], repeat=length - 1):
            y = list(body) + [EOS_ID]
            for z in itertools.combinations_with_replacement(range(I), length):
                if z[-1] != I - 1:
                    continue
                score = _direct_path_score(model, x_ids, y, [i + 1 for i in z])
                if best is None or score > best[2]:
                    best = (y, z, score)
    return best
