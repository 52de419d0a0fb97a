"""Finite-difference verification of every analytic gradient path.

Central differences with h = 1e-5 at float64; the error metric is
|a - fd| / max(|a|, |fd|, 1e-4), i.e. relative error with an absolute floor
so that near-zero gradients are compared at atol ~1e-9 instead of dividing
by zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lm as lm_mod
from . import nn
from .model import SsntConfig, SsntModel, example_gradient, nll_loss
from .nn import LstmParams, Parameter
from .tape import Tape

H_STEP = 1e-5
REL_FLOOR = 1e-4
TOLERANCE = 1e-5


def rel_error(analytic: float, fd: float) -> float:
    return abs(analytic - fd) / max(abs(analytic), abs(fd), REL_FLOOR)


def finite_difference(loss_fn, params: list[Parameter], h: float = H_STEP):
    """Central-difference gradient of loss_fn w.r.t. every parameter entry."""
    out = {}
    for p in params:
        grad = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            hi = loss_fn()
            flat[idx] = orig - h
            lo = loss_fn()
            flat[idx] = orig
            gflat[idx] = (hi - lo) / (2.0 * h)
        out[p.name] = grad
    return out


@dataclass
class GroupReport:
    group: str
    worst: float
    worst_param: str


def compare_grads(analytic: dict, fd: dict, group_of=lambda name: name):
    """Per-group worst relative error between two gradient dictionaries."""
    groups: dict[str, GroupReport] = {}
    for name, fd_grad in fd.items():
        a = analytic[name].reshape(-1)
        f = fd_grad.reshape(-1)
        worst = 0.0
        for idx in range(a.size):
            worst = max(worst, rel_error(a[idx], f[idx]))
        g = group_of(name)
        prev = groups.get(g)
        if prev is None or worst > prev.worst:
            groups[g] = GroupReport(g, worst, name)
    return groups


def _param_group(name: str) -> str:
    return name.split(".")[0]


def _tiny_pair(rng, src_vocab, tgt_vocab, max_len=3):
    from .vocab import EOS_ID
    i_len = int(rng.integers(1, max_len + 1))
    j_len = int(rng.integers(1, max_len + 1))
    x = list(rng.integers(3, src_vocab, size=i_len)) + [EOS_ID]
    y = list(rng.integers(3, tgt_vocab, size=j_len)) + [EOS_ID]
    return np.asarray(x), np.asarray(y)


def check_ssnt_gradients(encoder: str = "uni", transition_kind: str = "neural",
                         seed: int = 0, corrupt_param: str | None = None):
    """FD check of the posterior-weighted gradient on a tiny model.

    Returns (passed, {group: GroupReport}). corrupt_param deliberately
    perturbs one analytic gradient so the failure reporting can be exercised.
    """
    rng = nn.make_rng([seed, 17])
    cfg = SsntConfig(src_vocab_size=5, tgt_vocab_size=5, hidden_dim=3,
                     embed_dim=3, encoder=encoder, transition_kind=transition_kind)
    model = SsntModel(cfg, rng)
    if transition_kind == "geometric":
        model.set_emission(0.4)
    x, y = _tiny_pair(rng, 5, 5)
    model.zero_grads()
    example_gradient(model, x, y, training=False)
    # The geometric emission is MLE-estimated, never gradient-trained, so it
    # is excluded from the differentiable-parameter check.
    params = [p for p in model.parameters() if p.name != "emission"]
    analytic = {p.name: p.grad.copy() for p in params}
    if corrupt_param is not None:
        if corrupt_param not in analytic:
            raise ValueError(f"no parameter named {corrupt_param!r}")
        analytic[corrupt_param] = analytic[corrupt_param] + 1e-3
    model.zero_grads()
    fd = finite_difference(lambda: nll_loss(model, x, y), params)
    groups = compare_grads(analytic, fd, _param_group)
    passed = all(g.worst < TOLERANCE for g in groups.values())
    return passed, groups


def check_lm_gradients(seed: int = 0):
    rng = nn.make_rng([seed, 23])
    model = lm_mod.LmModel(lm_mod.LmConfig(vocab_size=5, hidden_dim=3, embed_dim=3), rng)
    y = _tiny_pair(rng, 5, 5)[1]
    model.zero_grads()
    lm_mod.lm_example_gradient(model, y, training=False)
    analytic = {p.name: p.grad.copy() for p in model.parameters()}
    model.zero_grads()
    fd = finite_difference(lambda: -lm_mod.lm_logprob(model, y), model.parameters())
    groups = compare_grads(analytic, fd, _param_group)
    return all(g.worst < TOLERANCE for g in groups.values()), groups


def _composite_graph(t: Tape, ps: dict, lstm: LstmParams, mask: np.ndarray):
    """One graph touching every tape primitive; returns the scalar loss node."""
    x1 = t.lookup(ps["emb"], 0)
    x2 = t.mul_const(t.lookup(ps["emb"], 2), mask)
    a = t.sigmoid(t.affine(t.param(ps["w1"]), x1, t.param(ps["b1"])))
    b = t.tanh(t.affine(t.param(ps["w1"]), x2, t.param(ps["b1"])))
    c = t.relu(t.mul(a, b))
    state = t.lstm_step(lstm, x1, None)
    state = t.lstm_step(lstm, x2, state)
    h2 = state[0]
    left = t.stack([a, c, h2])
    right = t.stack([t.add(b, h2), t.neg(a)])
    pairs = t.pair_table(left, right)
    logits = t.rows_affine(pairs, t.param(ps["w2"]), t.param(ps["b2"]))
    lsm = t.log_softmax_rows(logits)
    picked = t.take_cols(lsm, np.array([0, 1, 2, 0, 1, 2]))
    scalar = t.rows_dot(pairs, t.param(ps["w3"]), t.param(ps["b3"]))
    extra = t.weighted_sum(t.log_sigmoid(scalar), np.linspace(0.1, 0.2, 6))
    vec = t.log_softmax(t.concat(a, b))
    # Keep |loss| small: finite-difference noise scales with the loss value.
    loss = t.add(t.weighted_sum(picked, np.arange(1.0, 7.0) / 12.0), extra)
    return t.add(loss, t.pick(vec, 1))


def check_tape_primitives(seed: int = 0, instances: int = 100):
    """FD check of random composite graphs; returns (passed, worst, worst_name)."""
    worst = 0.0
    worst_name = ""
    for inst in range(instances):
        rng = nn.make_rng([seed, 31, inst])
        d = int(rng.integers(2, 5))
        ps = {
            "emb": Parameter("emb", nn.uniform_init(rng, (3, d), 0.3)),
            "w1": Parameter("w1", nn.uniform_init(rng, (d, d), 0.3)),
            "b1": Parameter("b1", nn.uniform_init(rng, (d,), 0.3)),
            "w2": Parameter("w2", nn.uniform_init(rng, (4, 2 * d), 0.3)),
            "b2": Parameter("b2", nn.uniform_init(rng, (4,), 0.3)),
            "w3": Parameter("w3", nn.uniform_init(rng, (2 * d,), 0.3)),
            "b3": Parameter("b3", nn.uniform_init(rng, (1,), 0.3)),
        }
        lstm = LstmParams("lstm", d, d, rng)
        mask = rng.uniform(0.5, 1.5, size=d)
        all_params = list(ps.values()) + lstm.parameters()

        t = Tape()
        loss = _composite_graph(t, ps, lstm, mask)
        for p in all_params:
            p.zero_grad()
        t.backward(loss)
        analytic = {p.name: p.grad.copy() for p in all_params}

        def forward_value():
            return float(_composite_graph(Tape(), ps, lstm, mask).value)

        fd = finite_difference(forward_value, all_params)
        for name, fd_grad in fd.items():
            a = analytic[name].reshape(-1)
            f = fd_grad.reshape(-1)
            for idx in range(a.size):
                err = rel_error(a[idx], f[idx])
                if err > worst:
                    worst = err
                    worst_name = f"{name}[{idx}] (instance {inst})"
    return worst < TOLERANCE, worst, worst_name
