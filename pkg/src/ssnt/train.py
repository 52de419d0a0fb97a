"""Training loops: batched gradients, clipping, Adam, per-epoch metrics.

Every epoch draws its shuffle and dropout randomness from a Philox stream
keyed by (seed, epoch), and gradients are reduced in corpus order, so a
(config, seed, data) triple fixes the whole metrics stream and every
checkpoint byte.
"""

from __future__ import annotations

import numpy as np

from . import lm as lm_mod
from . import nn
from .config import RunConfig
from .data import batch_iter
from .decoding import default_j_max, greedy_decode
from .errors import InputError, TrainingDiverged
from .model import SsntModel, example_gradient, nll_loss


def dev_exact_match(model: SsntModel, pairs, max_output_len: int = 64) -> float:
    """Greedy-decode exact match against references (ids include EOS)."""
    hits = 0
    for x_ids, y_ids in pairs:
        res = greedy_decode(model, x_ids, default_j_max(len(x_ids), max_output_len))
        if res.tokens == [int(t) for t in y_ids[:-1]]:
            hits += 1
    return hits / len(pairs)


def _dev_nll(model: SsntModel, pairs) -> float:
    total = 0.0
    tokens = 0
    for x_ids, y_ids in pairs:
        total += nll_loss(model, x_ids, y_ids)
        tokens += len(y_ids)
    return total / tokens


def train_ssnt(model: SsntModel, train_pairs, dev_pairs, cfg: RunConfig, *,
               on_epoch=None, on_best=None) -> list[dict]:
    """Epochs of batched example gradients; returns the metrics records.

    on_epoch(record) fires after every epoch; on_best(record) whenever the dev
    NLL improves (the hook saves the retained checkpoint). When
    eval_exact_every > 0, training stops early once greedy dev exact match
    reaches early_stop_exact.
    """
    if not train_pairs or not dev_pairs:
        raise InputError("training requires nonempty train and dev sets")
    params = model.parameters()
    metrics: list[dict] = []
    best_nll = np.inf
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        rng = nn.make_rng([cfg.seed, epoch])
        total_nll = 0.0
        total_tokens = 0
        for batch in batch_iter(train_pairs, cfg.batch, rng, shuffle=True):
            for x_ids, y_ids in batch:
                nll = example_gradient(model, x_ids, y_ids, rng=rng)
                if not np.isfinite(nll):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
                total_nll += nll
                total_tokens += len(y_ids)
            nn.clip_gradients(params, cfg.clip_norm)
            step += 1
            nn.adam_step(params, cfg.lr, step_count=step)
        dev_nll = _dev_nll(model, dev_pairs)
        record = {
            "epoch": epoch,
            "train_nll": total_nll / total_tokens,
            "dev_nll": dev_nll,
            "dev_ppl": float(np.exp(dev_nll)),
        }
        metrics.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if dev_nll < best_nll:
            best_nll = dev_nll
            if on_best is not None:
                on_best(record)
        if cfg.eval_exact_every > 0 and epoch % cfg.eval_exact_every == 0:
            if dev_exact_match(model, dev_pairs, cfg.max_output_len) >= cfg.early_stop_exact:
                break
    return metrics


def train_lm(model: lm_mod.LmModel, train_seqs, dev_seqs, cfg: RunConfig, *,
             on_epoch=None, on_best=None) -> list[dict]:
    """LM epochs with the same metrics schema as the transduction trainer."""
    if not train_seqs or not dev_seqs:
        raise InputError("training requires nonempty train and dev sets")
    metrics: list[dict] = []
    best_nll = np.inf
    batches_per_epoch = (len(train_seqs) + cfg.batch - 1) // cfg.batch
    for epoch in range(1, cfg.epochs + 1):
        rng = nn.make_rng([cfg.seed, epoch])
        train_nll = lm_mod.lm_train_epoch(
            model, train_seqs, lr=cfg.lm_lr, batch_size=cfg.batch,
            clip_norm=cfg.clip_norm, rng=rng, shuffle=True,
            step_offset=(epoch - 1) * batches_per_epoch)
        if not np.isfinite(train_nll):
            raise TrainingDiverged(f"non-finite LM loss at epoch {epoch}")
        dev_ppl = lm_mod.perplexity(model, dev_seqs)
        dev_nll = float(np.log(dev_ppl))
        record = {
            "epoch": epoch,
            "train_nll": train_nll,
            "dev_nll": dev_nll,
            "dev_ppl": dev_ppl,
        }
        metrics.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if dev_nll < best_nll:
            best_nll = dev_nll
            if on_best is not None:
                on_best(record)
    return metrics
