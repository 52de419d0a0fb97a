"""Model <-> checkpoint glue: parameter payloads plus config/vocab metadata."""

from __future__ import annotations

from . import lm as lm_mod
from .checkpoint import load_checkpoint, restore_parameters, save_checkpoint
from .model import SsntConfig, SsntModel
from .nn import make_rng
from .vocab import RESERVED, Vocabulary

SSNT_KIND = "ssnt"
LM_KIND = "lm"


def _vocab_tokens(vocab: Vocabulary) -> list[str]:
    return vocab.token_of[len(RESERVED):]


def save_ssnt(path, model: SsntModel, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
              preprocess_meta: dict | None = None):
    c = model.config
    meta = {
        "config": {
            "hidden_dim": c.hidden_dim,
            "embed_dim": c.embed_dim,
            "encoder": c.encoder,
            "transition_kind": c.transition_kind,
            "transition_hidden_dim": c.transition_hidden_dim,
            "dropout": c.dropout,
        },
        "src_vocab": _vocab_tokens(src_vocab),
        "tgt_vocab": _vocab_tokens(tgt_vocab),
        "preprocess": preprocess_meta or {},
    }
    save_checkpoint(path, SSNT_KIND, model.parameters(), meta)


def load_ssnt(path):
    """Returns (model, src_vocab, tgt_vocab, meta)."""
    _, arrays, meta = load_checkpoint(path, expect_kind=SSNT_KIND)
    src_vocab = Vocabulary(meta["src_vocab"])
    tgt_vocab = Vocabulary(meta["tgt_vocab"])
    mc = meta["config"]
    cfg = SsntConfig(src_vocab_size=len(src_vocab), tgt_vocab_size=len(tgt_vocab),
                     hidden_dim=mc["hidden_dim"], embed_dim=mc["embed_dim"],
                     encoder=mc["encoder"], transition_kind=mc["transition_kind"],
                     transition_hidden_dim=mc["transition_hidden_dim"],
                     dropout=mc["dropout"])
    model = SsntModel(cfg, make_rng(0))
    restore_parameters(model.parameters(), arrays, path)
    return model, src_vocab, tgt_vocab, meta


def save_lm(path, model: lm_mod.LmModel, vocab: Vocabulary):
    c = model.config
    meta = {
        "config": {
            "hidden_dim": c.hidden_dim,
            "embed_dim": c.embed_dim,
            "layers": c.layers,
            "dropout": c.dropout,
        },
        "vocab": _vocab_tokens(vocab),
    }
    save_checkpoint(path, LM_KIND, model.parameters(), meta)


def load_lm(path):
    """Returns (model, vocab, meta)."""
    _, arrays, meta = load_checkpoint(path, expect_kind=LM_KIND)
    vocab = Vocabulary(meta["vocab"])
    mc = meta["config"]
    cfg = lm_mod.LmConfig(vocab_size=len(vocab), hidden_dim=mc["hidden_dim"],
                          embed_dim=mc["embed_dim"], layers=mc["layers"],
                          dropout=mc["dropout"])
    model = lm_mod.LmModel(cfg, make_rng(0))
    restore_parameters(model.parameters(), arrays, path)
    return model, vocab, meta
