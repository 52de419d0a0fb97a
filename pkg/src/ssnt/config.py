"""Flat key=value run configuration; CLI flags override file values."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass
class RunConfig:
    # model
    hidden_dim: int = 32
    embed_dim: int = 32
    transition_hidden_dim: int = 0        # 0 means "same as hidden_dim"
    transition_kind: str = "neural"
    encoder: str = "uni"
    dropout: float = 0.0
    # language model
    lm_hidden_dim: int = 64
    lm_embed_dim: int = 32
    lm_layers: int = 1
    lm_dropout: float = 0.0
    lm_lr: float = 0.0001
    # optimisation
    lr: float = 0.001
    batch: int = 32
    epochs: int = 10
    clip_norm: float = 5.0
    seed: int = 1
    early_stop_exact: float = 0.0         # stop when dev exact match reaches this
    eval_exact_every: int = 0             # 0 disables the exact-match early stop
    # preprocessing
    lowercase: bool = False
    digit_to_hash: bool = False
    min_count: int = 5
    max_src_len: int = 50
    max_tgt_len: int = 25
    max_len_product: int = 500
    # decoding
    beam: int = 1
    k1: int = 20
    k2: int = 10
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 0.0
    max_output_len: int = 64


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults <- key=value file <- explicit overrides (already typed)."""
    values: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, raw = line.split("=", 1)
                key = key.strip()
                if key not in _FIELD_TYPES:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _coerce(key, raw)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val
    cfg = RunConfig(**values)
    if cfg.transition_hidden_dim == 0:
        cfg.transition_hidden_dim = cfg.hidden_dim
    return cfg
