"""Token <-> id mapping with reserved begin/end/unknown symbols."""

from __future__ import annotations

import numpy as np

from .errors import InputError

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
BOS_ID, EOS_ID, UNK_ID = 0, 1, 2
RESERVED = (BOS, EOS, UNK)


class Vocabulary:
    """Bijective token<->id map; ids 0, 1, 2 are fixed to BOS, EOS, UNK."""

    def __init__(self, tokens):
        self.token_of: list[str] = list(RESERVED)
        self.id_of: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.id_of:
                raise InputError(f"duplicate or reserved token in vocabulary: {tok!r}")
            self.id_of[tok] = len(self.token_of)
            self.token_of.append(tok)

    def __len__(self) -> int:
        return len(self.token_of)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.token_of == other.token_of

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def encode(self, tokens, add_eos: bool = True) -> np.ndarray:
        """Map tokens to ids; out-of-vocabulary tokens become UNK."""
        ids = [self.id_of.get(t, UNK_ID) for t in tokens]
        if add_eos:
            ids.append(EOS_ID)
        return np.asarray(ids, dtype=np.int64)

    def decode(self, ids, strip_special: bool = True) -> list[str]:
        toks = []
        for i in ids:
            i = int(i)
            if strip_special and i in (BOS_ID, EOS_ID):
                continue
            toks.append(self.token_of[i])
        return toks
