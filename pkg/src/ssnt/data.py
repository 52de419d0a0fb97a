"""Corpus ingestion, preprocessing, vocabulary building, synthetic tasks.

File formats:
  parallel TSV    source tokens <TAB> target tokens (whitespace tokenised)
  inflection TSV  base form <TAB> inflected form <TAB> inflection type
                  (character tokenised, one corpus per type)
  monolingual     one whitespace-tokenised sequence per line
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .vocab import Vocabulary


@dataclass
class PreprocessSpec:
    lowercase: bool = False
    digit_to_hash: bool = False
    min_count: int = 5
    max_src_len: int = 50
    max_tgt_len: int = 25
    max_len_product: int = 500

    def __post_init__(self):
        if self.min_count < 1:
            raise InputError("min_count must be >= 1")
        if min(self.max_src_len, self.max_tgt_len, self.max_len_product) < 1:
            raise InputError("length caps must be >= 1")


@dataclass
class ParallelCorpus:
    pairs: list[tuple[list[str], list[str]]]
    provenance: str = ""
    filters: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)


_DIGITS = str.maketrans({d: "#" for d in string.digits})


def preprocess(tokens, spec: PreprocessSpec) -> list[str]:
    """Lowercase and/or replace digit characters with '#'. Idempotent."""
    out = []
    for tok in tokens:
        if spec.lowercase:
            tok = tok.lower()
        if spec.digit_to_hash:
            tok = tok.translate(_DIGITS)
        out.append(tok)
    return out


def preprocess_corpus(corpus: ParallelCorpus, spec: PreprocessSpec) -> ParallelCorpus:
    pairs = [(preprocess(s, spec), preprocess(t, spec)) for s, t in corpus.pairs]
    return ParallelCorpus(pairs, corpus.provenance, corpus.filters + ["preprocess"])


def build_vocab(token_seqs, min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen >= min_count times, ordered by count then text."""
    counts = Counter()
    for seq in token_seqs:
        counts.update(seq)
    if not counts:
        raise InputError("build_vocab: empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def filter_pairs(corpus: ParallelCorpus, spec: PreprocessSpec) -> ParallelCorpus:
    """Drop pairs beyond the length caps or the length-product cap."""
    kept = [(s, t) for s, t in corpus.pairs
            if len(s) <= spec.max_src_len and len(t) <= spec.max_tgt_len
            and len(s) * len(t) <= spec.max_len_product]
    return ParallelCorpus(kept, corpus.provenance, corpus.filters + ["length"])


def encode_pairs(corpus: ParallelCorpus, src_vocab: Vocabulary,
                 tgt_vocab: Vocabulary) -> list[tuple[np.ndarray, np.ndarray]]:
    """Id arrays with terminal EOS on both sides; OOV tokens map to UNK."""
    return [(src_vocab.encode(s), tgt_vocab.encode(t)) for s, t in corpus.pairs]


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def load_parallel_tsv(path) -> ParallelCorpus:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise InputError(
                    f"{path}:{lineno}: expected 2 tab-separated columns, got {len(cols)}")
            src, tgt = cols[0].split(), cols[1].split()
            if not src or not tgt:
                raise InputError(f"{path}:{lineno}: empty side in parallel pair")
            pairs.append((src, tgt))
    return ParallelCorpus(pairs, provenance=str(path))


def load_mono(path) -> list[list[str]]:
    """Monolingual corpus: one whitespace-tokenised sequence per line."""
    seqs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = line.split()
            if toks:
                seqs.append(toks)
    if not seqs:
        raise InputError(f"{path}: no sequences found")
    return seqs


def load_inflection_tsv(path) -> dict[str, ParallelCorpus]:
    """Per-inflection-type corpora from base<TAB>inflected<TAB>type lines.

    Both sides are character tokenised; a separate model is trained per type.
    """
    grouped: dict[str, list] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise InputError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
            base, inflected, kind = cols
            if not base or not inflected or not kind:
                raise InputError(f"{path}:{lineno}: empty field in inflection entry")
            grouped.setdefault(kind, []).append((list(base), list(inflected)))
    return {kind: ParallelCorpus(pairs, provenance=f"{path}#{kind}")
            for kind, pairs in grouped.items()}


def write_parallel_tsv(path, corpus: ParallelCorpus):
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgt in corpus.pairs:
            fh.write(" ".join(src) + "\t" + " ".join(tgt) + "\n")


def write_mono(path, seqs):
    with open(path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            fh.write(" ".join(seq) + "\n")


def write_manifest(out_dir, task: str, seed: int, params: dict):
    manifest = {"task": task, "seed": seed, "params": params}
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic task generators (bit-reproducible given the seed)
# ---------------------------------------------------------------------------


def _symbols(n: int) -> list[str]:
    letters = string.ascii_lowercase
    return [letters[i] if i < len(letters) else f"s{i}" for i in range(n)]


def gen_copy_task(rng: np.random.Generator, n: int, len_range=(3, 8),
                  vocab_size: int = 12) -> ParallelCorpus:
    """Identity transduction: target equals source."""
    if vocab_size < 2:
        raise InputError("gen_copy_task: vocab_size must be >= 2")
    symbols = _symbols(vocab_size)
    lo, hi = len_range
    pairs = []
    for _ in range(n):
        length = int(rng.integers(lo, hi + 1))
        seq = [symbols[int(k)] for k in rng.integers(0, vocab_size, size=length)]
        pairs.append((list(seq), list(seq)))
    return ParallelCorpus(pairs, provenance="gen:copy")


DEFAULT_INFLECTION_RULES = {
    "a": "-+en",     # drop the final char, append "en"
    "e": "+n",
    "i": "-+er",
    "*": "+en",
}


def apply_suffix_rule(stem: str, rule_table: dict[str, str]) -> str:
    """Suffix edit keyed by the stem's final character ('*' is the default).

    Rules are "+suf" (append) or "-+suf" (replace the final character).
    """
    rule = rule_table.get(stem[-1], rule_table.get("*", "+en"))
    if rule.startswith("-+"):
        return stem[:-1] + rule[2:]
    if rule.startswith("+"):
        return stem + rule[1:]
    raise InputError(f"malformed suffix rule {rule!r}")


def gen_suffix_inflection(rng: np.random.Generator, n: int, stem_len_range=(3, 7),
                          rule_table: dict[str, str] | None = None,
                          alphabet: str = "abcdefghij") -> ParallelCorpus:
    """Character-level inflection with rule-based targets and unique stems.

    Targets overlap their stems almost entirely, exercising the copy bias of
    character-level transduction.
    """
    rules = rule_table if rule_table is not None else DEFAULT_INFLECTION_RULES
    lo, hi = stem_len_range
    seen = set()
    pairs = []
    attempts = 0
    while len(pairs) < n:
        attempts += 1
        if attempts > 100 * n:
            raise InputError("gen_suffix_inflection: alphabet too small for n unique stems")
        length = int(rng.integers(lo, hi + 1))
        stem = "".join(alphabet[int(k)] for k in rng.integers(0, len(alphabet), size=length))
        if stem in seen:
            continue
        seen.add(stem)
        pairs.append((list(stem), list(apply_suffix_rule(stem, rules))))
    return ParallelCorpus(pairs, provenance="gen:inflection")


def gen_ambiguity_task(rng: np.random.Generator, n_pairs: int, n_items: int = 12,
                       n_regular: int = 8, n_mono: int = 4000):
    """Paired data where some sources map 50/50 to two targets.

    Source "a<k>" maps to "m<k> pp" or "m<k> qq"; the paired corpus flips a
    coin, while the monolingual corpus (and the gold test set) follow the true
    rule: pp for even k, qq for odd. Regular sources "r<k>" -> "R<k>" behave
    deterministically everywhere. Returns (paired, mono, test, ambiguous_test).
    """
    if n_items < 2:
        raise InputError("gen_ambiguity_task: need at least 2 ambiguous items")
    paired = []
    for _ in range(n_pairs):
        if rng.random() < 0.5 and n_regular > 0:
            k = int(rng.integers(0, n_regular))
            paired.append(([f"r{k}"], [f"R{k}"]))
        else:
            k = int(rng.integers(0, n_items))
            variant = "pp" if rng.random() < 0.5 else "qq"
            paired.append(([f"a{k}"], [f"m{k}", variant]))
    mono = []
    for _ in range(n_mono):
        if rng.random() < 0.3 and n_regular > 0:
            k = int(rng.integers(0, n_regular))
            mono.append([f"R{k}"])
        else:
            k = int(rng.integers(0, n_items))
            mono.append([f"m{k}", "pp" if k % 2 == 0 else "qq"])
    ambiguous = [([f"a{k}"], [f"m{k}", "pp" if k % 2 == 0 else "qq"])
                 for k in range(n_items)]
    regular = [([f"r{k}"], [f"R{k}"]) for k in range(n_regular)]
    test = ParallelCorpus(regular + ambiguous, provenance="gen:ambiguity-test")
    return (ParallelCorpus(paired, provenance="gen:ambiguity"),
            mono, test, ParallelCorpus(ambiguous, provenance="gen:ambiguity-ambig"))


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def batch_iter(items, batch_size: int, rng: np.random.Generator | None = None,
               shuffle: bool = False):
    """Yield batches covering every item exactly once per epoch.

    With shuffle=True the order is a permutation drawn from rng, so it is
    deterministic per (seed, epoch) stream; without it, corpus order is kept.
    """
    if batch_size < 1:
        raise InputError("batch_size must be >= 1")
    order = np.arange(len(items))
    if shuffle:
        if rng is None:
            raise InputError("shuffle=True requires an rng stream")
        order = rng.permutation(len(items))
    for start in range(0, len(items), batch_size):
        yield [items[int(idx)] for idx in order[start:start + batch_size]]
