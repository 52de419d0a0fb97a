"""Subcommand CLI: data generation, training, decoding, evaluation, gradcheck.

Config precedence: built-in defaults < --config file < explicit flags. Every
subcommand exits 0 on success and nonzero on any error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import data as data_mod
from . import gradcheck as gc
from . import train as train_mod
from .config import RunConfig, load_config
from .decoding import (CombinationWeights, beam_decode, decode_components,
                       default_j_max, greedy_decode, noisy_channel_decode)
from .errors import ConfigError, InputError, SsntError
from .lm import LmConfig, LmModel
from .model import SsntConfig, SsntModel, mle_emission
from .nn import make_rng
from .serialize import load_lm, load_ssnt, save_lm, save_ssnt
from .vocab import EOS


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file")
    flag_names = [
        "hidden-dim", "embed-dim", "transition-hidden-dim", "lm-hidden-dim",
        "lm-embed-dim", "lm-layers", "batch", "epochs", "seed", "min-count",
        "max-src-len", "max-tgt-len", "max-len-product", "beam", "k1", "k2",
        "max-output-len", "eval-exact-every",
    ]
    for name in flag_names:
        p.add_argument(f"--{name}", type=int, default=None)
    for name in ["dropout", "lm-dropout", "lr", "lm-lr", "clip-norm",
                 "lambda1", "lambda2", "lambda3", "lambda4", "early-stop-exact"]:
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--transition-kind", choices=["neural", "geometric"], default=None)
    p.add_argument("--encoder", choices=["uni", "bi"], default=None)
    p.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--digit-to-hash", action=argparse.BooleanOptionalAction, default=None)


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for key in RunConfig.__dataclass_fields__:
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    return load_config(getattr(args, "config", None), overrides)


def _preproc_spec(cfg: RunConfig) -> data_mod.PreprocessSpec:
    return data_mod.PreprocessSpec(
        lowercase=cfg.lowercase, digit_to_hash=cfg.digit_to_hash,
        min_count=cfg.min_count, max_src_len=cfg.max_src_len,
        max_tgt_len=cfg.max_tgt_len, max_len_product=cfg.max_len_product)


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(args.seed)
    params = {"n": args.n, "n_dev": args.n_dev, "n_test": args.n_test}
    if args.task == "copy":
        params.update({"vocab_size": args.vocab_size,
                       "len_range": [args.len_min, args.len_max]})
        corpus = data_mod.gen_copy_task(
            rng, args.n + args.n_dev + args.n_test,
            (args.len_min, args.len_max), args.vocab_size)
        splits = _split(corpus, args.n, args.n_dev)
    elif args.task == "inflection":
        params.update({"stem_len_range": [args.len_min, args.len_max]})
        corpus = data_mod.gen_suffix_inflection(
            rng, args.n + args.n_dev + args.n_test, (args.len_min, args.len_max))
        splits = _split(corpus, args.n, args.n_dev)
    elif args.task == "ambiguity":
        params.update({"n_items": args.n_items, "n_regular": args.n_regular,
                       "n_mono": args.n_mono})
        paired, mono, test, ambig = data_mod.gen_ambiguity_task(
            rng, args.n, args.n_items, args.n_regular, args.n_mono)
        n_mono_dev = max(1, len(mono) // 20)
        data_mod.write_mono(out / "mono.txt", mono[n_mono_dev:])
        data_mod.write_mono(out / "mono_dev.txt", mono[:n_mono_dev])
        data_mod.write_parallel_tsv(out / "test_ambiguous.tsv", ambig)
        splits = (paired, test, test)
    else:
        raise ConfigError(f"unknown task {args.task!r}")
    train, dev, test = splits
    data_mod.write_parallel_tsv(out / "train.tsv", train)
    data_mod.write_parallel_tsv(out / "dev.tsv", dev)
    data_mod.write_parallel_tsv(out / "test.tsv", test)
    data_mod.write_manifest(out, args.task, args.seed, params)
    print(f"wrote {len(train)}/{len(dev)}/{len(test)} pairs to {out}")
    return 0


def _split(corpus, n_train, n_dev):
    pairs = corpus.pairs
    return (data_mod.ParallelCorpus(pairs[:n_train], corpus.provenance),
            data_mod.ParallelCorpus(pairs[n_train:n_train + n_dev], corpus.provenance),
            data_mod.ParallelCorpus(pairs[n_train + n_dev:], corpus.provenance))


# ---------------------------------------------------------------------------
# train-ssnt / train-lm
# ---------------------------------------------------------------------------


def _load_parallel(args, spec):
    if args.format == "inflection":
        grouped = data_mod.load_inflection_tsv(args.train)
        if args.inflection_type is None:
            raise ConfigError(
                f"--inflection-type required; available: {sorted(grouped)}")
        if args.inflection_type not in grouped:
            raise ConfigError(f"no inflection type {args.inflection_type!r} in file")
        train = grouped[args.inflection_type]
        dev = data_mod.load_inflection_tsv(args.dev)[args.inflection_type]
    else:
        train = data_mod.load_parallel_tsv(args.train)
        dev = data_mod.load_parallel_tsv(args.dev)
    train = data_mod.filter_pairs(data_mod.preprocess_corpus(train, spec), spec)
    dev = data_mod.filter_pairs(data_mod.preprocess_corpus(dev, spec), spec)
    if args.swap:
        train = data_mod.ParallelCorpus([(t, s) for s, t in train.pairs], train.provenance)
        dev = data_mod.ParallelCorpus([(t, s) for s, t in dev.pairs], dev.provenance)
    return train, dev


def cmd_train_ssnt(args) -> int:
    cfg = _config_from_args(args)
    spec = _preproc_spec(cfg)
    train_corpus, dev_corpus = _load_parallel(args, spec)
    if not train_corpus.pairs or not dev_corpus.pairs:
        raise InputError("empty corpus after filtering")
    src_vocab = data_mod.build_vocab((s for s, _ in train_corpus.pairs), cfg.min_count)
    tgt_vocab = data_mod.build_vocab((t for _, t in train_corpus.pairs), cfg.min_count)
    train_pairs = data_mod.encode_pairs(train_corpus, src_vocab, tgt_vocab)
    dev_pairs = data_mod.encode_pairs(dev_corpus, src_vocab, tgt_vocab)

    model_cfg = SsntConfig(
        src_vocab_size=len(src_vocab), tgt_vocab_size=len(tgt_vocab),
        hidden_dim=cfg.hidden_dim, embed_dim=cfg.embed_dim, encoder=cfg.encoder,
        transition_kind=cfg.transition_kind,
        transition_hidden_dim=cfg.transition_hidden_dim, dropout=cfg.dropout)
    model = SsntModel(model_cfg, make_rng([cfg.seed, 0]))
    if cfg.transition_kind == "geometric":
        model.set_emission(mle_emission(train_pairs))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.bin"
    metrics_path = out / "metrics.jsonl"
    preproc_meta = {"lowercase": cfg.lowercase, "digit_to_hash": cfg.digit_to_hash}
    with open(metrics_path, "w", encoding="utf-8") as mf:
        def on_epoch(rec):
            mf.write(json.dumps(rec, sort_keys=True) + "\n")
            mf.flush()
            print(f"epoch {rec['epoch']}: train_nll={rec['train_nll']:.4f} "
                  f"dev_nll={rec['dev_nll']:.4f} dev_ppl={rec['dev_ppl']:.3f}")

        def on_best(_rec):
            save_ssnt(ckpt, model, src_vocab, tgt_vocab, preproc_meta)

        train_mod.train_ssnt(model, train_pairs, dev_pairs, cfg,
                             on_epoch=on_epoch, on_best=on_best)
    if args.plot:
        from .report import plot_training_curves
        plot_training_curves(metrics_path, out / "curves.png")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_train_lm(args) -> int:
    cfg = _config_from_args(args)
    train_seqs = data_mod.load_mono(args.train)
    dev_seqs = data_mod.load_mono(args.dev)
    if args.vocab_from:
        _, _, vocab, _ = load_ssnt(args.vocab_from)
    else:
        vocab = data_mod.build_vocab(train_seqs, cfg.min_count)
    train_ids = [vocab.encode(s) for s in train_seqs]
    dev_ids = [vocab.encode(s) for s in dev_seqs]
    model = LmModel(LmConfig(vocab_size=len(vocab), hidden_dim=cfg.lm_hidden_dim,
                             embed_dim=cfg.lm_embed_dim, layers=cfg.lm_layers,
                             dropout=cfg.lm_dropout), make_rng([cfg.seed, 1]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "lm.bin"
    metrics_path = out / "metrics.jsonl"
    with open(metrics_path, "w", encoding="utf-8") as mf:
        def on_epoch(rec):
            mf.write(json.dumps(rec, sort_keys=True) + "\n")
            mf.flush()
            print(f"epoch {rec['epoch']}: train_nll={rec['train_nll']:.4f} "
                  f"dev_ppl={rec['dev_ppl']:.3f}")

        def on_best(_rec):
            save_lm(ckpt, model, vocab)

        train_mod.train_lm(model, train_ids, dev_ids, cfg,
                           on_epoch=on_epoch, on_best=on_best)
    if args.plot:
        from .report import plot_training_curves
        plot_training_curves(metrics_path, out / "curves.png")
    print(f"checkpoint: {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# decode / decode-nc
# ---------------------------------------------------------------------------


def _format_line(tgt_vocab, result) -> str:
    toks = [tgt_vocab.token_of[t] for t in result.tokens]
    pairs = " ".join(f"{j + 1}:{i}" for j, i in enumerate(result.alignment))
    return " ".join(toks) + "\t" + pairs


def _input_ids(line, src_vocab, spec):
    toks = data_mod.preprocess(line.split(), spec)
    return src_vocab.encode(toks), toks


def _maybe_figures(args, idx, src_tokens, result, tgt_vocab):
    if not getattr(args, "figures_dir", None) or idx >= args.figures_limit:
        return
    from .report import plot_alignment
    fig_dir = Path(args.figures_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    out_tokens = [tgt_vocab.token_of[t] for t in result.tokens]
    plot_alignment(src_tokens + [EOS], out_tokens, result.alignment,
                   fig_dir / f"line{idx:04d}.png")


def cmd_decode(args) -> int:
    cfg = _config_from_args(args)
    model, src_vocab, tgt_vocab, meta = load_ssnt(args.model)
    pp = meta.get("preprocess", {})
    spec = data_mod.PreprocessSpec(
        lowercase=pp.get("lowercase", False),
        digit_to_hash=pp.get("digit_to_hash", False), min_count=1)
    beam = cfg.beam
    with open(args.input, encoding="utf-8") as fin, \
            open(args.output, "w", encoding="utf-8") as fout:
        for idx, line in enumerate(fin):
            x_ids, src_tokens = _input_ids(line, src_vocab, spec)
            j_max = default_j_max(len(x_ids), cfg.max_output_len)
            if beam <= 1:
                result = greedy_decode(model, x_ids, j_max)
            else:
                result = beam_decode(model, x_ids, j_max, beam)
            fout.write(_format_line(tgt_vocab, result) + "\n")
            _maybe_figures(args, idx, src_tokens, result, tgt_vocab)
    return 0


def cmd_decode_nc(args) -> int:
    cfg = _config_from_args(args)
    direct, src_vocab, tgt_vocab, meta = load_ssnt(args.direct)
    channel, ch_src_vocab, ch_tgt_vocab, _ = load_ssnt(args.channel)
    lm, lm_vocab, _ = load_lm(args.lm)
    if tgt_vocab != ch_src_vocab:
        raise ConfigError(
            f"vocabulary mismatch: target side of {args.direct} vs source side "
            f"of channel {args.channel}")
    if src_vocab != ch_tgt_vocab:
        raise ConfigError(
            f"vocabulary mismatch: source side of {args.direct} vs target side "
            f"of channel {args.channel}")
    if tgt_vocab != lm_vocab:
        raise ConfigError(
            f"vocabulary mismatch: target side of {args.direct} vs language "
            f"model {args.lm}")
    pp = meta.get("preprocess", {})
    spec = data_mod.PreprocessSpec(
        lowercase=pp.get("lowercase", False),
        digit_to_hash=pp.get("digit_to_hash", False), min_count=1)
    weights = CombinationWeights(cfg.lambda1, cfg.lambda2, cfg.lambda3, cfg.lambda4)
    dump = open(args.dump_scores, "w", encoding="utf-8") if args.dump_scores else None
    try:
        with open(args.input, encoding="utf-8") as fin, \
                open(args.output, "w", encoding="utf-8") as fout:
            for idx, line in enumerate(fin):
                x_ids, src_tokens = _input_ids(line, src_vocab, spec)
                j_max = default_j_max(len(x_ids), cfg.max_output_len)
                if dump is not None:
                    result, comps = decode_components(
                        direct, channel, lm, x_ids, weights, cfg.k1, cfg.k2, j_max)
                    d, ch, l, n, tot = comps
                    dump.write(f"{d:.10f}\t{ch:.10f}\t{l:.10f}\t{n}\t{tot:.10f}\n")
                else:
                    result = noisy_channel_decode(
                        direct, channel, lm, x_ids, weights, cfg.k1, cfg.k2, j_max)
                fout.write(_format_line(tgt_vocab, result) + "\n")
                _maybe_figures(args, idx, src_tokens, result, tgt_vocab)
    finally:
        if dump is not None:
            dump.close()
    return 0


# ---------------------------------------------------------------------------
# eval / gradcheck
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    if args.metric == "accuracy":
        if not args.hyps:
            raise ConfigError("--hyps is required for the accuracy metric")
        with open(args.refs, encoding="utf-8") as fh:
            refs = [ln.rstrip("\n") for ln in fh]
        with open(args.hyps, encoding="utf-8") as fh:
            hyps = [ln.rstrip("\n").split("\t")[0] for ln in fh]
        if len(refs) != len(hyps):
            raise InputError(
                f"line count mismatch: {len(refs)} refs vs {len(hyps)} hyps")
        matches = sum(1 for r, h in zip(refs, hyps) if r.strip() == h.strip())
        value = matches / len(refs) if refs else 0.0
        report = {"metric": "accuracy", "value": value,
                  "matches": matches, "total": len(refs)}
    elif args.metric == "perplexity-file":
        best = None
        with open(args.refs, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rec = json.loads(line)
                    if best is None or rec["dev_ppl"] < best:
                        best = rec["dev_ppl"]
        if best is None:
            raise InputError(f"{args.refs}: no metrics records")
        report = {"metric": "perplexity-file", "value": best}
    else:
        raise ConfigError(f"unknown metric {args.metric!r}")
    print(json.dumps(report, sort_keys=True))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_gradcheck(args) -> int:
    failed = False
    print("tape primitives:")
    ok, worst, worst_name = gc.check_tape_primitives(args.seed, args.instances)
    print(f"  worst rel err {worst:.3e} at {worst_name}  [{'ok' if ok else 'FAIL'}]")
    failed |= not ok

    configs = [(e, k) for e in ("uni", "bi") for k in ("neural", "geometric")]
    if args.encoder and args.transition_kind:
        configs = [(args.encoder, args.transition_kind)]
    for enc, kind in configs:
        corrupt = args.corrupt_param if (enc, kind) == ("uni", "neural") else None
        ok, groups = gc.check_ssnt_gradients(enc, kind, args.seed, corrupt)
        print(f"transduction ({enc}, {kind}):")
        for name in sorted(groups):
            g = groups[name]
            mark = "ok" if g.worst < gc.TOLERANCE else f"FAIL ({g.worst_param})"
            print(f"  {name:16s} worst rel err {g.worst:.3e}  [{mark}]")
        failed |= not ok

    ok, groups = gc.check_lm_gradients(args.seed)
    print("language model:")
    for name in sorted(groups):
        g = groups[name]
        mark = "ok" if g.worst < gc.TOLERANCE else f"FAIL ({g.worst_param})"
        print(f"  {name:16s} worst rel err {g.worst:.3e}  [{mark}]")
    failed |= not ok

    print("gradcheck:", "FAIL" if failed else "PASS")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssnt",
        description="Segment-to-segment neural transduction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic task")
    p.add_argument("--task", required=True, choices=["copy", "inflection", "ambiguity"])
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=200)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--vocab-size", type=int, default=12)
    p.add_argument("--len-min", type=int, default=3)
    p.add_argument("--len-max", type=int, default=8)
    p.add_argument("--n-items", type=int, default=12)
    p.add_argument("--n-regular", type=int, default=8)
    p.add_argument("--n-mono", type=int, default=4000)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-ssnt", help="train a transduction model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["parallel", "inflection"], default="parallel")
    p.add_argument("--inflection-type", default=None)
    p.add_argument("--swap", action="store_true",
                   help="swap source and target (channel model training)")
    p.add_argument("--plot", action="store_true", help="write curves.png")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_ssnt)

    p = sub.add_parser("train-lm", help="train the language model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-from", default=None,
                   help="share the target vocabulary of this transduction checkpoint")
    p.add_argument("--plot", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("decode", help="greedy or beam decoding with alignments")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--figures-dir", default=None)
    p.add_argument("--figures-limit", type=int, default=8)
    _add_config_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("decode-nc", help="noisy-channel decoding")
    p.add_argument("--direct", required=True)
    p.add_argument("--channel", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dump-scores", default=None,
                   help="write per-line component scores to this file")
    p.add_argument("--figures-dir", default=None)
    p.add_argument("--figures-limit", type=int, default=8)
    _add_config_flags(p)
    p.set_defaults(func=cmd_decode_nc)

    p = sub.add_parser("eval", help="exact-match accuracy or perplexity report")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", default=None)
    p.add_argument("--metric", choices=["accuracy", "perplexity-file"],
                   default="accuracy")
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--encoder", choices=["uni", "bi"], default=None)
    p.add_argument("--transition-kind", choices=["neural", "geometric"], default=None)
    p.add_argument("--corrupt-param", default=None,
                   help="test hook: perturb one analytic gradient")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SsntError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
