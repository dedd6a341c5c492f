"""Command-line entry point: ``tempattn <subcommand> ...``.

Exit status: 0 success, 1 usage error, 2 data or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import corpus, metrics
from .config import ConfigError, RunConfig
from .corpus import CorpusError, Vocabulary
from .decoding import (beam_search, ensemble_decode, replace_unk, write_attention_dump)
from .lexicon import Lexicon, build_candidate_list, frequent_words, train_model1
from .seq2seq import CheckpointError, load_checkpoint, param_shapes
from .subword import MergeTable, apply_bpe_sentence, learn_bpe_from_corpus, undo_bpe

log = logging.getLogger("tempattn")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="flat 'key = value' config file")
    p.add_argument("--seed", type=int, help="run seed (all randomness derives from it)")


def _model_flags(p):
    p.add_argument("--variant", choices=["global", "temporal", "coverage", "local"])
    p.add_argument("--history-window", metavar="N|inf",
                   help="temporal attention: only the last N steps count (default inf)")


def _decode_flags(p):
    p.add_argument("--beam", type=int)
    p.add_argument("--len-norm", choices=["on", "off"])
    p.add_argument("--max-len", type=int, help="default: 2 x source length + 5")
    p.add_argument("--ensemble", metavar="PATH,PATH,...", help="extra checkpoints to average with")
    p.add_argument("--dump-attn", metavar="PATH", help="write per-sentence attention matrices")
    p.add_argument("--replace-unk", metavar="LEXICON", help="replace UNK via attention + lexicon")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tempattn", description="Attention NMT toolkit with temporal attention.")
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)

    p = sub.add_parser("learn-bpe", help="learn BPE merges from a token file")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--merges", type=int, default=8000)

    p = sub.add_parser("apply-bpe", help="segment a token file with a merge table")
    _common(p)
    p.add_argument("--table", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("build-vocab", help="frequency-ranked vocabulary file")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-size", type=int, default=30000)
    p.add_argument("--min-count", type=int, default=1)

    p = sub.add_parser("train-lexicon", help="IBM Model 1 word translation table")
    _common(p)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--null", action="store_true", help="add a NULL source word")

    p = sub.add_parser("train", help="train an NMT model; writes best.ckpt and train.log to out_dir")
    _common(p)
    _model_flags(p)
    p.add_argument("--out-dir")
    p.add_argument("--max-epochs", type=int)

    p = sub.add_parser("translate", help="beam-search translation of a token file")
    _common(p)
    _model_flags(p)
    _decode_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--src-vocab")
    p.add_argument("--tgt-vocab")
    p.add_argument("--undo-bpe", action="store_true", help="join BPE units in the output")

    p = sub.add_parser("eval", help="BLEU / TER / TB of a hypothesis file")
    _common(p)
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)

    p = sub.add_parser("align-eval", help="forced-decode alignments scored against gold links")
    _common(p)
    _model_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--src")
    p.add_argument("--tgt")
    p.add_argument("--gold", required=True, help="Pharaoh file, 'i-j' = source i, target j")
    p.add_argument("--machine", help="score this Pharaoh file instead of forced decoding")
    p.add_argument("--output", help="write the forced-decode links (Pharaoh)")
    p.add_argument("--src-vocab")
    p.add_argument("--tgt-vocab")

    p = sub.add_parser("rep-stats", help="count of repeated phrases and their mean length")
    _common(p)
    p.add_argument("--input", required=True)

    p = sub.add_parser("dump-attn", help="write attention matrices (forced if --tgt is given)")
    _common(p)
    _model_flags(p)
    _decode_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt")
    p.add_argument("--output", required=True)
    p.add_argument("--src-vocab")
    p.add_argument("--tgt-vocab")
    return ap


# ---------------------------------------------------------------------------

def _run_config(args, **extra) -> RunConfig:
    overrides = {"seed": getattr(args, "seed", None)}
    for flag, key in (("variant", "variant"), ("history_window", "history_window"),
                      ("beam", "beam"), ("len_norm", "len_norm"), ("max_len", "max_len"),
                      ("out_dir", "out_dir"), ("max_epochs", "max_epochs")):
        overrides[key] = getattr(args, flag, None)
    overrides.update(extra)
    return RunConfig.load(args.config, overrides)


def _need_file(path, what):
    if path is None:
        raise UsageError(f"missing {what}")
    if not Path(path).is_file():
        raise DataError(f"{what} not found: {path}")
    return path


def cmd_learn_bpe(args):
    table = learn_bpe_from_corpus(corpus.read_corpus(_need_file(args.input, "input file")), args.merges)
    table.save(args.output)
    log.info("learned %d merges", len(table))


def cmd_apply_bpe(args):
    table = MergeTable.load(_need_file(args.table, "merge table"))
    sents = corpus.read_corpus(_need_file(args.input, "input file"))
    corpus.write_corpus(args.output, (apply_bpe_sentence(s, table) for s in sents))


def cmd_build_vocab(args):
    v = corpus.build_vocab(_need_file(args.input, "input file"), args.max_size, args.min_count)
    v.save(args.output)


def cmd_train_lexicon(args):
    src = corpus.read_corpus(_need_file(args.src, "source file"))
    tgt = corpus.read_corpus(_need_file(args.tgt, "target file"))
    if len(src) != len(tgt):
        raise DataError(f"{args.src} and {args.tgt} have different line counts")
    train_model1(list(zip(src, tgt)), args.iterations, args.null).save(args.output)


def _read_pairs(src_path, tgt_path, sv: Vocabulary, tv: Vocabulary):
    src = corpus.read_corpus(_need_file(src_path, "source file"))
    tgt = corpus.read_corpus(_need_file(tgt_path, "target file"))
    if len(src) != len(tgt):
        raise DataError(f"{src_path} and {tgt_path} have different line counts")
    return src, tgt, [(corpus.encode(s, sv), corpus.encode(t, tv)) for s, t in zip(src, tgt)]


def _vocab(rc: RunConfig, key: str, corpus_key: str, size_key: str) -> Vocabulary:
    path = rc.get(key)
    if path is not None:
        return Vocabulary.load(_need_file(path, f"{key} file"))
    data = rc.require(corpus_key)
    return corpus.build_vocab(_need_file(data, f"{corpus_key} file"), rc.int(size_key), rc.int("min_count"))


def cmd_train(args):
    from .training import train

    rc = _run_config(args)
    sv = _vocab(rc, "src_vocab", "train_src", "src_vocab_size")
    tv = _vocab(rc, "tgt_vocab", "train_tgt", "tgt_vocab_size")
    mcfg = rc.model_config(len(sv), len(tv))
    tcfg = rc.train_config()
    _, tgt, train_pairs = _read_pairs(rc.require("train_src"), rc.require("train_tgt"), sv, tv)
    dev_pairs = _read_pairs(rc.require("dev_src"), rc.require("dev_tgt"), sv, tv)[2]
    if not dev_pairs:
        raise DataError("dev set is empty")
    out_dir = Path(rc.get("out_dir", "run"))

    candidate_fn = None
    if rc.get("lexicon"):
        lex = Lexicon.load(_need_file(rc.get("lexicon"), "lexicon"))
        freq = frequent_words(tgt, rc.int("candidate_frequent"))
        k, cap = rc.int("candidate_k"), rc.int("candidate_cap")

        def candidate_fn(batch):
            bs = [[sv.words[i] for i in s] for s, _ in batch]
            bt = [[tv.words[i] for i in t] for _, t in batch]
            return build_candidate_list(bs, lex, freq, tv, k, bt, cap).sorted()

    out_dir.mkdir(parents=True, exist_ok=True)
    header = {}
    for side, vocab in (("src", sv), ("tgt", tv)):
        path = rc.get(f"{side}_vocab")
        if not path:
            path = str(out_dir / f"{side}.vocab")
            vocab.save(path)
        # stored relative to the checkpoint so a run directory can be moved
        header[f"{side}_vocab_file"] = os.path.relpath(path, out_dir)
    result = train(mcfg, tcfg, train_pairs, dev_pairs, out_dir, candidate_fn=candidate_fn,
                   extra_header=header)
    print(f"best dev {tcfg.selection}={result.best_metric:.6f} checkpoint={result.best_path}")


def _load_model(path, args):
    params, cfg, seed, header = load_checkpoint(_need_file(path, "checkpoint"))
    variant = getattr(args, "variant", None)
    window = getattr(args, "history_window", None)
    changes = {}
    if variant is not None and variant != cfg.variant:
        changes["variant"] = variant
    if window is not None:
        changes["history_window"] = 0 if window.lower() in ("inf", "unlimited") else int(window)
    if changes:
        from dataclasses import replace
        new = replace(cfg, **changes)
        if param_shapes(new) != {k: v.shape for k, v in params.items()}:
            raise DataError(f"checkpoint {path} was trained with variant '{cfg.variant}' and "
                            f"cannot run as '{new.variant}'")
        cfg = new
    return params, cfg, header


def _vocabs_for(args, header, checkpoint):
    """Vocabularies from the flags, else from the paths recorded in the checkpoint."""
    base = Path(checkpoint).parent
    paths = []
    for flag, key in ((args.src_vocab, "src_vocab_file"), (args.tgt_vocab, "tgt_vocab_file")):
        if flag:
            paths.append(flag)
        elif header.get(key):
            paths.append(str(base / header[key]))
        else:
            raise DataError(f"checkpoint {checkpoint} names no vocabularies; pass --src-vocab/--tgt-vocab")
    return (Vocabulary.load(_need_file(paths[0], "source vocabulary")),
            Vocabulary.load(_need_file(paths[1], "target vocabulary")))


def _decode_all(args, rc, sents, params, cfg, sv, extra_models):
    beam = rc.int("beam")
    len_norm = rc.flag("len_norm", True)
    max_len = rc.int("max_len")
    hyps = []
    for s in sents:
        ids = corpus.encode(s, sv)
        if extra_models:
            h = ensemble_decode(ids, [params] + [m for m, _ in extra_models],
                                [cfg] + [c for _, c in extra_models], beam, max_len, len_norm)
        else:
            h, _ = beam_search(ids, params, cfg, beam, max_len, len_norm)
        hyps.append(h)
    return hyps


def cmd_translate(args):
    rc = _run_config(args)
    params, cfg, header = _load_model(args.checkpoint, args)
    sv, tv = _vocabs_for(args, header, args.checkpoint)
    extra = []
    if args.ensemble:
        for p in args.ensemble.split(","):
            mp, mc, _ = _load_model(p, args)
            if (mc.src_vocab, mc.tgt_vocab) != (cfg.src_vocab, cfg.tgt_vocab):
                raise DataError(f"ensemble member {p} has different vocabulary sizes")
            extra.append((mp, mc))
    lex = Lexicon.load(_need_file(args.replace_unk, "lexicon")) if args.replace_unk else None
    sents = corpus.read_corpus(_need_file(args.input, "input file"))
    hyps = _decode_all(args, rc, sents, params, cfg, sv, extra)
    lines, mats = [], []
    for s, h in zip(sents, hyps):
        words = [tv.words[i] for i in h.words]
        if args.replace_unk:
            words = replace_unk(words, h.attention(), s + [corpus.SPECIALS[corpus.EOS]], lex)
        words = [w for w in words if w not in (corpus.SPECIALS[corpus.PAD], corpus.SPECIALS[corpus.BOS])]
        if args.undo_bpe:
            words = undo_bpe(words)
        lines.append(" ".join(words))
        mats.append(h.attention())
    Path(args.output).write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    if args.dump_attn:
        write_attention_dump(args.dump_attn, mats)


def cmd_eval(args):
    hyps = corpus.read_corpus(_need_file(args.hyp, "hypothesis file"))
    refs = corpus.read_corpus(_need_file(args.ref, "reference file"))
    if len(hyps) != len(refs):
        raise DataError(f"{args.hyp} has {len(hyps)} lines but {args.ref} has {len(refs)}")
    if not refs:
        raise DataError("empty corpus")
    print(metrics.evaluate(hyps, refs))


def cmd_align_eval(args):
    gold = metrics.read_pharaoh(_need_file(args.gold, "gold alignment file"))
    if args.machine:
        machine = metrics.read_pharaoh(_need_file(args.machine, "machine alignment file"))
    else:
        if not (args.checkpoint and args.src and args.tgt):
            raise UsageError("align-eval needs --machine or all of --checkpoint, --src, --tgt")
        from .seq2seq import forced_alignments_batch

        params, cfg, header = _load_model(args.checkpoint, args)
        sv, tv = _vocabs_for(args, header, args.checkpoint)
        pairs = _read_pairs(args.src, args.tgt, sv, tv)[2]
        links = forced_alignments_batch(pairs, params, cfg)
        machine = [{(j, t) for t, j in ls} for ls in links]
        if args.output:
            Path(args.output).write_text("".join(metrics.format_pharaoh(m) + "\n" for m in machine),
                                         encoding="utf-8")
    if len(machine) != len(gold):
        raise DataError(f"{len(machine)} machine alignments but {len(gold)} gold lines")
    p, r, f1 = metrics.corpus_alignment_prf(machine, gold)
    print(f"P={p:.4f} R={r:.4f} F1={f1:.4f}")


def cmd_rep_stats(args):
    count, avg = metrics.repetition_stats(corpus.read_corpus(_need_file(args.input, "input file")))
    print(f"count={count} avg_len={avg:.3f}")


def cmd_dump_attn(args):
    from .seq2seq import encode_decode_loss

    rc = _run_config(args)
    params, cfg, header = _load_model(args.checkpoint, args)
    sv, tv = _vocabs_for(args, header, args.checkpoint)
    if args.tgt:
        pairs = _read_pairs(args.src, args.tgt, sv, tv)[2]
        mats = [encode_decode_loss(s, t, params, cfg)[1] for s, t in pairs]
    else:
        sents = corpus.read_corpus(_need_file(args.src, "source file"))
        mats = [h.attention() for h in _decode_all(args, rc, sents, params, cfg, sv, [])]
    write_attention_dump(args.output, mats)


COMMANDS = {
    "learn-bpe": cmd_learn_bpe, "apply-bpe": cmd_apply_bpe, "build-vocab": cmd_build_vocab,
    "train-lexicon": cmd_train_lexicon, "train": cmd_train, "translate": cmd_translate,
    "eval": cmd_eval, "align-eval": cmd_align_eval, "rep-stats": cmd_rep_stats,
    "dump-attn": cmd_dump_attn,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            raise UsageError("tempattn: error: a subcommand is required")
        args = parser.parse_args(argv)
        if args.cmd is None:
            raise UsageError("tempattn: error: a subcommand is required")
        COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DataError, ConfigError, CorpusError, CheckpointError, ValueError, OSError) as exc:
        print(f"tempattn: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
