"""Small model fixtures shared by several test modules."""
import numpy as np

from tempattn import autodiff as ad
from tempattn.corpus import BOS
from tempattn.seq2seq import ModelConfig, Net, init_params

VARIANTS = ("global", "temporal", "coverage", "local")


def tiny_config(variant="global", src_vocab=7, tgt_vocab=6, **kw):
    kw = {"emb_dim": 4, "hidden_dim": 6, "att_dim": 5, "readout_dim": 5, "cov_dim": 3, "local_D": 2.0,
          "dtype": "float64", **kw}
    return ModelConfig(src_vocab, tgt_vocab, variant=variant, **kw)


def random_params(cfg, seed=0, scale=0.5):
    return init_params(cfg, seed, scale=scale)


def sequence_logprob(src, seq, params, cfg):
    """Teacher-forced sum of full-vocabulary log posteriors of ``seq`` (need not end in EOS),
    plus the per-step log-normaliser of the logits."""
    net = Net.bind(params, cfg, grad=False)
    enc = net.encode([src])
    state = net.initial_state(enc, [src])
    y_prev = np.array([BOS])
    total = 0.0
    logits_rows = []
    for tok in seq:
        logits, alpha, state = net.step(enc, state, y_prev)
        state = net.advance(state, alpha, np.array([tok]))
        lg = logits.value[0]
        logits_rows.append(lg)
        total += float(lg[tok] - ad.logsumexp_np(lg))
        y_prev = np.array([tok])
    return total, logits_rows


def write_toy_bitext(d, n_train=40, n_dev=8, seed=0):
    """Word-reversal toy language pair plus identity gold alignments for the dev set."""
    import random
    r = random.Random(seed)
    words = ["alpha", "beta", "gamma", "delta", "kappa", "lambda", "omega", "sigma"]

    def mk(n, stem):
        src, tgt = [], []
        for _ in range(n):
            s = [r.choice(words) for _ in range(r.randint(3, 6))]
            src.append(" ".join(s))
            tgt.append(" ".join(w[::-1] for w in s))
        (d / f"{stem}.src").write_text("\n".join(src) + "\n", encoding="utf-8")
        (d / f"{stem}.tgt").write_text("\n".join(tgt) + "\n", encoding="utf-8")
        return tgt
    mk(n_train, "train")
    dev = mk(n_dev, "dev")
    gold = [" ".join(f"{i}-{i}" for i in range(len(t.split()))) for t in dev]
    (d / "gold.txt").write_text("\n".join(gold) + "\n", encoding="utf-8")


SMOKE_CONFIG = """\
# tiny end-to-end run
train_src = bpe.train.src
train_tgt = train.tgt
dev_src = bpe.dev.src
dev_tgt = dev.tgt
lexicon = lex.tsv
candidate_frequent = 4
out_dir = run
emb_dim = 8
hidden_dim = 12
batch_size = 10
max_epochs = 1
variant = temporal
beam = 3
"""


def smoke_pipeline(d, seed=3):
    """learn-bpe -> apply-bpe -> build-vocab -> train-lexicon -> train -> translate -> eval.

    Runs in directory ``d``; returns (exit codes, captured stdout of each step)."""
    import contextlib
    import io
    import os

    from tempattn.cli import dispatch

    write_toy_bitext(d)
    (d / "run.cfg").write_text(SMOKE_CONFIG, encoding="utf-8")
    steps = [
        ["learn-bpe", "--input", "train.src", "--output", "bpe.tab", "--merges", "20"],
        ["apply-bpe", "--table", "bpe.tab", "--input", "train.src", "--output", "bpe.train.src"],
        ["apply-bpe", "--table", "bpe.tab", "--input", "dev.src", "--output", "bpe.dev.src"],
        ["build-vocab", "--input", "bpe.train.src", "--output", "src.vocab"],
        ["train-lexicon", "--src", "bpe.train.src", "--tgt", "train.tgt", "--output", "lex.tsv"],
        ["train", "--config", "run.cfg", "--seed", str(seed)],
        ["translate", "--config", "run.cfg", "--checkpoint", "run/best.ckpt", "--input", "bpe.dev.src",
         "--output", "hyp.txt", "--dump-attn", "attn.txt", "--replace-unk", "lex.tsv"],
        ["eval", "--hyp", "hyp.txt", "--ref", "dev.tgt"],
        ["align-eval", "--checkpoint", "run/best.ckpt", "--src", "bpe.dev.src", "--tgt", "dev.tgt",
         "--gold", "gold.txt"],
        ["rep-stats", "--input", "hyp.txt"],
    ]
    codes, outs = [], []
    cwd = os.getcwd()
    os.chdir(d)
    try:
        for argv in steps:
            buf = io.StringIO()
            with contextlib.redirect_stdout(buf):
                codes.append(dispatch(argv))
            outs.append(buf.getvalue())
    finally:
        os.chdir(cwd)
    return codes, outs


SMOKE_ARTIFACTS = ["bpe.tab", "bpe.train.src", "src.vocab", "lex.tsv", "run/best.ckpt", "run/train.log",
                   "hyp.txt", "attn.txt"]
