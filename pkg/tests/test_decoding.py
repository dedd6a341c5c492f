import itertools

import numpy as np
import pytest

from tempattn.corpus import EOS
from tempattn.decoding import (EnsembleConfigError, Hypothesis, _combine, beam_search, default_max_len,
                               ensemble_decode, format_attention_block, greedy_decode, greedy_decode_batch,
                               read_attention_dump, replace_unk, write_attention_dump)
from tempattn.lexicon import Lexicon

from helpers import VARIANTS, random_params, sequence_logprob, tiny_config

SRC = [4, 6, 5, EOS]


def enumerate_best(src, params, cfg, max_len, len_norm):
    """Score every token sequence up to max_len; finished ones win if any exist."""
    V = cfg.tgt_vocab
    finished, unfinished = [], []
    for n in range(1, max_len + 1):
        for body in itertools.product([v for v in range(V) if v != EOS], repeat=n - 1):
            seq = list(body) + [EOS]
            finished.append((seq, sequence_logprob(src, seq, params, cfg)[0]))
    for seq in itertools.product([v for v in range(V) if v != EOS], repeat=max_len):
        unfinished.append((list(seq), sequence_logprob(src, list(seq), params, cfg)[0]))
    pool = finished or unfinished
    score = (lambda s, lp: lp / len(s)) if len_norm else (lambda s, lp: lp)
    return min(pool, key=lambda x: (-score(*x), x[0]))


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("len_norm", [True, False])
def test_wide_beam_matches_enumeration(variant, len_norm):
    cfg = tiny_config(variant, tgt_vocab=4)
    params = random_params(cfg, 3, scale=1.0)
    seq, lp = enumerate_best(SRC, params, cfg, 3, len_norm)
    hyp, attn = beam_search(SRC, params, cfg, beam=4 ** 3, max_len=3, len_norm=len_norm)
    assert hyp.tokens == seq
    assert hyp.logprob == pytest.approx(lp, rel=1e-10)
    assert attn.shape == (len(hyp.tokens), len(SRC))


@pytest.mark.parametrize("variant", VARIANTS)
def test_beam_one_is_greedy(variant):
    cfg = tiny_config(variant)
    for seed in range(3):
        params = random_params(cfg, seed, scale=1.0)
        b, attn = beam_search(SRC, params, cfg, beam=1)
        g = greedy_decode(SRC, params, cfg)
        assert b.tokens == g.tokens and b.logprob == g.logprob
        assert np.array_equal(attn, g.attention())


@pytest.mark.parametrize("variant", VARIANTS)
def test_logprob_is_sum_of_step_posteriors(variant):
    cfg = tiny_config(variant)
    params = random_params(cfg, 2, scale=1.0)
    hyp, attn = beam_search(SRC, params, cfg, beam=3)
    assert hyp.logprob == pytest.approx(sequence_logprob(SRC, hyp.tokens, params, cfg)[0], rel=1e-10)
    assert len(hyp.attn) == len(hyp.tokens)
    np.testing.assert_allclose(attn.sum(axis=1), 1.0, atol=1e-6)


def test_max_len_truncates_unfinished():
    cfg = tiny_config(tgt_vocab=6)
    params = random_params(cfg, 0)
    params["readout.b_o"] = params["readout.b_o"].copy()
    params["readout.b_o"][EOS] = -50.0
    hyp, _ = beam_search(SRC, params, cfg, beam=2, max_len=4)
    assert not hyp.finished and len(hyp.tokens) == 4 and hyp.words == hyp.tokens
    assert default_max_len(4) == 13
    with pytest.raises(ValueError):
        beam_search(SRC, params, cfg, beam=0)


def test_batched_greedy_matches_single():
    cfg = tiny_config("temporal")
    params = random_params(cfg, 4, scale=1.0)
    srcs = [SRC, [5, EOS], [6, 6, 6, 4, 5, EOS]]
    batch = greedy_decode_batch(srcs, params, cfg)
    for s, h in zip(srcs, batch):
        single = greedy_decode(s, params, cfg)
        assert h.tokens == single.tokens
        np.testing.assert_allclose(h.attention(), single.attention(), rtol=1e-10, atol=1e-14)


def test_combine_is_mean_of_posteriors():
    a, b = np.log(np.array([[0.8, 0.2]])), np.log(np.array([[0.6, 0.4]]))
    np.testing.assert_allclose(np.exp(_combine([a, b])), [[0.7, 0.3]])


@pytest.mark.parametrize("variant", VARIANTS)
def test_ensemble_of_copies_equals_single(variant):
    cfg = tiny_config(variant)
    params = random_params(cfg, 5, scale=1.0)
    single, _ = beam_search(SRC, params, cfg, beam=3)
    assert ensemble_decode(SRC, [params], cfg, beam=3).tokens == single.tokens
    assert ensemble_decode(SRC, [params] * 4, cfg, beam=3).tokens == single.tokens


def test_ensemble_of_different_variants_runs():
    cfgs = [tiny_config(v) for v in VARIANTS]
    models = [random_params(c, i) for i, c in enumerate(cfgs)]
    hyp = ensemble_decode(SRC, models, cfgs, beam=2)
    np.testing.assert_allclose(hyp.attention().sum(axis=1), 1.0, atol=1e-6)


def test_ensemble_vocab_mismatch():
    a, b = tiny_config(), tiny_config(tgt_vocab=9)
    with pytest.raises(EnsembleConfigError):
        ensemble_decode(SRC, [random_params(a), random_params(b)], [a, b])


def test_replace_unk():
    attn = np.array([[0.5, 0.2, 0.3], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
    lex = Lexicon({"chat": [("cat", 0.9), ("kitty", 0.1)]})
    src = ["le", "chat", "noir"]
    assert replace_unk(["the", "<unk>", "<unk>"], attn, src, lex) == ["the", "cat", "noir"]
    assert replace_unk(["a", "b", "c"], attn, src, lex) == ["a", "b", "c"]
    tie = np.array([[0.5, 0.5, 0.0]])
    assert replace_unk(["<unk>"], tie, src, None) == ["le"]


def test_attention_dump_round_trip(tmp_path):
    mats = [np.array([[0.25, 0.75], [1 / 3, 2 / 3]]), np.array([[1.0]])]
    write_attention_dump(tmp_path / "a.txt", mats)
    text = (tmp_path / "a.txt").read_text()
    assert text.startswith("SENT 0 T=2 L=2\n0.25 0.75\n0.333333 0.666667\n\nSENT 1 T=1 L=1\n1\n")
    back = read_attention_dump(tmp_path / "a.txt")
    np.testing.assert_allclose(back[0], mats[0], atol=1e-6)
    assert format_attention_block(3, np.zeros((0, 0))).startswith("SENT 3 T=0 L=0")
