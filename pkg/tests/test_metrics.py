import random

import pytest
from hypothesis import given, strategies as st

from tempattn import metrics
from tempattn.metrics import (alignment_prf, bleu, corpus_alignment_prf, corpus_ter, format_pharaoh, levenshtein,
                              parse_pharaoh, repetition_stats, sentence_repetitions, tb, ter, ter_edits)

from oracles import (bleu_from_definition, edit_distance, exhaustive_ter_edits, random_bleu_corpus, tiny_ter_pairs)

toks = st.lists(st.sampled_from("abcd"), max_size=7)
nonempty = st.lists(st.sampled_from("abcd"), min_size=1, max_size=7)


def test_bleu_identity():
    r = bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d"]])
    assert r.bleu == pytest.approx(100.0) and r.bp == 1.0 and r.precisions == [1.0] * 4


def test_bleu_no_overlap():
    assert bleu([["x", "y"]], [["a", "b"]]).bleu == 0.0


def test_bleu_worked_example():
    r = bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]])
    assert r.precisions == [1.0] * 4
    assert r.bp == pytest.approx(0.77880, abs=1e-5)
    assert r.bleu == pytest.approx(77.880, abs=1e-3)


def test_bleu_matches_definition_on_random_corpora():
    rng = random.Random(7)
    for _ in range(20):
        hyps, refs = random_bleu_corpus(rng)
        want, want_bp = bleu_from_definition(hyps, refs)
        got = bleu(hyps, refs)
        assert abs(got.bleu - want) <= 1e-9
        assert abs(got.bp - want_bp) <= 1e-12


def test_bleu_errors():
    with pytest.raises(ValueError):
        bleu([], [])
    with pytest.raises(ValueError):
        bleu([["a"]], [])


@given(st.lists(st.tuples(nonempty, nonempty), min_size=1, max_size=5), st.randoms())
def test_bleu_permutation_invariant(pairs, r):
    shuffled = list(pairs)
    r.shuffle(shuffled)
    a = bleu([h for h, _ in pairs], [x for _, x in pairs]).bleu
    b = bleu([h for h, _ in shuffled], [x for _, x in shuffled]).bleu
    assert a == pytest.approx(b, abs=1e-9)


@given(st.lists(st.tuples(toks, nonempty), min_size=1, max_size=5))
def test_bleu_ranges(pairs):
    r = bleu([h for h, _ in pairs], [x for _, x in pairs])
    assert 0.0 <= r.bleu <= 100.0
    if any(h for h, _ in pairs):
        assert 0.0 < r.bp <= 1.0
    else:  # nothing hypothesised: the penalty's limit is 0
        assert r.bp == 0.0


def test_ter_examples():
    assert ter(["a", "b"], ["a", "b"]) == 0.0
    assert ter(["a", "b", "c"], ["a", "c"]) == 0.5
    assert ter(["c", "a", "b"], ["a", "b", "c"]) == pytest.approx(1 / 3)


def test_ter_matches_exhaustive_on_tiny_pairs():
    for h, r in tiny_ter_pairs(200, seed=0):
        assert ter_edits(h, r)[0] == exhaustive_ter_edits(h, r), (h, r)


def test_greedy_ter_known_counterexample():
    # greedy takes the locally best shift and ends one edit above the optimum
    h, r = "a b d c".split(), "c a d b".split()
    assert exhaustive_ter_edits(h, r) == 2
    assert ter_edits(h, r)[0] == 3


@given(toks, nonempty)
def test_ter_never_exceeds_levenshtein(h, r):
    assert ter(h, r) <= levenshtein(h, r) / len(r)
    assert levenshtein(h, r) == edit_distance(h, r)


def test_ter_empty_reference():
    with pytest.raises(ValueError):
        ter(["a"], [])


def test_tb_identities():
    corpus = [["a", "b", "c", "d", "e"], ["x", "y", "z", "w"]]
    assert tb(corpus, corpus) == -50.0
    assert tb([["p", "q"]], [["a", "b"]]) == 50.0
    assert corpus_ter([["p", "q"]], [["a", "b"]]) == 100.0


def test_tb_improves_when_substitution_fixed():
    refs = [list("abcdefgh"), list("ijklmnop")]
    worse = [list("abcdXfgh"), list("ijklmnop")]
    assert tb(refs, refs) < tb(worse, refs)


def test_eval_report_format():
    s = str(metrics.evaluate([["a", "b", "c", "d"]], [["a", "b", "c", "d", "e"]]))
    assert s == "BLEU=77.880 BP=0.77880 TER=20.000 TB=-28.940"


def test_alignment_examples():
    assert alignment_prf({(0, 0)}, {(0, 0)}) == (1.0, 1.0, 1.0)
    assert alignment_prf({(0, 0)}, {(1, 1)}) == (0.0, 0.0, 0.0)
    assert alignment_prf({(0, 0), (1, 0)}, {(0, 0), (1, 1)}) == (0.5, 0.5, 0.5)
    assert alignment_prf(set(), {(0, 0)})[0] == 1.0


pairs = st.sets(st.tuples(st.integers(0, 3), st.integers(0, 3)), max_size=6)


@given(pairs, pairs)
def test_alignment_swap_symmetry(m, g):
    p, r, f = alignment_prf(m, g)
    p2, r2, f2 = alignment_prf(g, m)
    assert (p, r) == (r2, p2) and f == pytest.approx(f2)


def test_corpus_alignment_is_micro_averaged():
    p, r, f = corpus_alignment_prf([{(0, 0), (1, 1)}, {(0, 1)}], [{(0, 0), (1, 1)}, {(0, 0)}])
    assert (p, r) == (2 / 3, 2 / 3)


def test_pharaoh_round_trip(tmp_path):
    links = {(0, 1), (2, 0), (1, 1)}
    assert parse_pharaoh(format_pharaoh(links)) == links
    assert parse_pharaoh("") == set()
    (tmp_path / "a.txt").write_text("0-0 1-1\n\n2-1\n", encoding="utf-8")
    assert metrics.read_pharaoh(tmp_path / "a.txt") == [{(0, 0), (1, 1)}, set(), {(2, 1)}]


def test_repetition_examples():
    assert repetition_stats([["a", "b", "c", "d"]]) == (0, 0.0)
    assert repetition_stats([["a", "b", "c", "a", "b", "c"]]) == (1, 3.0)
    assert repetition_stats([["x", "x", "x", "x"]]) == (1, 2.0)
    assert repetition_stats([]) == (0, 0.0)


def _nonoverlap(tokens, g):
    n, i, c = len(g), 0, 0
    while i + n <= len(tokens):
        if tuple(tokens[i:i + n]) == g:
            c, i = c + 1, i + n
        else:
            i += 1
    return c


@given(st.lists(st.sampled_from("ab"), max_size=10))
def test_repetitions_are_repeated_and_maximal(tokens):
    for g in sentence_repetitions(tokens):
        assert len(g) >= 2 and _nonoverlap(tokens, g) >= 2
        for w in "ab":
            assert _nonoverlap(tokens, g + (w,)) < 2
            assert _nonoverlap(tokens, (w,) + g) < 2
