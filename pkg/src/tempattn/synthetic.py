"""Toy parallel corpora for desk-scale experiments.

Each generator returns token-string pairs; use :func:`integerize` to map
them through vocabularies built from the data.
"""
from __future__ import annotations

from collections import Counter

import numpy as np

from .corpus import Vocabulary, encode


def _words(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


def memorization_corpus(n: int = 50, vocab: int = 20, min_len: int = 5, max_len: int = 12, seed: int = 0):
    """Random source sentences; the target renames every word (``sK -> tK``).

    ``vocab`` counts the four special tokens, so ``vocab - 4`` content words
    are used on each side.
    """
    rng = np.random.default_rng(seed)
    k = vocab - 4
    src_words, tgt_words = _words("s", k), _words("t", k)
    pairs = []
    for _ in range(n):
        ids = rng.integers(k, size=int(rng.integers(min_len, max_len + 1)))
        pairs.append(([src_words[i] for i in ids], [tgt_words[i] for i in ids]))
    return pairs


def copy_corpus(n: int = 2000, vocab: int = 20, min_len: int = 4, max_len: int = 10, seed: int = 0):
    """Target identical to source; the gold alignment is the identity."""
    rng = np.random.default_rng(seed)
    words = _words("w", vocab - 4)
    pairs = []
    for _ in range(n):
        ids = rng.integers(len(words), size=int(rng.integers(min_len, max_len + 1)))
        s = [words[i] for i in ids]
        pairs.append((s, list(s)))
    return pairs


def dedup_corpus(n: int = 2000, vocab: int = 20, min_unique: int = 3, max_unique: int = 7,
                 repeats: int = 3, seed: int = 0):
    """Source = distinct words with ``repeats`` of them re-inserted as distractors;
    target = each distinct source word once, in order of first appearance."""
    rng = np.random.default_rng(seed)
    words = _words("w", vocab - 4)
    pairs = []
    for _ in range(n):
        m = int(rng.integers(min_unique, max_unique + 1))
        uniq = [words[i] for i in rng.choice(len(words), size=m, replace=False)]
        src = list(uniq)
        for _ in range(repeats):
            w = uniq[int(rng.integers(m))]
            first = src.index(w)
            src.insert(int(rng.integers(first + 1, len(src) + 1)), w)
        pairs.append((src, uniq))
    return pairs


def vocabularies(pairs) -> tuple[Vocabulary, Vocabulary]:
    src = Counter(w for s, _ in pairs for w in s)
    tgt = Counter(w for _, t in pairs for w in t)
    return (Vocabulary.from_counts(src, len(src) + 4), Vocabulary.from_counts(tgt, len(tgt) + 4))


def integerize(pairs, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
    return [(encode(s, src_vocab), encode(t, tgt_vocab)) for s, t in pairs]
