"""IBM Model 1 word-translation table and per-batch candidate lists."""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import EOS, UNK, Vocabulary

log = logging.getLogger(__name__)

NULL = "<null>"
HEADER = "#lex v1"


@dataclass
class Lexicon:
    """t(tgt | src) rows, each sorted by descending probability then target word."""
    table: dict[str, list[tuple[str, float]]]
    log_likelihoods: list[float] = field(default_factory=list)
    skipped_pairs: int = 0

    def prob(self, src: str, tgt: str) -> float:
        for w, p in self.table.get(src, ()):
            if w == tgt:
                return p
        return 0.0

    def top_k(self, src: str, k: int) -> list[str]:
        if k < 1:
            raise ValueError("k must be >= 1")
        return [w for w, _ in self.table.get(src, ())[:k]]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(HEADER + "\n")
            for src in sorted(self.table):
                for tgt, p in self.table[src]:
                    f.write(f"{src}\t{tgt}\t{p:.9g}\n")

    @classmethod
    def load(cls, path) -> "Lexicon":
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        if not lines or lines[0] != HEADER:
            raise ValueError(f"{path}: missing '{HEADER}' header")
        rows: dict[str, list[tuple[str, float]]] = defaultdict(list)
        for n, line in enumerate(lines[1:], 2):
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{n}: expected 'src<TAB>tgt<TAB>prob'")
            rows[parts[0]].append((parts[1], float(parts[2])))
        return cls({s: _sorted_row(r) for s, r in rows.items()})


def _sorted_row(row: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    return sorted(row, key=lambda wp: (-wp[1], wp[0]))


def top_k_translations(src_word: str, lex: Lexicon, k: int) -> list[str]:
    return lex.top_k(src_word, k)


def train_model1(bitext: Sequence[tuple[Sequence[str], Sequence[str]]], iterations: int = 5,
                 use_null: bool = False, prune: float = 1e-6) -> Lexicon:
    """EM for t(tgt | src).

    Starts uniform over the target vocabulary.  ``log_likelihoods[i]`` is
    the corpus log-likelihood under the parameters entering iteration i
    (up to the constant length terms), so it never decreases.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pairs = []
    skipped = 0
    for s, t in bitext:
        if not s or not t:
            skipped += 1
            continue
        pairs.append(((NULL,) + tuple(s) if use_null else tuple(s), tuple(t)))
    if skipped:
        log.warning("model1: skipped %d pairs with an empty side", skipped)
    if not pairs:
        raise ValueError("model1: no usable sentence pairs")
    tgt_vocab = sorted({w for _, t in pairs for w in t})
    uniform = 1.0 / len(tgt_vocab)
    t_prob: dict[str, dict[str, float]] = defaultdict(dict)
    for s, t in pairs:
        for e in s:
            row = t_prob[e]
            for f in t:
                row[f] = uniform

    lls = []
    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        ll = 0.0
        for s, t in pairs:
            for f in t:
                z = sum(t_prob[e][f] for e in s)
                ll += math.log(z / len(s))
                for e in s:
                    counts[e][f] += t_prob[e][f] / z
        lls.append(ll)
        for e, row in counts.items():
            total = sum(row.values())
            t_prob[e] = {f: c / total for f, c in row.items()}

    table = {}
    for e, row in t_prob.items():
        kept = {f: p for f, p in row.items() if p >= prune} or row
        z = sum(kept.values())
        table[e] = _sorted_row((f, p / z) for f, p in kept.items())
    return Lexicon(table, lls, skipped)


def frequent_words(sentences: Iterable[Sequence[str]], m: int = 2000) -> list[str]:
    c = Counter(w for s in sentences for w in s)
    return [w for w, _ in sorted(c.items(), key=lambda wc: (-wc[1], wc[0]))[:m]]


@dataclass(frozen=True)
class CandidateList:
    ids: frozenset[int]

    def __len__(self):
        return len(self.ids)

    def __contains__(self, i):
        return i in self.ids

    def sorted(self) -> list[int]:
        return sorted(self.ids)


def build_candidate_list(batch_src: Sequence[Sequence[str]], lex: Lexicon | None, frequent: Sequence[str],
                         vocab: Vocabulary, k: int = 10, train_targets: Sequence[Sequence[str]] | None = None,
                         cap: int | None = None) -> CandidateList:
    """Frequent words, top-k translations of every batch source word and, in
    training mode, all reference words; sentence-end and UNK always included.

    With ``cap`` the frequent words are added in rank order only while room
    is left; the other parts are never dropped.
    """
    must = {EOS, UNK}
    if lex is not None:
        for s in batch_src:
            for w in s:
                must.update(vocab.id(x) for x in lex.top_k(w, k))
    if train_targets is not None:
        for t in train_targets:
            must.update(vocab.id(w) for w in t)
    if cap is not None and len(must) > cap:
        raise ValueError(f"candidate list needs {len(must)} entries but the cap is {cap}")
    ids = set(must)
    for w in frequent:
        if cap is not None and len(ids) >= cap:
            break
        ids.add(vocab.id(w))
    return CandidateList(frozenset(ids))
