"""Corpus BLEU, TER with greedy block shifts, TB, alignment P/R/F1 and
repetition statistics.  Metrics work on token lists exactly as given."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

Tokens = Sequence[str]


@dataclass
class BleuReport:
    bleu: float  # 0..100
    bp: float
    precisions: list[float]
    hyp_len: int
    ref_len: int

    def __str__(self):
        return f"BLEU={self.bleu:.3f} BP={self.bp:.5f}"


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens], max_n: int = 4) -> BleuReport:
    """Single-reference corpus BLEU with clipped counts and no smoothing."""
    if len(hyps) != len(refs):
        raise ValueError(f"bleu: {len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise ValueError("bleu: empty corpus")
    match = [0] * max_n
    total = [0] * max_n
    H = R = 0
    for h, r in zip(hyps, refs):
        H += len(h)
        R += len(r)
        for n in range(1, max_n + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            match[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += max(len(h) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(match, total)]
    if H == 0:
        bp = 0.0
    else:
        bp = 1.0 if H > R else math.exp(1.0 - R / H)
    if min(precisions) <= 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuReport(score, bp, precisions, H, R)


def levenshtein(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


MAX_SHIFTS = 10
MAX_SHIFT_BLOCK = 10


def _shift(seq: list, start: int, length: int, dest: int) -> list:
    """Move seq[start:start+length] so it begins at ``dest`` of the remainder."""
    block = seq[start: start + length]
    rest = seq[:start] + seq[start + length:]
    return rest[:dest] + block + rest[dest:]


def _best_shift(hyp: list, ref: Sequence):
    best = None  # (distance, length, start, dest)
    n = len(hyp)
    for length in range(1, min(MAX_SHIFT_BLOCK, n - 1) + 1):
        for start in range(n - length + 1):
            for dest in range(n - length + 1):
                if dest == start:
                    continue
                cand = _shift(hyp, start, length, dest)
                d = levenshtein(cand, ref)
                key = (d, length, start, dest)
                if best is None or key < best:
                    best = key
    return best


def ter_edits(hyp: Tokens, ref: Tokens) -> tuple[int, list]:
    """Edit count (shifts + Levenshtein) and the shifted hypothesis.

    A shift is applied while it lowers the Levenshtein distance, so the total
    never grows; among shifts the one reaching the smallest distance wins,
    then the shortest block, leftmost start, leftmost target.
    """
    cur = list(hyp)
    shifts = 0
    base = levenshtein(cur, ref)
    while shifts < MAX_SHIFTS and base > 0:
        best = _best_shift(cur, ref)
        if best is None or best[0] >= base:
            break
        d, length, start, dest = best
        cur = _shift(cur, start, length, dest)
        base = d
        shifts += 1
    return shifts + base, cur


def ter(hyp: Tokens, ref: Tokens) -> float:
    """Edits per reference word."""
    if not ref:
        raise ValueError("ter: empty reference")
    return ter_edits(hyp, ref)[0] / len(ref)


def corpus_ter(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    """Total edits over total reference words, on the 0..100 scale."""
    if len(hyps) != len(refs):
        raise ValueError(f"ter: {len(hyps)} hypotheses but {len(refs)} references")
    edits = sum(ter_edits(h, r)[0] for h, r in zip(hyps, refs))
    words = sum(len(r) for r in refs)
    if words == 0:
        raise ValueError("ter: empty references")
    return 100.0 * edits / words


def tb(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    """(TER - BLEU) / 2 with both on the 0..100 scale; lower is better."""
    return (corpus_ter(hyps, refs) - bleu(hyps, refs).bleu) / 2.0


@dataclass
class EvalReport:
    bleu: BleuReport
    ter: float
    tb: float

    def __str__(self):
        return f"BLEU={self.bleu.bleu:.3f} BP={self.bleu.bp:.5f} TER={self.ter:.3f} TB={self.tb:.3f}"


def evaluate(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> EvalReport:
    b = bleu(hyps, refs)
    t = corpus_ter(hyps, refs)
    return EvalReport(b, t, (t - b.bleu) / 2.0)


# ---------------------------------------------------------------------------
# alignments

Links = set[tuple[int, int]]


def alignment_prf(machine: Iterable[tuple[int, int]], gold: Iterable[tuple[int, int]]):
    m, g = set(machine), set(gold)
    hit = len(m & g)
    p = hit / len(m) if m else 1.0
    r = hit / len(g) if g else 1.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def corpus_alignment_prf(machine: Sequence[Links], gold: Sequence[Links]):
    """Micro-averaged P/R/F1 over sentences (links counted across the corpus)."""
    if len(machine) != len(gold):
        raise ValueError(f"{len(machine)} machine alignments but {len(gold)} gold")
    m = {(k, i, j) for k, links in enumerate(machine) for i, j in links}
    g = {(k, i, j) for k, links in enumerate(gold) for i, j in links}
    return alignment_prf(m, g)


def parse_pharaoh(line: str) -> Links:
    links = set()
    for item in line.split():
        i, sep, j = item.partition("-")
        if not sep:
            raise ValueError(f"bad alignment link {item!r}")
        links.add((int(i), int(j)))
    return links


def format_pharaoh(links: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(links))


def read_pharaoh(path) -> list[Links]:
    with open(path, encoding="utf-8") as f:
        return [parse_pharaoh(line) for line in f.read().splitlines()]


# ---------------------------------------------------------------------------
# repetitions

def _nonoverlap_count(tokens: Tokens, gram: tuple) -> int:
    n, count, i = len(gram), 0, 0
    while i + n <= len(tokens):
        if tuple(tokens[i: i + n]) == gram:
            count += 1
            i += n
        else:
            i += 1
    return count


def sentence_repetitions(tokens: Tokens) -> list[tuple]:
    """Maximal repeated n-grams (n >= 2) with two or more non-overlapping occurrences.

    An n-gram is not maximal when some (n+1)-gram extending it on either
    side is itself repeated without overlap.
    """
    tokens = list(tokens)
    repeated: dict[int, set[tuple]] = {}
    for n in range(2, len(tokens) // 2 + 1):
        grams = {tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1)}
        repeated[n] = {g for g in grams if _nonoverlap_count(tokens, g) >= 2}
        if not repeated[n]:
            break
    out = []
    for n, grams in repeated.items():
        longer = repeated.get(n + 1, set())
        for g in sorted(grams):
            if not any(h[:-1] == g or h[1:] == g for h in longer):
                out.append(g)
    return out


def repetition_stats(hyps: Iterable[Tokens]) -> tuple[int, float]:
    """(number of maximal repeats over the corpus, their mean length; 0 if none)."""
    lengths = [len(g) for h in hyps for g in sentence_repetitions(h)]
    return len(lengths), (sum(lengths) / len(lengths) if lengths else 0.0)
