"""Byte-pair encoding: learn merges from word counts, segment and join.

Words are split into characters plus a separate ``</w>`` symbol while
learning and applying merges.  On output a lone ``</w>`` is glued onto the
preceding unit, so every word ends in exactly one unit carrying the marker.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

EOW = "</w>"
HEADER = "#bpe v1"


@dataclass(frozen=True)
class MergeTable:
    merges: tuple[tuple[str, str], ...] = ()
    eow: str = EOW
    ranks: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        ranks = {}
        for i, (a, b) in enumerate(self.merges):
            if (a, b) in ranks:
                raise ValueError(f"duplicate merge {a!r} {b!r}")
            if any(c.isspace() for c in a + b):
                raise ValueError(f"merge symbol contains whitespace: {a!r} {b!r}")
            ranks[(a, b)] = i
        object.__setattr__(self, "ranks", ranks)

    def __len__(self):
        return len(self.merges)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(HEADER + "\n")
            for a, b in self.merges:
                f.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path) -> "MergeTable":
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        if not lines or lines[0] != HEADER:
            raise ValueError(f"{path}: missing '{HEADER}' header")
        merges = []
        for n, line in enumerate(lines[1:], 2):
            parts = line.split(" ")
            if len(parts) != 2 or not all(parts):
                raise ValueError(f"{path}:{n}: expected 'a b'")
            merges.append((parts[0], parts[1]))
        return cls(tuple(merges))


def _symbols(word: str) -> tuple[str, ...]:
    return tuple(word) + (EOW,)


def _merge_word(sym: tuple[str, ...], a: str, b: str) -> tuple[str, ...]:
    out, i = [], 0
    while i < len(sym):
        if i + 1 < len(sym) and sym[i] == a and sym[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(sym[i])
            i += 1
    return tuple(out)


def _pairs(sym: Sequence[str]) -> Counter:
    return Counter(zip(sym, sym[1:]))


def learn_bpe(word_counts: Mapping[str, int], num_merges: int) -> MergeTable:
    """Greedy merge learning; ties between equally frequent pairs go to the
    lexicographically smallest (a, b).  Stops early once no pair occurs twice."""
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    words = {_symbols(w): c for w, c in word_counts.items() if w and c > 0}
    stats: Counter = Counter()
    where: dict[tuple[str, str], set] = defaultdict(set)
    for sym, c in words.items():
        for p, k in _pairs(sym).items():
            stats[p] += k * c
            where[p].add(sym)
    merges = []
    while len(merges) < num_merges and stats:
        best = min(stats.items(), key=lambda pc: (-pc[1], pc[0]))
        (a, b), count = best
        if count < 2:
            break
        merges.append((a, b))
        for sym in list(where.pop((a, b), ())):
            if sym not in words:
                continue
            c = words.pop(sym)
            new = _merge_word(sym, a, b)
            for p, k in _pairs(sym).items():
                stats[p] -= k * c
                if stats[p] <= 0:
                    del stats[p]
                if p in where:
                    where[p].discard(sym)
            words[new] = words.get(new, 0) + c
            for p, k in _pairs(new).items():
                stats[p] += k * c
                where[p].add(new)
        stats.pop((a, b), None)
    return MergeTable(tuple(merges))


def learn_bpe_from_corpus(sentences: Iterable[Sequence[str]], num_merges: int) -> MergeTable:
    counts = Counter(w for s in sentences for w in s)
    return learn_bpe(counts, num_merges)


def segment(token: str, table: MergeTable) -> tuple[str, ...]:
    """Merge symbols in priority order; the end marker is still a separate
    symbol unless a merge absorbed it."""
    if not token:
        raise ValueError("apply_bpe: empty token")
    sym = _symbols(token)
    ranks = table.ranks
    while len(sym) > 1:
        cands = [ranks[p] for p in zip(sym, sym[1:]) if p in ranks]
        if not cands:
            break
        a, b = table.merges[min(cands)]
        sym = _merge_word(sym, a, b)
    return sym


def apply_bpe(token: str, table: MergeTable) -> list[str]:
    """Segment one whitespace-free token; the last unit carries the end marker."""
    out = list(segment(token, table))
    if len(out) > 1 and out[-1] == table.eow:
        out[-2:] = [out[-2] + table.eow]
    return out


def apply_bpe_sentence(tokens: Sequence[str], table: MergeTable) -> list[str]:
    return [u for w in tokens for u in apply_bpe(w, table)]


def undo_bpe(units: Sequence[str], eow: str = EOW) -> list[str]:
    """Join subword units back into words; trailing units without a marker
    form a final word."""
    words, cur = [], []
    for u in units:
        if u.endswith(eow):
            cur.append(u[: -len(eow)])
            words.append("".join(cur))
            cur = []
        else:
            cur.append(u)
    if cur:
        words.append("".join(cur))
    return words
