"""Tokenised text I/O, vocabularies and integerisation."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")

VOCAB_HEADER = "#vocab v1"


class CorpusError(ValueError):
    """Malformed or unreadable corpus/vocabulary data."""


def read_lines(path) -> list[str]:
    """UTF-8 lines without trailing newlines; invalid bytes raise with the line number."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc.strerror}") from None
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    out = []
    for n, line in enumerate(lines, 1):
        try:
            out.append(line.decode("utf-8").rstrip("\r"))
        except UnicodeDecodeError:
            raise CorpusError(f"{path}:{n}: invalid UTF-8") from None
    return out


def tokenize(line: str) -> list[str]:
    return line.split()


def read_corpus(path) -> list[list[str]]:
    return [tokenize(line) for line in read_lines(path)]


def write_corpus(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in sentences:
            f.write(" ".join(s) + "\n")


@dataclass
class Vocabulary:
    words: list[str]
    counts: list[int]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.words[:4]) != SPECIALS:
            raise CorpusError("vocabulary must start with the four special tokens")
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise CorpusError("duplicate word in vocabulary")

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def id(self, word: str) -> int:
        return self.index.get(word, UNK)

    @classmethod
    def from_counts(cls, counts: Counter, max_size: int, min_count: int = 1) -> "Vocabulary":
        if max_size < 5:
            raise ValueError("max_size must be >= 5")
        ranked = sorted(((w, c) for w, c in counts.items() if c >= min_count and w not in SPECIALS),
                        key=lambda wc: (-wc[1], wc[0]))
        ranked = ranked[: max_size - len(SPECIALS)]
        return cls(list(SPECIALS) + [w for w, _ in ranked],
                   [0] * len(SPECIALS) + [c for _, c in ranked])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(VOCAB_HEADER + "\n")
            for w, c in zip(self.words, self.counts):
                f.write(f"{w}\t{c}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = read_lines(path)
        if not lines or lines[0] != VOCAB_HEADER:
            raise CorpusError(f"{path}: missing '{VOCAB_HEADER}' header")
        words, counts = [], []
        for n, line in enumerate(lines[1:], 2):
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{n}: expected 'word<TAB>count'")
            try:
                counts.append(int(parts[1]))
            except ValueError:
                raise CorpusError(f"{path}:{n}: bad count {parts[1]!r}") from None
            words.append(parts[0])
        return cls(words, counts)


def count_tokens(sentences: Iterable[Sequence[str]]) -> Counter:
    c = Counter()
    for s in sentences:
        c.update(s)
    return c


def build_vocab(path, max_size: int, min_count: int = 1) -> Vocabulary:
    return Vocabulary.from_counts(count_tokens(read_corpus(path)), max_size, min_count)


def encode(tokens: Sequence[str], vocab: Vocabulary) -> list[int]:
    """Ids with the sentence-end id appended; unknown words map to UNK."""
    return [vocab.id(w) for w in tokens] + [EOS]


def decode(ids: Sequence[int], vocab: Vocabulary) -> list[str]:
    """Tokens up to (not including) the first sentence-end; padding and BOS are dropped."""
    out = []
    for i in ids:
        if i == EOS:
            break
        if i in (PAD, BOS):
            continue
        out.append(vocab.words[i])
    return out
