"""Beam search, greedy and ensemble decoding, UNK replacement, attention dumps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import softmax_np
from .corpus import BOS, EOS, UNK
from .seq2seq import ModelConfig, Net


class EnsembleConfigError(ValueError):
    pass


@dataclass
class Hypothesis:
    tokens: list[int]
    logprob: float
    attn: list[np.ndarray] = field(default_factory=list)
    finished: bool = False

    def score(self, len_norm: bool) -> float:
        if len_norm and self.tokens:
            return self.logprob / len(self.tokens)
        return self.logprob

    @property
    def words(self) -> list[int]:
        """Tokens without the final sentence-end."""
        return self.tokens[:-1] if self.finished else list(self.tokens)

    def attention(self) -> np.ndarray:
        return np.array(self.attn) if self.attn else np.zeros((0, 0))


def default_max_len(src_len: int) -> int:
    return 2 * src_len + 5


class _Member:
    """One model's tape-bound view during a search."""

    def __init__(self, params: Mapping[str, np.ndarray], cfg: ModelConfig, src: Sequence[int]):
        self.net = Net.bind(params, cfg, grad=False)
        self.enc = self.net.encode([src])
        self.state = self.net.initial_state(self.enc, [src])
        self._enc_rows = {1: self.enc}

    def step(self, y_prev: np.ndarray):
        n = len(y_prev)
        if n not in self._enc_rows:
            self._enc_rows[n] = self.enc.select(np.zeros(n, dtype=np.int64))
        logits, alpha, pending = self.net.step(self._enc_rows[n], self.state, y_prev)
        return logits.value, alpha, pending

    def commit(self, pending, alpha, rows, tokens):
        alpha = alpha.tape.const(alpha.value[rows])
        self.state = self.net.advance(pending.select(rows), alpha, tokens)


def _combine(logits: list[np.ndarray]) -> np.ndarray:
    if len(logits) == 1:
        lg = logits[0]
        return lg - ad.logsumexp_np(lg)[..., None]
    probs = sum(softmax_np(lg) for lg in logits) / len(logits)
    with np.errstate(divide="ignore"):
        return np.log(probs)


def _rank_key(h: Hypothesis, len_norm: bool):
    return (-h.score(len_norm), h.tokens)


def _search(src: Sequence[int], members: list[tuple[Mapping[str, np.ndarray], ModelConfig]],
            beam: int, max_len: int | None, len_norm: bool) -> Hypothesis:
    if beam < 1:
        raise ValueError("beam must be >= 1")
    src = list(src)
    max_len = default_max_len(len(src)) if max_len is None else max_len
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ms = [_Member(p, c, src) for p, c in members]
    live = [Hypothesis([], 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        y_prev = np.array([h.tokens[-1] if h.tokens else BOS for h in live], dtype=np.int64)
        outs = [m.step(y_prev) for m in ms]
        logp = _combine([o[0] for o in outs])
        alpha_mean = sum(o[1].value for o in outs) / len(outs)
        cum = np.array([h.logprob for h in live])[:, None] + logp
        k = beam - len(finished)
        flat = cum.reshape(-1)
        order = np.argsort(-flat, kind="stable")[:k]
        V = logp.shape[1]
        rows, toks, new_live = [], [], []
        for idx in order:
            r, tok = divmod(int(idx), V)
            if not np.isfinite(flat[idx]):
                continue
            parent = live[r]
            h = Hypothesis(parent.tokens + [tok], float(flat[idx]),
                           parent.attn + [alpha_mean[r].copy()])
            if tok == EOS:
                h.finished = True
                finished.append(h)
            else:
                new_live.append(h)
                rows.append(r)
                toks.append(tok)
        live = new_live
        if not live or len(finished) >= beam:
            break
        rows_a = np.array(rows, dtype=np.int64)
        toks_a = np.array(toks, dtype=np.int64)
        for m, (_, alpha, pending) in zip(ms, outs):
            m.commit(pending, alpha, rows_a, toks_a)
    pool = finished if finished else live
    return min(pool, key=lambda h: _rank_key(h, len_norm))


def beam_search(src: Sequence[int], params: Mapping[str, np.ndarray], cfg: ModelConfig,
                beam: int = 10, max_len: int | None = None, len_norm: bool = True):
    """Best hypothesis and its attention matrix (one row per emitted token).

    Every hypothesis carries its own decoder, history and coverage state.
    Hypotheses cut off by ``max_len`` have ``finished == False``.
    """
    best = _search(src, [(params, cfg)], beam, max_len, len_norm)
    return best, best.attention()


def ensemble_decode(src: Sequence[int], models: Sequence[Mapping[str, np.ndarray]], cfg, beam: int = 10,
                    max_len: int | None = None, len_norm: bool = True) -> Hypothesis:
    """Beam search over the arithmetic mean of the members' step posteriors.

    ``cfg`` is one ModelConfig shared by all members or a list, one per member.
    """
    if not models:
        raise ValueError("ensemble needs at least one model")
    cfgs = list(cfg) if isinstance(cfg, (list, tuple)) else [cfg] * len(models)
    if len(cfgs) != len(models):
        raise ValueError("one config per ensemble member")
    for c in cfgs[1:]:
        if (c.src_vocab, c.tgt_vocab) != (cfgs[0].src_vocab, cfgs[0].tgt_vocab):
            raise EnsembleConfigError("ensemble members have different vocabularies")
    return _search(src, list(zip(models, cfgs)), beam, max_len, len_norm)


def greedy_decode(src: Sequence[int], params: Mapping[str, np.ndarray], cfg: ModelConfig,
                  max_len: int | None = None) -> Hypothesis:
    return greedy_decode_batch([src], params, cfg, max_len)[0]


def greedy_decode_batch(srcs: Sequence[Sequence[int]], params: Mapping[str, np.ndarray], cfg: ModelConfig,
                        max_len: int | None = None) -> list[Hypothesis]:
    """Argmax decoding of many sentences at once (ties to the lowest id)."""
    net = Net.bind(params, cfg, grad=False)
    enc = net.encode(srcs)
    state = net.initial_state(enc, srcs)
    B = len(srcs)
    limits = [default_max_len(len(s)) if max_len is None else max_len for s in srcs]
    hyps = [Hypothesis([], 0.0) for _ in range(B)]
    y_prev = np.full(B, BOS, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    for t in range(max(limits)):
        logits, alpha, state = net.step(enc, state, y_prev)
        lg = logits.value
        logp = lg - ad.logsumexp_np(lg)[:, None]
        tok = np.argmax(logp, axis=1)
        state = net.advance(state, alpha, tok)
        for b in range(B):
            if done[b]:
                continue
            h = hyps[b]
            h.tokens.append(int(tok[b]))
            h.logprob += float(logp[b, tok[b]])
            h.attn.append(alpha.value[b, : len(srcs[b])].copy())
            if tok[b] == EOS:
                h.finished = True
                done[b] = True
            elif len(h.tokens) >= limits[b]:
                done[b] = True
        if done.all():
            break
        y_prev = tok
    return hyps


def replace_unk(tokens: Sequence[str], attn: np.ndarray, src_tokens: Sequence[str], lex=None,
                unk: str = "<unk>") -> list[str]:
    """Swap each UNK for the top translation of its most-attended source word,
    or for that source word itself when the lexicon has no entry."""
    out = list(tokens)
    for t, w in enumerate(tokens):
        if w != unk:
            continue
        row = np.asarray(attn[t])[: len(src_tokens)]
        if row.size == 0:
            continue
        src_w = src_tokens[int(np.argmax(row))]
        best = lex.top_k(src_w, 1) if lex is not None else []
        out[t] = best[0] if best else src_w
    return out


def format_attention_block(n: int, mat: np.ndarray) -> str:
    """One "SENT <n> T=<T> L=<l>" block: T lines of l decimals (6 significant digits)."""
    mat = np.asarray(mat, dtype=np.float64)
    T, l = mat.shape if mat.ndim == 2 else (0, 0)
    lines = [f"SENT {n} T={T} L={l}"]
    lines += [" ".join(f"{x:.6g}" for x in row) for row in mat]
    return "\n".join(lines) + "\n"


def write_attention_dump(path, mats: Sequence[np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(format_attention_block(n, m) for n, m in enumerate(mats)))


def read_attention_dump(path) -> list[np.ndarray]:
    mats = []
    with open(path, encoding="utf-8") as f:
        blocks = f.read().strip("\n").split("\n\n")
    for block in blocks:
        if not block.strip():
            continue
        lines = block.strip("\n").split("\n")
        head = lines[0].split()
        if head[0] != "SENT":
            raise ValueError(f"bad attention block header {lines[0]!r}")
        T = int(head[2].split("=")[1])
        l = int(head[3].split("=")[1])
        rows = [[float(x) for x in line.split()] for line in lines[1: 1 + T]]
        mats.append(np.array(rows).reshape(T, l))
    return mats
