"""Encoder-decoder with pluggable attention, teacher-forced loss and checkpoints."""
from __future__ import annotations

import struct
import zlib
from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from . import attention as attn
from .autodiff import Tape, Var
from .corpus import BOS, EOS, PAD
from .layers import (EncoderAnnotations, GruParams, ReadoutParams, bidir_encode, gru_cell,
                     gru_shapes, readout)


class ReachabilityError(ValueError):
    """A reference token is missing from the candidate list."""


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    emb_dim: int = 32
    hidden_dim: int = 64
    att_dim: int = 0  # 0 -> hidden_dim
    readout_dim: int = 0  # 0 -> hidden_dim
    variant: str = "global"
    cov_dim: int = 16
    local_D: float = 10.0
    history_window: int = 0  # 0 -> unlimited
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in attn.VARIANTS:
            raise ValueError(f"unknown attention variant {self.variant!r}; expected one of {attn.VARIANTS}")
        for f in ("src_vocab", "tgt_vocab", "emb_dim", "hidden_dim", "cov_dim"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if self.history_window < 0:
            raise ValueError("history_window must be >= 0")

    @property
    def att(self) -> int:
        return self.att_dim or self.hidden_dim

    @property
    def rdim(self) -> int:
        return self.readout_dim or self.hidden_dim

    @property
    def window(self) -> int | None:
        return self.history_window or None

    def to_text(self) -> dict[str, str]:
        return {k: str(v) for k, v in asdict(self).items()}

    @classmethod
    def from_text(cls, kv: Mapping[str, str]) -> "ModelConfig":
        out = {}
        for f in fields(cls):
            if f.name in kv:
                typ = {"int": int, "float": float, "str": str}[f.type if isinstance(f.type, str) else f.type.__name__]
                out[f.name] = typ(kv[f.name])
        return cls(**out)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    E, H, A, R = cfg.emb_dim, cfg.hidden_dim, cfg.att, cfg.rdim
    shapes = {
        "src_emb": (cfg.src_vocab, E),
        "tgt_emb": (cfg.tgt_vocab, E),
        **gru_shapes("enc_fwd", E, H),
        **gru_shapes("enc_bwd", E, H),
        "dec_init.W": (H, H),
        **gru_shapes("dec", E + 2 * H, H),
        "att.W_a": (H, A),
        "att.U_a": (2 * H, A),
        "att.v_a": (A,),
        "readout.W_s": (H, R),
        "readout.W_y": (E, R),
        "readout.W_c": (2 * H, R),
        "readout.b": (R,),
        "readout.W_o": (cfg.tgt_vocab, R),
        "readout.b_o": (cfg.tgt_vocab,),
    }
    if cfg.variant == "coverage":
        shapes["att.U_c"] = (cfg.cov_dim, A)
        shapes["cov_init"] = (cfg.src_vocab, cfg.cov_dim)
        shapes.update(gru_shapes("cov", 1 + E, cfg.cov_dim))
    elif cfg.variant == "local":
        shapes["local.W_p"] = (H, A)
        shapes["local.v_p"] = (A,)
    return shapes


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named consumer of the run seed."""
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


def init_params(cfg: ModelConfig, seed: int, scale: float = 0.08) -> dict[str, np.ndarray]:
    dtype = np.dtype(cfg.dtype)
    return {name: substream(seed, "init/" + name).uniform(-scale, scale, size=shape).astype(dtype)
            for name, shape in param_shapes(cfg).items()}


# ---------------------------------------------------------------------------
# decoder machinery shared by training, forced decoding and beam search

@dataclass
class EncState:
    ann: EncoderAnnotations
    keys: Var
    mask: np.ndarray  # (B, l) bool

    @property
    def h(self) -> Var:
        return self.ann.h

    @property
    def lengths(self) -> np.ndarray:
        return self.ann.lengths

    def select(self, rows) -> "EncState":
        t = self.h.tape
        ann = EncoderAnnotations(t.const(self.h.value[rows]), [], [], self.lengths[rows])
        return EncState(ann, t.const(self.keys.value[rows]), self.mask[rows])


@dataclass
class DecState:
    s: Var  # (B, hidden)
    hist: attn.TemporalHistory | None = None
    cov: attn.CoverageState | None = None

    def select(self, rows) -> "DecState":
        return DecState(self.s.tape.const(self.s.value[rows]),
                        None if self.hist is None else self.hist.select(rows),
                        None if self.cov is None else self.cov.select(rows))


class Net:
    """The model's parameters bound to one tape."""

    def __init__(self, leaves: Mapping[str, Var], cfg: ModelConfig):
        self.p = dict(leaves)
        self.cfg = cfg
        self.tape = next(iter(self.p.values())).tape
        self.enc_fwd = GruParams.from_params(self.p, "enc_fwd")
        self.enc_bwd = GruParams.from_params(self.p, "enc_bwd")
        self.dec = GruParams.from_params(self.p, "dec")
        self.att = attn.AttnParams.from_params(self.p)
        self.ro = ReadoutParams.from_params(self.p)
        self.cov_gru = GruParams.from_params(self.p, "cov") if cfg.variant == "coverage" else None
        self.local = (attn.LocalAttnParams(self.p["local.W_p"], self.p["local.v_p"], cfg.local_D)
                      if cfg.variant == "local" else None)

    @classmethod
    def bind(cls, params: Mapping[str, np.ndarray], cfg: ModelConfig, tape: Tape | None = None,
             grad: bool = True) -> "Net":
        tape = tape or Tape(np.dtype(cfg.dtype), grad=grad)
        return cls({k: tape.leaf(v, name=k) for k, v in params.items()}, cfg)

    def encode(self, src: Sequence[Sequence[int]]) -> EncState:
        lengths = np.array([len(s) for s in src])
        ids = np.full((len(src), lengths.max()), PAD, dtype=np.int64)
        for b, s in enumerate(src):
            ids[b, : len(s)] = s
        ann = bidir_encode(ids, self.p["src_emb"], self.enc_fwd, self.enc_bwd, lengths)
        return EncState(ann, attn.project_keys(ann.h, self.att), ann.mask)

    def initial_state(self, enc: EncState, src: Sequence[Sequence[int]]) -> DecState:
        s0 = ad.tanh(enc.ann.bwd[0] @ self.p["dec_init.W"])
        state = DecState(s0)
        if self.cfg.variant == "temporal":
            state.hist = attn.reset_history(enc.ann.l, self.cfg.window)
        elif self.cfg.variant == "coverage":
            ids = np.full(enc.mask.shape, PAD, dtype=np.int64)
            for b, s in enumerate(src):
                ids[b, : len(s)] = s
            state.cov = attn.CoverageState(ad.embedding(self.p["cov_init"], ids))
        return state

    def attend(self, enc: EncState, state: DecState):
        """Weights and context for the next step, plus the advanced history."""
        v = self.cfg.variant
        cov = state.cov.c if state.cov is not None else None
        e = attn.score_keys(state.s, enc.keys, self.att, cov)
        hist = state.hist
        if v == "temporal":
            alpha, hist = attn.attend_temporal(e, state.hist, enc.mask)
        elif v == "local":
            alpha = attn.attend_local(e, state.s, self.local, enc.lengths, enc.mask)
        else:
            alpha = attn.attend_global(e, enc.mask)
        return alpha, attn.context(alpha, enc.h), hist

    def step(self, enc: EncState, state: DecState, y_prev, out=None):
        """One decoder step: (logits, alpha, state before the coverage update)."""
        alpha, ctx, hist = self.attend(enc, state)
        y_emb = ad.embedding(self.p["tgt_emb"], np.asarray(y_prev, dtype=np.int64))
        s = gru_cell(ad.concat([y_emb, ctx], axis=-1), state.s, self.dec)
        logits = readout(s, y_emb, ctx, self.ro, out)
        return logits, alpha, DecState(s, hist, state.cov)

    def advance(self, state: DecState, alpha: Var, y) -> DecState:
        """Fold the emitted token into per-position coverage (no-op for other variants)."""
        if state.cov is None:
            return state
        y_emb = ad.embedding(self.p["tgt_emb"], np.asarray(y, dtype=np.int64))
        return replace(state, cov=attn.coverage_update(state.cov, alpha, y_emb, self.cov_gru))


def _candidate_map(candidate, tgt_vocab: int):
    if candidate is None:
        return None, None
    ids = np.array(sorted(set(int(i) for i in candidate)), dtype=np.int64)
    pos = np.full(tgt_vocab, -1, dtype=np.int64)
    pos[ids] = np.arange(len(ids))
    return ids, pos


def batch_loss(net: Net, src: Sequence[Sequence[int]], tgt: Sequence[Sequence[int]], candidate=None):
    """Teacher-forced summed NLL over a batch.

    Returns (nll Var, list of per-sentence T x l attention arrays, target token count).
    """
    if len(src) != len(tgt) or not src:
        raise ValueError("batch_loss: need equally many non-empty source and target sentences")
    for s, t in zip(src, tgt):
        if not s or not t:
            raise ValueError("batch_loss: empty sentence")
        if t[-1] != EOS:
            raise ValueError("batch_loss: target must end with the sentence-end id")
    cand_ids, cand_pos = _candidate_map(candidate, net.cfg.tgt_vocab)
    B = len(tgt)
    T = max(len(t) for t in tgt)
    gold = np.full((B, T), PAD, dtype=np.int64)
    for b, t in enumerate(tgt):
        gold[b, : len(t)] = t
    tmask = (np.arange(T)[None, :] < np.array([len(t) for t in tgt])[:, None])
    if cand_pos is not None:
        mapped = cand_pos[gold]
        bad = tmask & (mapped < 0)
        if bad.any():
            b, t = map(int, np.argwhere(bad)[0])
            raise ReachabilityError(f"target id {int(gold[b, t])} (sentence {b}, position {t}) "
                                    "is not in the candidate list")
        gold_idx = np.where(tmask, mapped, 0)
    else:
        gold_idx = gold

    tape = net.tape
    enc = net.encode(src)
    state = net.initial_state(enc, src)
    out = net.ro.restrict(cand_ids)
    y_prev = np.full(B, BOS, dtype=np.int64)
    total = None
    rows = []
    for t in range(T):
        logits, alpha, state = net.step(enc, state, y_prev, out)
        state = net.advance(state, alpha, gold[:, t])
        logp = ad.pick(ad.log_softmax(logits), gold_idx[:, t])
        m = tmask[:, t].astype(tape.dtype)
        nll_t = -ad.mul(logp, tape.const(m)).sum()
        total = nll_t if total is None else total + nll_t
        rows.append(alpha.value)
        y_prev = gold[:, t]
    attn_all = np.stack(rows, axis=1)  # (B, T, l)
    mats = [attn_all[b, : len(tgt[b]), : len(src[b])] for b in range(B)]
    return total, mats, int(tmask.sum())


def encode_decode_loss(src: Sequence[int], tgt: Sequence[int], params: Mapping[str, np.ndarray],
                       cfg: ModelConfig, candidate=None, variant: str | None = None):
    """Total teacher-forced NLL of one sentence pair and its T x l attention matrix."""
    if variant is not None and variant != cfg.variant:
        cfg = replace(cfg, variant=variant)
    net = Net.bind(params, cfg, grad=False)
    nll, mats, _ = batch_loss(net, [list(src)], [list(tgt)], candidate)
    return float(nll.value), mats[0]


def forced_decode_alignments(src: Sequence[int], tgt: Sequence[int], params: Mapping[str, np.ndarray],
                             cfg: ModelConfig, variant: str | None = None) -> set[tuple[int, int]]:
    """(target position, source position) links from the attention argmax.

    The sentence-end row is dropped; ties go to the lowest source position.
    """
    _, mat = encode_decode_loss(src, tgt, params, cfg, variant=variant)
    rows = mat[:-1] if tgt and tgt[-1] == EOS else mat
    return {(t, int(j)) for t, j in enumerate(attn.hard_links(rows))}


def forced_alignments_batch(pairs, params, cfg: ModelConfig, batch_size: int = 64):
    """Forced-decode links for many pairs, batched for speed."""
    out = []
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i: i + batch_size]
        net = Net.bind(params, cfg, grad=False)
        _, mats, _ = batch_loss(net, [s for s, _ in chunk], [t for _, t in chunk])
        for (s, t), mat in zip(chunk, mats):
            rows = mat[:-1] if t[-1] == EOS else mat
            out.append({(k, int(j)) for k, j in enumerate(attn.hard_links(rows))})
    return out


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"TATN"
FORMAT_VERSION = 1


def save_checkpoint(path, params: Mapping[str, np.ndarray], cfg: ModelConfig, seed: int,
                    extra: Mapping[str, str] | None = None) -> None:
    kv = dict(cfg.to_text())
    kv.update({k: str(v) for k, v in (extra or {}).items()})
    kv["seed"] = str(seed)
    header = "".join(f"{k}={kv[k]}\n" for k in sorted(kv)).encode("utf-8")
    buf = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header,
           struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        nb = name.encode("utf-8")
        buf.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        buf.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.append(arr.tobytes(order="C"))
    with open(path, "wb") as f:
        f.write(b"".join(buf))


def load_checkpoint(path):
    """Returns (params, ModelConfig, seed, header dict)."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: checkpoint format version {version}, expected {FORMAT_VERSION}")
    off = 12
    header = data[off: off + hlen].decode("utf-8")
    off += hlen
    kv = dict(line.split("=", 1) for line in header.splitlines() if line)
    cfg = ModelConfig.from_text(kv)
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    params = {}
    for _ in range(n):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off: off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", data, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(dims)
        off += 4 * count
        params[name] = arr.astype(np.dtype(cfg.dtype))
    expected = param_shapes(cfg)
    if set(expected) != set(params) or any(params[k].shape != expected[k] for k in expected):
        raise CheckpointError(f"{path}: tensors do not match the stored configuration")
    return params, cfg, int(kv.get("seed", 0)), kv
