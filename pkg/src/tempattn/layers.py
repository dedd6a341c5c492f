"""GRU cell, bidirectional encoder and the decoder readout layer.

All functions take row-major batches: a vector input of size d is an array of
shape (..., d) and weight matrices are stored (in, out), so ``x @ W``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Var

GRU_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


@dataclass
class GruParams:
    W_z: Var
    U_z: Var
    b_z: Var
    W_r: Var
    U_r: Var
    b_r: Var
    W_h: Var
    U_h: Var
    b_h: Var

    @classmethod
    def from_params(cls, params: Mapping[str, Var], prefix: str) -> "GruParams":
        return cls(*(params[f"{prefix}.{n}"] for n in GRU_NAMES))

    @property
    def hidden_size(self) -> int:
        return self.U_z.shape[0]


def gru_shapes(prefix: str, input_dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for gate in "zrh":
        shapes[f"{prefix}.W_{gate}"] = (input_dim, hidden)
        shapes[f"{prefix}.U_{gate}"] = (hidden, hidden)
        shapes[f"{prefix}.b_{gate}"] = (hidden,)
    return shapes


def gru_cell(x: Var, h_prev: Var, p: GruParams) -> Var:
    """One GRU step; ``h = (1 - z) * h_prev + z * h_tilde``."""
    if x.shape[-1] != p.W_z.shape[0] or h_prev.shape[-1] != p.hidden_size:
        raise DimensionError(
            f"gru_cell: input {x.shape} / state {h_prev.shape} do not fit "
            f"W {p.W_z.shape}, U {p.U_z.shape}")
    z = ad.sigmoid(x @ p.W_z + h_prev @ p.U_z + p.b_z)
    r = ad.sigmoid(x @ p.W_r + h_prev @ p.U_r + p.b_r)
    h_tilde = ad.tanh(x @ p.W_h + ad.mul(r, h_prev) @ p.U_h + p.b_h)
    return h_prev + ad.mul(z, h_tilde - h_prev)


def _masked(new: Var, old: Var, m: np.ndarray | None) -> Var:
    # rows with m == 0 keep their old state (padding)
    if m is None:
        return new
    mv = new.tape.const(m[:, None])
    return old + ad.mul(mv, new - old)


@dataclass
class EncoderAnnotations:
    """Per-position concatenated forward/backward states.

    ``h`` has shape (B, l, 2*hidden); ``lengths`` holds the true length of
    each row, positions past it are padding.
    """
    h: Var
    fwd: list[Var]
    bwd: list[Var]
    lengths: np.ndarray

    @property
    def l(self) -> int:
        return self.h.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.l)[None, :] < self.lengths[:, None]


def _stack(states: list[Var]) -> Var:
    b, d = states[0].shape
    return ad.concat([s.reshape(b, 1, d) for s in states], axis=1)


def bidir_encode(src_ids, embed: Var, fwd: GruParams, bwd: GruParams,
                 lengths=None) -> EncoderAnnotations:
    """Run both GRUs from zero states and concatenate per position.

    ``src_ids`` is a 1-d sequence or a (B, l) padded batch.
    """
    ids = np.asarray(src_ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[1] == 0:
        raise ValueError("bidir_encode: empty source sequence")
    if ids.min() < 0 or ids.max() >= embed.shape[0]:
        raise ValueError(f"bidir_encode: token id out of range for vocabulary of {embed.shape[0]}")
    B, L = ids.shape
    lengths = np.full(B, L) if lengths is None else np.asarray(lengths)
    padded = bool((lengths < L).any())
    mask = (np.arange(L)[None, :] < lengths[:, None]).astype(embed.value.dtype)
    tape = embed.tape
    x = ad.embedding(embed, ids)
    xs = [x[:, j, :] for j in range(L)]

    zeros = tape.const(np.zeros((B, fwd.hidden_size)))
    h = zeros
    fwd_states = []
    for j in range(L):
        h = gru_cell(xs[j], h, fwd)
        fwd_states.append(h)
    h = tape.const(np.zeros((B, bwd.hidden_size)))
    bwd_states = [None] * L
    for j in reversed(range(L)):
        h = _masked(gru_cell(xs[j], h, bwd), h, mask[:, j] if padded else None)
        bwd_states[j] = h
    annotations = ad.concat([_stack(fwd_states), _stack(bwd_states)], axis=-1)
    return EncoderAnnotations(annotations, fwd_states, bwd_states, lengths)


READOUT_NAMES = ("W_s", "W_y", "W_c", "b", "W_o", "b_o")


@dataclass
class ReadoutParams:
    W_s: Var
    W_y: Var
    W_c: Var
    b: Var
    W_o: Var  # (V, readout_dim), one row per output word
    b_o: Var  # (V,)

    @classmethod
    def from_params(cls, params: Mapping[str, Var], prefix: str = "readout") -> "ReadoutParams":
        return cls(*(params[f"{prefix}.{n}"] for n in READOUT_NAMES))

    def restrict(self, ids=None) -> tuple[Var, Var]:
        """Output matrix (readout_dim, C) and bias (C,) for candidate ``ids``."""
        if ids is None:
            return self.W_o.T, self.b_o
        ids = np.asarray(ids, dtype=np.int64)
        return self.W_o[ids].T, self.b_o[ids]


def readout(s_t: Var, y_prev_emb: Var, ctx: Var, p: ReadoutParams, out=None) -> Var:
    """Logits over the (possibly candidate-restricted) output vocabulary.

    ``out`` is a precomputed ``p.restrict(...)`` pair; pass it when the
    same restriction is reused across decoder steps.
    """
    W_out, b_out = out if out is not None else p.restrict()
    hid = ad.tanh(s_t @ p.W_s + y_prev_emb @ p.W_y + ctx @ p.W_c + p.b)
    return hid @ W_out + b_out
