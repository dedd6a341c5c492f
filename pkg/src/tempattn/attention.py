"""Additive attention scoring and the four normalisation variants.

Scores and weights are Vars of shape (..., l): a single sentence uses a 1-d
vector, a batch uses (B, l).  ``mask`` arguments are boolean arrays of the
same shape marking real (non-padding) source positions.

Temporal attention divides each exponentiated score by the sum of the
exponentiated scores the same source position received at all earlier
decoder steps, then normalises over the source.  Everything is kept in the
log domain: the history stores ``L_j = log sum_k exp(e_kj)`` and the
modulated logit is ``e_tj - L_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Var
from .layers import GruParams, gru_cell

VARIANTS = ("global", "temporal", "coverage", "local")

# additive logit for padding positions; exp() of it underflows to exactly 0
_MASK_LOGIT = -1e9


@dataclass
class AttnParams:
    W_a: Var  # (hidden, att)
    U_a: Var  # (2*hidden, att)
    v_a: Var  # (att,)
    U_c: Var | None = None  # (cov_dim, att), coverage variant only

    @classmethod
    def from_params(cls, params: Mapping[str, Var], prefix: str = "att") -> "AttnParams":
        return cls(params[f"{prefix}.W_a"], params[f"{prefix}.U_a"], params[f"{prefix}.v_a"],
                   params.get(f"{prefix}.U_c"))


def project_keys(h: Var, p: AttnParams) -> Var:
    """``U_a h_j`` for every position; computed once per sentence."""
    return h @ p.U_a


def score_keys(s_prev: Var, keys: Var, p: AttnParams, cov: Var | None = None) -> Var:
    """Raw scores from precomputed keys: ``v_a . tanh(W_a s + keys_j [+ U_c c_j])``."""
    q = s_prev @ p.W_a
    if keys.ndim == 3:
        q = q.reshape(q.shape[0], 1, q.shape[1])
    pre = keys + q
    if cov is not None:
        if p.U_c is None:
            raise ValueError("coverage term given but attention has no U_c")
        pre = pre + cov @ p.U_c
    att = pre.shape[-1]
    if p.v_a.shape != (att,):
        raise DimensionError(f"score: v_a {p.v_a.shape} does not fit attention dim {att}")
    e = ad.tanh(pre) @ p.v_a.reshape(att, 1)
    return e.reshape(e.shape[:-1])


def score(s_prev: Var, h: Var, p: AttnParams, cov: Var | None = None) -> Var:
    """``e_j = v_a . tanh(W_a s_prev + U_a h_j)`` for each annotation row of ``h``."""
    if h.shape[-1] != p.U_a.shape[0] or s_prev.shape[-1] != p.W_a.shape[0]:
        raise DimensionError(f"score: state {s_prev.shape} / annotations {h.shape} do not fit "
                             f"W_a {p.W_a.shape}, U_a {p.U_a.shape}")
    return score_keys(s_prev, project_keys(h, p), p, cov)


def _apply_mask(logits: Var, mask) -> Var:
    if mask is None:
        return logits
    m = np.where(np.asarray(mask, dtype=bool), 0.0, _MASK_LOGIT)
    return logits + logits.tape.const(m)


def attend_global(e: Var, mask=None) -> Var:
    return ad.softmax(_apply_mask(e, mask))


@dataclass
class TemporalHistory:
    """Running log of summed exponentiated past scores, one entry per source position.

    ``log_hist`` is ``None`` until the first step has been scored.  With a
    finite ``window`` only the last ``window`` steps count, and the raw
    scores of those steps are kept in ``recent``.
    """
    l: int
    t: int = 1
    log_hist: Var | None = None
    window: int | None = None
    recent: list[Var] = field(default_factory=list)

    def select(self, rows) -> "TemporalHistory":
        """Row-subset copy for beam reordering (values become constants)."""
        def pick(v):
            return v.tape.const(v.value[rows])
        return replace(self,
                       log_hist=None if self.log_hist is None else pick(self.log_hist),
                       recent=[pick(v) for v in self.recent])


def reset_history(l: int, window: int | None = None) -> TemporalHistory:
    if l < 1:
        raise ValueError("source length must be >= 1")
    if window is not None and window < 1:
        raise ValueError("history window must be >= 1")
    return TemporalHistory(l=l, window=window)


def attend_temporal(e: Var, hist: TemporalHistory, mask=None) -> tuple[Var, TemporalHistory]:
    """Temporally modulated attention for one decoder step.

    Returns the weights and the history advanced to include ``e``.
    """
    if e.shape[-1] != hist.l:
        raise DimensionError(f"attend_temporal: {e.shape[-1]} scores for source length {hist.l}")
    if hist.log_hist is None:
        alpha = attend_global(e, mask)
    else:
        alpha = ad.softmax(_apply_mask(e - hist.log_hist, mask))

    if hist.window is None:
        log_hist = e if hist.log_hist is None else ad.logaddexp(hist.log_hist, e)
        return alpha, replace(hist, t=hist.t + 1, log_hist=log_hist)
    recent = (hist.recent + [e])[-hist.window:]
    if len(recent) == 1:
        log_hist = recent[0]
    else:
        sh = e.shape + (1,)
        log_hist = ad.logsumexp(ad.concat([r.reshape(sh) for r in recent], axis=-1))
    return alpha, replace(hist, t=hist.t + 1, log_hist=log_hist, recent=recent)


@dataclass
class LocalAttnParams:
    W_p: Var  # (hidden, att)
    v_p: Var  # (att,)
    D: float = 10.0

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("local attention half-width D must be >= 1")


def predict_position(s: Var, p: LocalAttnParams, lengths) -> Var:
    """``p_t = l * sigmoid(v_p . tanh(W_p s))``, one value per row."""
    att = p.v_p.shape[0]
    u = ad.tanh(s @ p.W_p) @ p.v_p.reshape(att, 1)
    u = u.reshape(u.shape[:-1])
    lengths = np.asarray(lengths, dtype=s.value.dtype)
    return ad.mul(s.tape.const(lengths), ad.sigmoid(u))


def attend_local(e: Var, s: Var, p: LocalAttnParams, lengths, mask=None) -> Var:
    """Softmax weights reshaped by a Gaussian of std D/2 around a predicted position.

    Source positions are 0-based.  ``softmax(e) * gauss`` renormalised is
    the same as ``softmax(e + log gauss)``, which is what is computed.
    """
    l = e.shape[-1]
    pt = predict_position(s, p, lengths)
    sigma = p.D / 2.0
    pos = e.tape.const(np.arange(l))
    if e.ndim == 2:
        pt = pt.reshape(pt.shape[0], 1)
    d = pos - pt
    penalty = ad.scalar_mul(ad.mul(d, d), -1.0 / (2.0 * sigma * sigma))
    return ad.softmax(_apply_mask(e + penalty, mask))


@dataclass
class CoverageState:
    """Per-source-position coverage vectors, shape (..., l, cov_dim)."""
    c: Var

    @property
    def l(self) -> int:
        return self.c.shape[-2]

    def select(self, rows) -> "CoverageState":
        return CoverageState(self.c.tape.const(self.c.value[rows]))


def coverage_update(cov: CoverageState, alpha: Var, y_emb: Var, p: GruParams) -> CoverageState:
    """``c'_j = GRU(input=[alpha_j ; y_emb], state=c_j)`` at every position j.

    A reconstruction of the usual coverage-embedding update; the exact form
    of the original model is not published in full.
    """
    if alpha.shape[-1] != cov.l:
        raise DimensionError(f"coverage_update: {alpha.shape[-1]} weights for {cov.l} positions")
    tape = alpha.tape
    a = alpha.reshape(alpha.shape + (1,))
    d = y_emb.shape[-1]
    if alpha.ndim == 1:
        y = ad.mul(tape.const(np.ones((cov.l, 1))), y_emb.reshape(1, d))
    else:
        b = alpha.shape[0]
        y = ad.mul(tape.const(np.ones((b, cov.l, 1))), y_emb.reshape(b, 1, d))
    x = ad.concat([a, y], axis=-1)
    return CoverageState(gru_cell(x, cov.c, p))


def context(alpha: Var, h: Var) -> Var:
    """``sum_j alpha_j h_j``; alpha (..., l), h (..., l, d) -> (..., d)."""
    w = alpha.reshape(alpha.shape + (1,))
    return ad.mul(w, h).sum(axis=-2)


def hard_links(alpha: np.ndarray) -> np.ndarray:
    """Argmax source position per row; ties go to the lowest index."""
    return np.argmax(np.asarray(alpha), axis=-1)
