"""Optimisers, batching and the epoch loop with dev-set model selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .seq2seq import ModelConfig, Net, batch_loss, init_params, save_checkpoint, substream

log = logging.getLogger(__name__)

Params = dict[str, np.ndarray]
Pair = tuple[Sequence[int], Sequence[int]]


class TrainingDiverged(RuntimeError):
    pass


def _all_finite(grads: Mapping[str, np.ndarray]) -> bool:
    return all(np.isfinite(g).all() for g in grads.values())


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_grads(grads: Mapping[str, np.ndarray], clip_norm: float | None) -> dict[str, np.ndarray]:
    if clip_norm is None or clip_norm <= 0:
        return dict(grads)
    norm = global_norm(grads)
    if norm <= clip_norm:
        return dict(grads)
    scale = clip_norm / norm
    return {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}


def sgd_step(params: Params, grads: Mapping[str, np.ndarray], lr: float,
             clip_norm: float | None = None) -> tuple[Params, bool]:
    """Plain SGD after global-norm clipping.  Returns (params, applied)."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not _all_finite(grads):
        return params, False
    grads = clip_grads(grads, clip_norm)
    out = dict(params)
    for k, g in grads.items():
        out[k] = params[k] - np.asarray(lr, dtype=params[k].dtype) * g
    return out, True


@dataclass
class AdaDeltaState:
    eg2: dict[str, np.ndarray]
    edx2: dict[str, np.ndarray]
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray], rho: float = 0.95, eps: float = 1e-6):
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, rho, eps)


def adadelta_step(params: Params, grads: Mapping[str, np.ndarray],
                  state: AdaDeltaState) -> tuple[Params, AdaDeltaState, bool]:
    if not _all_finite(grads):
        return params, state, False
    rho, eps = state.rho, state.eps
    out, eg2, edx2 = dict(params), dict(state.eg2), dict(state.edx2)
    for k, g in grads.items():
        if eg2[k].shape != g.shape:
            raise ValueError(f"adadelta: state shape {eg2[k].shape} != gradient shape {g.shape} for {k}")
        eg2[k] = rho * eg2[k] + (1 - rho) * g * g
        delta = -np.sqrt(edx2[k] + eps) / np.sqrt(eg2[k] + eps) * g
        edx2[k] = rho * edx2[k] + (1 - rho) * delta * delta
        out[k] = params[k] + delta.astype(params[k].dtype)
    return out, AdaDeltaState(eg2, edx2, rho, eps), True


def make_batches(corpus: Sequence, batch_size: int, bucket: bool = True, seed: int = 0) -> list[list]:
    """Partition the corpus into batches; every item appears exactly once.

    Items are (src, tgt) pairs.  With ``bucket``, items are sorted by source
    length (stable) and sliced, then the batch order is shuffled.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    order = list(range(len(corpus)))
    if bucket:
        order.sort(key=lambda i: len(corpus[i][0]))
        batches = [order[i: i + batch_size] for i in range(0, len(order), batch_size)]
        batches = [batches[i] for i in rng.permutation(len(batches))]
    else:
        order = [order[i] for i in rng.permutation(len(order))]
        batches = [order[i: i + batch_size] for i in range(0, len(order), batch_size)]
    return [[corpus[i] for i in b] for b in batches]


@dataclass
class TrainConfig:
    batch_size: int = 80
    optimizer: str = "adadelta"  # adadelta | sgd
    lr: float = 1.0  # sgd only
    rho: float = 0.95
    eps: float = 1e-6
    clip_norm: float = 1.0
    max_epochs: int = 10
    seed: int = 1
    eval_every: int = 1  # epochs between dev evaluations / checkpoints
    selection: str = "nll"  # nll | bleu
    bucket: bool = True
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adadelta", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.selection not in ("nll", "bleu"):
            raise ValueError(f"unknown selection metric {self.selection!r}")


def loss_and_grads(params: Params, cfg: ModelConfig, src, tgt, candidate=None):
    """Per-token mean NLL of a batch and its parameter gradients."""
    tape = ad.Tape(np.dtype(cfg.dtype))
    leaves = {k: tape.leaf(v, name=k) for k, v in params.items()}
    net = Net(leaves, cfg)
    nll, _, ntok = batch_loss(net, src, tgt, candidate)
    loss = ad.scalar_mul(nll, 1.0 / ntok)
    grads = ad.backward(tape, loss)
    return float(loss.value), {k: grads.of(v) for k, v in leaves.items()}


def corpus_nll(params: Params, cfg: ModelConfig, pairs: Sequence[Pair], batch_size: int = 64) -> float:
    """Per-token NLL over a corpus (no candidate restriction)."""
    total, ntok = 0.0, 0
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i: i + batch_size]
        net = Net.bind(params, cfg, grad=False)
        nll, _, n = batch_loss(net, [s for s, _ in chunk], [t for _, t in chunk])
        total += float(nll.value)
        ntok += n
    return total / ntok


@dataclass
class TrainResult:
    params: Params
    best_path: Path | None
    best_metric: float
    log: list[str] = field(default_factory=list)
    dev_history: list[float] = field(default_factory=list)
    skipped_steps: int = 0


def train(model_cfg: ModelConfig, cfg: TrainConfig, train_pairs: Sequence[Pair], dev_pairs: Sequence[Pair],
          out_dir=None, candidate_fn: Callable | None = None, dev_bleu_fn: Callable | None = None,
          extra_header: Mapping[str, str] | None = None, params: Params | None = None,
          on_epoch: Callable | None = None) -> TrainResult:
    """Epoch loop; keeps the parameters with the best dev metric.

    ``candidate_fn(batch)`` returns the candidate ids for a batch (or None).
    ``dev_bleu_fn(params)`` is required when selecting on BLEU.  When
    ``out_dir`` is given the best parameters are written to ``best.ckpt``
    and the log to ``train.log`` there.
    """
    if not dev_pairs:
        raise ValueError("dev set must be non-empty")
    if cfg.selection == "bleu" and dev_bleu_fn is None:
        raise ValueError("selection=bleu needs dev_bleu_fn")
    params = dict(params) if params is not None else init_params(model_cfg, cfg.seed)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "best.ckpt" if out_dir is not None else None
    state = AdaDeltaState.zeros_like(params, cfg.rho, cfg.eps) if cfg.optimizer == "adadelta" else None
    higher_better = cfg.selection == "bleu"
    lines: list[str] = []
    result = TrainResult(params, best_path, -math.inf if higher_better else math.inf, lines)

    initial_dev_nll = corpus_nll(params, model_cfg, dev_pairs)
    batch_seed = int(substream(cfg.seed, "batching").integers(2**31))
    for epoch in range(1, cfg.max_epochs + 1):
        batches = make_batches(train_pairs, cfg.batch_size, cfg.bucket, seed=batch_seed + epoch)
        for bi, batch in enumerate(batches, 1):
            src = [s for s, _ in batch]
            tgt = [t for _, t in batch]
            cand = candidate_fn(batch) if candidate_fn is not None else None
            loss, grads = loss_and_grads(params, model_cfg, src, tgt, cand)
            if cfg.optimizer == "sgd":
                params, ok = sgd_step(params, grads, cfg.lr, cfg.clip_norm)
            else:
                params, state, ok = adadelta_step(params, clip_grads(grads, cfg.clip_norm), state)
            if not ok:
                result.skipped_steps += 1
            lines.append(f"epoch={epoch} batch={bi} nll={loss:.6f}")
        if epoch % cfg.eval_every == 0 or epoch == cfg.max_epochs:
            try:
                dev_nll = corpus_nll(params, model_cfg, dev_pairs)
            except ad.NumericError:
                dev_nll = math.inf
            metric = dev_nll
            if higher_better and math.isfinite(dev_nll):
                metric = dev_bleu_fn(params)
            lines.append(f"dev epoch={epoch} metric={metric:.6f}")
            result.dev_history.append(metric)
            if not math.isfinite(dev_nll) or dev_nll > cfg.divergence_factor * initial_dev_nll:
                _write_log(out_dir, lines)
                raise TrainingDiverged(f"dev NLL {dev_nll:.4f} exceeds {cfg.divergence_factor}x the "
                                       f"initial {initial_dev_nll:.4f} at epoch {epoch}")
            better = metric > result.best_metric if higher_better else metric < result.best_metric
            if better:
                result.best_metric = metric
                result.params = params
                if best_path is not None:
                    save_checkpoint(best_path, params, model_cfg, cfg.seed, extra_header)
            log.info("epoch %d dev %s=%.4f", epoch, cfg.selection, metric)
        if on_epoch is not None and on_epoch(epoch, params) is False:
            break
    _write_log(out_dir, lines)
    return result


def _write_log(out_dir, lines):
    if out_dir is not None:
        (out_dir / "train.log").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
