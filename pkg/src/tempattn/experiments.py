"""Desk-scale experiments on synthetic corpora (memorization, copy alignment, repetition)."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from . import synthetic
from .decoding import greedy_decode_batch
from .metrics import corpus_alignment_prf, repetition_stats
from .seq2seq import ModelConfig, forced_alignments_batch
from .training import TrainConfig, train


@dataclass(frozen=True)
class ExperimentConfig:
    n_train: int
    n_dev: int = 0
    n_test: int = 0
    vocab: int = 20
    emb_dim: int = 32
    hidden_dim: int = 64
    train: TrainConfig = field(default_factory=TrainConfig)
    data_seed: int = 0


MEMORIZATION = ExperimentConfig(
    n_train=50, train=TrainConfig(batch_size=10, optimizer="adadelta", max_epochs=200, seed=1))
COPY = ExperimentConfig(
    n_train=2000, n_dev=100, n_test=200,
    train=TrainConfig(batch_size=40, optimizer="adadelta", max_epochs=60, seed=1))
REPETITION = ExperimentConfig(
    n_train=2000, n_dev=100, n_test=200,
    train=TrainConfig(batch_size=40, optimizer="adadelta", max_epochs=60, seed=1))


@dataclass
class RunReport:
    variant: str
    seed: int
    seconds: float
    dev_history: list[float]
    value: float = 0.0
    extra: dict = field(default_factory=dict)


def _split(pairs, exp: ExperimentConfig):
    a, b = exp.n_train, exp.n_train + exp.n_dev
    return pairs[:a], pairs[a:b], pairs[b:]


def _fit(pairs, exp: ExperimentConfig, variant: str, seed: int):
    """Train on the first ``n_train`` pairs, select on the next ``n_dev`` (or on
    the training set when there is no dev split); returns integerized test pairs."""
    tr, dev, test = _split(pairs, exp)
    sv, tv = synthetic.vocabularies(pairs)
    data = synthetic.integerize(tr, sv, tv)
    dev_data = synthetic.integerize(dev, sv, tv) if dev else data
    mcfg = ModelConfig(len(sv), len(tv), exp.emb_dim, exp.hidden_dim, variant=variant)
    result = train(mcfg, replace(exp.train, seed=seed), data, dev_data)
    return result, mcfg, data, synthetic.integerize(test, sv, tv)


def run_memorization(variant: str, seed: int = 1, exp: ExperimentConfig = MEMORIZATION) -> RunReport:
    """Train to memorize; value = fraction of training tokens reproduced by greedy decoding."""
    t0 = time.perf_counter()
    pairs = synthetic.memorization_corpus(exp.n_train, exp.vocab, seed=exp.data_seed)
    result, mcfg, data, _ = _fit(pairs, exp, variant, seed)
    hyps = greedy_decode_batch([s for s, _ in data], result.params, mcfg)
    correct = sum(a == b for h, (_, t) in zip(hyps, data) for a, b in zip(h.tokens, t))
    total = sum(len(t) for _, t in data)
    first = next((i + 1 for i, x in enumerate(result.dev_history) if x < 0.1), None)
    return RunReport(variant, seed, time.perf_counter() - t0, result.dev_history, correct / total,
                     {"first_epoch_below_0.1": first})


def run_copy_alignment(variant: str, seed: int = 1, exp: ExperimentConfig = COPY) -> RunReport:
    """Train a copy model; value = forced-decode alignment F1 against the identity on held-out pairs."""
    t0 = time.perf_counter()
    pairs = synthetic.copy_corpus(exp.n_train + exp.n_dev + exp.n_test, exp.vocab, seed=exp.data_seed)
    result, mcfg, _, test = _fit(pairs, exp, variant, seed)
    machine = forced_alignments_batch(test, result.params, mcfg)
    gold = [{(t, t) for t in range(len(tgt) - 1)} for _, tgt in test]
    p, r, f1 = corpus_alignment_prf(machine, gold)
    return RunReport(variant, seed, time.perf_counter() - t0, result.dev_history, f1, {"P": p, "R": r})


def run_repetition(variant: str, seed: int = 1, exp: ExperimentConfig = REPETITION) -> RunReport:
    """Train on the dedup task; value = repeated-phrase count in greedy output on held-out sources."""
    t0 = time.perf_counter()
    pairs = synthetic.dedup_corpus(exp.n_train + exp.n_dev + exp.n_test, exp.vocab, seed=exp.data_seed)
    result, mcfg, _, test = _fit(pairs, exp, variant, seed)
    hyps = greedy_decode_batch([s for s, _ in test], result.params, mcfg)
    count, avg = repetition_stats([h.words for h in hyps])
    exact = sum(h.words == t[:-1] for h, (_, t) in zip(hyps, test)) / len(test)
    return RunReport(variant, seed, time.perf_counter() - t0, result.dev_history, float(count),
                     {"avg_len": avg, "exact_match": exact})
