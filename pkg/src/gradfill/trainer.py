"""Teacher-forced maximum-likelihood training."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .corpus import PAD, SequencePair
from .optim import ParamOptimizer, clip_by_global_norm
from .seq2seq import ModelConfig, Seq2Seq, reverse_sequence

log = logging.getLogger(__name__)

ROLES = ("forward", "backward", "birnn", "eval-lm")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1.0
    batch_size: int = 32
    epochs: int = 10
    clip_norm: float = 5.0
    seed: int = 0
    optimizer: str = "sgd"  # "sgd" | "nesterov"
    momentum: float = 0.9
    valid_fraction: float = 0.1
    halve_on_plateau: bool = False
    dtype: str = "float32"  # working precision; checkpoints are always float64

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.optimizer not in ("sgd", "nesterov"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if not 0.0 <= self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must lie in [0, 1)")


@dataclass
class TrainResult:
    model: Seq2Seq
    history: list = field(default_factory=list)  # (epoch, train_nll, valid_nll)
    best_epoch: int = 0
    diverged: bool = False


def role_pairs(pairs: Sequence[SequencePair], role: str) -> list[SequencePair]:
    """Training data as seen by a model of the given role."""
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    if role == "backward":
        return [SequencePair(p.x, reverse_sequence(p.y)) for p in pairs]
    return list(pairs)


def split_pairs(pairs: Sequence[SequencePair], valid_fraction: float, seed: int):
    idx = np.random.default_rng(seed).permutation(len(pairs))
    n_valid = int(round(valid_fraction * len(pairs)))
    return [pairs[i] for i in idx[n_valid:]], [pairs[i] for i in idx[:n_valid]]


def _pad(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths


def _batches(pairs: Sequence[SequencePair], batch_size: int, rng: np.random.Generator | None):
    """Length-bucketed batches; shuffled when ``rng`` is given."""
    order = np.arange(len(pairs)) if rng is None else rng.permutation(len(pairs))
    chunk = batch_size * 50
    batches = []
    for s in range(0, len(order), chunk):
        part = sorted(order[s : s + chunk], key=lambda i: (len(pairs[i].y), len(pairs[i].x)))
        batches.extend(part[b : b + batch_size] for b in range(0, len(part), batch_size))
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def _batch_arrays(model: Seq2Seq, pairs, idx):
    Y, y_len = _pad([pairs[i].y for i in idx])
    if model.cfg.conditional:
        X, x_len = _pad([pairs[i].x for i in idx])
    else:
        X = x_len = None
    return X, x_len, Y, y_len


def corpus_nll(model: Seq2Seq, pairs: Sequence[SequencePair], batch_size: int = 64) -> float:
    """Mean per-token NLL over a set of pairs (no gradients)."""
    if not pairs:
        return float("nan")
    total, count = 0.0, 0
    for idx in _batches(pairs, batch_size, None):
        loss, ntok = model.batch_loss(model.P, *_batch_arrays(model, pairs, idx))
        total += float(loss.data)
        count += ntok
    return total / count


def train(
    config: TrainConfig,
    pairs: Sequence[SequencePair],
    model_config: ModelConfig,
    vocab=None,
    history_csv: str | Path | None = None,
) -> TrainResult:
    if not pairs:
        raise ValueError("cannot train on an empty corpus")
    init = Seq2Seq(model_config).params
    model = Seq2Seq(model_config, {k: v.astype(config.dtype) for k, v in init.items()}, vocab=vocab)
    train_set, valid_set = split_pairs(pairs, config.valid_fraction, config.seed)
    rng = np.random.default_rng(config.seed)
    names = sorted(model.params)
    opt = ParamOptimizer(model.params, config.lr, config.momentum if config.optimizer == "nesterov" else 0.0)

    def score() -> tuple[float, float]:
        tr = corpus_nll(model, train_set)
        va = corpus_nll(model, valid_set) if valid_set else tr
        return tr, va

    tr0, va0 = score()
    result = TrainResult(model=model, history=[(0, tr0, va0)])
    best_val = va0
    best = {k: v.copy() for k, v in model.params.items()}
    log.info("epoch 0 train %.4f valid %.4f", tr0, va0)

    for epoch in range(1, config.epochs + 1):
        total, count = 0.0, 0
        try:
            for idx in _batches(train_set, config.batch_size, rng):
                X, x_len, Y, y_len = _batch_arrays(model, train_set, idx)
                with ad.Tape() as tape:
                    tape.watch(*[model.P[k] for k in names])
                    loss, ntok = model.batch_loss(model.P, X, x_len, Y, y_len)
                    mean = ad.mul(loss, 1.0 / ntok)
                    grads = tape.gradient(mean, [model.P[k] for k in names])
                grads, _ = clip_by_global_norm(grads, config.clip_norm)
                if not all(np.isfinite(g).all() for g in grads):
                    raise ad.NonFiniteError("non-finite gradient")
                opt.step(dict(zip(names, grads)))
                total += float(loss.data)
                count += ntok
            valid = corpus_nll(model, valid_set) if valid_set else total / count
            train_nll = total / count
            if not (math.isfinite(train_nll) and math.isfinite(valid)):
                raise ad.NonFiniteError("non-finite loss")
        except ad.NonFiniteError as exc:
            log.warning("training diverged at epoch %d (%s); keeping last finite checkpoint", epoch, exc)
            result.diverged = True
            break
        result.history.append((epoch, train_nll, valid))
        log.info("epoch %d train %.4f valid %.4f", epoch, train_nll, valid)
        if valid <= best_val:
            best_val = valid
            best = {k: v.copy() for k, v in model.params.items()}
            result.best_epoch = epoch
        elif config.halve_on_plateau:
            opt.lr *= 0.5

    result.model = Seq2Seq(model_config, {k: v.astype(np.float64) for k, v in best.items()}, vocab=vocab)
    if history_csv is not None:
        write_history(result.history, history_csv)
    return result


def write_history(history, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_nll", "valid_nll"])
        for row in history:
            w.writerow([row[0], repr(row[1]), repr(row[2])])
