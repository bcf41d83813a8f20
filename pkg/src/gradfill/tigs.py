"""Gradient-search infilling.

Each blank carries a free embedding vector. A round visits the blanks in
order; for each one it takes Nesterov steps on the L2-penalised sequence NLL
with respect to that vector (O-step), then projects the vector back to a
token by scoring its nearest vocabulary embeddings, plus the current token,
with the plain NLL (P-step). Rounds repeat until one leaves the fill unchanged.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import NonFiniteError
from .baselines import constrained_beam, fillable_ids
from .corpus import BLANK, Template
from .optim import NesterovState, nesterov_step
from .seq2seq import CallStats, Seq2Seq

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TigsConfig:
    K: int | None = None  # None -> ceil(1% of the vocabulary)
    T: int = 50
    lam: float = 0.01
    alpha: float = 1.0
    momentum: float = 0.9
    o_steps_per_round: int = 1
    distance: str = "euclidean"
    init: str = "greedy"
    convergence: str = "unchanged-round"
    seed: int = 0

    def __post_init__(self):
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.o_steps_per_round < 0:
            raise ValueError("o_steps_per_round must be >= 0")
        if self.distance not in ("euclidean", "cosine"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.init not in ("greedy", "random"):
            raise ValueError(f"unknown init strategy {self.init!r}")
        if self.convergence != "unchanged-round":
            raise ValueError(f"unknown convergence rule {self.convergence!r}")

    def candidate_count(self, vocab_size: int, n_fillable: int) -> int:
        """Effective K: the configured value (or 1% of |V|) capped at the fillable tokens."""
        k = math.ceil(0.01 * vocab_size) if self.K is None else self.K
        if k > vocab_size:
            raise ValueError(f"K={k} exceeds vocabulary size {vocab_size}")
        return min(k, n_fillable)


@dataclass
class InfillState:
    fill: list[int]
    vecs: list[np.ndarray]
    opt: list[NesterovState]
    y: list[int]
    nll: float
    round: int = 0
    skipped: int = 0


@dataclass
class TigsResult:
    tokens: list[int]
    nll: float
    trace: list[float]  # NLL after initialisation, then after each round
    rounds: int
    init_steps: int = 0
    round_evals: list[int] = field(default_factory=list)
    round_steps: list[int] = field(default_factory=list)
    rows: list[tuple] = field(default_factory=list)  # (round, blank, token, nll)
    K: int = 0
    skipped: int = 0

    @property
    def decoder_steps(self) -> int:
        return self.init_steps + sum(self.round_steps)


def initialize_fill(model: Seq2Seq, x, template: Template, config: TigsConfig, stats: CallStats | None = None) -> InfillState:
    blanks = template.blanks
    if not blanks:
        raise ValueError("template has no blanks to fill")
    enc = model.context(x)
    if config.init == "greedy":
        y, logp = constrained_beam(model, enc, template, 1, stats=stats)
        nll = -logp
        fill = [y[p] for p in blanks]
    else:
        rng = np.random.default_rng(config.seed)
        allowed = fillable_ids(model)
        fill = [int(t) for t in rng.choice(allowed, size=len(blanks))]
        y = template.fill(fill)
        nll = model.sequence_nll(enc, y, stats=stats)[0]
    emb = model.embedding_matrix()
    vecs = [emb[t].copy() for t in fill]
    opt = [NesterovState.zeros_like(v, config.momentum, config.alpha) for v in vecs]
    return InfillState(fill, vecs, opt, y, float(nll))


def o_step(model: Seq2Seq, x, template: Template, state: InfillState, j: int, config: TigsConfig, stats: CallStats | None = None) -> None:
    """Update the j-th blank vector in place; other blanks stay fixed."""
    if not 0 <= j < len(state.fill):
        raise IndexError(f"blank index {j} out of range")

    def gradient(v: np.ndarray) -> np.ndarray:
        vecs = list(state.vecs)
        vecs[j] = v
        _, grads = model.fill_loss_and_grads(x, template, state.fill, vecs, config.lam, stats=stats)
        return grads[j]

    for _ in range(config.o_steps_per_round):
        try:
            state.vecs[j], state.opt[j] = nesterov_step(state.opt[j], state.vecs[j], gradient)
        except NonFiniteError:
            state.skipped += 1
            log.warning("non-finite gradient at blank %d; O-step skipped", j)
            return


def nearest_tokens(emb: np.ndarray, v: np.ndarray, k: int, allowed: np.ndarray, distance: str = "euclidean") -> np.ndarray:
    """The ``k`` allowed tokens closest to ``v``; ties go to the lower index."""
    rows = emb[allowed]
    if distance == "euclidean":
        d = ((rows - v) ** 2).sum(axis=1)
    else:
        denom = np.linalg.norm(rows, axis=1) * max(np.linalg.norm(v), 1e-12)
        d = 1.0 - (rows @ v) / np.maximum(denom, 1e-12)
    order = np.argsort(d, kind="stable")[:k]
    return allowed[order]


def p_step(
    model: Seq2Seq,
    x,
    template: Template,
    state: InfillState,
    j: int,
    k: int,
    config: TigsConfig,
    allowed: np.ndarray | None = None,
    stats: CallStats | None = None,
) -> list[int]:
    """Project blank j to the best of its K nearest tokens or the incumbent.

    Returns the candidate list that was scored (K nearest, then the incumbent).
    """
    allowed = fillable_ids(model) if allowed is None else allowed
    pos = template.blanks[j]
    incumbent = state.fill[j]
    cands = [int(t) for t in nearest_tokens(model.embedding_matrix(), state.vecs[j], k, allowed, config.distance)]
    cands.append(incumbent)
    Y = np.tile(np.asarray(state.y, dtype=np.int64), (len(cands), 1))
    Y[:, pos] = cands
    nlls = model.batch_nll(x, Y, stats=stats)
    best = min(range(len(cands)), key=lambda i: (nlls[i], cands[i]))
    choice = cands[best]
    if choice != incumbent:
        state.fill[j] = choice
        state.y[pos] = choice
        state.nll = float(nlls[best])
    state.vecs[j] = model.embedding_matrix()[choice].copy()
    state.opt[j] = NesterovState.zeros_like(state.vecs[j], config.momentum, config.alpha)
    return cands


def tigs_infill(model: Seq2Seq, x, template: Template, config: TigsConfig = TigsConfig()) -> TigsResult:
    blanks = template.blanks
    if not blanks:
        y = list(template.tokens)
        return TigsResult(y, model.sequence_nll(x, y)[0], [], 0)
    enc = model.context(x)
    allowed = fillable_ids(model)
    k = config.candidate_count(model.vocab_size, len(allowed))
    stats = CallStats()
    state = initialize_fill(model, enc, template, config, stats=stats)
    result = TigsResult(list(state.y), state.nll, [state.nll], 0, init_steps=stats.decoder_steps, K=k)
    for r in range(1, config.T + 1):
        before = list(state.fill)
        stats = CallStats()
        for j in range(len(blanks)):
            o_step(model, enc, template, state, j, config, stats=stats)
            p_step(model, enc, template, state, j, k, config, allowed, stats=stats)
            result.rows.append((r, j, state.fill[j], state.nll))
        state.round = r
        result.trace.append(state.nll)
        result.round_evals.append(stats.nll_evals)
        result.round_steps.append(stats.decoder_steps)
        if state.fill == before:
            break
    result.tokens, result.nll, result.rounds, result.skipped = list(state.y), state.nll, state.round, state.skipped
    return result


def expected_round_steps(m: int, n_blanks: int, k: int, o_steps: int = 1) -> int:
    """Decoder steps in one round: K+1 scored candidates plus the O-step passes, per blank."""
    return m * n_blanks * (k + 1) + m * n_blanks * o_steps


def tigs_unknown_length(
    model: Seq2Seq,
    x,
    gap_template: Sequence[int],
    length_range: Sequence[int],
    config: TigsConfig = TigsConfig(),
) -> tuple[list[int], int, dict]:
    """Fill one gap of unknown length.

    ``gap_template`` marks the gap with a single BLANK. Each length in
    ``length_range`` is solved independently and the completion with the
    lowest mean per-token NLL wins. Returns (sequence, length, {L: (y, mean nll)}).
    """
    lengths = list(length_range)
    if not lengths:
        raise ValueError("length range is empty")
    toks = list(gap_template)
    if toks.count(BLANK) != 1:
        raise ValueError("gap template must contain exactly one gap marker")
    g = toks.index(BLANK)
    enc = model.context(x)
    results = {}
    for L in lengths:
        if L < 0:
            raise ValueError("gap length must be non-negative")
        expanded = toks[:g] + [BLANK] * L + toks[g + 1 :]
        if not expanded:
            continue
        if L == 0:
            y = expanded
            nll = model.sequence_nll(enc, y)[0]
        else:
            res = tigs_infill(model, enc, Template(tuple(expanded)), config)
            y, nll = res.tokens, res.nll
        results[L] = (y, nll / len(y))
    if not results:
        raise ValueError("no admissible gap length")
    best_L = min(results, key=lambda L: (results[L][1], lengths.index(L)))
    return results[best_L][0], best_L, results


def write_trace(path: str | Path, result: TigsResult, instance: str = "0") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t")
        w.writerow(["instance", "round", "blank", "token", "nll"])
        for r, j, tok, nll in result.rows:
            w.writerow([instance, r, j, tok, repr(nll)])
