"""Exhaustive search over fills for tiny vocabularies."""

from __future__ import annotations

import itertools

import numpy as np

from .baselines import fillable_ids
from .corpus import Template
from .seq2seq import Seq2Seq

ORACLE_CAP = 10**6


class OracleCapError(ValueError):
    pass


def check_budget(n_tokens: int, n_blanks: int, cap: int = ORACLE_CAP) -> int:
    total = n_tokens**n_blanks
    if total > cap:
        raise OracleCapError(f"exhaustive search needs {n_tokens}^{n_blanks} = {total} evaluations, above the cap of {cap}")
    return total


def exhaustive_fill(
    model: Seq2Seq,
    x,
    template: Template,
    allowed: np.ndarray | None = None,
    cap: int = ORACLE_CAP,
    batch: int = 256,
) -> tuple[list[int], float]:
    """Global NLL minimiser over all fills; ties go to the lexicographically first fill."""
    blanks = template.blanks
    enc = model.context(x)
    if not blanks:
        y = list(template.tokens)
        return y, model.sequence_nll(enc, y)[0]
    allowed = fillable_ids(model) if allowed is None else np.asarray(allowed)
    check_budget(len(allowed), len(blanks), cap)
    base = np.asarray(template.tokens, dtype=np.int64)
    best_fill, best_nll = None, np.inf
    combos = itertools.product(allowed.tolist(), repeat=len(blanks))
    while True:
        chunk = list(itertools.islice(combos, batch))
        if not chunk:
            break
        Y = np.tile(base, (len(chunk), 1))
        Y[:, blanks] = chunk
        nll = model.batch_nll(enc, Y)
        i = int(np.argmin(nll))  # first minimum within the chunk
        if nll[i] < best_nll:
            best_fill, best_nll = chunk[i], float(nll[i])
    return template.fill(best_fill), best_nll
