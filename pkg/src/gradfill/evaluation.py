"""Metrics and the mask-strategy x ratio evaluation grid."""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import beam_fill_backward, beam_fill_both, beam_fill_forward, bibs_fill, gsn_fill
from .corpus import MaskError, SequencePair, Template, mask_middle, mask_random
from .seq2seq import Seq2Seq
from .tigs import TigsConfig, tigs_infill

log = logging.getLogger(__name__)

BLEU_EPS = 1e-9
ALGORITHMS = ("bs-f", "bs-b", "bs-fb", "bibs", "gsn", "tigs")
DISPLAY = {"bs-f": "Seq2Seq-f", "bs-b": "Seq2Seq-b", "bs-fb": "Seq2Seq-f+b", "bibs": "BiBS", "gsn": "GSN", "tigs": "TIGS"}
STRATEGIES = ("middle", "random")
RATIOS = (0.25, 0.5, 0.75)


# --- model-based NLL ---------------------------------------------------------


def eval_nll(eval_lm: Seq2Seq, instances: Sequence[tuple], vocab=None) -> float:
    """Mean over instances of the per-token NLL under ``eval_lm``.

    ``instances`` holds (x, y) pairs of index sequences; x is ignored by an
    unconditional model.
    """
    if not instances:
        raise ValueError("no instances to score")
    if vocab is not None and eval_lm.vocab is not None and list(vocab.itos) != list(eval_lm.vocab.itos):
        raise ValueError("evaluation model vocabulary differs from the inference vocabulary")
    if vocab is not None and len(vocab) != eval_lm.vocab_size:
        raise ValueError(f"vocabulary size {len(vocab)} != evaluation model size {eval_lm.vocab_size}")
    scores = []
    for x, y in instances:
        if max(y) >= eval_lm.vocab_size:
            raise ValueError("token index outside the evaluation model vocabulary")
        scores.append(eval_lm.sequence_nll(x if eval_lm.cfg.conditional else None, y)[1])
    return float(np.mean(scores))


# --- BLEU ----------------------------------------------------------------------


def _ngrams(seq: Sequence, n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


class References:
    """Clipping counts and lengths of a fixed reference set."""

    def __init__(self, references: Sequence[Sequence], max_n: int = 4):
        refs = [list(r) for r in references]
        if not refs:
            raise ValueError("at least one reference is required")
        self.lengths = sorted({len(r) for r in refs})
        self.max_counts = []
        for n in range(1, max_n + 1):
            acc = Counter()
            for r in refs:
                acc |= _ngrams(r, n)  # elementwise max
            self.max_counts.append(acc)

    def closest_length(self, c: int) -> int:
        return min(self.lengths, key=lambda r: (abs(r - c), r))


def bleu4(hypothesis: Sequence, references, eps: float = BLEU_EPS) -> float:
    """Sentence BLEU-4: clipped n-gram precisions, brevity penalty, add-eps on zero matches."""
    refs = references if isinstance(references, References) else References(references)
    hyp = list(hypothesis)
    c = len(hyp)
    if c == 0:
        log.warning("empty hypothesis scores 0")
        return 0.0
    log_p = 0.0
    for n in range(1, 5):
        counts = _ngrams(hyp, n)
        total = sum(counts.values())
        ref = refs.max_counts[n - 1]
        matches = sum(min(k, ref[g]) for g, k in counts.items())
        log_p += math.log((matches if matches > 0 else eps) / max(1, total))
    r = refs.closest_length(c)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_p / 4)


def bleu_sampled_refs(hypotheses: Sequence[Sequence], reference_pool: Sequence[Sequence], pool_size: int = 1000, seed: int = 0) -> float:
    """Mean BLEU-4 of each hypothesis against one shared, seeded sample of the pool."""
    if not reference_pool:
        raise ValueError("reference pool is empty")
    if not 1 <= pool_size <= len(reference_pool):
        raise ValueError(f"pool_size {pool_size} not in [1, {len(reference_pool)}]")
    if not hypotheses:
        raise ValueError("no hypotheses to score")
    refs = sample_references(reference_pool, pool_size, seed)
    return float(np.mean([bleu4(h, refs) for h in hypotheses]))


def sample_references(reference_pool: Sequence[Sequence], pool_size: int, seed: int) -> References:
    canon = sorted(tuple(r) for r in reference_pool)  # independent of pool order
    pick = np.random.default_rng(seed).choice(len(canon), size=pool_size, replace=False)
    return References([canon[i] for i in sorted(pick)])


# --- grid --------------------------------------------------------------------


def mask_seed(base_seed: int, instance: int, strategy: str, ratio: float) -> int:
    ss = np.random.SeedSequence([base_seed, instance, STRATEGIES.index(strategy), int(round(ratio * 1000))])
    return int(ss.generate_state(1)[0])


def make_template(y: Sequence[int], strategy: str, ratio: float, seed: int) -> Template:
    if strategy == "middle":
        return mask_middle(y, ratio)
    if strategy == "random":
        return mask_random(y, ratio, seed)
    raise ValueError(f"unknown mask strategy {strategy!r}")


@dataclass
class GridConfig:
    algorithms: tuple = ALGORITHMS
    strategies: tuple = STRATEGIES
    ratios: tuple = RATIOS
    width: int = 5
    T: int = 50
    seed: int = 0
    pool_size: int = 1000
    tigs: TigsConfig = field(default_factory=TigsConfig)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["tigs"] = dict(self.tigs.__dict__)
        d["algorithms"], d["strategies"], d["ratios"] = list(self.algorithms), list(self.strategies), list(self.ratios)
        return d


def fill(algo: str, models: dict, x, template: Template, cfg: GridConfig, seed: int = 0) -> tuple[list[int], dict]:
    """Run one algorithm; returns the complete sequence and algorithm-specific extras."""
    fwd = models["forward"]
    if algo == "bs-f":
        return beam_fill_forward(fwd, x, template, cfg.width), {}
    if algo == "bs-b":
        return beam_fill_backward(models["backward"], x, template, cfg.width), {}
    if algo == "bs-fb":
        return beam_fill_both(fwd, models["backward"], x, template, cfg.width), {}
    if algo == "bibs":
        return bibs_fill(fwd, models["backward"], x, template, cfg.width, cfg.T), {}
    if algo == "gsn":
        return gsn_fill(models["birnn"], x, template, cfg.T, seed=seed, init_model=fwd), {}
    if algo == "tigs":
        res = tigs_infill(fwd, x, template, cfg.tigs)
        mono = all(b <= a + 1e-9 for a, b in zip(res.trace, res.trace[1:]))
        return res.tokens, {"rounds": res.rounds, "monotone": mono}
    raise ValueError(f"unknown algorithm {algo!r}")


@dataclass
class Cell:
    algorithm: str
    strategy: str
    ratio: float
    nll: float = float("nan")  # inference (forward) model, per token
    nll_std: float = float("nan")
    eval_nll: float = float("nan")  # separately trained evaluation model, per token
    bleu: float = float("nan")  # against the ground-truth reply
    bleu_sampled: float = float("nan")  # against sampled test references
    preserved: float = float("nan")
    ms: float = float("nan")
    count: int = 0
    excluded: int = 0
    monotone: float = float("nan")


@dataclass
class EvalReport:
    cells: list[Cell]
    header: dict
    rows: list[dict] = field(default_factory=list)  # per instance

    def cell(self, algorithm: str, strategy: str, ratio: float) -> Cell:
        for c in self.cells:
            if c.algorithm == algorithm and c.strategy == strategy and abs(c.ratio - ratio) < 1e-12:
                return c
        raise KeyError((algorithm, strategy, ratio))

    def header_lines(self) -> list[str]:
        return [f"# {k}: {v}" for k, v in self.header.items()]

    def write_tsv(self, path: str | Path) -> None:
        names = list(Cell.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(self.header_lines()) + "\n")
            w = csv.writer(fh, delimiter="\t")
            w.writerow(names)
            for c in self.cells:
                w.writerow([getattr(c, n) for n in names])

    def write_instances(self, path: str | Path) -> None:
        if not self.rows:
            return
        names = list(self.rows[0])
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(self.header_lines()) + "\n")
            w = csv.DictWriter(fh, names, delimiter="\t")
            w.writeheader()
            w.writerows(self.rows)

    def render(self) -> str:
        """Text table: one row per algorithm, NLL and BLEU per (strategy, ratio) column."""
        algos = list(dict.fromkeys(c.algorithm for c in self.cells))
        cols = list(dict.fromkeys((c.strategy, c.ratio) for c in self.cells))
        top = f"{'':<12}" + "".join(f"{s} {int(round(r * 100))}%".center(18) for s, r in cols)
        sub = f"{'':<12}" + "".join(f"{'NLL':>8} {'BLEU':>8} " for _ in cols)
        lines = self.header_lines() + [top, sub]
        for a in algos:
            row = f"{DISPLAY.get(a, a):<12}"
            for s, r in cols:
                c = self.cell(a, s, r)
                row += f"{c.nll:8.3f} {100 * c.bleu:8.2f} "
            lines.append(row)
        return "\n".join(lines) + "\n"


_WORKER: dict = {}


def _init_worker(models, eval_lm, cfg):
    _WORKER.update(models=models, eval_lm=eval_lm, cfg=cfg)


def _run_instance(job):
    i, x, y, template, algos = job
    models, eval_lm, cfg = _WORKER["models"], _WORKER["eval_lm"], _WORKER["cfg"]
    out = []
    for algo in algos:
        t0 = time.perf_counter()
        try:
            y_hat, extra = fill(algo, models, x, template, cfg, seed=cfg.seed + i)
        except Exception as exc:  # recorded and excluded from the aggregate
            log.warning("instance %d: %s failed: %s", i, algo, exc)
            out.append({"algorithm": algo, "failed": repr(exc)})
            continue
        ms = 1000 * (time.perf_counter() - t0)
        fwd = models["forward"]
        out.append(
            {
                "algorithm": algo,
                "fill": y_hat,
                "nll": fwd.sequence_nll(x, y_hat)[1],
                "eval_nll": eval_lm.sequence_nll(x if eval_lm.cfg.conditional else None, y_hat)[1],
                "bleu": bleu4(y_hat, [y]),
                "preserved": template.matches(y_hat),
                "ms": ms,
                **extra,
            }
        )
    return out


def run_grid(
    models: dict,
    eval_lm: Seq2Seq,
    test_set: Sequence[SequencePair],
    cfg: GridConfig = GridConfig(),
    workers: int = 1,
    header: dict | None = None,
) -> EvalReport:
    """Fill every test instance under every (algorithm, strategy, ratio) cell and aggregate.

    ``models`` maps roles to checkpoints: "forward" is required; "backward"
    and "birnn" are needed by the algorithms that use them.
    """
    for algo in cfg.algorithms:
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algo!r}")
    need = {"bs-b": "backward", "bs-fb": "backward", "bibs": "backward", "gsn": "birnn"}
    for algo in cfg.algorithms:
        if algo in need and need[algo] not in models:
            raise ValueError(f"algorithm {algo} needs a {need[algo]} model")
    if "forward" not in models:
        raise ValueError("a forward model is required")
    vocab = models["forward"].vocab
    if vocab is not None and eval_lm.vocab is not None and vocab.itos != eval_lm.vocab.itos:
        raise ValueError("evaluation model vocabulary differs from the inference vocabulary")

    pool = [p.y for p in test_set]
    pool_size = min(cfg.pool_size, len(pool))
    sampled = sample_references(pool, pool_size, cfg.seed)
    report = EvalReport(
        [],
        {
            "bleu_smoothing": f"add-eps {BLEU_EPS:g} on zero n-gram matches",
            "nll": "per-token mean",
            "sampled_reference_pool": f"{pool_size} of {len(pool)} test replies",
            "seed": cfg.seed,
            **(header or {}),
        },
    )
    _init_worker(models, eval_lm, cfg)
    for strategy in cfg.strategies:
        for ratio in cfg.ratios:
            jobs, masked_out = [], 0
            for i, pair in enumerate(test_set):
                try:
                    tpl = make_template(pair.y, strategy, ratio, mask_seed(cfg.seed, i, strategy, ratio))
                except MaskError:
                    masked_out += 1
                    continue
                jobs.append((i, pair.x, pair.y, tpl, tuple(cfg.algorithms)))
            if workers > 1:
                with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(models, eval_lm, cfg)) as ex:
                    results = list(ex.map(_run_instance, jobs, chunksize=8))
            else:
                results = [_run_instance(j) for j in jobs]
            t_start = time.perf_counter()
            per_algo = {a: [] for a in cfg.algorithms}
            failed = {a: 0 for a in cfg.algorithms}
            for (i, _, _, tpl, _), res in zip(jobs, results):
                for r in res:
                    a = r["algorithm"]
                    if "failed" in r:
                        failed[a] += 1
                        continue
                    r["bleu_sampled"] = bleu4(r["fill"], sampled)
                    per_algo[a].append(r)
                    report.rows.append(
                        {
                            "strategy": strategy,
                            "ratio": ratio,
                            "instance": i,
                            "algorithm": a,
                            "template": " ".join(map(str, tpl.tokens)),
                            "fill": " ".join(map(str, r["fill"])),
                            "nll": repr(r["nll"]),
                            "eval_nll": repr(r["eval_nll"]),
                            "bleu": repr(r["bleu"]),
                            "bleu_sampled": repr(r["bleu_sampled"]),
                            "preserved": int(r["preserved"]),
                            "ms": f"{r['ms']:.2f}",
                        }
                    )
            for a in cfg.algorithms:
                rs = per_algo[a]
                c = Cell(a, strategy, ratio, count=len(rs), excluded=failed[a] + masked_out)
                if rs:
                    nll = np.array([r["nll"] for r in rs])
                    c.nll, c.nll_std = float(nll.mean()), float(nll.std())
                    c.eval_nll = float(np.mean([r["eval_nll"] for r in rs]))
                    c.bleu = float(np.mean([r["bleu"] for r in rs]))
                    c.bleu_sampled = float(np.mean([r["bleu_sampled"] for r in rs]))
                    c.preserved = float(np.mean([r["preserved"] for r in rs]))
                    c.ms = float(np.mean([r["ms"] for r in rs]))
                    if a == "tigs":
                        c.monotone = float(np.mean([r["monotone"] for r in rs]))
                report.cells.append(c)
            log.info("cell %s %.2f done (%d instances, %.1fs aggregation)", strategy, ratio, len(jobs), time.perf_counter() - t_start)
    return report
