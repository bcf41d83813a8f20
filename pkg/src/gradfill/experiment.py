"""End-to-end desk-scale run: synthetic corpus, four trained models, full grid.

Checkpoints and reports are cached in a work directory keyed by a hash of
the configuration, so re-running with the same settings is cheap.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import checkpoint_meta, load_checkpoint, save_checkpoint
from .corpus import SequencePair, Vocab, build_vocab, save_corpus
from .evaluation import EvalReport, GridConfig, run_grid
from .seq2seq import ModelConfig
from .synthetic import desk_corpus
from .trainer import TrainConfig, role_pairs, train

log = logging.getLogger(__name__)

VERSION = "0.1.0"


@dataclass
class ExperimentConfig:
    corpus_seed: int = 0
    n_train: int = 12000
    n_test: int = 500
    emb_dim: int = 64
    hidden_dim: int = 128
    eval_emb_dim: int = 48
    eval_hidden_dim: int = 96
    model_seed: int = 0
    eval_seed: int = 1
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=0.1, batch_size=64, epochs=20, optimizer="nesterov", halve_on_plateau=True))
    grid: GridConfig = field(default_factory=GridConfig)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("train", "grid")}
        d["train"] = dataclasses.asdict(self.train)
        d["grid"] = self.grid.to_dict()
        return d

    def training_dict(self) -> dict:
        d = self.to_dict()
        d.pop("grid")
        return d


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def model_config(cfg: ExperimentConfig, role: str, vocab_size: int) -> ModelConfig:
    if role == "eval-lm":
        return ModelConfig(vocab_size, vocab_size, cfg.eval_emb_dim, cfg.eval_hidden_dim, "bi", "forward", seed=cfg.eval_seed)
    decoder = {"forward": "forward", "backward": "backward", "birnn": "birnn"}[role]
    return ModelConfig(vocab_size, vocab_size, cfg.emb_dim, cfg.hidden_dim, "bi", decoder, seed=cfg.model_seed)


def prepare_corpus(cfg: ExperimentConfig, workdir: Path):
    train_s, test_s, _ = desk_corpus(cfg.n_train, cfg.n_test, seed=cfg.corpus_seed)
    vocab = build_vocab(train_s)
    save_corpus(train_s, workdir / "train.tsv")
    save_corpus(test_s, workdir / "test.tsv")
    vocab.save(workdir / "vocab.txt")
    enc = lambda ps: [SequencePair(vocab.encode(p.x), vocab.encode(p.y)) for p in ps]  # noqa: E731
    return enc(train_s), enc(test_s), vocab


def train_role(cfg: ExperimentConfig, role: str, pairs, vocab: Vocab, workdir: Path):
    """Train (or reuse a cached checkpoint for) one model role."""
    key = config_hash({**cfg.training_dict(), "role": role})
    path = workdir / f"{role}.ckpt"
    if path.exists() and checkpoint_meta(path).get("config_hash") == key:
        log.info("reusing %s", path)
        return load_checkpoint(path)
    tcfg = cfg.train if role != "eval-lm" else dataclasses.replace(cfg.train, seed=cfg.train.seed + 1)
    t0 = time.time()
    result = train(tcfg, role_pairs(pairs, role), model_config(cfg, role, len(vocab)), vocab, history_csv=workdir / f"{role}.history.csv")
    meta = {
        "config_hash": key,
        "role": role,
        "best_epoch": result.best_epoch,
        "diverged": result.diverged,
        "history": result.history,
        "train_seconds": time.time() - t0,
        "version": VERSION,
    }
    save_checkpoint(result.model, path, meta)
    return result.model


def run_experiment(workdir: str | Path, cfg: ExperimentConfig = ExperimentConfig(), workers: int = 1) -> dict:
    """Run (or resume) the whole pipeline; returns the JSON summary written to ``summary.json``."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    key = config_hash(cfg.to_dict())
    summary_path = workdir / "summary.json"
    if summary_path.exists():
        cached = json.loads(summary_path.read_text())
        if cached.get("config_hash") == key:
            return cached
    train_pairs, test_pairs, vocab = prepare_corpus(cfg, workdir)
    t0 = time.time()
    models = {role: train_role(cfg, role, train_pairs, vocab, workdir) for role in ("forward", "backward", "birnn")}
    eval_lm = train_role(cfg, "eval-lm", train_pairs, vocab, workdir)
    train_seconds = sum(checkpoint_meta(workdir / f"{r}.ckpt")["train_seconds"] for r in ("forward", "backward", "birnn", "eval-lm"))
    t1 = time.time()
    report: EvalReport = run_grid(models, eval_lm, test_pairs, cfg.grid, workers=workers, header={"version": VERSION, "config_hash": key, "corpus_seed": cfg.corpus_seed})
    grid_seconds = time.time() - t1
    report.write_tsv(workdir / "report.tsv")
    report.write_instances(workdir / "instances.tsv")
    (workdir / "report.txt").write_text(report.render())
    summary = {
        "config_hash": key,
        "config": cfg.to_dict(),
        "vocab_size": len(vocab),
        "n_train": len(train_pairs),
        "n_test": len(test_pairs),
        "train_seconds": train_seconds,
        "setup_seconds": t1 - t0,
        "grid_seconds": grid_seconds,
        "histories": {r: checkpoint_meta(workdir / f"{r}.ckpt")["history"] for r in ("forward", "backward", "birnn", "eval-lm")},
        "cells": [dataclasses.asdict(c) for c in report.cells],
        "header": report.header,
    }
    summary_path.write_text(json.dumps(summary, indent=1))
    return summary


def main(argv=None) -> None:
    import argparse

    ap = argparse.ArgumentParser(description="run the desk-scale infilling experiment")
    ap.add_argument("workdir")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    summary = run_experiment(args.workdir, workers=args.workers)
    print((Path(args.workdir) / "report.txt").read_text())
    print(f"training {summary['train_seconds']:.0f}s, grid {summary['grid_seconds']:.0f}s")


if __name__ == "__main__":
    main()
