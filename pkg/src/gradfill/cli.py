"""Command-line entry point: prepare, train, mask, infill, eval, oracle.

Every command checks its inputs completely before writing anything, and all
files it writes start with a header line recording the version, the seeds
and a hash of the effective configuration.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import BLANK, BLANK_TOKEN, HEADER_PREFIX, CorpusError, MaskError, Template, Vocab, build_vocab, load_corpus, save_corpus
from .evaluation import ALGORITHMS, DISPLAY, BLEU_EPS, GridConfig, bleu4, fill, make_template, mask_seed, sample_references
from .oracle import ORACLE_CAP, check_budget, exhaustive_fill
from .seq2seq import ModelConfig
from .tigs import TigsConfig
from .trainer import ROLES, TrainConfig, role_pairs, train, write_history

log = logging.getLogger("gradfill")

SCRATCH_ENV = "GRADFILL_SCRATCH"
CONFIG_SECTIONS = {"seed", "corpus", "vocab", "model", "train", "tigs", "beam", "eval"}


class UsageError(Exception):
    pass


# --- configuration -----------------------------------------------------------


def load_config(path: str | None, seed: int | None) -> dict:
    """Read a JSON run configuration and apply flag overrides (flags win)."""
    cfg: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            cfg = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"{path}: top level must be an object")
        unknown = set(cfg) - CONFIG_SECTIONS
        if unknown:
            raise UsageError(f"{path}: unknown config sections {sorted(unknown)}")
    if seed is not None:
        cfg["seed"] = seed
    if "seed" not in cfg:
        raise UsageError("a seed is required (config 'seed' or --seed)")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise UsageError("seed must be a non-negative integer")
    return cfg


def _section(cfg: dict, name: str, cls, **fixed):
    kwargs = dict(cfg.get(name, {}))
    kwargs.update(fixed)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config section '{name}': {exc}") from None


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def header_text(command: str, seeds: dict, cfg) -> str:
    seed_s = ",".join(f"{k}={v}" for k, v in sorted(seeds.items()))
    return f"{command} version={__version__} seeds={seed_s} config={config_hash(cfg)}"


def _need_file(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _load_model(path: str, what: str):
    _need_file(path, what)
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from None


def _atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file so a failed command leaves no partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=os.environ.get(SCRATCH_ENV) or path.parent, prefix=".gradfill-")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    shutil.move(tmp, path)


def _out_dir_ok(path: str | None) -> Path:
    if path is None:
        raise UsageError("--out is required")
    p = Path(path)
    if not p.parent.exists():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


# --- template files ------------------------------------------------------------
# Tab-separated: instance id, source tokens, template tokens, reference tokens.


def write_template_file(path, rows, vocab: Vocab, header: str) -> None:
    lines = [f"{HEADER_PREFIX} {header}", "instance\tsource\ttemplate\treference"]
    for i, x, tpl, y in rows:
        toks = " ".join(BLANK_TOKEN if t == BLANK else vocab.token(t) for t in tpl.tokens)
        lines.append(f"{i}\t{' '.join(vocab.decode(x))}\t{toks}\t{' '.join(vocab.decode(y))}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_template_file(path, vocab: Vocab) -> list[tuple]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        if not line or line.startswith(HEADER_PREFIX) or line.startswith("instance\t"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise UsageError(f"{path}:{lineno}: expected 4 tab-separated fields")
        x = vocab.encode(parts[1].split()) if parts[1] else []
        tpl = Template(tuple(BLANK if t == BLANK_TOKEN else vocab.index(t) for t in parts[2].split()))
        rows.append((int(parts[0]), x, tpl, vocab.encode(parts[3].split())))
    if not rows:
        raise UsageError(f"{path}: no templates")
    return rows


def read_fills(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith(HEADER_PREFIX)]
    return list(csv.DictReader(lines, delimiter="\t"))


# --- commands ------------------------------------------------------------------


def cmd_prepare(args) -> None:
    cfg = load_config(args.config, args.seed)
    corpus_cfg = dict(cfg.get("corpus", {}))
    vocab_cfg = dict(cfg.get("vocab", {}))
    path = args.corpus or corpus_cfg.get("path")
    src = _need_file(path, "corpus file")
    fmt = args.format or corpus_cfg.get("format", "pairs")
    tok = args.tokenizer or corpus_cfg.get("tokenizer", "word")
    test_fraction = args.test_fraction if args.test_fraction is not None else corpus_cfg.get("test_fraction", 0.1)
    max_size = args.max_vocab if args.max_vocab is not None else vocab_cfg.get("max_size")
    min_count = args.min_count if args.min_count is not None else vocab_cfg.get("min_count", 1)
    if not 0.0 <= test_fraction < 1.0:
        raise UsageError("test fraction must lie in [0, 1)")
    out = Path(args.out) if args.out else None
    if out is None or not out.is_dir():
        raise UsageError("--out must be an existing directory")
    try:
        pairs = load_corpus(src, fmt, tok)
    except (CorpusError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    idx = np.random.default_rng(cfg["seed"]).permutation(len(pairs))
    n_test = int(round(test_fraction * len(pairs)))
    test = [pairs[i] for i in sorted(idx[:n_test])]
    train_p = [pairs[i] for i in sorted(idx[n_test:])]
    try:
        vocab = build_vocab(train_p, max_size=max_size, min_count=min_count)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    eff = {"corpus": str(src), "format": fmt, "tokenizer": tok, "test_fraction": test_fraction, "max_size": max_size, "min_count": min_count, "seed": cfg["seed"]}
    head = header_text("prepare", {"split": cfg["seed"]}, eff)
    vocab.save(out / "vocab.txt", header=head)
    save_corpus(train_p, out / "train.tsv", fmt, tok, header=head)
    save_corpus(test, out / "test.tsv", fmt, tok, header=head)
    print(f"vocab {len(vocab)} train {len(train_p)} test {len(test)} -> {out}")


def cmd_train(args) -> None:
    cfg = load_config(args.config, args.seed)
    if args.role not in ROLES:
        raise UsageError(f"unknown role {args.role!r}")
    data = Path(args.data) if args.data else None
    if data is None or not data.is_dir():
        raise UsageError("--data must be a prepared data directory")
    vocab_path = _need_file(str(data / "vocab.txt"), "vocabulary")
    train_path = _need_file(str(data / "train.tsv"), "training split")
    out = _out_dir_ok(args.out)
    corpus_cfg = cfg.get("corpus", {})
    vocab = Vocab.load(vocab_path)
    tcfg = _section(cfg, "train", TrainConfig, seed=cfg["seed"])
    model_kwargs = dict(cfg.get("model", {}))
    if args.role == "eval-lm":
        model_kwargs.update(cfg.get("eval", {}).get("model", {}))
    decoder = {"forward": "forward", "backward": "backward", "birnn": "birnn", "eval-lm": "forward"}[args.role]
    fmt = corpus_cfg.get("format", "pairs")
    encoder = model_kwargs.pop("encoder", "bi" if fmt == "pairs" else None)
    attention = model_kwargs.pop("attention", "general" if encoder else "none")
    model_kwargs.setdefault("seed", cfg["seed"])
    mcfg = _section({"model": model_kwargs}, "model", ModelConfig, src_vocab=len(vocab), tgt_vocab=len(vocab), encoder=encoder, attention=attention, decoder=decoder)
    try:
        pairs = load_corpus(train_path, fmt, corpus_cfg.get("tokenizer", "word"), vocab=vocab)
    except (CorpusError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    eff = {"role": args.role, "model": mcfg.to_dict(), "train": dataclasses.asdict(tcfg)}
    result = train(tcfg, role_pairs(pairs, args.role), mcfg, vocab)
    head = header_text("train", {"init": mcfg.seed, "shuffle": tcfg.seed}, eff)
    save_checkpoint(result.model, out, {"header": head, "role": args.role, "history": result.history, "best_epoch": result.best_epoch, "diverged": result.diverged})
    hist = Path(str(out) + ".history.csv")
    write_history(result.history, hist)
    hist.write_text(f"{HEADER_PREFIX} {head}\n" + hist.read_text())
    print(f"{args.role}: best epoch {result.best_epoch} valid NLL {min(h[2] for h in result.history):.4f} -> {out}")


def cmd_mask(args) -> None:
    cfg = load_config(args.config, args.seed)
    test_path = _need_file(args.data, "test file")
    vocab = Vocab.load(_need_file(args.vocab, "vocabulary"))
    if args.strategy not in ("middle", "random"):
        raise UsageError("--strategy must be middle or random")
    if args.ratio is None or not 0.0 < args.ratio < 1.0:
        raise UsageError("--ratio must lie in (0, 1)")
    out = _out_dir_ok(args.out)
    corpus_cfg = cfg.get("corpus", {})
    try:
        pairs = load_corpus(test_path, corpus_cfg.get("format", "pairs"), corpus_cfg.get("tokenizer", "word"), vocab=vocab)
    except (CorpusError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    rows, skipped = [], 0
    for i, p in enumerate(pairs):
        try:
            rows.append((i, p.x, make_template(p.y, args.strategy, args.ratio, mask_seed(cfg["seed"], i, args.strategy, args.ratio)), p.y))
        except MaskError as exc:
            skipped += 1
            log.warning("instance %d not masked: %s", i, exc)
    if not rows:
        raise UsageError("no instance could be masked")
    eff = {"strategy": args.strategy, "ratio": args.ratio, "test": str(test_path), "skipped": skipped}
    write_template_file(out, rows, vocab, header_text("mask", {"mask": cfg["seed"]}, eff))
    print(f"{len(rows)} templates ({skipped} skipped) -> {out}")


_INFILL: dict = {}


def _infill_init(models, grid):
    _INFILL.update(models=models, grid=grid)


def _infill_one(job):
    i, x, tpl, algo, seed = job
    models, grid = _INFILL["models"], _INFILL["grid"]
    t0 = time.perf_counter()
    y, _ = fill(algo, models, x, tpl, grid, seed=seed)
    ms = 1000 * (time.perf_counter() - t0)
    return i, y, models["forward"].sequence_nll(x, y)[1], ms


def cmd_infill(args) -> None:
    cfg = load_config(args.config, args.seed)
    if args.algo not in ALGORITHMS:
        raise UsageError(f"--algo must be one of {', '.join(ALGORITHMS)}")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    need = {"bs-b": ["backward"], "bs-fb": ["backward"], "bibs": ["backward"], "gsn": ["birnn"]}.get(args.algo, [])
    paths = {"forward": args.forward, "backward": args.backward, "birnn": args.birnn}
    models = {"forward": _load_model(args.forward, "forward checkpoint")}
    for role in need:
        models[role] = _load_model(paths[role], f"{role} checkpoint")
    vocab = models["forward"].vocab
    if vocab is None:
        raise UsageError("forward checkpoint carries no vocabulary")
    for role, m in models.items():
        if m.vocab is None or m.vocab.itos != vocab.itos:
            raise UsageError(f"{role} checkpoint vocabulary differs from the forward model's")
    tcfg = _section(cfg, "tigs", TigsConfig, seed=cfg["seed"])
    beam = dict(cfg.get("beam", {}))
    try:
        grid = GridConfig(width=int(beam.get("width", 5)), T=int(beam.get("T", 50)), seed=cfg["seed"], tigs=tcfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config section 'beam': {exc}") from None
    if grid.width < 1 or grid.T < 1:
        raise UsageError("beam width and T must be >= 1")
    rows = read_template_file(_need_file(args.templates, "template file"), vocab)
    out = _out_dir_ok(args.out)
    jobs = [(i, x, tpl, args.algo, cfg["seed"] + i) for i, x, tpl, _ in rows]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers, initializer=_infill_init, initargs=(models, grid)) as ex:
            results = list(ex.map(_infill_one, jobs, chunksize=4))  # map keeps instance order
    else:
        _infill_init(models, grid)
        results = [_infill_one(j) for j in jobs]
    eff = {"algo": args.algo, "tigs": dataclasses.asdict(tcfg), "width": grid.width, "T": grid.T, "templates": str(args.templates)}
    lines = [f"{HEADER_PREFIX} {header_text('infill', {'algo': cfg['seed']}, eff)}", "instance\talgorithm\tfill\tnll\tms"]
    for i, y, nll, ms in results:
        lines.append(f"{i}\t{args.algo}\t{' '.join(vocab.decode(y))}\t{nll!r}\t{ms:.2f}")
    _atomic_write(out, "\n".join(lines) + "\n")
    print(f"{args.algo}: {len(results)} fills, mean NLL/token {np.mean([r[2] for r in results]):.4f} -> {out}")


def cmd_eval(args) -> None:
    cfg = load_config(args.config, args.seed)
    eval_lm = _load_model(args.eval_lm, "evaluation model checkpoint")
    vocab = eval_lm.vocab
    if vocab is None:
        raise UsageError("evaluation checkpoint carries no vocabulary")
    rows = read_template_file(_need_file(args.templates, "template file"), vocab)
    by_id = {i: (x, tpl, y) for i, x, tpl, y in rows}
    fills = []
    for f in args.fills or []:
        recs = read_fills(_need_file(f, "fills file"))
        for r in recs:
            if int(r["instance"]) not in by_id:
                raise UsageError(f"{f}: instance {r['instance']} is not in the template file")
        fills.append(recs)
    if not fills:
        raise UsageError("at least one --fills file is required")
    eval_cfg = dict(cfg.get("eval", {}))
    pool_size = min(int(eval_cfg.get("pool_size", 1000)), len(rows))
    out = _out_dir_ok(args.out)
    sampled = sample_references([y for _, _, _, y in rows], pool_size, cfg["seed"])
    eff = {"fills": [str(f) for f in args.fills], "pool_size": pool_size, "templates": str(args.templates), "eps": BLEU_EPS}
    lines = [
        f"{HEADER_PREFIX} {header_text('eval', {'references': cfg['seed']}, eff)}",
        f"{HEADER_PREFIX} nll=per-token mean; bleu smoothing add-eps {BLEU_EPS:g}; sampled references {pool_size} of {len(rows)}",
        "algorithm\tcount\teval_nll\tnll_std\tbleu\tbleu_sampled\tpreserved\tms",
    ]
    table = []
    for recs in fills:
        algo = recs[0]["algorithm"] if recs else "?"
        nll, bl, bls, kept, ms = [], [], [], [], []
        for r in recs:
            x, tpl, y = by_id[int(r["instance"])]
            y_hat = vocab.encode(r["fill"].split())
            nll.append(eval_lm.sequence_nll(x if eval_lm.cfg.conditional else None, y_hat)[1])
            bl.append(bleu4(y_hat, [y]))
            bls.append(bleu4(y_hat, sampled))
            kept.append(tpl.matches(y_hat))
            ms.append(float(r["ms"]))
        row = (algo, len(recs), np.mean(nll), np.std(nll), np.mean(bl), np.mean(bls), np.mean(kept), np.mean(ms))
        table.append(row)
        lines.append("\t".join([row[0], str(row[1])] + [repr(float(v)) for v in row[2:]]))
    _atomic_write(out, "\n".join(lines) + "\n")
    print(f"{'':<12}{'NLL':>8}{'BLEU':>8}{'BLEU-s':>8}{'kept':>7}")
    for algo, n, m_nll, _, b, bs, k, _ in table:
        print(f"{DISPLAY.get(algo, algo):<12}{m_nll:8.3f}{100 * b:8.2f}{100 * bs:8.2f}{k:7.2f}")


def cmd_oracle(args) -> None:
    cfg = load_config(args.config, args.seed)
    model = _load_model(args.forward, "forward checkpoint")
    if model.vocab is None:
        raise UsageError("checkpoint carries no vocabulary")
    rows = read_template_file(_need_file(args.templates, "template file"), model.vocab)
    out = _out_dir_ok(args.out)
    if model.vocab_size > args.max_vocab:
        raise UsageError(f"vocabulary size {model.vocab_size} exceeds --max-vocab {args.max_vocab}")
    n_fill = len(model.vocab.fillable())
    for i, _, tpl, _ in rows:
        nb = len(tpl.blanks)
        if nb > args.max_blanks:
            raise UsageError(f"instance {i} has {nb} blanks, above --max-blanks {args.max_blanks}")
        try:
            check_budget(n_fill, nb, ORACLE_CAP)
        except ValueError as exc:
            raise UsageError(f"instance {i}: {exc}") from None
    eff = {"templates": str(args.templates), "max_blanks": args.max_blanks, "max_vocab": args.max_vocab, "cap": ORACLE_CAP}
    lines = [f"{HEADER_PREFIX} {header_text('oracle', {'none': cfg['seed']}, eff)}", "instance\talgorithm\tfill\tnll\tms"]
    for i, x, tpl, _ in rows:
        t0 = time.perf_counter()
        y, nll = exhaustive_fill(model, x, tpl)
        ms = 1000 * (time.perf_counter() - t0)
        lines.append(f"{i}\toracle\t{' '.join(model.vocab.decode(y))}\t{nll / len(y)!r}\t{ms:.2f}")
    _atomic_write(out, "\n".join(lines) + "\n")
    print(f"oracle: {len(rows)} instances -> {out}")


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gradfill", description="text infilling with sequence models")
    ap.add_argument("--version", action="version", version=f"gradfill {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output path")

    p = sub.add_parser("prepare", help="tokenize a corpus, split it and build the vocabulary")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--format", choices=["pairs", "mono"])
    p.add_argument("--tokenizer", choices=["word", "char"])
    p.add_argument("--max-vocab", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--test-fraction", type=float)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model role")
    common(p)
    p.add_argument("--role", required=True, choices=list(ROLES))
    p.add_argument("--data", help="directory written by prepare")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mask", help="blank out test replies")
    common(p)
    p.add_argument("--data", help="test split")
    p.add_argument("--vocab")
    p.add_argument("--strategy", choices=["middle", "random"], required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("infill", help="fill templates with one algorithm")
    common(p)
    p.add_argument("--algo", required=True, choices=list(ALGORITHMS))
    p.add_argument("--templates", required=True)
    p.add_argument("--forward", required=True)
    p.add_argument("--backward")
    p.add_argument("--birnn")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_infill)

    p = sub.add_parser("eval", help="score fills with a separately trained model and BLEU")
    common(p)
    p.add_argument("--fills", nargs="+")
    p.add_argument("--eval-lm", required=True)
    p.add_argument("--templates", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="exact NLL minimiser by exhaustive search (tiny vocabularies)")
    common(p)
    p.add_argument("--forward", required=True)
    p.add_argument("--templates", required=True)
    p.add_argument("--max-blanks", type=int, default=2)
    p.add_argument("--max-vocab", type=int, default=64)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"gradfill {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
