"""Corpus reading, vocabulary construction and test-time masking."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, BOS, EOS, UNK, BLANK = range(5)
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>", "__BLANK__")
BLANK_TOKEN = SPECIALS[BLANK]
HEADER_PREFIX = "# gradfill"
_SPACE = "▁"


class CorpusError(ValueError):
    pass


class MaskError(ValueError):
    pass


@dataclass
class Vocab:
    """Bijection between tokens and indices; the five specials come first."""

    itos: list[str]
    stoi: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.itos[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocab must start with the special tokens " + " ".join(SPECIALS))
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocab contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.itos)

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, i: int) -> str:
        return self.itos[i]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def fillable(self) -> np.ndarray:
        """Indices a blank may take: every token except PAD, BOS, EOS and BLANK."""
        ids = np.arange(len(self.itos))
        return ids[(ids == UNK) | (ids >= len(SPECIALS))]

    def save(self, path: str | Path, header: str | None = None) -> None:
        head = [f"{HEADER_PREFIX} {header}"] if header else []
        Path(path).write_text("\n".join(head + self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        return cls([t for t in lines if t and not t.startswith(HEADER_PREFIX)])


@dataclass
class SequencePair:
    """A conditional input ``x`` (empty when unconditional) and a target ``y``.

    Entries are token strings before encoding and vocabulary indices after.
    """

    x: list
    y: list


def tokenize(text: str, tokenizer: str) -> list[str]:
    if tokenizer == "word":
        return text.split()
    if tokenizer == "char":
        return [_SPACE if ch == " " else ch for ch in text]
    raise ValueError(f"unknown tokenizer {tokenizer!r}")


def detokenize(tokens: Sequence[str], tokenizer: str) -> str:
    if tokenizer == "word":
        return " ".join(tokens)
    if tokenizer == "char":
        return "".join(" " if t == _SPACE else t for t in tokens)
    raise ValueError(f"unknown tokenizer {tokenizer!r}")


def load_corpus(
    path: str | Path,
    format: str = "pairs",
    tokenizer: str = "word",
    vocab: Vocab | None = None,
) -> list[SequencePair]:
    if format not in ("pairs", "mono"):
        raise ValueError(f"unknown corpus format {format!r}")
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    pairs = []
    for lineno, line in enumerate(lines, 1):
        if line.startswith(HEADER_PREFIX):
            continue
        if format == "pairs":
            fields = line.split("\t")
            if len(fields) != 2:
                raise CorpusError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}")
            x, y = tokenize(fields[0], tokenizer), tokenize(fields[1], tokenizer)
        else:
            if "\t" in line:
                raise CorpusError(f"{path}:{lineno}: unexpected tab in mono corpus")
            x, y = [], tokenize(line, tokenizer)
        if not y:
            raise CorpusError(f"{path}:{lineno}: empty target sequence")
        if vocab is not None:
            x, y = vocab.encode(x), vocab.encode(y)
        pairs.append(SequencePair(x, y))
    if not pairs:
        raise CorpusError(f"{path}: empty corpus")
    return pairs


def save_corpus(
    pairs: Sequence[SequencePair],
    path: str | Path,
    format: str = "pairs",
    tokenizer: str = "word",
    vocab: Vocab | None = None,
    header: str | None = None,
) -> None:
    out = [f"{HEADER_PREFIX} {header}"] if header else []
    for p in pairs:
        x, y = (vocab.decode(p.x), vocab.decode(p.y)) if vocab is not None else (p.x, p.y)
        if format == "pairs":
            out.append(detokenize(x, tokenizer) + "\t" + detokenize(y, tokenizer))
        else:
            out.append(detokenize(y, tokenizer))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def build_vocab(corpus: Iterable, max_size: int | None = None, min_count: int = 1) -> Vocab:
    """Frequency-ranked vocabulary; ties broken lexicographically.

    ``corpus`` holds :class:`SequencePair` objects or plain token lists.
    ``max_size`` counts the specials.
    """
    if max_size is not None and max_size < len(SPECIALS) + 1:
        raise ValueError(f"max_size must be at least {len(SPECIALS) + 1}, got {max_size}")
    counts: Counter = Counter()
    n = 0
    for item in corpus:
        n += 1
        if isinstance(item, SequencePair):
            counts.update(item.x)
            counts.update(item.y)
        else:
            counts.update(item)
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted((t for t, c in counts.items() if c >= min_count and t not in SPECIALS), key=lambda t: (-counts[t], t))
    if max_size is not None:
        ranked = ranked[: max_size - len(SPECIALS)]
    return Vocab(list(SPECIALS) + ranked)


@dataclass(frozen=True)
class Template:
    """Target sequence where some positions hold BLANK."""

    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise MaskError("template must contain at least one position")

    @property
    def blanks(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t == BLANK]

    def __len__(self) -> int:
        return len(self.tokens)

    def fill(self, values: Sequence[int]) -> list[int]:
        blanks = self.blanks
        if len(values) != len(blanks):
            raise ValueError(f"expected {len(blanks)} fill values, got {len(values)}")
        out = list(self.tokens)
        for pos, v in zip(blanks, values):
            out[pos] = int(v)
        return out

    def matches(self, y: Sequence[int]) -> bool:
        """True when ``y`` agrees with every non-blank position."""
        return len(y) == len(self.tokens) and all(t == BLANK or t == v for t, v in zip(self.tokens, y))

    @classmethod
    def from_positions(cls, y: Sequence[int], positions: Iterable[int]) -> "Template":
        toks = list(y)
        for p in positions:
            toks[p] = BLANK
        return cls(tuple(toks))


def _blank_count(m: int, r: float) -> int:
    if not 0.0 < r < 1.0:
        raise MaskError(f"mask ratio must lie in (0, 1), got {r}")
    if m < 2:
        raise MaskError(f"sequence too short to mask (length {m})")
    k = max(1, math.floor(r * m + 0.5))
    if k >= m:
        raise MaskError(f"ratio {r} would blank all {m} tokens")
    return k


def mask_middle(y: Sequence[int], r: float) -> Template:
    m = len(y)
    k = _blank_count(m, r)
    start = (m - k) // 2
    return Template.from_positions(y, range(start, start + k))


def mask_random(y: Sequence[int], r: float, seed: int) -> Template:
    m = len(y)
    k = _blank_count(m, r)
    rng = np.random.default_rng(seed)
    positions = rng.choice(m, size=k, replace=False)
    return Template.from_positions(y, sorted(int(p) for p in positions))


def write_templates(path: str | Path, templates: Sequence[Template], vocab: Vocab, header: str | None = None) -> None:
    lines = []
    if header:
        lines.append(f"{HEADER_PREFIX} {header}")
    for t in templates:
        lines.append(" ".join(vocab.token(i) for i in t.tokens))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_templates(path: str | Path, vocab: Vocab) -> list[Template]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        if not line or line.startswith(HEADER_PREFIX):
            continue
        toks = line.split(" ")
        out.append(Template(tuple(BLANK if t == BLANK_TOKEN else vocab.index(t) for t in toks)))
    if not out:
        raise CorpusError(f"{path}: no templates found")
    return out
