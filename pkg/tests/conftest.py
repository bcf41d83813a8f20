import numpy as np
import pytest

from gradfill.corpus import SPECIALS, SequencePair, Vocab, build_vocab
from gradfill.seq2seq import ModelConfig, Seq2Seq
from gradfill.trainer import TrainConfig, train


def word_vocab(n_words: int) -> Vocab:
    return Vocab(list(SPECIALS) + [f"w{i}" for i in range(n_words)])


def random_model(V=12, decoder="forward", encoder="bi", emb=6, hid=8, scale=0.5, seed=0, src=None):
    """Untrained model with weights large enough to give peaked distributions."""
    attention = "general" if encoder else "none"
    cfg = ModelConfig(src or V, V, emb, hid, encoder, decoder, attention, init_scale=scale, seed=seed)
    vocab = word_vocab(V - len(SPECIALS))
    return Seq2Seq(cfg, vocab=vocab)


def random_template(rng, V, m, n_blanks):
    from gradfill.corpus import Template

    y = rng.integers(len(SPECIALS), V, size=m).tolist()
    pos = sorted(rng.choice(m, size=n_blanks, replace=False).tolist())
    return y, Template.from_positions(y, pos)


def memorization_corpus(n=50, n_words=20, seed=0):
    """Each reply is tagged by a unique two-token code, so the corpus is learnable exactly."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n_words)]
    codes = [f"c{i}" for i in range(8)]
    pairs = []
    for k in range(n):
        s = [words[j] for j in rng.choice(n_words, size=int(rng.integers(4, 8)))]
        pairs.append(SequencePair([codes[k // 8], codes[k % 8]], s))
    vocab = build_vocab(pairs)
    return [SequencePair(vocab.encode(p.x), vocab.encode(p.y)) for p in pairs], vocab


MEMO_TRAIN = TrainConfig(lr=1.0, batch_size=10, epochs=30, optimizer="nesterov", valid_fraction=0.0, dtype="float64")


def train_memorized(decoder: str):
    pairs, vocab = memorization_corpus()
    cfg = ModelConfig(len(vocab), len(vocab), 16, 48, "bi", decoder, init_scale=0.3, seed=0)
    return train(MEMO_TRAIN, pairs, cfg, vocab), pairs


@pytest.fixture(scope="session")
def memorized():
    return train_memorized("forward")


@pytest.fixture(scope="session")
def memorized_birnn():
    return train_memorized("birnn")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
