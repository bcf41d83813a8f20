import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradfill.corpus import (
    BLANK,
    SPECIALS,
    UNK,
    CorpusError,
    MaskError,
    SequencePair,
    Template,
    Vocab,
    build_vocab,
    load_corpus,
    mask_middle,
    mask_random,
    read_templates,
    save_corpus,
    write_templates,
)


def test_pairs_line_parses(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("hi there\thello\n")
    (pair,) = load_corpus(p, "pairs", "word")
    assert pair.x == ["hi", "there"] and pair.y == ["hello"]


def test_mono_char_line_parses(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("abc\n")
    (pair,) = load_corpus(p, "mono", "char")
    assert pair.x == [] and pair.y == ["a", "b", "c"]


def test_unknown_token_maps_to_unk(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("a\tb zzz\n")
    vocab = Vocab(list(SPECIALS) + ["a", "b"])
    (pair,) = load_corpus(p, vocab=vocab)
    assert pair.y == [vocab.index("b"), UNK]


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("a\tb\nno tab here\n")
    with pytest.raises(CorpusError, match=":2:"):
        load_corpus(p)


def test_empty_file_rejected(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("")
    with pytest.raises(CorpusError, match="empty"):
        load_corpus(p)


def test_save_load_round_trip(tmp_path):
    pairs = [SequencePair(["a", "b"], ["c"]), SequencePair(["d"], ["e", "f", "g"])]
    save_corpus(pairs, tmp_path / "c.tsv", header="test")
    assert load_corpus(tmp_path / "c.tsv") == pairs
    chars = [SequencePair([], list("a bc")), SequencePair([], list("xy z"))]
    save_corpus(chars, tmp_path / "m.txt", "mono", "char")
    assert [p.y for p in load_corpus(tmp_path / "m.txt", "mono", "char")] == [["a", "▁", "b", "c"], ["x", "y", "▁", "z"]]


def test_vocab_frequency_then_lexicographic_order():
    v = build_vocab([["a", "a", "b"]])
    assert v.itos == list(SPECIALS) + ["a", "b"]
    v = build_vocab([["c", "b", "a", "a"]])
    assert v.itos[len(SPECIALS) :] == ["a", "b", "c"]


def test_min_count_and_max_size():
    v = build_vocab([["a", "a", "b"]], min_count=2)
    assert v.itos[len(SPECIALS) :] == ["a"] and v.index("b") == UNK
    v = build_vocab([["a", "a", "b", "c"]], max_size=6)
    assert len(v) == 6
    with pytest.raises(ValueError):
        build_vocab([["a"]], max_size=5)
    with pytest.raises(ValueError):
        build_vocab([])


def test_vocab_invariants(tmp_path):
    v = build_vocab([["x", "y", "z", "y"]])
    assert tuple(v.itos[:5]) == SPECIALS
    assert all(v.index(v.token(i)) == i for i in range(len(v)))
    v.save(tmp_path / "v.txt", header="h")
    assert Vocab.load(tmp_path / "v.txt").itos == v.itos
    with pytest.raises(ValueError):
        Vocab(["a"] + list(SPECIALS))
    assert BLANK not in v.fillable() and UNK in v.fillable()


@pytest.mark.parametrize("m,r,blanks", [(8, 0.5, [2, 3, 4, 5]), (8, 0.25, [3, 4]), (4, 0.75, [0, 1, 2])])
def test_mask_middle_examples(m, r, blanks):
    assert mask_middle(list(range(10, 10 + m)), r).blanks == blanks


def test_mask_random_examples():
    y = list(range(10, 18))
    assert len(mask_random(y, 0.25, seed=3).blanks) == 2
    assert mask_random(y, 0.4, seed=7) == mask_random(y, 0.4, seed=7)
    # k = m - 1 leaves exactly one context token
    t = mask_random(list(range(10, 14)), 0.75, seed=0)
    assert len(t.blanks) == 3


def test_mask_rejects_full_blanking_and_bad_ratio():
    with pytest.raises(MaskError):
        mask_middle([10, 11], 0.75)  # round(1.5) = 2 = m
    with pytest.raises(MaskError):
        mask_random([10], 0.5, seed=0)
    with pytest.raises(MaskError):
        mask_middle([10, 11, 12], 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(5, 50), min_size=2, max_size=30), st.floats(0.01, 0.99), st.integers(0, 10**6))
def test_mask_properties(y, r, seed):
    m = len(y)
    k = max(1, math.floor(r * m + 0.5))
    for make in (lambda: mask_middle(y, r), lambda: mask_random(y, r, seed)):
        if k >= m:
            with pytest.raises(MaskError):
                make()
            continue
        t = make()
        assert len(t.blanks) == k
        assert t.blanks == [i for i, tok in enumerate(t.tokens) if tok == BLANK]
        assert all(t.tokens[i] == y[i] for i in range(m) if i not in t.blanks)
        assert t.matches(y)
    if k < m:
        b = mask_middle(y, r).blanks
        assert b == list(range(b[0], b[0] + k)) and b[0] == (m - k) // 2


def test_template_fill_and_matches():
    t = Template((10, BLANK, 12, BLANK))
    assert t.blanks == [1, 3]
    assert t.fill([20, 21]) == [10, 20, 12, 21]
    assert t.matches([10, 7, 12, 8]) and not t.matches([11, 7, 12, 8]) and not t.matches([10, 7, 12])
    with pytest.raises(ValueError):
        t.fill([1])


def test_template_file_round_trip(tmp_path):
    v = build_vocab([["a", "b", "c"]])
    ts = [Template((v.index("a"), BLANK, v.index("c"))), Template((BLANK, v.index("b")))]
    write_templates(tmp_path / "t.txt", ts, v, header="seed=1")
    assert "__BLANK__" in (tmp_path / "t.txt").read_text()
    assert read_templates(tmp_path / "t.txt", v) == ts
