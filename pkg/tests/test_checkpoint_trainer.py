import csv
import math
import struct

import numpy as np
import pytest

from conftest import memorization_corpus, random_model
from gradfill.checkpoint import CheckpointError, checkpoint_meta, load_checkpoint, read_checkpoint, save_checkpoint
from gradfill.corpus import SequencePair
from gradfill.seq2seq import ModelConfig
from gradfill.trainer import TrainConfig, corpus_nll, role_pairs, split_pairs, train


# --- checkpoints ----------------------------------------------------------------


@pytest.mark.parametrize("decoder", ["forward", "backward", "birnn"])
def test_round_trip_is_bit_identical(tmp_path, decoder):
    m = random_model(V=14, decoder=decoder, seed=4)
    save_checkpoint(m, tmp_path / "m.ckpt", meta={"note": "x"})
    m2 = load_checkpoint(tmp_path / "m.ckpt")
    assert sorted(m.params) == sorted(m2.params)
    for k in m.params:
        assert m.params[k].tobytes() == m2.params[k].tobytes()
    assert m2.cfg == m.cfg and m2.vocab.itos == m.vocab.itos
    assert checkpoint_meta(tmp_path / "m.ckpt") == {"note": "x"}
    if decoder != "birnn":
        assert m.sequence_nll([5, 6], [7, 8, 9])[0] == m2.sequence_nll([5, 6], [7, 8, 9])[0]


def test_corrupted_magic_rejected(tmp_path):
    m = random_model()
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    blob = bytearray(p.read_bytes())
    blob[0:8] = b"NOTAFILE"
    p.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(p)


def test_truncation_and_corruption_rejected(tmp_path):
    m = random_model()
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    blob = p.read_bytes()
    p.write_bytes(blob[:-100])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    flipped = bytearray(blob)
    flipped[-50] ^= 0xFF
    p.write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(p)


def test_version_mismatch_rejected(tmp_path):
    m = random_model()
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    blob = bytearray(p.read_bytes())
    blob[8:12] = struct.pack("<I", 99)
    p.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        read_checkpoint(p)


def test_layout_is_little_endian_f8(tmp_path):
    import json

    m = random_model()
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    blob = p.read_bytes()
    (hlen,) = struct.unpack_from("<Q", blob, 12)
    header = json.loads(blob[20 : 20 + hlen])
    entry = next(a for a in header["arrays"] if a["name"] == "out_b")
    start = 20 + hlen + entry["offset"]
    raw = np.frombuffer(blob[start : start + entry["nbytes"]], dtype="<f8")
    np.testing.assert_array_equal(raw, m.params["out_b"].ravel())


# --- training -------------------------------------------------------------------


def small_run(**kw):
    pairs, vocab = memorization_corpus(n=20)
    cfg = ModelConfig(len(vocab), len(vocab), 8, 12, "bi", "forward", seed=0)
    tc = TrainConfig(lr=0.5, batch_size=8, epochs=2, optimizer="nesterov", **kw)
    return train(tc, pairs, cfg, vocab), vocab


def test_epoch_zero_is_near_uniform():
    result, vocab = small_run()
    assert result.history[0][0] == 0
    assert result.history[0][1] == pytest.approx(math.log(len(vocab)), rel=0.05)


def test_training_is_deterministic():
    a, _ = small_run(seed=3)
    b, _ = small_run(seed=3)
    assert a.history == b.history
    for k in a.model.params:
        assert a.model.params[k].tobytes() == b.model.params[k].tobytes()


def test_memorization(memorized):
    result, pairs = memorized
    hist = [h[1] for h in result.history]
    assert corpus_nll(result.model, pairs) < 0.5
    assert hist[-1] < hist[0] / 4
    ups = [b > a * 1.05 for a, b in zip(hist[3:], hist[4:])]
    assert sum(ups) <= 0.05 * len(ups) + 1
    assert result.model.dtype == np.float64


def test_history_csv(tmp_path):
    pairs, vocab = memorization_corpus(n=12)
    cfg = ModelConfig(len(vocab), len(vocab), 6, 8, "bi", "forward", seed=0)
    result = train(TrainConfig(lr=0.5, batch_size=4, epochs=2), pairs, cfg, vocab, history_csv=tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["epoch", "train_nll", "valid_nll"]
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2]
    assert float(rows[-1][2]) == result.history[-1][2]


def test_best_validation_params_are_kept():
    pairs, vocab = memorization_corpus(n=30)
    cfg = ModelConfig(len(vocab), len(vocab), 6, 8, "bi", "forward", seed=0)
    result = train(TrainConfig(lr=0.5, batch_size=4, epochs=3, optimizer="nesterov", valid_fraction=0.2), pairs, cfg, vocab)
    _, valid = split_pairs(pairs, 0.2, 0)
    best = min(h[2] for h in result.history)
    assert result.history[result.best_epoch][2] == best
    assert corpus_nll(result.model, valid) == pytest.approx(best, rel=1e-4)


def test_divergence_aborts_with_last_finite_checkpoint():
    pairs, vocab = memorization_corpus(n=12)
    cfg = ModelConfig(len(vocab), len(vocab), 6, 8, "bi", "forward", seed=0)
    result = train(TrainConfig(lr=1e300, batch_size=4, epochs=5, clip_norm=0.0, valid_fraction=0.0), pairs, cfg, vocab)
    assert result.diverged
    assert all(np.isfinite(v).all() for v in result.model.params.values())


def test_roles_and_validation():
    p = [SequencePair([1], [5, 6, 7])]
    assert role_pairs(p, "backward")[0].y == [7, 6, 5]
    assert role_pairs(p, "forward")[0].y == [5, 6, 7]
    with pytest.raises(ValueError):
        role_pairs(p, "sideways")
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        train(TrainConfig(), [], ModelConfig(10, 10))


@pytest.mark.parametrize("decoder", ["backward", "birnn"])
def test_other_roles_learn(decoder):
    pairs, vocab = memorization_corpus(n=20)
    cfg = ModelConfig(len(vocab), len(vocab), 8, 12, "bi", decoder, seed=0)
    result = train(TrainConfig(lr=0.5, batch_size=8, epochs=3, optimizer="nesterov", valid_fraction=0.0), role_pairs(pairs, decoder if decoder != "birnn" else "birnn"), cfg, vocab)
    assert result.history[-1][1] < result.history[0][1]
