import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradfill import autodiff as ad
from gradfill.autodiff import NonFiniteError, ShapeError, Tape, Tensor, finite_diff_grad


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))


def check_grad(build, *arrays, tol=1e-6):
    """Compare tape gradients of a scalar function with central differences."""
    leaves = [Tensor(np.array(a, dtype=np.float64)) for a in arrays]
    with Tape() as tape:
        tape.watch(*leaves)
        out = build(*leaves)
        grads = tape.gradient(out, leaves)
    for i, a in enumerate(arrays):

        def f(v, i=i):
            args = [Tensor(np.array(x, dtype=np.float64)) for x in arrays]
            args[i] = Tensor(v)
            return build(*args).item()

        assert rel_err(grads[i], finite_diff_grad(f, np.array(a, dtype=np.float64))) < tol


# --- examples ----------------------------------------------------------------


def test_softmax_of_zeros_is_uniform():
    np.testing.assert_array_equal(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_l2norm_pythagorean():
    assert ad.l2norm(Tensor([3.0, 4.0])).item() == 5.0


def test_matmul_identity():
    M = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(ad.matmul(Tensor(np.eye(3)), Tensor(M)).data, M)


def test_grad_sum_of_squares():
    v = Tensor([1.0, 2.0])
    with Tape() as tape:
        tape.watch(v)
        out = ad.sum_(ad.mul(v, v))
    np.testing.assert_array_equal(tape.gradient(out, [v])[0], [2.0, 4.0])


def test_grad_log_softmax():
    v = Tensor([0.0, 0.0])
    with Tape() as tape:
        tape.watch(v)
        out = ad.slice_(ad.log_softmax(v), 0)
    np.testing.assert_allclose(ad.grad(tape, out, [v])[0], [0.5, -0.5], atol=1e-15)


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_grad(lambda v: float((v**2).sum()), np.array([1.0, 2.0])), [2.0, 4.0], atol=1e-8)
    np.testing.assert_array_equal(finite_diff_grad(lambda v: 3.0, np.array([1.0, 2.0, 3.0])), np.zeros(3))
    with pytest.raises(ValueError):
        finite_diff_grad(lambda v: 0.0, np.zeros(2), h=0.0)


# --- errors ------------------------------------------------------------------


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError) as e:
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    msg = str(e.value)
    assert "matmul" in msg and "(2, 3)" in msg and "(4, 5)" in msg
    with pytest.raises(ShapeError) as e:
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
    assert "add" in str(e.value) and "(2, 3)" in str(e.value) and "(4,)" in str(e.value)


def test_non_scalar_output_rejected():
    v = Tensor([1.0, 2.0])
    with Tape() as tape:
        tape.watch(v)
        out = ad.mul(v, 2.0)
    with pytest.raises(ValueError, match="scalar"):
        tape.gradient(out, [v])


def test_unwatched_tensor_rejected():
    v, w = Tensor([1.0]), Tensor([2.0])
    with Tape() as tape:
        tape.watch(v)
        out = ad.sum_(ad.mul(v, w))
    with pytest.raises(ValueError, match="not watched"):
        tape.gradient(out, [w])


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        ad.log(Tensor([0.0]))
    with pytest.raises(NonFiniteError):
        ad.exp(Tensor([1e5]))


def test_nothing_recorded_without_watched_inputs():
    with Tape() as tape:
        ad.tanh(Tensor([1.0, 2.0]))
    assert len(tape) == 0


def test_tapes_are_per_thread():
    seen = []

    def worker():
        v = Tensor([1.0])
        with Tape() as t:
            t.watch(v)
            ad.mul(v, v)
            seen.append(len(t))

    with Tape() as outer:
        th = threading.Thread(target=worker)
        th.start()
        th.join()
        assert len(outer) == 0
    assert seen == [1]


# --- properties ---------------------------------------------------------------

shapes = st.tuples(st.integers(1, 4), st.integers(1, 4))


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2**31 - 1))
def test_softmax_is_a_distribution(shape, seed):
    x = np.random.default_rng(seed).normal(scale=5.0, size=shape)
    p = ad.softmax(Tensor(x)).data
    assert (p > 0).all()
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(shapes, st.integers(0, 2**31 - 1))
def test_elementwise_ops_match_finite_differences(shape, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=shape), rng.normal(size=shape)
    w = rng.normal(size=shape)
    check_grad(lambda x, y: ad.sum_(ad.mul(ad.add(ad.mul(x, y), ad.sigmoid(x)), Tensor(w))), a, b)
    check_grad(lambda x, y: ad.sum_(ad.mul(ad.sub(ad.tanh(x), ad.exp(y)), Tensor(w))), a, b)
    check_grad(lambda x: ad.sum_(ad.mul(ad.log(ad.add(ad.mul(x, x), 1.0)), Tensor(w))), a)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_matmul_softmax_concat_match_finite_differences(n, k, p, seed):
    rng = np.random.default_rng(seed)
    A, B, C = rng.normal(size=(n, k)), rng.normal(size=(k, p)), rng.normal(size=(n, 2))
    w = rng.normal(size=(n, p + 2))
    check_grad(lambda a, b, c: ad.sum_(ad.mul(ad.concat([ad.softmax(ad.matmul(a, b)), c], axis=-1), Tensor(w))), A, B, C)
    check_grad(lambda a, b: ad.sum_(ad.mul(ad.log_softmax(ad.matmul(a, b), axis=0), Tensor(w[:, :p]))), A, B)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_indexing_ops_match_finite_differences(V, d, seed):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(V, d))
    idx = rng.integers(0, V, size=(3,))
    w = rng.normal(size=(3, d))
    check_grad(lambda t: ad.sum_(ad.mul(ad.embedding(t, idx), Tensor(w))), table)
    check_grad(lambda t: ad.sum_(ad.pick(ad.reshape(t, (V, d)), rng.integers(0, d, size=V) * 0)), table)
    check_grad(lambda t: ad.l2norm(ad.slice_(t, (slice(0, V - 1), slice(None)))), table)
    check_grad(lambda t: ad.sum_(ad.mul(ad.sum_(t, axis=0, keepdims=True), 3.0)), table)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_lstm_cell_loss_matches_finite_differences(B, E, H, seed):
    """A full LSTM cell followed by a log-softmax loss: relative error below 1e-6."""
    from gradfill.seq2seq import _lstm

    rng = np.random.default_rng(seed)
    x, h, c = rng.normal(size=(B, E)), rng.normal(size=(B, H)), rng.normal(size=(B, H))
    W, b = rng.normal(size=(E + H, 4 * H)), rng.normal(size=(4 * H,))
    tgt = rng.integers(0, H, size=B)

    def loss(xx, hh, cc, WW, bb):
        h2, c2 = _lstm([xx], hh, cc, WW, bb, H)
        return ad.sum_(ad.pick(ad.log_softmax(ad.add(h2, c2)), tgt))

    check_grad(loss, x, h, c, W, b, tol=1e-6)


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2**31 - 1))
def test_replay_is_bit_identical(shape, seed):
    rng = np.random.default_rng(seed)
    a, b = Tensor(rng.normal(size=shape)), Tensor(rng.normal(size=shape))
    with Tape() as tape:
        tape.watch(a, b)
        out = ad.sum_(ad.mul(ad.tanh(ad.add(a, b)), ad.softmax(b)))
    assert tape.replay(out).tobytes() == out.data.tobytes()


def test_l2norm_gradient_is_unit_vector_and_zero_at_origin():
    v = Tensor([3.0, 4.0])
    with Tape() as tape:
        tape.watch(v)
        out = ad.l2norm(v)
    np.testing.assert_allclose(tape.gradient(out, [v])[0], [0.6, 0.8])
    z = Tensor([0.0, 0.0])
    with Tape() as tape:
        tape.watch(z)
        out = ad.l2norm(z)
    np.testing.assert_array_equal(tape.gradient(out, [z])[0], [0.0, 0.0])


def test_float32_stays_float32():
    a = Tensor(np.ones((2, 2), dtype=np.float32))
    with Tape() as tape:
        tape.watch(a)
        out = ad.sum_(ad.mul(ad.sigmoid(a), 2.0))
        g = tape.gradient(out, [a])[0]
    assert out.data.dtype == np.float32 and g.dtype == np.float32
    assert math.isclose(out.item(), 8 / (1 + math.exp(-1)), rel_tol=1e-6)
