import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from panap import autodiff as ad
from panap.autodiff import ParameterStore, Tape, Tensor
from panap.errors import ArgumentError, DimensionError, NumericError, UsageError

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def T(x):
    return Tensor(np.array(x, dtype=float))


# -- dense_forward ----------------------------------------------------------


def test_dense_identity():
    out = ad.dense_forward(T([1, 2]), T([[1, 0], [0, 1]]), T([0, 0]), "identity")
    np.testing.assert_array_equal(out.value, [1, 2])


def test_dense_relu_clips():
    out = ad.dense_forward(T([-1]), T([[1]]), T([0]), "relu")
    np.testing.assert_array_equal(out.value, [0])


def test_dense_leaky_relu():
    out = ad.dense_forward(T([-1]), T([[1]]), T([0]), "leaky_relu", 0.01)
    assert out.value[0] == pytest.approx(-0.01, abs=1e-15)


def test_dense_shape_mismatch_names_shapes():
    with pytest.raises(DimensionError, match=r"\(3,\).*\(2, 2\)"):
        ad.dense_forward(T([1, 2, 3]), T([[1, 0], [0, 1]]), T([0, 0]))


def test_dense_records_on_tape():
    with Tape() as tape:
        ad.dense_forward(T([1.0]), T([[2.0]]), T([0.0]), "tanh")
    assert len(tape.nodes) == 2


# -- softmax ------------------------------------------------------------------


@pytest.mark.parametrize(
    "scores, expected",
    [
        ([0, 0], [0.5, 0.5]),
        ([1000, 1000, 1000], [1 / 3, 1 / 3, 1 / 3]),
        ([0, math.log(3)], [0.25, 0.75]),
    ],
)
def test_softmax_examples(scores, expected):
    np.testing.assert_allclose(ad.softmax(T(scores)).value, expected, atol=1e-12)


def test_softmax_empty():
    with pytest.raises(ArgumentError):
        ad.softmax(T([]))


@given(arrays(np.float64, st.integers(1, 20), elements=finite), st.randoms())
def test_softmax_sums_to_one_and_is_permutation_equivariant(x, rnd):
    p = ad.softmax(T(x)).value
    assert abs(p.sum() - 1) <= 1e-9
    assert (p >= 0).all()
    assert np.argmax(p) == np.argmax(x) or p[np.argmax(p)] == p[np.argmax(x)]
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    np.testing.assert_allclose(ad.softmax(T(x[perm])).value, p[perm], rtol=1e-12, atol=1e-15)


# -- cosine -------------------------------------------------------------------


@pytest.mark.parametrize(
    "a, b, expected", [([3, 4], [3, 4], 1.0), ([1, 0], [0, 1], 0.0), ([1, 2], [2, 1], 0.8)]
)
def test_cosine_examples(a, b, expected):
    assert float(ad.cosine(T(a), T(b)).value) == pytest.approx(expected, abs=1e-12)


def test_cosine_length_mismatch():
    with pytest.raises(DimensionError):
        ad.cosine(T([1, 2]), T([1, 2, 3]))


def test_cosine_zero_norm_is_zero_with_zero_gradient():
    a = ParameterStore()
    a.add("a", [0.0, 0.0])
    a.add("b", [1.0, 2.0])
    with Tape() as tape:
        c = ad.cosine(a.leaf("a"), a.leaf("b"))
        g = ad.reverse_accumulate(tape, c, a)
    assert float(c.value) == 0.0
    assert not g["a"].any() and not g["b"].any()


vec = arrays(np.float64, 5, elements=st.floats(-10, 10, allow_nan=False))


@given(vec, vec, st.floats(1e-3, 1e3))
def test_cosine_scale_invariance(a, b, lam):
    c1 = float(ad.cosine(T(a), T(b)).value)
    c2 = float(ad.cosine(T(lam * a), T(b)).value)
    assert -1 - 1e-12 <= c1 <= 1 + 1e-12
    if np.linalg.norm(a) * lam >= 1e-12 and np.linalg.norm(a) >= 1e-12:
        assert c1 == pytest.approx(c2, abs=1e-12)


# -- reverse_accumulate -------------------------------------------------------


def test_grad_of_sum_is_ones():
    s = ParameterStore()
    s.add("x", [1.0, 2.0, 3.0])
    with Tape() as tape:
        loss = ad.sum_all(s.leaf("x"))
        g = ad.reverse_accumulate(tape, loss)
    np.testing.assert_array_equal(g["x"], [1, 1, 1])


def test_grad_of_self_cosine_is_zero():
    s = ParameterStore()
    s.add("a", [0.3, -1.2, 2.0])
    with Tape() as tape:
        a = s.leaf("a")
        g = ad.reverse_accumulate(tape, ad.cosine(a, a))
    np.testing.assert_allclose(g["a"], 0.0, atol=1e-15)


def test_loss_not_on_tape_is_usage_error():
    with Tape() as tape:
        pass
    with pytest.raises(UsageError):
        ad.reverse_accumulate(tape, T(1.0))


def test_unused_slots_get_zero_and_embedding_grads_are_row_sparse():
    s = ParameterStore()
    s.add("E", np.arange(12.0).reshape(4, 3))
    s.add("unused", np.ones(2))
    with Tape() as tape:
        rows = ad.gather_rows(s.leaf("E"), [1, 3, 1])
        g = ad.reverse_accumulate(tape, ad.sum_all(rows), s)
    np.testing.assert_array_equal(g["unused"], [0, 0])
    np.testing.assert_array_equal(g["E"], [[0] * 3, [2] * 3, [0] * 3, [1] * 3])


def _numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


OP_CASES = {
    "linear_batch": lambda p: ad.linear(p["x"], p["W"], p["b"]),
    "linear_vector": lambda p: ad.linear(ad.gather_rows(p["x"], 0), p["W"], p["b"]),
    "tanh": lambda p: ad.activate(p["x"], "tanh"),
    "leaky": lambda p: ad.activate(p["x"], "leaky_relu"),
    "relu": lambda p: ad.activate(p["x"], "relu"),
    "softmax_rows": lambda p: ad.softmax(p["x"]),
    "concat": lambda p: ad.concat([p["x"], p["y"]]),
    "rowdot": lambda p: ad.rowdot(p["x"], p["y"]),
    "cosine_rows": lambda p: ad.cosine(p["x"], p["y"]),
    "mul": lambda p: ad.mul(p["x"], p["y"]),
    "segment_softmax": lambda p: ad.segment_softmax(ad.reshape(p["x"], (-1,)), [0, 0, 1, 1, 1, 2], 3),
    "scale_rows": lambda p: ad.scale_rows(p["x"], ad.rowdot(p["x"], p["y"])),
    "segment_sum": lambda p: ad.segment_sum(p["x"], [1, 0], 2),
    "cross_entropy": lambda p: ad.softmax_cross_entropy(p["x"], [2, 0]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_primitive_gradients_match_finite_differences(name):
    rng = np.random.default_rng(7)
    s = ParameterStore()
    s.add("x", rng.normal(size=(2, 3)))
    s.add("y", rng.normal(size=(2, 3)))
    s.add("W", rng.normal(size=(4, 3)))
    s.add("b", rng.normal(size=4))
    proj = rng.normal(size=64)

    def loss_fn(st):
        p = {k: st.leaf(k) for k in st.names()}
        out = OP_CASES[name](p)
        flat = out.value.reshape(-1)
        return ad.sum_all(ad.mul_const(out, proj[: flat.size].reshape(out.shape)))

    with Tape() as tape:
        g = ad.reverse_accumulate(tape, loss_fn(s), s)
    for slot in s.names():
        num = _numeric_grad(lambda: float(loss_fn(s).value), s[slot])
        np.testing.assert_allclose(g[slot], num, rtol=1e-6, atol=1e-7, err_msg=slot)


# -- finite_difference_check --------------------------------------------------


def test_fd_check_quadratic():
    s = ParameterStore()
    s.add("x", [1.0, -2.0])

    def half_sq(st):
        x = st.leaf("x")
        return ad.mul_const(ad.sum_all(ad.mul(x, x)), 0.5)

    assert ad.finite_difference_check(half_sq, s) < 1e-7


def test_fd_check_constant_loss_is_zero():
    s = ParameterStore()
    s.add("x", [1.0, 2.0])
    assert ad.finite_difference_check(lambda st: ad.constant(3.0), s) == 0.0


def test_fd_check_rejects_non_finite_loss():
    s = ParameterStore()
    s.add("x", [1.0])
    with pytest.raises(NumericError):
        ad.finite_difference_check(lambda st: ad.mul_const(ad.sum_all(st.leaf("x")), np.inf), s)


# -- adam_step ----------------------------------------------------------------


def test_adam_zero_gradient_is_noop_on_values():
    s = ParameterStore()
    s.add("w", [1.0, -3.0])
    ad.adam_step(s, {"w": np.zeros(2)}, l2=0.0)
    np.testing.assert_array_equal(s["w"], [1.0, -3.0])
    assert s.step == 1


def test_adam_first_step_moves_by_lr():
    s = ParameterStore()
    s.add("w", [0.0], decay=False)
    ad.adam_step(s, {"w": np.array([0.37])}, lr=5e-4)
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    assert s["w"][0] == pytest.approx(-5e-4 * 0.37 / (0.37 + 1e-8), rel=1e-12)


def test_adam_decreases_convex_quadratic():
    s = ParameterStore()
    s.add("w", [2.0, -1.0])
    losses = []
    for _ in range(3):
        losses.append(0.5 * float(s["w"] @ s["w"]))
        ad.adam_step(s, {"w": s["w"].copy()}, lr=0.1)
    assert losses[0] > losses[1] > losses[2]


def test_adam_l2_only_on_decayed_slots():
    s = ParameterStore()
    s.add("w", [1.0])
    s.add("b", [1.0], decay=False)
    ad.adam_step(s, {"w": np.zeros(1), "b": np.zeros(1)}, lr=0.1, l2=1e-4)
    assert s["w"][0] < 1.0 and s["b"][0] == 1.0


def test_adam_missing_slot():
    s = ParameterStore()
    s.add("w", [1.0])
    with pytest.raises(UsageError):
        ad.adam_step(s, {})


# -- dropout ------------------------------------------------------------------


def test_dropout_rate_zero():
    np.testing.assert_array_equal(ad.dropout_mask(5, 0.0, np.random.default_rng(0)), np.ones(5))


def test_dropout_mean_is_one():
    m = ad.dropout_mask(10**6, 0.2, np.random.default_rng(1))
    assert abs(m.mean() - 1.0) < 0.01
    assert set(np.unique(m)) == {0.0, 1.25}


def test_dropout_deterministic():
    a = ad.dropout_mask(100, 0.2, np.random.default_rng(3))
    b = ad.dropout_mask(100, 0.2, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
def test_dropout_bad_rate(rate):
    with pytest.raises(ArgumentError):
        ad.dropout_mask(3, rate, np.random.default_rng(0))


def test_store_rejects_duplicate_slot():
    s = ParameterStore()
    s.add("w", [1.0])
    with pytest.raises(UsageError):
        s.add("w", [2.0])
