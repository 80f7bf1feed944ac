import json
import math

import mpmath
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from netgrow import autodiff as ad
from netgrow.autodiff import NonFiniteError, ParamStore, ShapeError, Tape, special

REFERENCE_POINTS = [0.5, 1.0, 2.0, 3.0, 10.5]


class TestSpecialFunctions:
    @pytest.mark.parametrize("x", REFERENCE_POINTS)
    def test_against_mpmath(self, x):
        assert special.lgamma(x) == pytest.approx(float(mpmath.loggamma(x)), abs=1e-12)
        assert special.digamma(x) == pytest.approx(float(mpmath.digamma(x)), abs=1e-12)
        assert special.trigamma(x) == pytest.approx(float(mpmath.polygamma(1, x)), abs=1e-12)

    def test_published_values(self):
        assert special.lgamma(3.0) == pytest.approx(math.log(2), abs=1e-15)
        assert special.digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-14)

    @given(st.floats(1e-3, 300))
    def test_lgamma_matches_math(self, x):
        assert special.lgamma(x) == pytest.approx(math.lgamma(x), rel=1e-12, abs=1e-12)

    @given(st.floats(0.05, 50))
    def test_digamma_recurrence(self, x):
        assert special.digamma(x + 1) - special.digamma(x) == pytest.approx(1 / x, rel=1e-11)

    def test_beta_entropy(self):
        assert special.beta_entropy(2.0, 1.0) == pytest.approx(0.5 - math.log(2), abs=1e-14)
        assert special.beta_entropy(1.0, 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_beta_entropy_quadrature(self):
        h = -mpmath.quad(lambda t: 6 * t * (1 - t) * mpmath.log(6 * t * (1 - t)), [0, 1])
        assert special.beta_entropy(2.0, 2.0) == pytest.approx(float(h), abs=1e-12)

    def test_vectorized(self):
        x = np.array([[0.5, 1.0], [2.0, 3.0]])
        assert special.lgamma(x).shape == (2, 2)


def grad_of(fn, *values):
    tape = Tape()
    xs = [tape.variable(v, name=f"x{i}") for i, v in enumerate(values)]
    out = fn(*xs)
    grads = tape.backward(out)
    return out, [grads[f"x{i}"] for i in range(len(values))]


def central_difference(fn, values, h=1e-6):
    grads = []
    for i, v in enumerate(values):
        v = np.array(v, dtype=float, ndmin=2)
        g = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            args_up = [np.array(a, dtype=float, ndmin=2) for a in values]
            args_dn = [np.array(a, dtype=float, ndmin=2) for a in values]
            args_up[i][idx] += h
            args_dn[i][idx] -= h
            tape = Tape()
            up = fn(*[tape.constant(a) for a in args_up]).item()
            dn = fn(*[tape.constant(a) for a in args_dn]).item()
            g[idx] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


RNG = np.random.default_rng(7)
ADJ = sp.csr_matrix(np.array([[1, 1, 0, 0], [1, 1, 1, 1], [0, 1, 1, 0], [0, 1, 0, 1]], dtype=float))

OPS = {
    "add_broadcast": (lambda a, b: ad.sum(ad.tanh(ad.add(a, b))), [RNG.normal(size=(3, 2)), RNG.normal(size=(1, 2))]),
    "sub_scalar_col": (lambda a, b: ad.sum(ad.tanh(ad.sub(a, b))), [RNG.normal(size=(3, 2)), RNG.normal(size=(3, 1))]),
    "mul": (lambda a, b: ad.sum(ad.mul(a, b)), [RNG.normal(size=(2, 3)), RNG.normal(size=(2, 3))]),
    "matmul": (lambda a, b: ad.sum(ad.tanh(ad.matmul(a, b))), [RNG.normal(size=(3, 4)), RNG.normal(size=(4, 2))]),
    "bias_row": (lambda a, b: ad.sum(ad.tanh(ad.add_bias_row(a, b))), [RNG.normal(size=(3, 2)), RNG.normal(size=(1, 2))]),
    "scale": (lambda a, g: ad.sum(ad.tanh(ad.scale(a, g))), [RNG.normal(size=(3, 2)), np.array([[0.7]])]),
    "sparse_aggregate": (lambda h: ad.sum(ad.tanh(ad.sparse_aggregate(ADJ, h))), [RNG.normal(size=(4, 3))]),
    "segment_mean": (lambda h: ad.sum(ad.tanh(ad.segment_mean(h, [1, 3]))), [RNG.normal(size=(4, 2))]),
    "concat_rows": (lambda a, b: ad.sum(ad.tanh(ad.concat_rows([a, b]))), [RNG.normal(size=(1, 2)), RNG.normal(size=(2, 2))]),
    "take_columns": (lambda a: ad.sum(ad.tanh(ad.take_columns(a, [2, 0]))), [RNG.normal(size=(2, 3))]),
    "mean": (lambda a: ad.mean(ad.tanh(a)), [RNG.normal(size=(3, 3))]),
    "softplus": (lambda a: ad.sum(ad.softplus(a)), [RNG.normal(size=(2, 3)) * 5]),
    "log": (lambda a: ad.sum(ad.log(a)), [RNG.uniform(0.5, 2, size=(2, 2))]),
    "lgamma": (lambda a: ad.sum(ad.lgamma(a)), [RNG.uniform(0.3, 8, size=(2, 3))]),
    "digamma": (lambda a: ad.sum(ad.digamma(a)), [RNG.uniform(0.3, 8, size=(2, 3))]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_primitive_vjp_matches_central_difference(name):
    fn, values = OPS[name]
    _, analytic = grad_of(fn, *values)
    numeric = central_difference(fn, values)
    for a, n in zip(analytic, numeric):
        np.testing.assert_allclose(a, n, rtol=1e-6, atol=1e-8)


class TestForwardValues:
    def test_tanh_softplus_at_zero(self):
        t = Tape().constant(np.zeros((1, 1)))
        assert ad.tanh(t).item() == 0.0
        assert ad.softplus(t).item() == pytest.approx(math.log(2), abs=1e-15)

    def test_softplus_extremes(self):
        t = Tape().constant(np.array([[-800.0, 800.0]]))
        assert ad.softplus(t).value.tolist() == [[0.0, 800.0]]

    def test_aggregate_ones_gives_degree_plus_one(self):
        h = Tape().constant(np.ones((4, 1)))
        assert ad.sparse_aggregate(ADJ, h).value.ravel().tolist() == [2, 4, 2, 2]

    def test_segment_mean_matches_per_segment(self):
        x = RNG.normal(size=(9, 3))
        out = ad.segment_mean(Tape().constant(x), [2, 3, 4]).value
        expect = np.vstack([x[:2].mean(0), x[2:5].mean(0), x[5:].mean(0)])
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_replay_is_bit_identical(self):
        tape = Tape()
        a = tape.variable(RNG.normal(size=(3, 3)))
        out = ad.sum(ad.softplus(ad.matmul(ad.tanh(a), a)))
        recorded = [n.output.value for n in tape.nodes]
        assert all(np.array_equal(r, f) for r, f in zip(recorded, tape.replay()))
        assert out.item() == recorded[-1].item()


class TestBackward:
    def test_linear_map_gradient(self):
        x = np.array([[1.0], [2.0], [3.0]])
        _, (g,) = grad_of(lambda w: ad.sum(ad.matmul(w, x)), np.ones((2, 3)))
        np.testing.assert_array_equal(g, np.tile(x.T, (2, 1)))

    def test_even_function_at_zero(self):
        _, (g,) = grad_of(lambda w: ad.mul(ad.tanh(w), ad.tanh(w)), np.zeros((1, 1)))
        assert g.item() == 0.0

    def test_reused_input_accumulates(self):
        _, (g,) = grad_of(lambda a: ad.sum(ad.add(ad.mul(a, 3.0), a)), np.ones((2, 2)))
        np.testing.assert_array_equal(g, 4 * np.ones((2, 2)))

    def test_foreign_loss_rejected(self):
        other = Tape()
        loss = ad.sum(other.variable(np.ones((1, 1))))
        with pytest.raises(ValueError):
            Tape().backward(loss)

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        out = ad.tanh(tape.variable(np.ones((2, 2))))
        with pytest.raises(ShapeError):
            tape.backward(out)

    def test_store_gradients_are_reset(self):
        store = ParamStore({"w": np.ones((1, 2))})
        store.grads["w"][...] = 99.0
        tape = Tape()
        loss = ad.sum(tape.param(store, "w"))
        tape.backward(loss, store)
        np.testing.assert_array_equal(store.grads["w"], np.ones((1, 2)))


class TestErrors:
    def test_shape_mismatch(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            ad.matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))
        with pytest.raises(ShapeError):
            ad.add(tape.constant(np.ones((2, 3))), tape.constant(np.ones((3, 2))))

    def test_non_finite_names_the_op(self):
        tape = Tape()
        with pytest.raises(NonFiniteError, match="log"):
            ad.log(tape.variable(np.array([[0.0]])))


class TestAdam:
    def test_first_step_moves_by_lr_sign(self):
        store = ParamStore({"w": np.array([[1.0, -1.0, 2.0]])})
        store.grads["w"][...] = [[0.3, -5.0, 1e-3]]
        ad.adam_step(store, 1e-2)
        np.testing.assert_allclose(store["w"], [[0.99, -0.99, 1.99]], atol=1e-6)
        assert store.step == 1

    def test_zero_gradient_is_a_no_op(self):
        store = ParamStore({"w": np.array([[0.5]])})
        ad.adam_step(store, 1e-2)
        assert store["w"].item() == 0.5

    def test_quadratic_bowl_descends(self):
        store = ParamStore({"w": np.array([[1.0]])})
        prev = 1.0
        for _ in range(50):
            tape = Tape()
            w = tape.param(store, "w")
            tape.backward(ad.mul(w, w), store)
            ad.adam_step(store, 1e-2)
            assert abs(store["w"].item()) < prev
            prev = abs(store["w"].item())


def test_param_store_round_trip_is_exact():
    store = ParamStore({"a": RNG.normal(size=(2, 3)), "b": np.array([[1 / 3]])})
    store.grads["a"][...] = 1.0
    ad.adam_step(store, 0.1)
    back = ParamStore.from_dict(json.loads(json.dumps(store.to_dict())))
    for name in store.names():
        assert np.array_equal(back[name], store[name])
        assert np.array_equal(back.m[name], store.m[name])
        assert np.array_equal(back.v[name], store.v[name])
    assert back.step == store.step
    assert store.to_dict()["params"]["a"]["shape"] == [2, 3]
