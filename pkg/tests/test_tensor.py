import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from flowinr import tensor as T
from flowinr.errors import ContractError, DimensionError, DomainError, UnsupportedOperationError
from flowinr.tensor import Tensor

from conftest import central_diff, rel_err


def leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def test_square_gradient(f64):
    x = leaf(3.0)
    g = T.backward(T.mul(x, x))
    assert g[x] == pytest.approx(6.0)


def test_broadcast_add_unbroadcasts(f64):
    a = leaf(np.ones((3, 4)))
    b = leaf(np.ones(4))
    g = T.backward(T.sum(T.add(a, b)))
    np.testing.assert_array_equal(g[b], np.full(4, 3.0))
    np.testing.assert_array_equal(g[a], np.ones((3, 4)))


def test_incompatible_shapes_raise():
    with pytest.raises(DimensionError):
        T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(DimensionError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_backward_rejects_non_scalar_and_complex():
    x = leaf(np.ones(3))
    with pytest.raises(ContractError):
        T.backward(T.mul(x, 2.0))
    z = T.pack_complex(x, x)
    with pytest.raises(ContractError):
        T.backward(T.sum(z))


def test_unreachable_wrt_gets_exact_zeros(f64):
    x, y = leaf(np.ones(2)), leaf(np.ones(5))
    g = T.backward(T.sum(T.mul(x, x)), wrt=[x, y])
    assert np.array_equal(g[y], np.zeros(5))


def test_repeated_backward_is_identical(f64, rng):
    w = leaf(rng.normal(size=(4, 3)))
    x = Tensor(rng.normal(size=(5, 4)))
    loss = T.sum(T.relu(T.matmul(x, w)))
    g1, g2 = T.backward(loss), T.backward(loss)
    assert np.array_equal(g1[w], g2[w])
    assert g1[w] is not g2[w]


def test_relu_derivative_at_zero_is_zero(f64):
    x = leaf(np.array([-1.0, 0.0, 2.0]))
    g = T.backward(T.sum(T.relu(x)))
    np.testing.assert_array_equal(g[x], [0.0, 0.0, 1.0])


def test_div_by_zero_in_64bit_raises(f64):
    with pytest.raises(DomainError):
        T.div(leaf(1.0), Tensor(np.float64(0.0)))


def test_sqrt_negative_raises():
    with pytest.raises(DomainError):
        T.sqrt(Tensor(np.array([-1.0])))


def test_getitem_fancy_index_accumulates(f64):
    x = leaf(np.arange(4.0))
    g = T.backward(T.sum(T.getitem(x, np.array([1, 1, 3]))))
    np.testing.assert_array_equal(g[x], [0, 2, 0, 1])


def test_gather_and_scatter_add_are_adjoint(f64, rng):
    table = rng.normal(size=(6, 2))
    idx = rng.integers(0, 6, size=9)
    vals = rng.normal(size=(9, 2))
    lhs = np.sum(T.gather(Tensor(table), idx).data * vals)
    rhs = np.sum(table * T.scatter_add(Tensor(vals), idx, 6).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_gather_rejects_bad_index():
    with pytest.raises(DomainError):
        T.gather(Tensor(np.ones((3, 2))), np.array([3]))
    with pytest.raises(ContractError):
        T.gather(Tensor(np.ones((3, 2))), np.array([0.5]))


def test_complex_modulus_gradient(f64):
    # d|z|/dRe = Re z/|z|, d|z|/dIm = Im z/|z|
    re, im = leaf(3.0), leaf(4.0)
    g = T.backward(T.absolute(T.pack_complex(re, im)))
    assert g[re] == pytest.approx(0.6)
    assert g[im] == pytest.approx(0.8)


def test_mlp_gradient_matches_central_differences(f64, rng):
    x = Tensor(rng.normal(size=(7, 3)))
    w1, w2 = leaf(rng.normal(size=(3, 5))), leaf(rng.normal(size=(5, 2)))
    b1 = leaf(rng.normal(size=5))

    def loss():
        h = T.relu(T.add(T.matmul(x, w1), b1))
        o = T.matmul(h, w2)
        z = T.pack_complex(o[:, 0], o[:, 1])
        return T.add(T.mean(T.abs2(z)), T.sum(T.absolute(T.sub(z, 0.3))))

    grads = T.backward(loss(), wrt=[w1, w2, b1])
    for p in (w1, w2, b1):
        for index in [tuple(rng.integers(0, s) for s in p.shape) for _ in range(4)]:
            fd = central_diff(lambda: float(loss().data), p.data, index)
            assert rel_err(grads[p][index], fd) < 1e-6


def test_directional_derivative_matches_fd_and_stays_differentiable(f64, rng):
    w1 = leaf(rng.normal(size=(2, 6)))
    w2 = leaf(rng.normal(size=(6, 1)))
    coords = Tensor(rng.uniform(size=(5, 2)))

    def net(c):
        return T.matmul(T.square(T.matmul(c, w1)), w2)

    d = T.directional_derivative(net, coords, 0)
    h = 1e-6
    shift = np.zeros_like(coords.data)
    shift[:, 0] = h
    fd = (net(Tensor(coords.data + shift)).data - net(Tensor(coords.data - shift)).data) / (2 * h)
    np.testing.assert_allclose(d.data, fd, rtol=1e-6)

    def second():
        return float(T.sum(T.square(T.directional_derivative(net, coords, 0))).data)

    g = T.backward(T.sum(T.square(d)), wrt=[w1])
    for index in [(0, 1), (1, 4)]:
        assert rel_err(g[w1][index], central_diff(second, w1.data, index)) < 1e-6


def test_directional_derivative_of_constant_is_zero():
    coords = Tensor(np.ones((3, 2)))
    out = T.mul(Tensor(np.ones((3, 1))), 2.0)
    d = T.directional_derivative(out, coords, 1)
    assert np.array_equal(d.data, np.zeros((3, 1)))


def test_primitive_without_tangent_rule_is_named():
    coords = Tensor(np.ones((2, 1)))
    out = T.record(coords.data * 2, (coords,), lambda g: (2 * g,), None, "mystery")
    with pytest.raises(UnsupportedOperationError, match="mystery"):
        T.directional_derivative(out, coords, 0)


def test_precision_modes():
    with T.precision("float64"):
        assert Tensor([1.0]).dtype == np.float64
    with T.precision("float32"):
        assert Tensor([1.0]).dtype == np.float32


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with T.no_grad():
        y = T.mul(x, 2.0)
    assert not y.requires_grad and y.is_leaf


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 6), elements=st.floats(-5, 5)),
       arrays(np.float64, st.integers(1, 6), elements=st.floats(-5, 5)))
def test_sum_of_products_gradient_property(a, b):
    n = min(a.size, b.size)
    x, y = leaf(a[:n]), leaf(b[:n])
    g = T.backward(T.sum(T.mul(x, y)))
    np.testing.assert_array_equal(g[x], b[:n])
    np.testing.assert_array_equal(g[y], a[:n])


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 3))
def test_linearity_of_tangents(a, b, s):
    # tangent of a*x + b*x^2 along direction s equals s times the unit tangent
    with T.precision("float64"):
        coords = Tensor(np.array([[0.3], [0.7]]))

        def f(c):
            return T.add(T.mul(c, a), T.mul(T.square(c), b))

        d1 = T.directional_derivative(f, coords, 0).data
        ds = T.directional_derivative(f, coords, np.full((2, 1), s)).data
        np.testing.assert_allclose(ds, s * d1, rtol=1e-12, atol=1e-12)
