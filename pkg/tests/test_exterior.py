import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from weinfib import exterior as ext


def test_component_order_is_lexicographic():
    assert ext.index_sets(4, 2) == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    assert ext.n_components(4, 2) == 6


def test_wedge_convention_on_coordinate_vectors():
    e = np.eye(3)
    comp = np.zeros((1, 3))
    comp[0, 0] = 1.0                      # dx0 ^ dx1
    assert ext.evaluate(comp, 3, 2, [e[[0]], e[[1]]])[0] == 1.0
    assert ext.evaluate(comp, 3, 2, [e[[1]], e[[0]]])[0] == -1.0
    u, v = np.array([[1.0, 2.0, 0.0]]), np.array([[3.0, 5.0, 7.0]])
    assert ext.evaluate(comp, 3, 2, [u, v])[0] == pytest.approx(1 * 5 - 2 * 3)


def test_interior_product_contracts_first_slot():
    comp = np.array([[1.0, 0.0, 0.0]])    # dx0 ^ dx1 in dimension 3
    np.testing.assert_array_equal(ext.contract(np.array([[1.0, 0, 0]]), comp, 3, 2), [[0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(ext.contract(np.array([[0, 1.0, 0]]), comp, 3, 2), [[-1.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        ext.contract(np.zeros((1, 3)), np.ones((1, 1)), 3, 0)


def test_d_of_sin_dtheta1_is_minus_cos_dtheta12():
    # alpha = sin(x1) dx0: partials[m, component, axis]
    x = np.linspace(0, 6, 7)
    partials = np.zeros((7, 2, 2))
    partials[:, 0, 1] = np.cos(x)
    np.testing.assert_allclose(ext.d_from_partials(partials, 2, 1)[:, 0], -np.cos(x))


@given(n=st.integers(2, 4), k=st.integers(1, 3), seed=st.integers(0, 2 ** 16))
def test_tensor_roundtrip_and_antisymmetry(n, k, seed):
    k = min(k, n)
    comp = np.random.default_rng(seed).standard_normal((3, ext.n_components(n, k)))
    T = ext.to_tensor(comp, n, k)
    np.testing.assert_array_equal(ext.from_tensor(T, n, k), comp)
    if k >= 2:
        np.testing.assert_array_equal(T, -np.swapaxes(T, 1, 2))


@given(arrays(float, (4, 6), elements=st.floats(-3, 3)), st.integers(0, 2 ** 16))
def test_pullback_by_linear_map_matches_evaluation(comp, seed):
    # (A^* w)(u, v) = w(Au, Av)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 4, 4))
    u, v = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    pulled = ext.pull(comp, A, 2)
    lhs = ext.evaluate(pulled, 4, 2, [u, v])
    rhs = ext.evaluate(comp, 4, 2, [np.einsum("mij,mj->mi", A, u), np.einsum("mij,mj->mi", A, v)])
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-9)


def test_matrix_of_symplectic_form():
    comp = np.zeros((1, 6))
    comp[0, ext.index_sets(4, 2).index((0, 2))] = 1.0
    comp[0, ext.index_sets(4, 2).index((1, 3))] = 1.0
    Om = ext.matrix_of_two_form(comp, 4)[0]
    J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    np.testing.assert_array_equal(Om, J)
