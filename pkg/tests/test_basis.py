import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfem.basis import HERMITE, LAGRANGE, BasisFamily, eval_basis, gauss_rule, tabulate


def test_one_point_rule_is_midpoint():
    r = gauss_rule(1)
    assert np.allclose(r.points.ravel(), [0.0]) and np.allclose(r.weights, [2.0])


def test_two_point_rule_nodes_and_weights():
    r = gauss_rule(2)
    assert np.allclose(np.sort(r.points.ravel()), [-1 / math.sqrt(3), 1 / math.sqrt(3)])
    assert np.allclose(r.weights, [1.0, 1.0])


def test_two_point_rule_integrates_x2_exactly():
    r = gauss_rule(2)
    assert abs(r.weights @ r.points.ravel() ** 2 - 2 / 3) < 1e-15


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_rule_exact_up_to_degree_2n_minus_1(n):
    r = gauss_rule(n)
    for k in range(2 * n):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(r.weights @ r.points.ravel() ** k - exact) < 1e-13


def test_2d_rule_integrates_tensor_monomial():
    r = gauss_rule(3, 2)
    x, y = r.points[:, 0], r.points[:, 1]
    assert abs(r.weights @ (x ** 2 * y ** 4) - (2 / 3) * (2 / 5)) < 1e-14


def test_p1_nodal_property():
    assert np.allclose(eval_basis(BasisFamily(LAGRANGE, 1, 1), 1.0), [0.0, 1.0])


def test_hermite_value_function_at_midpoint():
    v = eval_basis(BasisFamily(HERMITE, 3, 1), 0.0)
    assert abs(v[0] - 0.5) < 1e-15 and abs(v[2] - 0.5) < 1e-15


def test_hermite_dofs_are_kronecker():
    fam = BasisFamily(HERMITE, 3, 1)
    v = tabulate(fam, np.array([-1.0, 1.0]), 0)
    d = tabulate(fam, np.array([-1.0, 1.0]), 1)
    assert np.allclose(v, [[1, 0, 0, 0], [0, 0, 1, 0]])
    assert np.allclose(d, [[0, 1, 0, 0], [0, 0, 0, 1]])


@settings(max_examples=50, deadline=None)
@given(order=st.integers(0, 4), dim=st.integers(1, 2),
       seed=st.integers(0, 2 ** 31 - 1))
def test_partition_of_unity(order, dim, seed):
    pts = np.random.default_rng(seed).uniform(-1, 1, (100, dim))
    phi = tabulate(BasisFamily(LAGRANGE, order, dim), pts if dim == 2 else pts[:, 0])
    assert np.abs(phi.sum(axis=1) - 1).max() < 1e-13


@settings(max_examples=30, deadline=None)
@given(order=st.integers(1, 4), x=st.floats(-0.9, 0.9))
def test_derivative_matches_finite_difference(order, x):
    fam = BasisFamily(LAGRANGE, order, 1)
    h = 1e-6
    fd = (eval_basis(fam, x + h) - eval_basis(fam, x - h)) / (2 * h)
    assert np.allclose(eval_basis(fam, x, 1), fd, atol=1e-6)


def test_hermite_second_derivative_available():
    fam = BasisFamily(HERMITE, 3, 1)
    h = 1e-4
    fd = (eval_basis(fam, 0.3 + h, 1) - eval_basis(fam, 0.3 - h, 1)) / (2 * h)
    assert np.allclose(eval_basis(fam, 0.3, 2), fd, atol=1e-6)


def test_hermite_only_in_1d():
    with pytest.raises(ValueError):
        BasisFamily(HERMITE, 3, 2)
