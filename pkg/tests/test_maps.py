from __future__ import annotations

import dataclasses
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from convexlab.errors import ContractViolation, DomainError, NoPreimageFound
from convexlab.maps import (affine, cubic1d, directional_derivative, fd_jacobian, from_ref, identity,
                            inverse_eval, map_eval, polynomial, quad1d, shear)
from convexlab.regions import Ball, Box

POLY = {
    "name": "poly2",
    "dim_in": 2,
    "dim_out": 2,
    "outputs": [
        {"monomials": [{"exponents": [1, 0], "coeff": 1.0}, {"exponents": [0, 2], "coeff": 0.3}]},
        {"monomials": [{"exponents": [0, 1], "coeff": 1.0}, {"exponents": [2, 1], "coeff": -0.2},
                       {"exponents": [3, 1], "coeff": 0.05}]},
    ],
    "domain": {"ball": {"center": [0.0, 0.0], "radius": 1.0}},
}

CORPUS = [identity(2), identity(3), affine([[2.0, 1.0], [0.0, 0.5]], [1.0, -1.0]), shear(1.0), shear(-2.5),
          cubic1d(Box([-1.0], [1.0])), quad1d(Box([-1.0], [1.0])), polynomial(POLY)]
IDS = [m.name + str(i) for i, m in enumerate(CORPUS)]


def _interior(m, rng, n=64):
    dom = m.domain
    if isinstance(dom, Ball):
        return Ball(dom.center, 0.95 * dom.radius).sample(rng, n)
    mid, half = dom.center, 0.475 * (dom.hi - dom.lo)
    return Box(mid - half, mid + half).sample(rng, n)


def test_map_eval_examples():
    assert np.allclose(map_eval(identity(2), [0.3, -0.1]), [0.3, -0.1])
    # second coordinate 0.5916 + 0.1^2
    assert np.allclose(map_eval(shear(1.0), [0.1, 0.5916]), [0.1, 0.6016], atol=1e-15)
    assert map_eval(cubic1d(), [2.0]) == pytest.approx([8.0])


def test_map_eval_contract_and_warning():
    with pytest.raises(ContractViolation):
        map_eval(shear(1.0), [1.0, 2.0, 3.0])
    with pytest.warns(UserWarning):
        map_eval(shear(1.0, Ball([0, 0], 1.0)), [3.0, 0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        map_eval(shear(1.0), [0.5, 0.5])


@pytest.mark.parametrize("m", CORPUS, ids=IDS)
def test_jacobian_matches_central_differences(m):
    X = _interior(m, np.random.default_rng(1))
    assert np.max(np.abs(m.jacobian(X) - fd_jacobian(m.fn, X))) <= 1e-6


@pytest.mark.parametrize("m", [m for m in CORPUS if m.inv is not None], ids=lambda m: m.name)
def test_inverse_round_trip(m):
    X = _interior(m, np.random.default_rng(2))
    Y = m(X)
    assert np.max(np.abs(m(m.inv(Y)) - Y)) <= 1e-10
    assert np.max(np.abs(m.inv(Y) - X)) <= 1e-10


def test_directional_derivative_examples():
    assert np.allclose(directional_derivative(identity(2), [0.4, -2.0], [1.0, 2.0]), [1.0, 2.0])
    # Jacobian row (2 kappa x1, 1) at x1 = 0.5
    assert np.allclose(directional_derivative(shear(1.0), [0.5, 0.0], [1.0, 0.0]), [1.0, 1.0])


@pytest.mark.parametrize("m", CORPUS, ids=IDS)
def test_directional_derivative_analytic_vs_fd(m):
    rng = np.random.default_rng(3)
    bare = dataclasses.replace(m, jac=None)
    for x in _interior(m, rng, 8):
        h = rng.standard_normal(m.dim_in)
        assert np.allclose(directional_derivative(m, x, h), directional_derivative(bare, x, h), atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(x=arrays(np.float64, 2, elements=st.floats(-0.7, 0.7)), h1=arrays(np.float64, 2, elements=st.floats(-3, 3)),
       h2=arrays(np.float64, 2, elements=st.floats(-3, 3)), alpha=st.floats(-5, 5))
def test_directional_derivative_is_linear(x, h1, h2, alpha):
    m = polynomial(POLY)
    comb = alpha * h1 + h2
    if not np.any(h1) or not np.any(h2) or not np.any(comb):
        return
    lhs = directional_derivative(m, x, comb)
    rhs = alpha * directional_derivative(m, x, h1) + directional_derivative(m, x, h2)
    assert np.allclose(lhs, rhs, atol=1e-8)


def test_directional_derivative_boundary_rules():
    m = shear(1.0, Ball([0.0, 0.0], 1.0))
    with pytest.raises(DomainError):
        directional_derivative(m, [1.0, 0.0], [1.0, 0.0])
    assert np.allclose(directional_derivative(m, [1.0, 0.0], [-1.0, 0.0]), [-1.0, -2.0])
    with pytest.raises(DomainError):
        directional_derivative(m, [2.0, 0.0], [1.0, 0.0])
    with pytest.raises(ContractViolation):
        directional_derivative(m, [0.0, 0.0], [0.0, 0.0])


def test_inverse_eval_examples():
    assert np.allclose(inverse_eval(shear(1.0), [0.5, 1.0]), [0.5, 0.75])
    y = np.array([0.3, -0.7])
    assert np.array_equal(inverse_eval(identity(2), y), y)


def test_inverse_eval_by_solver():
    m = polynomial(POLY)
    x_true = np.array([0.3, -0.4])
    y = m(x_true)
    x = inverse_eval(m, y, x_init=[0.0, 0.0])
    assert np.linalg.norm(m(x) - y) <= 1e-10 * (1 + np.linalg.norm(y))


def test_inverse_eval_failure_carries_residual():
    m = polynomial(POLY)
    with pytest.raises(NoPreimageFound) as info:
        inverse_eval(m, np.array([50.0, 50.0]), x_init=[0.0, 0.0])
    assert info.value.best_residual > 1.0
    assert info.value.best_point is not None


def test_polynomial_json_and_limits(tmp_path):
    path = tmp_path / "poly.json"
    path.write_text(json.dumps(POLY))
    m = from_ref(str(path))
    x = np.array([0.2, -0.5])
    expected = [0.2 + 0.3 * 0.25, -0.5 - 0.2 * 0.04 * -0.5 + 0.05 * 0.008 * -0.5]
    assert np.allclose(m(x), expected, atol=1e-15)
    bad = json.loads(json.dumps(POLY))
    bad["outputs"][0]["monomials"].append({"exponents": [3, 2], "coeff": 1.0})
    with pytest.raises(ContractViolation):
        polynomial(bad)
    with pytest.raises(ContractViolation):
        polynomial({"dim_in": 2, "dim_out": 1})


def test_from_ref():
    assert from_ref("shear:k=2").params["k"] == 2.0
    a = from_ref("affine:A=[[2,0],[0,0.5]]")
    assert np.allclose(a([1.0, 1.0]), [2.0, 0.5])
    assert from_ref("identity:n=3").dim_in == 3
    with pytest.raises(ContractViolation):
        from_ref("nosuchmap")
    with pytest.raises(ContractViolation):
        from_ref("affine")


def test_maps_are_immutable():
    m = shear(1.0)
    with pytest.raises(dataclasses.FrozenInstanceError):
        m.dim_in = 3
    with pytest.raises(TypeError):
        m.params["k"] = 5.0


def test_singular_affine_has_no_inverse():
    m = affine([[1.0, 2.0], [2.0, 4.0]])
    assert m.inv is None


def test_directional_derivative_tiny_direction():
    h = np.array([6e-188, 6e-188])
    for m in (polynomial(POLY), dataclasses.replace(polynomial(POLY), jac=None)):
        d = directional_derivative(m, [0.1, 0.2], h)
        ref = directional_derivative(m, [0.1, 0.2], h / 6e-188) * 6e-188
        assert np.allclose(d, ref, rtol=1e-6, atol=0)
