from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from convexlab.errors import ContractViolation, DomainError
from convexlab.norms import (DEFAULT_T_GRID, NormSpec, SectionBudget, euclidean, modulus_convexity_ball_form,
                             modulus_convexity_estimate, modulus_convexity_hilbert, norm_eval, norm_from_json,
                             power_type_constant)

INF = float("inf")
SPECS = [
    NormSpec.lp(2, 3),
    NormSpec.lp(1, 3),
    NormSpec.lp(INF, 3),
    NormSpec.lp(3.5, 3),
    NormSpec.weighted(2, [1.0, 2.0, 0.5]),
    NormSpec.nested(2, [NormSpec.lp(4, 2), NormSpec.lp(1, 1)]),
]
vec3 = arrays(np.float64, 3, elements=st.floats(-1e3, 1e3, allow_nan=False))


def test_norm_eval_examples():
    assert norm_eval(NormSpec.lp(2, 2), [3, 4]) == pytest.approx(5.0, abs=1e-15)
    assert norm_eval(NormSpec.lp(INF, 2), [3, -4]) == 4.0
    nested = NormSpec.nested(2, [NormSpec.lp(4, 4)])
    assert norm_eval(nested, [1, 1, 1, 1]) == pytest.approx(math.sqrt(2), rel=1e-15)


def test_norm_eval_weighted_and_nested_by_hand():
    assert norm_eval(NormSpec.weighted(1, [2, 3]), [1, -1]) == pytest.approx(5.0)
    spec = NormSpec.nested(1, [NormSpec.lp(2, 2), NormSpec.lp(INF, 2)])
    assert norm_eval(spec, [3, 4, -7, 1]) == pytest.approx(12.0)


def test_norm_eval_batched_and_errors():
    X = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert np.allclose(norm_eval(euclidean(2), X), [5.0, 0.0])
    with pytest.raises(ContractViolation):
        norm_eval(euclidean(2), [1.0, 2.0, 3.0])


def test_spec_validation():
    with pytest.raises(ContractViolation):
        NormSpec.lp(0.5, 2)
    with pytest.raises(ContractViolation):
        NormSpec.weighted(2, [1.0, -1.0])
    with pytest.raises(ContractViolation):
        NormSpec("nested", 3, 2.0, inner=(NormSpec.lp(2, 2),))
    assert NormSpec.nested(2, [NormSpec.lp(4, 3), NormSpec.lp(2, 2)]).dim == 5


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind + str(s.p))
def test_json_round_trip(spec):
    assert norm_from_json(spec.to_json()) == spec


def test_json_examples():
    assert norm_from_json('{"kind":"p","p":2.0,"dim":4}') == euclidean(4)
    assert norm_from_json({"kind": "p", "p": "inf", "dim": 2}).p == INF
    with pytest.raises(ContractViolation):
        norm_from_json({"kind": "p", "p": 2})


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind + str(s.p))
@settings(max_examples=60, deadline=None)
@given(x=vec3, y=vec3, z=vec3, alpha=st.floats(-100, 100, allow_nan=False))
def test_norm_axioms(spec, x, y, z, alpha):
    nx = norm_eval(spec, x)
    assert nx >= 0
    assert (nx == 0) == (not np.any(x))
    assert norm_eval(spec, alpha * x) == pytest.approx(abs(alpha) * nx, rel=1e-12, abs=1e-300)
    lhs = norm_eval(spec, x - z)
    rhs = norm_eval(spec, x - y) + norm_eval(spec, y - z)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


def test_hilbert_modulus_closed_form():
    assert modulus_convexity_hilbert(0.0) == 0.0
    assert modulus_convexity_hilbert(2.0) == 1.0
    # oracle: direct evaluation of 1 - sqrt(1 - t^2/4) at t = 1
    assert modulus_convexity_hilbert(1.0) == pytest.approx(1 - math.sqrt(3) / 2, rel=1e-14)
    assert modulus_convexity_hilbert(1.0) == pytest.approx(0.1339746, abs=1e-7)
    for t in (-0.1, 2.0001):
        with pytest.raises(DomainError):
            modulus_convexity_hilbert(t)


@given(st.floats(0, 2))
def test_hilbert_modulus_matches_naive_formula(t):
    assert modulus_convexity_hilbert(t) == pytest.approx(1 - math.sqrt(1 - t * t / 4), abs=1e-15)


def test_euclidean_estimate_matches_closed_form(euclid2_estimate):
    est = euclid2_estimate
    exact = np.array([modulus_convexity_hilbert(t) for t in est.t_grid])
    assert np.max(np.abs(est.delta_hat - exact)) <= 1e-3
    k = int(np.argmin(np.abs(est.t_grid - 1.0)))
    assert est.delta_hat[k] == pytest.approx(0.13397, abs=1e-3)
    assert est.bias_direction == "upper" and est.monotone_regularized
    assert est.pair_budget > 0


def test_estimate_is_upper_for_euclidean(euclid2_estimate):
    exact = np.array([modulus_convexity_hilbert(t) for t in euclid2_estimate.t_grid])
    assert np.all(euclid2_estimate.delta_hat >= exact - 1e-12)


def test_witness_pairs_are_genuine(euclid2_estimate, l1_estimate):
    for est in (euclid2_estimate, l1_estimate):
        spec = est.norm
        nx = norm_eval(spec, est.witness_x)
        ny = norm_eval(spec, est.witness_y)
        assert np.allclose(nx, 1.0, atol=1e-12) and np.allclose(ny, 1.0, atol=1e-12)
        assert np.all(np.abs(norm_eval(spec, est.witness_x - est.witness_y) - est.t_grid) <= 1e-10)
        depth = 1 - norm_eval(spec, 0.5 * (est.witness_x + est.witness_y))
        assert np.allclose(depth, est.delta_raw, atol=1e-12)


def test_l1_and_linf_are_flat(l1_estimate, linf_estimate):
    for est in (l1_estimate, linf_estimate):
        mask = est.t_grid <= 1.9 + 1e-12
        assert np.all(est.delta_hat[mask] <= 1e-6)


def test_explicit_flat_witnesses():
    # x=(1,0), y=(1/2,1/2) in l1 and x=(1,1), y=(1,0) in l_inf: distance 1, midpoint norm 1
    l1, li = NormSpec.lp(1, 2), NormSpec.lp(INF, 2)
    for spec, x, y in ((l1, [1, 0], [0.5, 0.5]), (li, [1, 1], [1, 0])):
        x, y = np.array(x, float), np.array(y, float)
        assert norm_eval(spec, x - y) == 1.0
        assert 1 - norm_eval(spec, 0.5 * (x + y)) == 0.0


@pytest.mark.parametrize("spec", [NormSpec.lp(3, 3), NormSpec.weighted(2, [1, 3]),
                                  NormSpec.nested(2, [NormSpec.lp(4, 2), NormSpec.lp(4, 2)])],
                         ids=["l3", "weighted", "nested"])
def test_universal_bound_and_monotone(spec):
    est = modulus_convexity_estimate(spec, budget=SectionBudget(n_random_planes=6, n_angles=256))
    assert np.all(est.delta_hat >= 0)
    assert np.all(est.delta_hat <= est.t_grid / 2 + 1e-9)
    assert np.all(np.diff(est.delta_hat) >= 0)
    assert np.all(est.delta_hat <= est.delta_raw + 1e-15)


def test_estimate_errors():
    with pytest.raises(DomainError):
        modulus_convexity_estimate(NormSpec.lp(2, 1))
    with pytest.raises(DomainError):
        modulus_convexity_estimate(euclidean(2), [0.0, 1.0])
    with pytest.raises(DomainError):
        modulus_convexity_estimate(euclidean(2), [2.5])


def test_threads_do_not_change_estimate():
    spec = NormSpec.lp(3, 3)
    b1 = SectionBudget(n_random_planes=6, n_angles=256, threads=1)
    b4 = SectionBudget(n_random_planes=6, n_angles=256, threads=4)
    e1 = modulus_convexity_estimate(spec, [0.5, 1.0, 1.5], b1)
    e4 = modulus_convexity_estimate(spec, [0.5, 1.0, 1.5], b4)
    assert e1.to_csv() == e4.to_csv()


def test_ball_form_agrees_on_euclidean():
    t = [0.2, 0.6, 1.0, 1.4, 1.8]
    ball = modulus_convexity_ball_form(euclidean(2), t)
    sphere = modulus_convexity_estimate(euclidean(2), t)
    assert np.max(np.abs(ball.delta_hat - sphere.delta_hat)) <= 1e-3


def test_csv_columns(euclid2_estimate):
    lines = euclid2_estimate.to_csv().splitlines()
    assert lines[0] == "t,delta_hat,witness_x,witness_y"
    assert len(lines) == 1 + len(DEFAULT_T_GRID)


# oracle: min over the default grid of (1 - sqrt(1 - t^2/4)) / t^p, computed directly
def _grid_ratio_min(p):
    t = np.asarray(DEFAULT_T_GRID)
    return float(np.min((1 - np.sqrt(1 - t**2 / 4)) / t**p))


def test_power_type_euclidean_p2(euclid2_estimate):
    fit = power_type_constant(euclid2_estimate, 2)
    assert fit.is_power_type
    assert 0.120 <= fit.constant <= 0.1251
    assert fit.constant == pytest.approx(_grid_ratio_min(2), abs=1e-9)


def test_power_type_euclidean_p4_matches_grid_oracle(euclid2_estimate):
    # the grid minimum of delta_E(t)/t^4 sits near t = 1.9 (continuum infimum 27/512
    # at t = 4 sqrt(2)/3), below the endpoint value 1/16
    fit = power_type_constant(euclid2_estimate, 4)
    assert fit.constant == pytest.approx(_grid_ratio_min(4), abs=1e-9)
    assert fit.constant == pytest.approx(0.0527735, abs=1e-6)
    assert fit.constant >= 27 / 512 - 1e-12


def test_power_type_flat_norm(l1_estimate):
    fit = power_type_constant(l1_estimate, 2)
    assert fit.constant == 0.0 and not fit.is_power_type


def test_power_type_antitone_in_p(euclid2_estimate):
    cs = [power_type_constant(euclid2_estimate, p).constant for p in (2, 2.5, 3, 4, 6)]
    assert all(a >= b for a, b in zip(cs, cs[1:]))


def test_power_type_rejects_small_p(euclid2_estimate):
    with pytest.raises(DomainError):
        power_type_constant(euclid2_estimate, 1.5)


def test_power_type_p2_near_one_eighth(euclid2_estimate):
    # delta_E(t) / t^2 decreases to 1/8 as t -> 0, so a grid minimum sits just above it
    assert 0.125 < power_type_constant(euclid2_estimate, 2).constant <= 0.125 + 1e-4
