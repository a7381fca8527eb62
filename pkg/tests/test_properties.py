"""Property-based tests over randomized inputs."""
import json

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from credithedge.closed_forms import martingale_residual, vom_controls
from credithedge.config import RunConfig
from credithedge.hjb import foc_residual, minimize_controls
from credithedge.model import (
    CappedAffine,
    CappedCall,
    CappedPut,
    ModelParams,
    NodeCoefficients,
    simulate_paths,
    solve_rho,
    validate_params,
)
from credithedge.mvh import coeffs
from credithedge.tree import one_period_entropy

small = st.floats(-0.5, 0.5, allow_nan=False)
vol = st.floats(0.05, 0.5)
jump = st.floats(-0.6, 0.6)
rate = st.floats(0.0, 0.8)
theta = st.floats(-0.9, 2.0)


@st.composite
def nodes(draw):
    return NodeCoefficients(draw(st.floats(-0.2, 0.2)), draw(vol), draw(jump), draw(jump), draw(rate), draw(rate))


@given(st.floats(0.5, 2.0), st.floats(0.01, 1.0), st.lists(st.floats(1e-3, 5.0), min_size=2, max_size=20))
def test_capped_payoffs_are_bounded_and_monotone(strike, cap, xs):
    x = np.sort(np.array(xs))
    for fn, sign in ((CappedCall(strike, cap), 1), (CappedPut(strike, cap), -1),
                     (CappedAffine(0.7, -0.2, cap, 0.0), 1)):
        y = fn(x)
        assert np.all(np.abs(y) <= fn.bound + 1e-15)
        assert np.all(sign * np.diff(y) >= -1e-15)


@settings(max_examples=60, deadline=None)
@given(nodes(), small, small)
def test_control_minimizer_satisfies_first_order_conditions(node, KA, KB):
    ctrl, _ = minimize_controls(KA, KB, node)
    assert ctrl.rhoA > -1 and ctrl.rhoB > -1
    assert np.max(np.abs(foc_residual(KA, KB, node, ctrl))) < 1e-8
    assert abs(martingale_residual(node, ctrl.rho, ctrl.rhoA, ctrl.rhoB)) < 1e-12


@given(nodes(), st.floats(-0.9, 3.0), st.floats(-0.9, 3.0))
def test_brownian_control_removes_the_drift(node, rA, rB):
    rho = solve_rho(node, rA, rB)
    assert abs(martingale_residual(node, rho, rA, rB)) < 1e-12


@given(nodes(), theta, theta, small, small, small, small)
def test_quadratic_form_is_positive_and_cauchy_schwarz(node, thA, thB, beta, UA, UB, Z):
    m = coeffs(thA, thB, beta, UA, UB, Z, node)
    assert m.a > 0
    assert m.v - m.c ** 2 / m.a >= -1e-12 * max(1.0, m.v)


@given(nodes(), theta, theta, small)
def test_vom_controls_price_the_bond(node, thA, thB, beta):
    assert abs(martingale_residual(node, *vom_controls(thA, thB, beta, node))) < 1e-11


@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=6), st.data())
def test_one_period_entropy_shifts_with_cash(weights, data):
    n = len(weights)
    p = np.array(weights) / sum(weights)
    cost = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n)))
    ret = np.linspace(-0.3, 0.3, n)
    k = data.draw(st.floats(-2, 2))
    base = one_period_entropy(p, cost, ret)
    assert abs(one_period_entropy(p, cost + k, ret) - (base + k)) < 1e-10
    # the minimum never exceeds the objective at a feasible measure
    q = np.zeros(n)
    q[0], q[-1] = 0.5, 0.5  # symmetric returns, so this q is a martingale measure
    feasible = float(np.sum(q[q > 0] * (np.log(q[q > 0] / p[q > 0]) + cost[q > 0])))
    assert base <= feasible + 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3000), st.integers(0, 3000))
def test_any_slice_of_paths_is_reproducible(seed, n, start):
    p = validate_params(ModelParams.constant(mu=0.05, sigma=0.2, sigmaA=-0.3, lambdaA=0.5))
    whole = simulate_paths(p, 8, start + n, 1.0, seed)
    part = simulate_paths(p, 8, n, 1.0, seed, first_id=start)
    assert np.array_equal(part.bond, whole.bond[start:])
    assert np.array_equal(part.tauA, whole.tauA[start:])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.3), vol, st.floats(-0.9, 1.0), st.floats(0.0, 1.0), st.floats(0.1, 3.0),
       st.floats(-1.0, 1.0))
def test_config_round_trip(mu, sigma, sA, lam, T, x0):
    doc = {"schema_version": 1,
           "model": {"T": T, "d0": 1.0,
                     "states": {"00": {"mu": mu, "sigma": sigma, "sigmaA": sA, "lambdaA": lam}}},
           "x0": x0}
    cfg = RunConfig.from_dict(doc)
    again = RunConfig.from_dict(json.loads(cfg.dumps()))
    assert again.to_dict() == cfg.to_dict()
    assert again.params.at(0.0, 0).sigmaA == sA and again.x0 == x0
