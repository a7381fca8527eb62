import math

import numpy as np
import pytest

from credithedge.grid import GridSpec
from credithedge.hjb import indifference_price, optimal_strategy_hjb
from credithedge.model import (
    CappedCall,
    DefaultableClaim,
    ModelParams,
    ValidationError,
    simulate_paths,
    validate_params,
)
from credithedge.montecarlo import (
    McEstimate,
    McReport,
    PathSource,
    density_weights,
    entropy_dual_estimate,
    estimate_hedge_error,
    hjb_controls,
    mc_indifference_price,
    perturbation_test,
    weighted_mean,
)
from credithedge.mvh import optimal_strategy_mvh, solve_mvh


def market(**kw):
    base = dict(mu=0.05, sigma=0.2, sigmaA=-0.4, sigmaB=-0.3, lambdaA=0.1, lambdaB=0.05)
    base.update(kw)
    return validate_params(ModelParams.constant(**base))


def zero_controls(t, spot, state):
    return 0.0, 0.0, 0.0


CALL = DefaultableClaim.restricted(CappedCall(1.0, 0.5), 0.3)


def test_estimate_helpers():
    est = McEstimate.of(np.array([1.0, 2.0, 3.0]), seed=4)
    assert (est.mean, est.n_paths, est.seed) == (2.0, 3, 4)
    assert est.stderr == pytest.approx(1 / math.sqrt(3))
    assert est.zscore(2.0 + est.stderr) == pytest.approx(1.0)
    exact = McEstimate.of(np.full(10, 0.3), seed=0)
    assert exact.stderr == 0.0 and exact.zscore(0.3) == 0.0 and exact.zscore(0.4) == math.inf
    d = McReport("x", 1.0, 0.1, 10, 1, True, 3.0).to_dict()
    assert d["pass"] is True and "passed" not in d


def test_hedge_error_without_position():
    p = market()
    src = PathSource(p, 20, 3000, 1.0, 0)
    est = estimate_hedge_error(src, p, DefaultableClaim.restricted(0.0, 0.0), lambda *a: 0.0, 0.6)
    assert est.mean == 0.6 ** 2 and est.stderr == 0.0
    est = estimate_hedge_error(src, p, DefaultableClaim.restricted(0.2, 0.2), lambda *a: 0.0, 0.6)
    assert est.mean == pytest.approx(0.16, abs=1e-15) and est.stderr == 0.0


def test_estimates_do_not_depend_on_chunking():
    p = market(lambdaA=0.4, lambdaB=0.3)
    rule = lambda t, X, s, st, info: 0.5 + 0.0 * X  # noqa: E731
    a = estimate_hedge_error(PathSource(p, 20, 5000, 1.0, 7, chunk=1024), p, CALL, rule, 0.1)
    b = estimate_hedge_error(PathSource(p, 20, 5000, 1.0, 7), p, CALL, rule, 0.1)
    assert a == b


def test_chunk_must_align_with_rng_blocks():
    with pytest.raises(ValidationError):
        list(PathSource(market(), 10, 100, 1.0, 0, chunk=1000))


def test_zero_controls_give_unit_weights():
    p = market(lambdaA=0.5, lambdaB=0.5)
    ps = simulate_paths(p, 20, 2000, 1.0, 1)
    assert np.all(density_weights(ps, p, zero_controls) == 1.0)


def test_entropy_with_zero_controls():
    p = market(mu=0.0)
    src = PathSource(p, 20, 2000, 1.0, 2)
    assert entropy_dual_estimate(src, p, zero_controls, DefaultableClaim.restricted(0.0, 0.0), 1.0).mean == 0.0
    est = entropy_dual_estimate(src, p, zero_controls, DefaultableClaim.restricted(0.4, 0.4), 2.0)
    assert est.mean == pytest.approx(-0.8)


def test_weights_reject_signed_measures():
    p = market(lambdaA=2.0)
    ps = simulate_paths(p, 20, 500, 1.0, 3)
    with pytest.raises(ValidationError, match="signed"):
        density_weights(ps, p, lambda t, s, st: (0.0, -1.5, 0.0))


@pytest.fixture(scope="module")
def hjb_price():
    p = market()
    return p, indifference_price(p, CALL, 1.0, GridSpec(100, 201))


def test_dual_measure_moments(hjb_price):
    p, ip = hjb_price
    src = PathSource(p, 100, 20_000, 1.0, 5)
    ctrl = hjb_controls(ip.surface_with)
    w = weighted_mean(src, p, ctrl, lambda ps, wt: wt)
    assert w.zscore(1.0) < 3
    wd = weighted_mean(src, p, ctrl, lambda ps, wt: wt * ps.bond[:, -1])
    assert wd.zscore(1.0) < 3


def test_monte_carlo_indifference_price(hjb_price):
    p, ip = hjb_price
    src = PathSource(p, 100, 20_000, 1.0, 6)
    s1, s0 = optimal_strategy_hjb(ip.surface_with), optimal_strategy_hjb(ip.surface_without)
    mp = mc_indifference_price(src, p, CALL, s1, s0, 1.0)
    assert abs(mp.mean - ip.price) < 3 * mp.stderr + 1e-3
    cash = mc_indifference_price(src, p, DefaultableClaim.restricted(0.2, 0.2), s0, s0, 1.0)
    assert cash.mean == pytest.approx(0.2, abs=1e-12)


def test_perturbation_without_bumps_changes_nothing():
    p = market()
    src = PathSource(p, 20, 2000, 1.0, 0)
    rep = perturbation_test(src, p, CALL, lambda t, X, s, st, info: 0.3 + 0.0 * X, 5, 0.0)
    assert np.all(rep.diff == 0.0) and rep.violations == 0


def test_perturbation_finds_a_better_rule_than_doing_nothing():
    p = validate_params(ModelParams.constant(mu=0.1, sigma=0.2, sigmaA=-0.3, lambdaA=0.2,
                                             ordered_defaults=True))
    src = PathSource(p, 50, 20_000, 1.0, 1)
    zero = DefaultableClaim.restricted(0.0, 0.0)
    rep = perturbation_test(src, p, zero, lambda t, X, s, st, info: np.zeros_like(X), 10, 0.5, seed=1,
                            x0=1.0, n_sigmas=3.0)
    assert rep.violations >= 1
    sol = solve_mvh(p, zero, GridSpec(50, 101))
    best = perturbation_test(src, p, zero, optimal_strategy_mvh(sol), 10, 0.5, seed=1, x0=1.0)
    assert best.violations == 0
