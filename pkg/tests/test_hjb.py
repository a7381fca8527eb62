import io
import math

import numpy as np
import pytest

from credithedge.grid import GridSpec
from credithedge.hjb import (
    DualControl,
    foc_residual,
    indifference_price,
    minimize_controls,
    optimal_strategy_hjb,
    running_cost_j,
    solve_hjb,
)
from credithedge.model import (
    CappedCall,
    DefaultableClaim,
    DefaultState,
    ModelParams,
    NodeCoefficients,
    PayoffSum,
    Constant,
    ValidationError,
    validate_params,
)
from credithedge.tree import dual_value_bruteforce, one_period_entropy

S = DefaultState
SMALL = GridSpec(60, 121)


def generic():
    return validate_params(ModelParams.constant(
        mu=0.05, sigma=0.2, sigmaA=-0.4, sigmaB=-0.3, lambdaA=0.1, lambdaB=0.05))


CALL = DefaultableClaim.restricted(CappedCall(1.0, 0.5), 0.3)


# ---------------------------------------------------------- running cost


def test_running_cost_examples():
    zero = DualControl(0.0, 0.0, 0.0)
    node = NodeCoefficients(0.0, 0.2, 0.0, 0.0, 0.0, 0.0)
    assert running_cost_j(zero, node, 1.7, 1.0) == 0.0
    node = NodeCoefficients(0.0, 0.2, 0.0, 0.0, 0.0, 0.05)
    assert running_cost_j(zero, node, 2.0, 1.0) == pytest.approx(-0.1)
    node = NodeCoefficients(0.0, 0.2, 0.0, 0.0, 0.1, 0.0)
    assert running_cost_j(DualControl(math.e - 1, 0.0, 0.0), node, 0.0, 1.0) == pytest.approx(0.1)


# ------------------------------------------------------ control minimizer


def _objective(KA, KB, node, rA, rB):
    rho = -(node.mu + rA * node.sigmaA * node.lambdaA + rB * node.sigmaB * node.lambdaB) / node.sigma
    out = 0.5 * rho ** 2
    for r, K, lam in ((rA, KA, node.lambdaA), (rB, KB, node.lambdaB)):
        out = out + lam * ((1 + r) * K + (1 + r) * np.log1p(r) - r)
    return out


def test_minimizer_at_rest():
    node = NodeCoefficients(0.0, 0.2, -0.4, -0.3, 0.1, 0.05)
    ctrl, _ = minimize_controls(0.0, 0.0, node)
    assert (ctrl.rhoA, ctrl.rhoB, ctrl.rho) == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_minimizer_beats_a_dense_grid(seed):
    rng = np.random.default_rng(seed)
    node = NodeCoefficients(rng.uniform(-0.1, 0.1), rng.uniform(0.1, 0.4), rng.uniform(-0.6, 0.6),
                            rng.uniform(-0.6, 0.6), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5))
    KA, KB = rng.uniform(-0.5, 0.5, 2)
    ctrl, _ = minimize_controls(KA, KB, node)
    assert np.max(np.abs(foc_residual(KA, KB, node, ctrl))) < 1e-8
    best = _objective(KA, KB, node, ctrl.rhoA, ctrl.rhoB)
    g = np.linspace(-0.99, 5.0, 200)
    GA, GB = np.meshgrid(g, g, indexing="ij")
    assert best <= _objective(KA, KB, node, GA, GB).min() + 1e-12


# ------------------------------------------------------------ value surface


def test_zero_drift_and_claim_give_zero_value():
    p = validate_params(ModelParams.constant(mu=0.0, sigma=0.2, sigmaA=-0.4, sigmaB=-0.3,
                                             lambdaA=0.1, lambdaB=0.05))
    surf = solve_hjb(p, DefaultableClaim.restricted(0.0, 0.0), 1.0, SMALL)
    assert np.max(np.abs(surf.values)) < 1e-12
    assert np.max(np.abs(surf.pi)) < 1e-10


def test_merton_strategy_without_defaults():
    p = validate_params(ModelParams.constant(mu=0.05, sigma=0.2))
    surf = solve_hjb(p, DefaultableClaim.restricted(0.0, 0.0), 2.0, SMALL)
    assert surf.pi[S.S00, 0, surf.center] == pytest.approx(0.05 / (2.0 * 0.04), rel=1e-8)
    assert surf.value0() == pytest.approx(0.5 * (0.05 / 0.2) ** 2, rel=1e-6)


def test_terminal_slice_and_foc():
    surf = solve_hjb(generic(), CALL, 1.0, SMALL)
    x = np.exp(surf.s)
    assert surf.values[S.S00, -1] == pytest.approx(-CALL.g(x))
    assert np.all(surf.values[S.S11, -1] == 0.0)
    assert surf.max_foc_residual() < 1e-8
    assert np.all(np.isfinite(surf.values))
    assert surf.rhoA.min() > -1 and surf.rhoB.min() > -1


def test_constant_claim_shifts_value_and_keeps_strategy():
    p = generic()
    base = solve_hjb(p, DefaultableClaim.restricted(0.0, 0.0), 1.5, SMALL)
    cash = solve_hjb(p, DefaultableClaim.restricted(0.4, 0.4), 1.5, SMALL)
    assert cash.value0() == pytest.approx(base.value0() - 1.5 * 0.4, abs=1e-12)
    assert np.max(np.abs(cash.pi - base.pi)) < 1e-9


def test_surface_csv_columns():
    surf = solve_hjb(generic(), CALL, 1.0, GridSpec(4, 11))
    buf = io.StringIO()
    surf.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "state,t,x,V,dVdx,rhoA_opt,rhoB_opt,rho_opt,pi_star"
    assert len(lines) == 1 + 4 * 5 * 11


def test_strategy_lookup_matches_surface():
    surf = solve_hjb(generic(), CALL, 1.0, SMALL)
    pi = optimal_strategy_hjb(surf)
    got = pi(0.0, np.array([0.0]), np.array([1.0]), np.array([S.S00]), None)
    assert got[0] == pytest.approx(surf.pi[S.S00, 0, surf.center])


# ----------------------------------------------------------- indifference


def test_indifference_price_basics():
    p = generic()
    zero = indifference_price(p, DefaultableClaim.restricted(0.0, 0.0), 1.0, SMALL)
    assert zero.price == 0.0
    cash = indifference_price(p, DefaultableClaim.restricted(0.25, 0.25), 1.0, SMALL)
    assert cash.price == pytest.approx(0.25, rel=1e-10)
    ip = indifference_price(p, CALL, 1.0, SMALL)
    up = indifference_price(p, CALL.shifted(0.5), 1.0, SMALL)
    assert up.price == pytest.approx(ip.price + 0.5, rel=1e-6)
    # the price lies between the worst and best payoff
    assert 0.0 < ip.price < 0.5


def test_indifference_price_grid_convergence():
    p = generic()
    coarse = indifference_price(p, CALL, 1.0, GridSpec(100, 201)).price
    fine = indifference_price(p, CALL, 1.0, GridSpec(200, 401)).price
    assert abs(coarse - fine) < 1e-3


# ------------------------------------------------------------------ tree


def test_one_period_entropy_reduces_to_log_partition():
    p = np.array([0.5, 0.5])
    # symmetric returns: eta = 0 and the measure stays at p
    assert one_period_entropy(p, np.array([0.0, 0.0]), np.array([0.1, -0.1])) == pytest.approx(0.0, abs=1e-14)
    cost = np.array([0.3, 0.3])
    assert one_period_entropy(p, cost, np.array([0.1, -0.1])) == pytest.approx(0.3)


def test_one_period_entropy_refuses_arbitrage():
    with pytest.raises(ValidationError, match="arbitrage"):
        one_period_entropy(np.array([0.5, 0.5]), np.zeros(2), np.array([0.1, 0.2]))


def test_tree_trivial_cases():
    p0 = validate_params(ModelParams.constant(mu=0.0, sigma=0.2, sigmaA=-0.4, lambdaA=0.1))
    assert dual_value_bruteforce(p0, DefaultableClaim.restricted(0.0, 0.0), 1.0) == pytest.approx(0.0, abs=1e-12)
    p = generic()
    base = dual_value_bruteforce(p, DefaultableClaim.restricted(0.0, 0.0), 2.0)
    cash = dual_value_bruteforce(p, DefaultableClaim.restricted(0.3, 0.3), 2.0)
    assert cash == pytest.approx(base - 2.0 * 0.3, abs=1e-12)


def test_tree_size_guards():
    with pytest.raises(ValidationError, match="size guard"):
        dual_value_bruteforce(generic(), CALL, 1.0, n_periods=4)
    with pytest.raises(ValidationError, match="constant"):
        dual_value_bruteforce(ModelParams({"00": dict(sigma=[0.2, 0.1])}), CALL, 1.0)


def test_tree_approaches_the_continuous_value():
    p = generic()
    v = solve_hjb(p, CALL, 1.0, GridSpec(100, 201)).value0()
    gaps = [abs(dual_value_bruteforce(p, CALL, 1.0, n) - v) for n in (1, 2, 3)]
    assert gaps[1] < 1e-2
    assert gaps[2] < gaps[0]


def test_payoff_sum_claim_in_solver():
    p = generic()
    a = solve_hjb(p, DefaultableClaim.restricted(PayoffSum((CappedCall(1.0, 0.5), Constant(0.1))), 0.4),
                  1.0, SMALL).value0()
    b = solve_hjb(p, CALL, 1.0, SMALL).value0()
    assert a == pytest.approx(b - 0.1, abs=1e-10)
