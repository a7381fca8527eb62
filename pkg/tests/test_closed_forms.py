import math

import numpy as np
import pytest

from credithedge.closed_forms import (
    Prop38Params,
    martingale_residual,
    theta_complete_brownian,
    theta_complete_jump,
    theta_prop38,
    vom_controls,
    vom_equalities,
)
from credithedge.grid import GridSpec
from credithedge.model import ModelParams, NodeCoefficients, ValidationError, validate_params
from credithedge.montecarlo import vom_moment_check
from credithedge.mvh import solve_theta_split

SPEC = GridSpec(200, 301)


# ------------------------------------------------------ single default


def test_explicit_single_default_solution():
    p = Prop38Params()
    assert theta_prop38(p, 1.0) == (1.0, 1.0)
    pre, post = theta_prop38(p, 0.0)
    assert pre == pytest.approx(math.exp(-0.35), abs=1e-15)
    assert post == pytest.approx(math.exp(-0.25), abs=1e-15)
    assert pre == pytest.approx(0.704688, abs=1e-6) and post == pytest.approx(0.778801, abs=1e-6)
    flat = Prop38Params(mu1=0.0)
    assert np.all(theta_prop38(flat, np.linspace(0, 1, 5))[1] == 1.0)


def test_constraint_is_checked():
    with pytest.raises(ValidationError, match="constraint violation"):
        Prop38Params(mu0=0.15)
    with pytest.raises(ValidationError, match="kappa"):
        Prop38Params(kappa=0.0)
    with pytest.raises(ValidationError, match="sigma1"):
        Prop38Params(sigma1=0.0)


@pytest.mark.parametrize("tier, tol", [("ode", 1e-6), ("pde", 1e-3)])
def test_solver_reproduces_single_default_solution(tier, tol):
    p = Prop38Params()
    f = solve_theta_split(p.model(), SPEC, tier=tier)
    exact = theta_prop38(p, f.times)
    assert np.max(np.abs(f.Theta[0, :, f.center] - exact[0])) < tol
    assert np.max(np.abs(f.Theta[1, :, f.center] - exact[1])) < tol


# --------------------------------------------------------- complete markets


def test_complete_brownian():
    assert theta_complete_brownian(0.0, 0.2, 1.0) == 1.0
    assert theta_complete_brownian(0.1, 0.2, 1.0) == pytest.approx(math.exp(-0.25))
    p = validate_params(ModelParams.constant(mu=0.1, sigma=0.2, ordered_defaults=True))
    assert solve_theta_split(p, SPEC).theta0 == pytest.approx(math.exp(-0.25), abs=1e-6)


def test_complete_brownian_time_dependent():
    p = validate_params(ModelParams({k: dict(mu=[0.05, 0.1], sigma=[0.2, 0.1]) for k in ("00", "10", "11")},
                                    1.0, ordered_defaults=True))
    exact = theta_complete_brownian(lambda t: 0.05 + 0.1 * t, lambda t: 0.2 + 0.1 * t, 1.0)
    assert solve_theta_split(p, SPEC).theta0 == pytest.approx(exact, abs=1e-6)


def _jump_market(mu=0.002, sigmaA=0.4, lambdaA=0.1):
    return validate_params(ModelParams({"00": dict(mu=mu, sigmaA=sigmaA, lambdaA=lambdaA)}, 1.0,
                                       ordered_defaults=True))


def test_complete_jump():
    assert theta_complete_jump(0.0, 0.4, 0.1, 1.0) == 1.0
    assert theta_complete_jump(0.002, 0.4, 0.1, 1.0, t=1.0) == 1.0
    exact = theta_complete_jump(0.002, 0.4, 0.1, 1.0)
    # rhoA = -0.05: E[Z^2] = e^{-k} + lambda (1 + rhoA)^2 (1 - e^{-k}) / k with k = lambda (1 + 2 rhoA)
    k = 0.1 * 0.9
    assert exact == pytest.approx(1 / (math.exp(-k) + 0.1 * 0.95 ** 2 * (1 - math.exp(-k)) / k), rel=1e-14)
    assert solve_theta_split(_jump_market(), SPEC).theta0 == pytest.approx(exact, abs=1e-6)


def test_complete_jump_time_dependent_matches_constant_limit():
    const = theta_complete_jump(0.01, 0.4, 0.2, 1.0)
    varying = theta_complete_jump(lambda t: 0.01, lambda t: 0.4, lambda t: 0.2, 1.0)
    assert varying == pytest.approx(const, rel=1e-9)


def test_complete_jump_signed_density_is_refused():
    with pytest.raises(ValidationError, match="signed"):
        theta_complete_jump(0.1, 0.4, 0.1, 1.0)


def test_complete_jump_monte_carlo():
    params = _jump_market()
    first = solve_theta_split(params, SPEC)
    rep = vom_moment_check(first, params, 50_000, seed=8)
    assert rep.zscore < 3


# ------------------------------------------------------- VOM controls


def test_vom_controls_trivial_and_brownian():
    node = NodeCoefficients(0.0, 0.2, -0.4, -0.3, 0.1, 0.05)
    assert vom_controls(0.0, 0.0, 0.0, node) == pytest.approx((0.0, 0.0, 0.0))
    node = NodeCoefficients(0.06, 0.3, 0.0, 0.0, 0.0, 0.0)
    rho, _, _ = vom_controls(0.0, 0.0, 0.0, node)
    assert rho == pytest.approx(-0.06 / 0.3)


def test_vom_controls_are_martingale_measures():
    rng = np.random.default_rng(1)
    for _ in range(50):
        node = NodeCoefficients(*rng.uniform([-0.1, 0.05, -0.5, -0.5, 0.0, 0.0], [0.1, 0.4, 0.5, 0.5, 0.5, 0.5]))
        thA, thB, beta = rng.uniform(-0.5, 0.5, 3)
        ctrl = vom_controls(thA, thB, beta, node)
        assert abs(martingale_residual(node, *ctrl)) < 1e-12
        assert max(vom_equalities(thA, thB, beta, node).values()) < 1e-12
