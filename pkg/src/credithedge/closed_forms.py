"""Explicit solutions used as oracles for the numerical solvers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .model import DefaultState, ModelParams, NodeCoefficients, ValidationError

__all__ = [
    "Prop38Params",
    "theta_prop38",
    "theta_complete_brownian",
    "theta_complete_jump",
    "vom_controls",
    "martingale_residual",
    "vom_equalities",
]


@dataclass(frozen=True)
class Prop38Params:
    """Single-default market where ``mu0 kappa = sigma0^2 + kappa^2 lambda``.

    Before A defaults: drift ``mu0``, volatility ``sigma0``, jump ``kappa``,
    intensity ``lam``.  After: drift ``mu1``, volatility ``sigma1``, no jumps.
    """

    mu0: float = 0.14
    sigma0: float = 0.2
    kappa: float = 0.4
    lam: float = 0.1
    mu1: float = 0.1
    sigma1: float = 0.2
    T: float = 1.0

    def __post_init__(self):
        if self.kappa == 0:
            raise ValidationError("kappa must be nonzero")
        if not self.sigma1 > 0:
            raise ValidationError("sigma1 must be positive")
        lhs = self.mu0 * self.kappa
        rhs = self.sigma0 ** 2 + self.kappa ** 2 * self.lam
        if abs(lhs - rhs) > 1e-12 * max(abs(lhs), abs(rhs), 1e-300):
            raise ValidationError(
                f"constraint violation: mu0*kappa={lhs!r} differs from sigma0^2+kappa^2*lambda={rhs!r}"
            )

    def model(self) -> ModelParams:
        S = DefaultState
        after = dict(mu=self.mu1, sigma=self.sigma1)
        return ModelParams(
            {S.S00: dict(mu=self.mu0, sigma=self.sigma0, sigmaA=self.kappa, lambdaA=self.lam),
             S.S10: after, S.S01: after, S.S11: after},
            self.T, ordered_defaults=True,
        )


def theta_prop38(p: Prop38Params, t):
    """``(Theta before A's default, Theta after)`` at time ``t``."""
    tau = p.T - np.asarray(t, dtype=float)
    pre = np.exp(-(p.mu0 / p.kappa) * tau)
    post = np.exp(-(p.mu1 / p.sigma1) ** 2 * tau)
    return (float(pre), float(post)) if np.ndim(pre) == 0 else (pre, post)


def _as_fn(v) -> Callable[[float], float]:
    return v if callable(v) else (lambda t, c=float(v): c)


def theta_complete_brownian(mu, sigma, T: float, t=0.0):
    """``exp(-int_t^T (mu/sigma)^2 ds)`` for a market driven by W alone.

    ``mu`` and ``sigma`` are numbers or functions of time.
    """
    m, s = _as_fn(mu), _as_fn(sigma)

    def one(t0):
        if callable(mu) or callable(sigma):
            val, _ = quad(lambda u: (m(u) / s(u)) ** 2, t0, T, epsabs=1e-14, epsrel=1e-13)
        else:
            val = (m(0) / s(0)) ** 2 * (T - t0)
        return math.exp(-val)

    if np.ndim(t) == 0:
        return one(float(t))
    return np.array([one(float(u)) for u in np.asarray(t).ravel()]).reshape(np.shape(t))


def theta_complete_jump(mu, sigmaA, lambdaA, T: float, t=0.0):
    """``Theta`` for a market driven by one default and no Brownian motion.

    The variance-optimal density has jump control ``rhoA = -mu / (lambdaA sigmaA)``
    and ``Theta_t = 1 / E[(Z_T / Z_t)^2 | alive at t]``.  Splitting on the
    default (none before T, or at time u) gives, for constants,
    ``E = e^{-k r} + lambda (1 + rhoA)^2 (1 - e^{-k r}) / k`` with
    ``k = lambda (1 + 2 rhoA)`` and ``r = T - t``.  Time-dependent inputs
    are integrated numerically.

    Raises
    ------
    ValidationError
        If ``1 + rhoA <= 0`` somewhere: the density would be signed.
    """
    m, sA, lA = _as_fn(mu), _as_fn(sigmaA), _as_fn(lambdaA)

    def rho(u):
        den = lA(u) * sA(u)
        if den == 0:
            raise ValidationError("complete-jump case needs lambdaA * sigmaA != 0")
        return -m(u) / den

    constant = not any(callable(v) for v in (mu, sigmaA, lambdaA))
    if constant and 1 + rho(0.0) <= 0:
        raise ValidationError("signed density; VOM only as signed measure (1 + rhoA <= 0)")

    def one(t0):
        r = T - t0
        if constant:
            lam, q = lA(0), rho(0)
            k = lam * (1 + 2 * q)
            if abs(k * r) < 1e-12:
                second = math.exp(-k * r) + lam * (1 + q) ** 2 * r
            else:
                second = math.exp(-k * r) + lam * (1 + q) ** 2 * (-math.expm1(-k * r)) / k
            return 1.0 / second
        grid = np.linspace(t0, T, 2001)
        if np.any([1 + rho(u) <= 0 for u in grid]):
            raise ValidationError("signed density; VOM only as signed measure (1 + rhoA <= 0)")

        def k_int(a, b):
            return quad(lambda u: lA(u) * (1 + 2 * rho(u)), a, b, epsabs=1e-14)[0]

        survive = math.exp(-k_int(t0, T))
        jump, _ = quad(lambda u: lA(u) * (1 + rho(u)) ** 2 * math.exp(-k_int(t0, u)), t0, T,
                       epsabs=1e-13, epsrel=1e-11)
        return 1.0 / (survive + jump)

    if np.ndim(t) == 0:
        return one(float(t))
    return np.array([one(float(u)) for u in np.asarray(t).ravel()]).reshape(np.shape(t))


def vom_controls(thetaA, thetaB, beta, node: NodeCoefficients):
    """Girsanov controls ``(rho, rhoA, rhoB)`` of the variance-optimal measure.

    ``rho = beta - b sigma / a`` and ``rho^i = theta^i - (1 + theta^i) sigma^i b / a``
    with ``a, b`` the quadratic-form coefficients.  A node with no risk
    source and no drift (``a = b = 0``) gets zero controls.
    """
    from .mvh import _safe_ratio, coeffs

    m = coeffs(thetaA, thetaB, beta, 0.0, 0.0, 0.0, node)
    ratio = _safe_ratio(m.b, m.a, "vom controls")
    rho = beta - ratio * node.sigma
    rA = thetaA - (1 + thetaA) * node.sigmaA * ratio
    rB = thetaB - (1 + thetaB) * node.sigmaB * ratio
    return rho, rA, rB


def martingale_residual(node: NodeCoefficients, rho, rhoA, rhoB):
    """``mu + sigma rho + sum_i rho^i sigma^i lambda^i``; zero for a martingale measure."""
    return node.mu + node.sigma * rho + rhoA * node.sigmaA * node.lambdaA + rhoB * node.sigmaB * node.lambdaB


def vom_equalities(thetaA, thetaB, beta, node: NodeCoefficients) -> dict:
    """Residuals of three sufficient conditions for the candidate measure to be variance-optimal.

    The middle condition is read with the brackets placed symmetrically:
    ``sigmaA (rhoB - thetaB) / (1 + thetaB) = sigmaB (rhoA - thetaA) / (1 + thetaA)``.
    The candidate satisfies all three identically, so these are reported
    as a numerical check only.
    """
    rho, rA, rB = vom_controls(thetaA, thetaB, beta, node)
    sA, sB, s = node.sigmaA, node.sigmaB, node.sigma
    return {
        "brownian_vs_B": float(np.max(np.abs(sB * (rho - beta) - s * (rB - thetaB) / (1 + thetaB)))),
        "A_vs_B": float(np.max(np.abs(sA * (rB - thetaB) / (1 + thetaB) - sB * (rA - thetaA) / (1 + thetaA)))),
        "brownian_vs_A": float(np.max(np.abs(sA * (rho - beta) - s * (rA - thetaA) / (1 + thetaA)))),
    }
