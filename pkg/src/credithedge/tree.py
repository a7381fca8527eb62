"""Exact minimal-entropy value on a small recombination-free event tree.

Each period the log-spot takes a Gauss-Hermite diffusion branch and, at
most, one default event.  The tree market admits many martingale measures;
at every node the one-period problem

    min_q  sum_k q_k ln(q_k / p_k) + sum_k q_k C_k   s.t.  sum_k q_k R_k = 0

is solved through its convex dual ``max_eta -ln sum_k p_k exp(-C_k - eta R_k)``,
so the backward recursion returns the exact tree optimum.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .model import DefaultableClaim, DefaultState, ModelParams, ValidationError

__all__ = ["dual_value_bruteforce", "one_period_entropy"]

MAX_PERIODS = 3


def one_period_entropy(p: np.ndarray, cost: np.ndarray, ret: np.ndarray) -> float:
    """Minimum of ``KL(q|p) + q.cost`` over probability vectors with ``q.ret = 0``."""
    keep = p > 0
    p, cost, ret = p[keep], cost[keep], ret[keep]
    if not (np.any(ret > 0) and np.any(ret < 0)):
        raise ValidationError("tree period admits an arbitrage: no martingale measure")
    shift = cost.min()
    c = cost - shift

    def dphi(eta):
        e = -c - eta * ret
        w = p * np.exp(e - e.max())
        return -float(np.dot(w, ret) / w.sum())

    lo, hi = -1.0, 1.0
    while dphi(lo) > 0:
        lo *= 2
    while dphi(hi) < 0:
        hi *= 2
    eta = brentq(dphi, lo, hi, xtol=1e-14, rtol=1e-14)
    e = -c - eta * ret
    m = e.max()
    return shift - (m + math.log(float(np.dot(p, np.exp(e - m)))))


def dual_value_bruteforce(params: ModelParams, claim: DefaultableClaim, delta: float,
                          n_periods: int = 2, n_space: int = 3, d0: float = 1.0) -> float:
    """``min_Q E^Q[ln Z_T - delta psi]`` over martingale measures of the tree.

    Parameters
    ----------
    n_periods : int
        Number of periods, at most 3.
    n_space : int
        Gauss-Hermite diffusion branches per period (3 is the trinomial).

    Notes
    -----
    A default within a period happens after the diffusion move; the
    recovery reads the bond just before its jump.
    """
    if n_periods < 1 or n_periods > MAX_PERIODS:
        raise ValidationError(f"size guard: n_periods must be in 1..{MAX_PERIODS}")
    if n_space < 2 or n_space > 9:
        raise ValidationError("size guard: n_space must be in 2..9")
    if not params.is_constant():
        raise ValidationError("tree oracle needs coefficients constant per state")
    dt = params.T / n_periods
    z, w = np.polynomial.hermite_e.hermegauss(n_space)
    w = w / w.sum()
    g, f = claim.g, claim.f

    def value(k: int, s: float, st: DefaultState) -> float:
        if k == n_periods:
            return -delta * float(g(math.exp(s))) * (1 - st.hB)
        c = params.at(0.0, st)
        lamA = c.lambdaA if not st.hA else 0.0
        lamB = c.lambdaB if not st.hB else 0.0
        tot = lamA + lamB
        p_none = math.exp(-tot * dt)
        events = [("", p_none)]
        if tot > 0:
            for firm, lam in (("A", lamA), ("B", lamB)):
                if lam > 0:
                    events.append((firm, (1 - p_none) * lam / tot))
        # drift chosen so that the discrete gross return has mean exp(mu dt)
        jump_mean = p_none + sum(pe * (1 + (c.sigmaA if firm == "A" else c.sigmaB))
                                 for firm, pe in events[1:])
        diff_mean = float(np.dot(w, np.exp(c.sigma * math.sqrt(dt) * z)))
        drift = c.mu * dt - math.log(diff_mean) - math.log(jump_mean)
        probs, costs, rets = [], [], []
        for zi, wi in zip(z, w):
            s_mid = s + drift + c.sigma * math.sqrt(dt) * zi
            for firm, pe in events:
                if firm == "":
                    s_new, st_new, now = s_mid, st, 0.0
                else:
                    size = c.sigmaA if firm == "A" else c.sigmaB
                    s_new = s_mid + math.log1p(size)
                    st_new = st.after(firm)
                    now = -delta * float(f(math.exp(s_mid))) if firm == "B" else 0.0
                probs.append(wi * pe)
                costs.append(now + value(k + 1, s_new, st_new))
                rets.append(math.expm1(s_new - s))
        return one_period_entropy(np.array(probs), np.array(costs), np.array(rets))

    return value(0, math.log(d0), DefaultState.S00)
