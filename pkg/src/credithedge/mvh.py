"""Mean-variance hedging with ordered defaults, solved regime by regime.

The minimal cost has the quadratic form ``Theta_t (X_t - Y_t)^2 + xi_t``.
With defaults ordered (A first, then B) the market moves through the
regimes 0 -> 1 -> 2 (default states 00 -> 10 -> 11), and each of
``Theta``, ``Y`` and ``xi`` is a family of continuous backward equations
coupled only through the value the next regime takes at the default.

Per regime ``k`` with jump channel ``i`` (A in regime 0, B in regime 1)
and log-spot ``s``:

* ``Theta`` solves ``Theta_t + L Theta + lambda (Theta^{k+1} - Theta) + Theta g1 = 0``,
  ``Theta(T) = 1``.  Coefficients depend on time and regime only, so the
  solution is spot-free and the system reduces to three ODEs.
* ``Y`` is the expectation of the claim under the variance-optimal
  controls ``(rho, rho^i)``; ``Z = sigma Y_s`` and ``U^i`` is the jump of ``Y``.
* ``xi`` is the expected integral of ``Theta (v - c^2 / a)`` under P.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from .grid import GridSpec, LogGrid, TridiagonalStepper, d_ds, interp_extrap, make_grid
from .hjb import ConvergenceError
from .model import DefaultableClaim, DefaultState, ModelParams, NodeCoefficients, ValidationError

__all__ = [
    "REGIME_STATES",
    "MvhCoefficients",
    "coeffs",
    "driver_g1",
    "driver_g2",
    "driver_g3",
    "BsdeFirstSolution",
    "BsdeSecondSolution",
    "BsdeThirdSolution",
    "MvhSolution",
    "solve_theta_split",
    "solve_Y_split",
    "solve_xi",
    "solve_mvh",
    "mvh_value",
    "optimal_strategy_mvh",
    "cost_process_check",
    "cost_samples",
    "summarize_costs",
    "monitor_marks",
    "CostReport",
]

REGIME_STATES = (DefaultState.S00, DefaultState.S10, DefaultState.S11)
STATE_TO_REGIME = np.array([0, 1, -1, 2])
THETA_FLOOR = 1e-12


class MvhCoefficients(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    u: np.ndarray
    v: np.ndarray


def coeffs(thetaA, thetaB, beta, UA, UB, Z, node: NodeCoefficients) -> MvhCoefficients:
    """Quadratic-form coefficients at a node (relative jump integrands)."""
    if np.any(1 + np.asarray(thetaA) <= 0) or np.any(1 + np.asarray(thetaB) <= 0):
        raise ValidationError("constraint violation: 1 + theta^i must be positive")
    lA, lB = node.lambdaA, node.lambdaB
    sA, sB, sig = node.sigmaA, node.sigmaB, node.sigma
    a = sig ** 2 + sA ** 2 * (1 + thetaA) * lA + sB ** 2 * (1 + thetaB) * lB
    b = node.mu + sig * beta + sA * thetaA * lA + sB * thetaB * lB
    c = -sig * Z - sA * UA * (1 + thetaA) * lA - sB * UB * (1 + thetaB) * lB
    v = Z ** 2 + UA ** 2 * (1 + thetaA) * lA + UB ** 2 * (1 + thetaB) * lB
    u = beta * Z + UA * thetaA * lA + UB * thetaB * lB
    return MvhCoefficients(a, b, c, u, v)


def _safe_ratio(num, a, what):
    num, a = np.broadcast_arrays(np.asarray(num, float), np.asarray(a, float))
    if np.any(a < 0) or np.any((a == 0) & (num != 0)):
        raise ValidationError(f"constraint violation in {what}: non-positive denominator a")
    out = np.divide(num, a, out=np.zeros(a.shape), where=a > 0)
    return out if out.ndim else float(out)


def driver_g1(thetaA, thetaB, beta, node: NodeCoefficients):
    """``-b^2 / a``."""
    k = coeffs(thetaA, thetaB, beta, 0.0, 0.0, 0.0, node)
    return _safe_ratio(-k.b ** 2, k.a, "g1")


def driver_g2(UA, UB, Z, thetaA, thetaB, beta, node: NodeCoefficients):
    """``b c / a + u``: linear in ``(U, Z)``, no ``Y`` term."""
    k = coeffs(thetaA, thetaB, beta, UA, UB, Z, node)
    return _safe_ratio(k.b * k.c, k.a, "g2") + k.u


def driver_g3(UA, UB, Z, thetaA, thetaB, Theta, node: NodeCoefficients, beta=0.0):
    """``Theta (v - c^2 / a)``: the rate at which unhedgeable risk accrues."""
    k = coeffs(thetaA, thetaB, beta, UA, UB, Z, node)
    return Theta * (k.v - _safe_ratio(k.c ** 2, k.a, "g3"))


def _regime_node(params: ModelParams, t: float, k: int) -> NodeCoefficients:
    return params.at(t, REGIME_STATES[k])


def _jump(node: NodeCoefficients, k: int) -> tuple[float, float]:
    """(intensity, relative bond jump) of the default that ends regime ``k``."""
    if k == 0:
        return node.lambdaA, node.sigmaA
    if k == 1:
        return node.lambdaB, node.sigmaB
    return 0.0, 0.0


def _split(k: int, val):
    """Place a regime's jump integrand on the A or B channel."""
    zero = np.zeros_like(np.asarray(val, dtype=float))
    return (val, zero) if k == 0 else (zero, val)


@dataclass
class BsdeFirstSolution:
    """``Theta`` with its integrands on ``(regime, time, log-spot)``.

    ``thetaA``/``thetaB`` are relative jumps; ``theta_bar_*`` the absolute ones.
    """

    times: np.ndarray
    s: np.ndarray
    Theta: np.ndarray
    beta: np.ndarray
    thetaA: np.ndarray
    thetaB: np.ndarray
    delta_min: float
    tier: str
    center: int

    @property
    def theta_bar_A(self) -> np.ndarray:
        return self.Theta * self.thetaA

    @property
    def theta_bar_B(self) -> np.ndarray:
        return self.Theta * self.thetaB

    @property
    def theta0(self) -> float:
        return float(self.Theta[0, 0, self.center])


@dataclass
class BsdeSecondSolution:
    """``Y`` with ``Z``, ``UA``, ``UB``.

    In regime 2 the claim is already settled: ``Y[2]`` holds ``f`` evaluated
    at the pre-default spot, which is what the x-axis means in that regime.
    """

    Y: np.ndarray
    Z: np.ndarray
    UA: np.ndarray
    UB: np.ndarray
    bound: float

    @property
    def y0(self) -> float:
        return float(self.Y[0, 0, self.Y.shape[2] // 2])


@dataclass
class BsdeThirdSolution:
    xi: np.ndarray

    @property
    def xi0(self) -> float:
        return float(self.xi[0, 0, self.xi.shape[2] // 2])


@dataclass
class MvhSolution:
    params: ModelParams
    claim: DefaultableClaim
    first: BsdeFirstSolution
    second: BsdeSecondSolution
    third: BsdeThirdSolution
    d0: float

    def value(self, x0: float) -> float:
        return mvh_value(x0, self.first, self.second, self.third)

    def coefficients(self, k: int, n: int) -> MvhCoefficients:
        node = _regime_node(self.params, float(self.first.times[n]), k)
        f1, f2 = self.first, self.second
        return coeffs(f1.thetaA[k, n], f1.thetaB[k, n], f1.beta[k, n],
                      f2.UA[k, n], f2.UB[k, n], f2.Z[k, n], node)

    def to_csv(self, stream=None) -> str:
        buf = stream if stream is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["regime", "l1", "t", "x", "Theta", "beta", "thetaA", "thetaB",
                    "Y", "Z", "UA", "UB", "xi"])
        f1, f2, f3 = self.first, self.second, self.third
        x = np.exp(f1.s)
        for k in range(3):
            for n, t in enumerate(f1.times):
                for j in range(x.size):
                    w.writerow([k, "", repr(float(t)), repr(float(x[j])),
                                *(repr(float(a[k, n, j])) for a in
                                  (f1.Theta, f1.beta, f1.thetaA, f1.thetaB,
                                   f2.Y, f2.Z, f2.UA, f2.UB, f3.xi))])
        return buf.getvalue() if stream is None else ""


def _require_ordered(params: ModelParams) -> None:
    if not params.ordered_defaults:
        raise ValidationError("mean-variance splitting needs ordered_defaults=true")


def _theta_ode(params: ModelParams, times: np.ndarray) -> np.ndarray:
    """Spot-free ``Theta`` for the three regimes, integrated backward from T."""

    def rhs(t, th):
        out = np.empty(3)
        for k in (2, 1, 0):
            node = _regime_node(params, t, k)
            lam, _ = _jump(node, k)
            if k < 2 and lam > 0:
                rel = th[k + 1] / th[k] - 1.0
                tA, tB = _split(k, rel)
            else:
                rel, tA, tB = 0.0, 0.0, 0.0
            g1 = driver_g1(tA, tB, 0.0, node)
            out[k] = -lam * rel * th[k] - th[k] * g1
        return out

    sol = solve_ivp(rhs, (times[-1], times[0]), np.ones(3), method="DOP853",
                    t_eval=times[::-1], rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise ConvergenceError(f"Theta ODE failed: {sol.message}")
    return sol.y[:, ::-1]


def solve_theta_split(params: ModelParams, spec: GridSpec = GridSpec(), d0: float = 1.0,
                      tier: str = "ode", picard_tol: float = 1e-8,
                      max_picard: int = 50) -> BsdeFirstSolution:
    """Solve the ``Theta`` system regime by regime (2, then 1, then 0).

    Parameters
    ----------
    tier : {"ode", "pde", "auto"}
        ``"ode"`` integrates the spot-free system exactly (to ODE tolerance).
        ``"pde"`` runs the finite-difference scheme on the log-spot grid,
        with the quadratic driver frozen per step and iterated (Picard)
        until the update falls below ``picard_tol``.  ``"auto"`` picks the
        ODE, which is exact for every coefficient family supported here.
    """
    _require_ordered(params)
    grid = make_grid(params, spec, d0)
    nt, ns = grid.times.size, grid.s.size
    shape = (3, nt, ns)
    Theta = np.ones(shape)
    beta = np.zeros(shape)
    thA = np.zeros(shape)
    thB = np.zeros(shape)
    if tier in ("ode", "auto"):
        th = _theta_ode(params, grid.times)
        Theta[:] = th[:, :, None]
        tier = "ode"
        for k in (0, 1):
            lam = np.array([_jump(_regime_node(params, t, k), k)[0] for t in grid.times])
            rel = np.where(lam[:, None] > 0, Theta[k + 1] / Theta[k] - 1.0, 0.0)
            (thA if k == 0 else thB)[k] = rel
    elif tier == "pde":
        _theta_pde(params, grid, spec, Theta, beta, thA, thB, picard_tol, max_picard)
    else:
        raise ValidationError(f"unknown tier {tier!r}")
    dmin = float(Theta.min())
    if not np.all(np.isfinite(Theta)) or dmin < THETA_FLOOR:
        raise ConvergenceError(f"Theta fell below the floor {THETA_FLOOR:g}: min {dmin:.3e}")
    return BsdeFirstSolution(grid.times, grid.s, Theta, beta, thA, thB, dmin, tier, grid.center)


def _theta_pde(params, grid: LogGrid, spec, Theta, beta, thA, thB, tol, max_iter):
    stepper = TridiagonalStepper(grid)
    s, ds = grid.s, grid.ds
    nt = grid.times.size

    def frozen(k, n, th):
        """Reaction, source and integrands of regime ``k`` at level ``n`` given ``th``."""
        node = _regime_node(params, grid.times[n], k)
        lam, size = _jump(node, k)
        b_ = node.sigma * d_ds(th, ds) / th
        if k < 2 and lam > 0:
            nxt = interp_extrap(s + math.log1p(size), s, Theta[k + 1, n])
            rel = nxt / th - 1.0
        else:
            nxt, rel = np.zeros_like(th), np.zeros_like(th)
        tA, tB = _split(k, rel)
        g1 = driver_g1(tA, tB, b_, node)
        drift = node.mu - node.sigmaA * node.lambdaA - node.sigmaB * node.lambdaB - 0.5 * node.sigma ** 2
        D = 0.5 * node.sigma ** 2
        stepper.check_peclet(D, drift, f" in regime {k}")
        bands = stepper.bands(D, drift, -lam + g1)
        return bands, lam * nxt, b_, tA, tB

    for k in (2, 1, 0):
        bands_next, q_next, b_, tA, tB = frozen(k, nt - 1, Theta[k, -1])
        beta[k, -1], thA[k, -1], thB[k, -1] = b_, tA, tB
        for n in range(nt - 2, -1, -1):
            dt = grid.times[n + 1] - grid.times[n]
            th = stepper.theta_for(spec, nt - 2 - n)
            cur = Theta[k, n + 1].copy()
            for _ in range(max_iter):
                bands_now, q_now, b_, tA, tB = frozen(k, n, cur)
                new = stepper.step(Theta[k, n + 1], dt, th, bands_now, bands_next, q_now, q_next)
                change = float(np.max(np.abs(new - cur)))
                cur = new
                if change < tol:
                    break
            else:
                raise ConvergenceError(f"Picard iteration stalled in regime {k}: change {change:.3e}")
            Theta[k, n] = cur
            bands_next, q_next, b_, tA, tB = frozen(k, n, cur)
            beta[k, n], thA[k, n], thB[k, n] = b_, tA, tB


def _vom_rho(first: BsdeFirstSolution, params: ModelParams, k: int, n: int):
    """Variance-optimal controls ``(rho, rhoA, rhoB)`` at regime ``k``, level ``n``."""
    from .closed_forms import vom_controls

    node = _regime_node(params, float(first.times[n]), k)
    rho, rA, rB = vom_controls(first.thetaA[k, n], first.thetaB[k, n], first.beta[k, n], node)
    return rho, rA, rB, node


def solve_Y_split(params: ModelParams, claim: DefaultableClaim, first: BsdeFirstSolution,
                  spec: GridSpec = GridSpec()) -> BsdeSecondSolution:
    """Expected claim under the variance-optimal controls, regime 1 then regime 0."""
    _require_ordered(params)
    g, f = claim.g, claim.f
    s = first.s
    x = np.exp(s)
    ds = s[1] - s[0]
    grid = LogGrid(first.times, s, first.center)
    stepper = TridiagonalStepper(grid)
    nt, ns = first.times.size, s.size
    shape = (3, nt, ns)
    Y = np.zeros(shape)
    Y[2] = f(x)
    f_x = Y[2, 0].copy()

    def operator(k, n):
        rho, rA, rB, node = _vom_rho(first, params, k, n)
        lam, size = _jump(node, k)
        r_i = rA if k == 0 else rB
        w = lam * (1 + r_i)
        drift = (node.mu - node.sigmaA * node.lambdaA - node.sigmaB * node.lambdaB
                 - 0.5 * node.sigma ** 2 + node.sigma * rho)
        D = 0.5 * node.sigma ** 2
        stepper.check_peclet(D, drift, f" in regime {k}")
        if k == 1:
            nxt = f_x  # B's default settles the claim at the pre-jump bond value
        elif lam > 0:
            nxt = interp_extrap(s + math.log1p(size), s, Y[1, n])
        else:
            nxt = np.zeros(ns)
        return stepper.bands(D, drift, -w), w * nxt

    for k in (1, 0):
        Y[k, -1] = g(x)
        bands_next, q_next = operator(k, nt - 1)
        for n in range(nt - 2, -1, -1):
            dt = first.times[n + 1] - first.times[n]
            bands_now, q_now = operator(k, n)
            Y[k, n] = stepper.step(Y[k, n + 1], dt, stepper.theta_for(spec, nt - 2 - n),
                                   bands_now, bands_next, q_now, q_next)
            bands_next, q_next = bands_now, q_now

    Z = np.zeros(shape)
    UA = np.zeros(shape)
    UB = np.zeros(shape)
    for k in (0, 1):
        Z[k] = np.stack([_regime_node(params, t, k).sigma for t in first.times])[:, None] * d_ds(Y[k], ds)
    for n, t in enumerate(first.times):
        node = _regime_node(params, float(t), 0)
        if node.lambdaA > 0:
            UA[0, n] = interp_extrap(s + math.log1p(node.sigmaA), s, Y[1, n]) - Y[0, n]
        node = _regime_node(params, float(t), 1)
        if node.lambdaB > 0:
            UB[1, n] = f_x - Y[1, n]
    if not np.all(np.isfinite(Y)):
        raise ConvergenceError("Y is not finite on the grid")
    return BsdeSecondSolution(Y, Z, UA, UB, claim.sup_norm)


def solve_xi(params: ModelParams, first: BsdeFirstSolution, second: BsdeSecondSolution,
             spec: GridSpec = GridSpec()) -> BsdeThirdSolution:
    """Tracking error: expected integral of ``Theta (v - c^2 / a)`` under P."""
    _require_ordered(params)
    s = first.s
    grid = LogGrid(first.times, s, first.center)
    stepper = TridiagonalStepper(grid)
    nt, ns = first.times.size, s.size
    xi = np.zeros((3, nt, ns))

    def operator(k, n):
        node = _regime_node(params, float(first.times[n]), k)
        lam, size = _jump(node, k)
        src = driver_g3(second.UA[k, n], second.UB[k, n], second.Z[k, n], first.thetaA[k, n],
                        first.thetaB[k, n], first.Theta[k, n], node, first.beta[k, n])
        if k == 0 and lam > 0:
            src = src + lam * interp_extrap(s + math.log1p(size), s, xi[1, n])
        drift = node.mu - node.sigmaA * node.lambdaA - node.sigmaB * node.lambdaB - 0.5 * node.sigma ** 2
        D = 0.5 * node.sigma ** 2
        stepper.check_peclet(D, drift, f" in regime {k}")
        return stepper.bands(D, drift, -lam), src

    for k in (1, 0):
        bands_next, q_next = operator(k, nt - 1)
        for n in range(nt - 2, -1, -1):
            dt = first.times[n + 1] - first.times[n]
            bands_now, q_now = operator(k, n)
            xi[k, n] = stepper.step(xi[k, n + 1], dt, stepper.theta_for(spec, nt - 2 - n),
                                    bands_now, bands_next, q_now, q_next)
            bands_next, q_next = bands_now, q_now
    return BsdeThirdSolution(xi)


def solve_mvh(params: ModelParams, claim: DefaultableClaim, spec: GridSpec = GridSpec(),
              d0: float = 1.0, tier: str = "auto", picard_tol: float = 1e-8) -> MvhSolution:
    first = solve_theta_split(params, spec, d0, tier, picard_tol)
    second = solve_Y_split(params, claim, first, spec)
    third = solve_xi(params, first, second, spec)
    return MvhSolution(params, claim, first, second, third, d0)


def mvh_value(x0: float, first: BsdeFirstSolution, second: BsdeSecondSolution,
              third: BsdeThirdSolution) -> float:
    """``Theta_0 (x0 - Y_0)^2 + xi_0`` in state (0,0) at the initial bond value."""
    return first.theta0 * (x0 - second.y0) ** 2 + third.xi0


class _Lookup:
    """Surface reads at ``(time index, spot, regime)``, linear in log-spot."""

    def __init__(self, sol: MvhSolution):
        self.sol = sol
        self.s0 = sol.first.s[0]
        self.h = sol.first.s[1] - sol.first.s[0]
        self.ns = sol.first.s.size
        self.dt = sol.first.times[1] - sol.first.times[0]
        self.nt = sol.first.times.size

    def index(self, t):
        return np.clip(np.floor(np.asarray(t) / self.dt + 1e-9).astype(np.intp), 0, self.nt - 2)

    def weights(self, spot):
        pos = (np.log(spot) - self.s0) / self.h
        i = np.clip(np.floor(pos).astype(np.intp), 0, self.ns - 2)
        return i, pos - i

    def read(self, arr, regime, n, spot):
        i, w = self.weights(spot)
        return arr[regime, n, i] * (1 - w) + arr[regime, n, i + 1] * w

    def Y(self, regime, n, spot, info_pre_B):
        y = self.read(self.sol.second.Y, regime, n, spot)
        settled = regime == 2
        if np.any(settled):
            pre = np.where(settled, info_pre_B, 1.0)
            y = np.where(settled, self.sol.claim.f(pre), y)
        return y


def _regimes(state) -> np.ndarray:
    r = STATE_TO_REGIME[np.asarray(state, dtype=np.intp)]
    if np.any(r < 0):
        raise ValidationError("state (0,1) cannot occur with ordered defaults")
    return r


def optimal_strategy_mvh(sol: MvhSolution):
    """Feedback rule ``pi = -(b (X - Y) + c) / a`` (money in the bond).

    Coefficients are read at the last grid time at or before ``t``.
    """
    look = _Lookup(sol)
    params = sol.params
    tables = np.stack([params.table(t) for t in sol.first.times])  # (nt, 4, 6)

    def affine(t, spot, state, info):
        """``(slope, intercept)`` with ``pi = slope * X + intercept``."""
        regime = _regimes(state)
        n = look.index(t)
        i, w = look.weights(spot)

        def rd(arr):
            return arr[regime, n, i] * (1 - w) + arr[regime, n, i + 1] * w

        node = NodeCoefficients(*np.moveaxis(tables[n, np.asarray(state, dtype=np.intp)], -1, 0))
        m = coeffs(rd(sol.first.thetaA), rd(sol.first.thetaB), rd(sol.first.beta),
                   rd(sol.second.UA), rd(sol.second.UB), rd(sol.second.Z), node)
        Y = look.Y(regime, n, spot, info.spot_pre_B)
        return -m.b / m.a, (m.b * Y - m.c) / m.a

    def strategy(t, wealth, spot, state, info):
        slope, intercept = affine(t, spot, state, info)
        return slope * wealth + intercept

    strategy.affine = affine
    strategy.solution = sol
    return strategy


@dataclass
class CostReport:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    J0: float
    max_dev_sigmas: float
    terminal_excess: float
    n_paths: int
    seed: int
    extra: dict = field(default_factory=dict)


def cost_samples(paths, sol: MvhSolution, strategy, x0: float, marks: np.ndarray) -> np.ndarray:
    """``J`` at grid indices ``marks`` for every path, shape ``(len(marks), n_paths)``."""
    from .model import claim_payoff, simulate_wealth

    look = _Lookup(sol)
    nsteps = paths.times.size - 1
    if nsteps != sol.first.times.size - 1 or abs(paths.T - sol.first.times[-1]) > 1e-12:
        raise ValidationError("path grid must match the solver time grid")
    J = np.zeros((marks.size, paths.n_paths))
    psi = claim_payoff(sol.claim, paths)

    def record(k, X, spot, state, ps):
        hit = np.flatnonzero(marks == k)
        if hit.size == 0:
            return
        if k == nsteps:
            J[hit[0]] = (X - psi) ** 2
            return
        regime = _regimes(state)
        th = look.read(sol.first.Theta, regime, k, spot)
        Y = look.Y(regime, k, spot, ps.spot_pre_B)
        xi = look.read(sol.third.xi, regime, k, spot)
        J[hit[0]] = th * (X - Y) ** 2 + xi

    simulate_wealth(paths, sol.params, strategy, x0, record=record)
    return J


def monitor_marks(n_steps: int, monitor: int = 10) -> np.ndarray:
    return np.unique(np.linspace(0, n_steps, monitor + 1).round().astype(int))


def summarize_costs(times: np.ndarray, J: np.ndarray, seed: int) -> CostReport:
    """Mean cost per monitoring time, with stderr of the paired change from t=0."""
    n = J.shape[1]
    J0 = float(J[0].mean())
    mean = J.mean(axis=1)
    diff = J - J[0]
    err = diff.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(J.shape[0])
    gap = np.abs(mean - J0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, gap / err, np.where(gap > 1e-14 * max(J0, 1.0), np.inf, 0.0))
    return CostReport(times, mean, err, J0, float(z.max()), float(mean[-1] - J0), n, seed)


def cost_process_check(paths, sol: MvhSolution, strategy, x0: float,
                       monitor: int = 10) -> CostReport:
    """Track ``J_t = Theta_t (X_t - Y_t)^2 + xi_t`` along simulated paths.

    Under the optimal rule ``E[J_t]`` is flat; under any other rule it
    drifts up.  At T the cost is ``(X_T - psi)^2`` exactly.
    """
    marks = monitor_marks(paths.times.size - 1, monitor)
    J = cost_samples(paths, sol, strategy, x0, marks)
    return summarize_costs(paths.times[marks], J, paths.seed)
