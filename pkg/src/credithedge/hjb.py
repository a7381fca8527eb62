"""Entropy dual of exponential-utility hedging, solved on a log-spot grid.

For a claim of the form ``g(D_T) 1{tauB > T} + f(D_{tauB-}) 1{tauB <= T}``
the dual value ``V(t, s, h)`` (``s = ln D``) satisfies

    V_t + 0.5 sigma^2 V_ss - 0.5 sigma^2 V_s + min_{rhoA, rhoB} O = 0,
    V(T, s, h) = -delta g(e^s) (1 - hB),

    O = sum_i lambda^i (1 + rho^i) [V(t, s + ln(1 + sigma^i), h^i) - V - sigma^i V_s - delta f 1{i=B}]
        + sum_i lambda^i [(1 + rho^i) ln(1 + rho^i) - rho^i] + rho^2 / 2,

where ``rho`` is tied to the jump controls by the martingale constraint.  The
value is in nats; prices follow from differences of values divided by delta.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .grid import GridSpec, LogGrid, TridiagonalStepper, d_ds, interp_extrap, make_grid
from .model import (
    Constant,
    DefaultableClaim,
    DefaultState,
    ModelParams,
    NodeCoefficients,
    ValidationError,
)

__all__ = [
    "ConvergenceError",
    "DualControl",
    "running_cost_j",
    "foc_residual",
    "minimize_controls",
    "ValueSurface",
    "solve_hjb",
    "optimal_strategy_hjb",
    "IndifferencePrice",
    "indifference_price",
    "SOLVE_ORDER",
]

# post-default states are solved before the states that jump into them
SOLVE_ORDER = (DefaultState.S11, DefaultState.S10, DefaultState.S01, DefaultState.S00)
RHO_FLOOR = -1.0 + 1e-6


class ConvergenceError(RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""


@dataclass(frozen=True)
class DualControl:
    rhoA: np.ndarray
    rhoB: np.ndarray
    rho: np.ndarray


def _rho(node: NodeCoefficients, rhoA, rhoB):
    return -(node.mu + rhoA * node.sigmaA * node.lambdaA + rhoB * node.sigmaB * node.lambdaB) / node.sigma


def _entropy(lam, r):
    r = np.asarray(r, dtype=float)
    if np.any(1.0 + r <= 0):
        raise ValidationError("domain error: 1 + rho^i must be positive")
    return lam * ((1.0 + r) * np.log1p(r) - r)


def running_cost_j(controls: DualControl, node: NodeCoefficients, f_value, delta: float):
    """Entropy rate of the measure change minus ``delta`` times the expected recovery rate."""
    return (_entropy(node.lambdaA, controls.rhoA) + _entropy(node.lambdaB, controls.rhoB)
            - delta * (1.0 + controls.rhoB) * node.lambdaB * f_value + 0.5 * controls.rho ** 2)


def _gradient(KA, KB, node, rA, rB):
    rho = _rho(node, rA, rB)
    gA = node.lambdaA * (KA + np.log1p(rA) - node.sigmaA / node.sigma * rho)
    gB = node.lambdaB * (KB + np.log1p(rB) - node.sigmaB / node.sigma * rho)
    return gA, gB, rho


def _objective(KA, KB, node, rA, rB):
    rho = _rho(node, rA, rB)
    return (node.lambdaA * ((1 + rA) * KA + (1 + rA) * np.log1p(rA) - rA)
            + node.lambdaB * ((1 + rB) * KB + (1 + rB) * np.log1p(rB) - rB) + 0.5 * rho ** 2)


def foc_residual(KA, KB, node: NodeCoefficients, controls: DualControl) -> np.ndarray:
    """Max-norm of the gradient of the inner objective at ``controls``."""
    gA, gB, _ = _gradient(KA, KB, node, controls.rhoA, controls.rhoB)
    return np.maximum(np.abs(gA), np.abs(gB))


def minimize_controls(KA, KB, node: NodeCoefficients, start=None, tol: float = 1e-10,
                      max_iter: int = 100) -> tuple[DualControl, np.ndarray]:
    """Minimize the inner objective over ``(rhoA, rhoB)`` node by node.

    ``KA``/``KB`` are the jump-leg slopes ``V(post) - V - sigma^i V_s`` (with
    ``-delta f`` folded into ``KB``).  The objective is strictly convex
    wherever the intensity is positive; coordinates with zero intensity are
    pinned at zero.  Damped Newton with backtracking, falling back to a
    bracketing root search on each partial derivative for any node that does
    not converge.

    Returns
    -------
    controls, value
        Optimal controls and the minimum of the objective.
    """
    KA, KB = np.broadcast_arrays(np.asarray(KA, float), np.asarray(KB, float))
    shape = KA.shape
    node = NodeCoefficients(*(np.broadcast_to(np.asarray(v, float), shape) for v in node))
    if np.any(node.sigma <= 0):
        raise ValidationError("complete-jump case not supported in HJB module; see closed_forms")
    liveA = node.lambdaA > 0
    liveB = node.lambdaB > 0
    if start is None:
        rA = np.zeros(shape)
        rB = np.zeros(shape)
    else:
        rA = np.where(liveA, np.maximum(start[0], RHO_FLOOR), 0.0)
        rB = np.where(liveB, np.maximum(start[1], RHO_FLOOR), 0.0)
    lamA, lamB, s = node.lambdaA, node.lambdaB, node.sigma
    cAA = (node.sigmaA * lamA / s) ** 2
    cBB = (node.sigmaB * lamB / s) ** 2
    cAB = node.sigmaA * lamA * node.sigmaB * lamB / s ** 2
    obj = _objective(KA, KB, node, rA, rB)
    for _ in range(max_iter):
        gA, gB, _ = _gradient(KA, KB, node, rA, rB)
        res = np.maximum(np.abs(gA), np.abs(gB))
        if np.all(res < tol):
            break
        hAA = np.where(liveA, lamA / (1 + rA) + cAA, 1.0)
        hBB = np.where(liveB, lamB / (1 + rB) + cBB, 1.0)
        hAB = np.where(liveA & liveB, cAB, 0.0)
        det = hAA * hBB - hAB ** 2
        dA = -(hBB * gA - hAB * gB) / det
        dB = -(hAA * gB - hAB * gA) / det
        # keep 1 + rho positive: never move more than 95% of the way to the wall
        step = np.ones(shape)
        for r, d in ((rA, dA), (rB, dB)):
            wall = np.where(d < 0, 0.95 * (1 + r) / np.maximum(-d, 1e-300), np.inf)
            step = np.minimum(step, wall)
        done = res < tol
        for _ls in range(40):
            nA = np.where(done, rA, np.maximum(rA + step * dA, RHO_FLOOR))
            nB = np.where(done, rB, np.maximum(rB + step * dB, RHO_FLOOR))
            new = _objective(KA, KB, node, nA, nB)
            slope = gA * dA + gB * dB
            tiny = np.maximum(np.abs(step * dA), np.abs(step * dB)) < 1e-7
            ok = done | tiny | (new <= obj + 1e-4 * step * slope + 1e-13 * (1 + np.abs(obj)))
            if np.all(ok):
                break
            step = np.where(ok, step, 0.5 * step)
        rA, rB, obj = nA, nB, new
    gA, gB, rho = _gradient(KA, KB, node, rA, rB)
    bad = np.maximum(np.abs(gA), np.abs(gB)) >= tol
    if np.any(bad):
        rA, rB = _coordinate_fallback(KA, KB, node, rA, rB, bad, tol)
        gA, gB, rho = _gradient(KA, KB, node, rA, rB)
        res = np.maximum(np.abs(gA), np.abs(gB))
        if np.any(res >= max(tol, 1e-8)):
            i = int(np.argmax(res))
            raise ConvergenceError(
                f"inner minimization did not converge: residual {res.flat[i]:.3e} at node {i}, "
                f"last iterate rhoA={rA.flat[i]:.6g}, rhoB={rB.flat[i]:.6g}"
            )
    controls = DualControl(rA, rB, rho)
    return controls, _objective(KA, KB, node, rA, rB)


def _coordinate_fallback(KA, KB, node, rA, rB, bad, tol):
    rA, rB = rA.copy(), rB.copy()
    for i in np.flatnonzero(bad.ravel()):
        nd = NodeCoefficients(*(float(v.flat[i]) for v in node))
        ka, kb = float(KA.flat[i]), float(KB.flat[i])
        a, b = float(rA.flat[i]), float(rB.flat[i])
        for _ in range(200):
            for firm in ("A", "B"):
                lam = nd.lambdaA if firm == "A" else nd.lambdaB
                if lam <= 0:
                    continue

                def partial(r):
                    ga, gb, _ = _gradient(ka, kb, nd, r if firm == "A" else a, r if firm == "B" else b)
                    return ga if firm == "A" else gb

                lo, hi = RHO_FLOOR, 1.0
                while partial(hi) < 0:
                    hi = 2 * hi + 1
                root = lo if partial(lo) > 0 else brentq(partial, lo, hi, xtol=1e-15, rtol=1e-15)
                if firm == "A":
                    a = root
                else:
                    b = root
            ga, gb, _ = _gradient(ka, kb, nd, a, b)
            if max(abs(ga), abs(gb)) < tol:
                break
        rA.flat[i], rB.flat[i] = a, b
    return rA, rB


@dataclass
class ValueSurface:
    """Dual value and optimal controls on ``(state, time, log-spot)``.

    ``pi`` is the optimal amount of money in the bond.  Lookups are
    piecewise constant in time (left node) and linear in log-spot.
    """

    times: np.ndarray
    s: np.ndarray
    values: np.ndarray
    dvds: np.ndarray
    rhoA: np.ndarray
    rhoB: np.ndarray
    rho: np.ndarray
    pi: np.ndarray
    foc: np.ndarray
    delta: float
    center: int

    @property
    def x(self) -> np.ndarray:
        return np.exp(self.s)

    @property
    def dvdx(self) -> np.ndarray:
        return self.dvds / self.x

    def value0(self, state: DefaultState = DefaultState.S00) -> float:
        return float(self.values[state, 0, self.center])

    def time_index(self, t):
        dt = self.times[1] - self.times[0]
        return np.clip(np.floor(np.asarray(t) / dt + 1e-9).astype(np.intp), 0, self.times.size - 2)

    def lookup(self, field: np.ndarray, t, spot, state):
        k = self.time_index(t)
        state = np.asarray(state, dtype=np.intp)
        q = np.log(np.asarray(spot, dtype=float))
        h = self.s[1] - self.s[0]
        pos = (q - self.s[0]) / h
        i = np.clip(np.floor(pos).astype(np.intp), 0, self.s.size - 2)
        w = pos - i
        return field[state, k, i] * (1 - w) + field[state, k, i + 1] * w

    def max_foc_residual(self) -> float:
        return float(np.max(self.foc))

    def to_csv(self, stream=None) -> str:
        buf = stream if stream is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "t", "x", "V", "dVdx", "rhoA_opt", "rhoB_opt", "rho_opt", "pi_star"])
        x = self.x
        dvdx = self.dvdx
        for st in DefaultState:
            for k, t in enumerate(self.times):
                for j in range(self.s.size):
                    w.writerow([st.label, repr(float(t)), repr(float(x[j])),
                                *(repr(float(a[st, k, j])) for a in
                                  (self.values, dvdx, self.rhoA, self.rhoB, self.rho, self.pi))])
        return buf.getvalue() if stream is None else ""


def _jump_targets(st: DefaultState):
    return {"A": None if st.hA else st.after("A"), "B": None if st.hB else st.after("B")}


def solve_hjb(params: ModelParams, claim: DefaultableClaim, delta: float,
              spec: GridSpec = GridSpec(), d0: float = 1.0, tol: float = 1e-10,
              max_policy_iter: int = 50) -> ValueSurface:
    """Backward implicit-Euler sweep with policy iteration at every step.

    At each step the controls are minimized pointwise, the resulting linear
    equation is solved implicitly, and the two alternate until the value
    stops moving.  The stored controls are the minimizers for the final
    value, so their first-order residual is the inner-solve tolerance.
    """
    if not delta > 0:
        raise ValidationError("risk aversion delta must be positive")
    g, f = claim.g, claim.f
    grid = make_grid(params, spec, d0)
    stepper = TridiagonalStepper(grid)
    s, x, ds = grid.s, grid.x, grid.ds
    nt, ns = grid.times.size, s.size
    shape = (4, nt, ns)
    V = np.zeros(shape)
    fields = {k: np.zeros(shape) for k in ("dvds", "rhoA", "rhoB", "rho", "foc")}
    f_x = f(x) if not isinstance(f, Constant) else np.full(ns, f.value)
    g_x = g(x) if not isinstance(g, Constant) else np.full(ns, g.value)

    def slopes(st, n, v, node):
        vs = d_ds(v, ds)
        K = {}
        for firm, post in _jump_targets(st).items():
            size = node.sigmaA if firm == "A" else node.sigmaB
            lam = node.lambdaA if firm == "A" else node.lambdaB
            if post is None or lam <= 0:
                K[firm] = np.zeros(ns)
                continue
            shifted = interp_extrap(s + math.log1p(size), s, V[post, n])
            K[firm] = shifted - v - size * vs
            if firm == "B":
                K[firm] = K[firm] - delta * f_x
        return K["A"], K["B"], vs

    for st in SOLVE_ORDER:
        if params.ordered_defaults and st == DefaultState.S01:
            continue
        V[st, -1] = -delta * g_x * (1 - st.hB)
        ctrl = None
        for n in range(nt - 1, -1, -1):
            t = grid.times[n]
            node = params.at(t, st)
            if n < nt - 1:
                dt = grid.times[n + 1] - t
                v = V[st, n + 1].copy()
                for it in range(max_policy_iter):
                    KA, KB, _ = slopes(st, n, v, node)
                    ctrl, _ = minimize_controls(KA, KB, node, start=ctrl and (ctrl.rhoA, ctrl.rhoB), tol=tol)
                    wA = node.lambdaA * (1 + ctrl.rhoA)
                    wB = node.lambdaB * (1 + ctrl.rhoB)
                    adv = -0.5 * node.sigma ** 2 - wA * node.sigmaA - wB * node.sigmaB
                    stepper.check_peclet(0.5 * node.sigma ** 2, adv, f" in state {st} at t={t:.4g}")
                    src = (_entropy(node.lambdaA, ctrl.rhoA) + _entropy(node.lambdaB, ctrl.rhoB)
                           + 0.5 * ctrl.rho ** 2)
                    for firm, w in (("A", wA), ("B", wB)):
                        post = _jump_targets(st)[firm]
                        size = node.sigmaA if firm == "A" else node.sigmaB
                        if post is not None and np.any(w > 0):
                            src = src + w * interp_extrap(s + math.log1p(size), s, V[post, n])
                    src = src - delta * wB * f_x
                    bands = stepper.bands(0.5 * node.sigma ** 2, adv, -(wA + wB))
                    new = stepper.step(V[st, n + 1], dt, 1.0, bands, bands, src, src)
                    change = float(np.max(np.abs(new - v)))
                    v = new
                    if change < tol * max(1.0, float(np.max(np.abs(v)))):
                        break
                else:
                    raise ConvergenceError(
                        f"policy iteration stalled in state {st} at t={t:.4g}: last change {change:.3e}"
                    )
                V[st, n] = v
            KA, KB, vs = slopes(st, n, V[st, n], node)
            ctrl, _ = minimize_controls(KA, KB, node, start=ctrl and (ctrl.rhoA, ctrl.rhoB), tol=tol)
            fields["rhoA"][st, n] = ctrl.rhoA
            fields["rhoB"][st, n] = ctrl.rhoB
            fields["rho"][st, n] = ctrl.rho
            fields["dvds"][st, n] = vs
            fields["foc"][st, n] = foc_residual(KA, KB, node, ctrl)
    if not np.all(np.isfinite(V)):
        raise ConvergenceError("dual value is not finite on the grid")
    sig = np.stack([[params.at(t, st).sigma for t in grid.times] for st in DefaultState])[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        pi = -(fields["dvds"] + np.where(sig > 0, fields["rho"] / np.where(sig > 0, sig, 1.0), 0.0)) / delta
    if params.ordered_defaults:
        pi[DefaultState.S01] = 0.0
    return ValueSurface(grid.times, s, V, fields["dvds"], fields["rhoA"], fields["rhoB"],
                        fields["rho"], pi, fields["foc"], float(delta), grid.center)


def optimal_strategy_hjb(surface: ValueSurface):
    """Money held in the bond, ``-(V_s + rho / sigma) / delta``, as a feedback rule."""

    def strategy(t, wealth, spot, state, info=None):
        return surface.lookup(surface.pi, t, spot, state)

    strategy.surface = surface
    return strategy


@dataclass(frozen=True)
class IndifferencePrice:
    price: float
    V0_with: float
    V0_without: float
    surface_with: ValueSurface
    surface_without: ValueSurface


def indifference_price(params: ModelParams, claim: DefaultableClaim, delta: float,
                       spec: GridSpec = GridSpec(), d0: float = 1.0,
                       tol: float = 1e-10) -> IndifferencePrice:
    """Price ``p`` with ``u^psi(x + p) = u^0(x)``, i.e. ``(V^0 - V^psi) / delta`` at ``(d0, no defaults)``."""
    zero = DefaultableClaim.restricted(0.0, 0.0)
    with_claim = solve_hjb(params, claim, delta, spec, d0, tol)
    without = solve_hjb(params, zero, delta, spec, d0, tol)
    v1, v0 = with_claim.value0(), without.value0()
    return IndifferencePrice((v0 - v1) / delta, v1, v0, with_claim, without)
