"""Monte Carlo estimators that check the solvers against their probabilistic meaning.

Every estimator draws paths through :class:`PathSource`, which simulates in
chunks of whole RNG blocks.  Because a path's randomness depends only on
``(seed, path id)``, results do not depend on the chunk size.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

import numpy as np

from .hjb import ValueSurface
from .model import (
    PATH_BLOCK,
    DefaultableClaim,
    ModelParams,
    PathSet,
    ValidationError,
    claim_payoff,
    simulate_paths,
    simulate_wealth,
    walk_paths,
)
from .mvh import (
    REGIME_STATES,
    BsdeFirstSolution,
    CostReport,
    MvhSolution,
    cost_samples,
    monitor_marks,
    summarize_costs,
)

__all__ = [
    "McEstimate",
    "McReport",
    "PathSource",
    "estimate_hedge_error",
    "hjb_controls",
    "vom_control_field",
    "density_weights",
    "weighted_mean",
    "entropy_dual_estimate",
    "VomReport",
    "vom_moment_check",
    "PerturbationReport",
    "perturbation_test",
    "mc_indifference_price",
    "xi_integral_estimate",
    "cost_process_mc",
]

CHUNK = 16 * PATH_BLOCK


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int

    def zscore(self, target: float) -> float:
        gap = abs(self.mean - target)
        if self.stderr > 0:
            return gap / self.stderr
        return 0.0 if gap <= 1e-12 * max(1.0, abs(target)) else math.inf

    @classmethod
    def of(cls, samples: np.ndarray, seed: int) -> "McEstimate":
        n = samples.size
        if n and np.all(samples == samples.flat[0]):
            # deterministic outcome: report it exactly, free of summation rounding
            return cls(float(samples.flat[0]), 0.0, n, seed)
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(samples.mean()), se, n, seed)


@dataclass(frozen=True)
class McReport:
    """Serializable outcome of one statistical check."""

    check_name: str
    estimate: float
    stderr: float
    n_paths: int
    seed: int
    passed: bool
    tolerance: float
    target: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


@dataclass(frozen=True)
class PathSource:
    """Recipe for a reproducible path set, simulated lazily in chunks."""

    params: ModelParams
    n_steps: int
    n_paths: int
    d0: float = 1.0
    seed: int = 0
    chunk: int = CHUNK

    def __iter__(self) -> Iterator[PathSet]:
        if self.chunk % PATH_BLOCK:
            raise ValidationError("chunk size must be a multiple of the RNG block size")
        for start in range(0, self.n_paths, self.chunk):
            n = min(self.chunk, self.n_paths - start)
            yield simulate_paths(self.params, self.n_steps, n, self.d0, self.seed, first_id=start)


def _chunks(paths) -> Iterator[PathSet]:
    if isinstance(paths, PathSet):
        yield paths
    else:
        yield from paths


def _seed(paths) -> int:
    return paths.seed


def estimate_hedge_error(paths, params: ModelParams, claim: DefaultableClaim, strategy,
                         x0: float) -> McEstimate:
    """Mean squared terminal hedging error ``(X_T - psi)^2``."""
    out = []
    for ps in _chunks(paths):
        X = simulate_wealth(ps, params, strategy, x0)
        out.append((X[:, -1] - claim_payoff(claim, ps)) ** 2)
    return McEstimate.of(np.concatenate(out), _seed(paths))


ControlField = Callable  # (t, spot, state) -> (rho, rhoA, rhoB)


def hjb_controls(surface: ValueSurface) -> ControlField:
    """Optimal dual controls read from a solved surface."""

    def controls(t, spot, state):
        return (surface.lookup(surface.rho, t, spot, state),
                surface.lookup(surface.rhoA, t, spot, state),
                surface.lookup(surface.rhoB, t, spot, state))

    return controls


def vom_control_field(first: BsdeFirstSolution, params: ModelParams) -> ControlField:
    """Variance-optimal controls, piecewise constant in time, linear in log-spot."""
    from .closed_forms import vom_controls
    from .mvh import STATE_TO_REGIME

    times = first.times
    nt = times.size
    table = np.zeros((3, 3, nt, first.s.size))  # (control, regime, time, space)
    for k, st in enumerate(REGIME_STATES):
        for n, t in enumerate(times):
            node = params.at(float(t), st)
            table[:, k, n] = vom_controls(first.thetaA[k, n], first.thetaB[k, n], first.beta[k, n], node)
    dt = times[1] - times[0]
    s0, h = first.s[0], first.s[1] - first.s[0]

    def controls(t, spot, state):
        regime = STATE_TO_REGIME[np.asarray(state, dtype=np.intp)]
        n = np.clip(np.floor(np.asarray(t) / dt + 1e-9).astype(np.intp), 0, nt - 2)
        pos = (np.log(spot) - s0) / h
        i = np.clip(np.floor(pos).astype(np.intp), 0, first.s.size - 2)
        w = pos - i
        vals = table[:, regime, n, i] * (1 - w) + table[:, regime, n, i + 1] * w
        return vals[0], vals[1], vals[2]

    return controls


def density_weights(paths: PathSet, params: ModelParams, controls: ControlField,
                    log: bool = False) -> np.ndarray:
    """Stochastic-exponential density ``Z_T`` per path for the given controls.

    Controls are frozen at the start of each piece between defaults; a
    default multiplies the density by ``1 + rho^i`` read just before it.

    Raises
    ------
    ValidationError
        If ``1 + rho^i <= 0`` at a default: the measure would be signed.
    """
    lnZ = np.zeros(paths.n_paths)

    def piece(t, dt, dW, state, spot, idx, node):
        rho, rA, rB = controls(t, spot, state)
        lnZ[idx] += rho * dW - 0.5 * rho ** 2 * dt - (rA * node.lambdaA + rB * node.lambdaB) * dt

    def jump(t, firm, state_before, spot_before, idx):
        _, rA, rB = controls(t, spot_before, state_before)
        r = rA if firm == "A" else rB
        if np.any(1 + r < -1e-12):
            raise ValidationError("signed density: 1 + rho^i < 0 at a default")
        # a vanishing jump factor is allowed: the measure is then absolutely
        # continuous without being equivalent
        with np.errstate(divide="ignore"):
            lnZ[idx] += np.log(np.maximum(1 + r, 0.0))

    walk_paths(paths, params, piece=piece, jump=jump)
    return lnZ if log else np.exp(lnZ)


def weighted_mean(paths, params: ModelParams, controls: ControlField,
                  fn: Callable[[PathSet, np.ndarray], np.ndarray]) -> McEstimate:
    """Estimate of ``E[fn(paths, Z_T)]``; ``fn`` sees each chunk with its densities."""
    out = []
    for ps in _chunks(paths):
        out.append(fn(ps, density_weights(ps, params, controls)))
    return McEstimate.of(np.concatenate(out), _seed(paths))


def entropy_dual_estimate(paths, params: ModelParams, controls: ControlField,
                          claim: DefaultableClaim, delta: float) -> McEstimate:
    """``E^Q[ln Z_T - delta psi] = E[Z_T (ln Z_T - delta psi)]``."""
    out = []
    for ps in _chunks(paths):
        lnw = density_weights(ps, params, controls, log=True)
        w = np.exp(lnw)
        out.append(np.where(w > 0, w * (np.where(w > 0, lnw, 0.0) - delta * claim_payoff(claim, ps)), 0.0))
    return McEstimate.of(np.concatenate(out), _seed(paths))


@dataclass(frozen=True)
class VomReport:
    theta0: float
    second_moment: McEstimate
    product: float
    stderr: float
    zscore: float
    passed: bool


def vom_moment_check(first: BsdeFirstSolution, params: ModelParams, n_paths: int, seed: int,
                     d0: float = 1.0, n_sigmas: float = 3.0) -> VomReport:
    """Check ``Theta_0 E[Z_T^2] = 1`` for the variance-optimal density."""
    n_steps = first.times.size - 1
    source = PathSource(params, n_steps, n_paths, d0, seed)
    ctrl = vom_control_field(first, params)
    est = weighted_mean(source, params, ctrl, lambda ps, w: w ** 2)
    prod = first.theta0 * est.mean
    se = first.theta0 * est.stderr
    z = abs(prod - 1.0) / se if se > 0 else (0.0 if abs(prod - 1) < 1e-12 else math.inf)
    return VomReport(first.theta0, est, prod, se, z, z < n_sigmas)


def _bump_fields(n_bumps: int, seed: int, T: float, d0: float):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2**20,)))
    coef = rng.standard_normal((n_bumps, 3))
    freq = rng.integers(1, 4, size=n_bumps)
    ln0 = math.log(d0)

    def make(j):
        c0, c1, c2 = coef[j]
        k = freq[j]

        def eta(t, spot):
            return c0 + c1 * np.sin(math.pi * k * np.asarray(t) / T) + c2 * (np.log(spot) - ln0)

        return eta

    return [make(j) for j in range(n_bumps)], coef, freq


@dataclass
class PerturbationReport:
    base_cost: float
    costs: np.ndarray
    diff: np.ndarray
    diff_stderr: np.ndarray
    violations: int
    improvements: int
    n_paths: int
    seed: int
    rows: list = field(default_factory=list)


def perturbation_test(paths, params: ModelParams, claim: DefaultableClaim, base_strategy,
                      n_bumps: int = 10, bump_scale: float = 0.1, seed: int = 0,
                      x0: float = 0.0, delta: float | None = None,
                      n_sigmas: float = 3.0) -> PerturbationReport:
    """Compare the base strategy with randomly bumped copies on common paths.

    The bump is ``bump_scale * eta(t, spot)`` with ``eta`` a random
    combination of a constant, ``sin(pi k t / T)`` and ``ln(spot / d0)``.
    The cost is ``(X_T - psi)^2`` or, when ``delta`` is given,
    ``exp(-delta (X_T - psi))`` (the negated exponential utility).  A bump
    counts as a violation when it beats the base by more than
    ``n_sigmas`` standard errors of the paired difference.
    """
    first = next(iter(_chunks(paths)))
    etas, coef, freq = _bump_fields(n_bumps, seed, params.T, first.d0)
    costs = []
    for ps in _chunks(paths):
        psi = claim_payoff(claim, ps)
        rules = [base_strategy] + [_bumped(base_strategy, eta, bump_scale) for eta in etas]
        X = _terminal_wealth_many(ps, params, rules, x0)
        err = X - psi
        costs.append(err ** 2 if delta is None else np.exp(-delta * err))
    C = np.concatenate(costs, axis=1)
    n = C.shape[1]
    base = C[0]
    diff = C[1:] - base
    mean_diff = diff.mean(axis=1)
    se = diff.std(axis=1, ddof=1) / math.sqrt(n)
    tol = n_sigmas * se
    violations = int(np.sum(mean_diff < -tol - 1e-14 * abs(base.mean())))
    rows = [{"bump": j, "coef": coef[j].tolist(), "freq": int(freq[j]), "cost": float(C[j + 1].mean()),
             "diff": float(mean_diff[j]), "diff_stderr": float(se[j]),
             "violation": bool(mean_diff[j] < -tol[j])} for j in range(n_bumps)]
    return PerturbationReport(float(base.mean()), C[1:].mean(axis=1), mean_diff, se, violations,
                              int(np.sum(mean_diff < 0)), n, _seed(paths), rows)


@dataclass(frozen=True)
class _Bumped:
    base: Callable
    eta: Callable
    scale: float

    def __call__(self, t, wealth, spot, state, info):
        return self.base(t, wealth, spot, state, info) + self.scale * self.eta(t, spot)


def _bumped(base, eta, scale):
    return _Bumped(base, eta, scale)


def _terminal_wealth_many(paths: PathSet, params: ModelParams, rules, x0: float) -> np.ndarray:
    """Terminal wealth of several strategies on one path set, shape ``(len(rules), n)``."""
    m, n = len(rules), paths.n_paths
    X = np.full((m, n), float(x0))
    pos = np.zeros((m, n))

    def piece(t, dt, dW, state, spot, idx, node):
        info = paths.info(idx)
        gain = (node.mu - node.sigmaA * node.lambdaA - node.sigmaB * node.lambdaB) * dt + node.sigma * dW
        affine = {}  # rules linear in wealth share one coefficient lookup per piece
        for j, rule in enumerate(rules):
            base, extra = (rule.base, rule.scale * rule.eta(t, spot)) if isinstance(rule, _Bumped) else (rule, 0.0)
            if hasattr(base, "affine"):
                if id(base) not in affine:
                    affine[id(base)] = base.affine(t, spot, state, info)
                slope, intercept = affine[id(base)]
                pi = slope * X[j, idx] + intercept + extra
            else:
                pi = rule(t, X[j, idx], spot, state, info)
            pos[j, idx] = pi
            X[j, idx] += pi * gain

    def jump(t, firm, state_before, spot_before, idx):
        node = params.coefs(t, state_before)
        size = node.sigmaA if firm == "A" else node.sigmaB
        X[:, idx] += pos[:, idx] * size

    walk_paths(paths, params, piece=piece, jump=jump)
    return X


def mc_indifference_price(paths, params: ModelParams, claim: DefaultableClaim,
                          strategy_with, strategy_without, delta: float) -> McEstimate:
    """Price ``p`` with ``E[-exp(-delta(x + p + G^psi - psi))] = E[-exp(-delta(x + G^0))]``.

    ``G`` are the trading gains of the two strategies (money positions do
    not depend on wealth under exponential utility), so the root is
    ``ln(E[exp(-delta (G^psi - psi))] / E[exp(-delta G^0)]) / delta``.
    The stderr comes from the delta method on the paired samples.
    """
    a_all, b_all = [], []
    for ps in _chunks(paths):
        X = _terminal_wealth_many(ps, params, [strategy_with, strategy_without], 0.0)
        a_all.append(np.exp(-delta * (X[0] - claim_payoff(claim, ps))))
        b_all.append(np.exp(-delta * X[1]))
    a, b = np.concatenate(a_all), np.concatenate(b_all)
    A, B = a.mean(), b.mean()
    price = math.log(A / B) / delta
    infl = (a / A - b / B) / delta
    se = float(infl.std(ddof=1) / math.sqrt(a.size))
    return McEstimate(price, se, a.size, _seed(paths))


def xi_integral_estimate(paths, sol: MvhSolution) -> McEstimate:
    """Plain Monte Carlo of the tracking error ``E[int_0^T Theta (v - c^2 / a) dt]``."""
    from .mvh import STATE_TO_REGIME, _Lookup, coeffs

    look = _Lookup(sol)
    f1, f2 = sol.first, sol.second
    out = []
    for ps in _chunks(paths):
        acc = np.zeros(ps.n_paths)

        def piece(t, dt, dW, state, spot, idx, node):
            regime = STATE_TO_REGIME[state]
            n = look.index(t)

            def rd(arr):
                return look.read(arr, regime, n, spot)

            m = coeffs(rd(f1.thetaA), rd(f1.thetaB), rd(f1.beta), rd(f2.UA), rd(f2.UB), rd(f2.Z), node)
            rate = rd(f1.Theta) * (m.v - np.divide(m.c ** 2, m.a, out=np.zeros_like(m.a), where=m.a > 0))
            acc[idx] += rate * dt

        walk_paths(ps, sol.params, piece=piece)
        out.append(acc)
    return McEstimate.of(np.concatenate(out), _seed(paths))


def cost_process_mc(paths, sol: MvhSolution, strategy, x0: float, monitor: int = 10) -> CostReport:
    """Chunked :func:`cost_process_check`."""
    parts, times = [], None
    for ps in _chunks(paths):
        marks = monitor_marks(ps.times.size - 1, monitor)
        times = ps.times[marks]
        parts.append(cost_samples(ps, sol, strategy, x0, marks))
    return summarize_costs(times, np.concatenate(parts, axis=1), _seed(paths))
