"""Two-firm defaultable bond market: parameters, claims, paths and wealth.

The traded asset is the defaultable bond ``D`` of firm A,

    dD / D_- = mu dt + sigma dW + sigmaA dM^A + sigmaB dM^B,
    dM^i = dH^i - lambda^i dt,

with every coefficient a deterministic function of time and of the default
state ``(hA, hB)``.  The risk-free rate is zero throughout.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "DefaultState",
    "ValidationError",
    "StateCoefficients",
    "NodeCoefficients",
    "ModelParams",
    "ClaimFunction",
    "Constant",
    "CappedAffine",
    "CappedCall",
    "CappedPut",
    "PayoffSum",
    "claim_function_from_dict",
    "DefaultableClaim",
    "MarketPath",
    "PathSet",
    "PathInfo",
    "validate_params",
    "simulate_paths",
    "walk_paths",
    "claim_payoff",
    "simulate_wealth",
    "solve_rho",
    "paths_to_csv",
]

COEF_NAMES = ("mu", "sigma", "sigmaA", "sigmaB", "lambdaA", "lambdaB")
PATH_BLOCK = 1024  # paths per RNG stream; path i lives in block i // PATH_BLOCK


class ValidationError(ValueError):
    """A model, claim or configuration invariant does not hold."""


class DefaultState(IntEnum):
    """Default indicators ``(hA, hB)``; the integer value is ``hA + 2 hB``."""

    S00 = 0
    S10 = 1
    S01 = 2
    S11 = 3

    @property
    def hA(self) -> int:
        return self.value & 1

    @property
    def hB(self) -> int:
        return self.value >> 1

    @property
    def label(self) -> str:
        return f"{self.hA}{self.hB}"

    @classmethod
    def from_label(cls, label: str) -> "DefaultState":
        hA, hB = int(label[0]), int(label[1])
        return cls(hA + 2 * hB)

    def after(self, firm: str) -> "DefaultState":
        bit = 1 if firm == "A" else 2
        return DefaultState(self.value | bit)

    def __str__(self) -> str:
        return f"({self.hA},{self.hB})"


def _poly(value) -> tuple[float, ...]:
    """Coefficient in ascending powers of t; a bare number is a constant."""
    if isinstance(value, (int, float, np.floating, np.integer)):
        out = (float(value),)
    else:
        out = tuple(float(v) for v in value)
        if not out:
            raise ValidationError("empty polynomial coefficient list")
    while len(out) > 1 and out[-1] == 0.0:
        out = out[:-1]
    return out


def _poly_extrema(coeffs: tuple[float, ...], T: float) -> tuple[float, float]:
    """Exact min and max of a polynomial on [0, T]."""
    pts = [0.0, T]
    if len(coeffs) > 2:
        for r in P.polyroots(P.polyder(coeffs)):
            if abs(r.imag) < 1e-12 and 0.0 <= r.real <= T:
                pts.append(r.real)
    vals = P.polyval(np.asarray(pts), coeffs)
    return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class StateCoefficients:
    """Bond coefficients in one default state, each a polynomial in t."""

    mu: tuple[float, ...] = (0.0,)
    sigma: tuple[float, ...] = (0.0,)
    sigmaA: tuple[float, ...] = (0.0,)
    sigmaB: tuple[float, ...] = (0.0,)
    lambdaA: tuple[float, ...] = (0.0,)
    lambdaB: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        for name in COEF_NAMES:
            object.__setattr__(self, name, _poly(getattr(self, name)))

    def is_constant(self) -> bool:
        return all(len(getattr(self, n)) == 1 for n in COEF_NAMES)

    def to_dict(self) -> dict:
        out = {}
        for name in COEF_NAMES:
            c = getattr(self, name)
            out[name] = c[0] if len(c) == 1 else list(c)
        return out


class NodeCoefficients(NamedTuple):
    """Coefficients evaluated at a node (scalars or arrays broadcast together)."""

    mu: np.ndarray
    sigma: np.ndarray
    sigmaA: np.ndarray
    sigmaB: np.ndarray
    lambdaA: np.ndarray
    lambdaB: np.ndarray


@dataclass(frozen=True)
class ModelParams:
    """Market coefficients per default state on the horizon ``[0, T]``."""

    states: dict
    T: float = 1.0
    ordered_defaults: bool = False

    def __post_init__(self):
        states = {}
        for key, coef in dict(self.states).items():
            st = DefaultState.from_label(key) if isinstance(key, str) else DefaultState(key)
            if isinstance(coef, dict):
                coef = StateCoefficients(**coef)
            states[st] = coef
        for st in DefaultState:
            states.setdefault(st, StateCoefficients())
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "T", float(self.T))
        table = np.zeros((4, 6), dtype=object)
        for st, coef in states.items():
            for j, name in enumerate(COEF_NAMES):
                table[st, j] = np.asarray(getattr(coef, name))
        object.__setattr__(self, "_polys", table)

    @classmethod
    def constant(
        cls,
        mu: float = 0.0,
        sigma: float = 0.2,
        sigmaA: float = 0.0,
        sigmaB: float = 0.0,
        lambdaA: float = 0.0,
        lambdaB: float = 0.0,
        T: float = 1.0,
        ordered_defaults: bool = False,
    ) -> "ModelParams":
        """Same coefficients in every state, intensities switched off once a firm defaults.

        In ordered mode the intensity of B is zero before A defaults.
        """
        states = {}
        for st in DefaultState:
            lamA = 0.0 if st.hA else lambdaA
            lamB = 0.0 if st.hB or (ordered_defaults and not st.hA) else lambdaB
            states[st] = StateCoefficients(mu, sigma, sigmaA, sigmaB, lamA, lamB)
        return cls(states, T, ordered_defaults)

    def is_constant(self) -> bool:
        return all(c.is_constant() for c in self.states.values())

    def table(self, t: float) -> np.ndarray:
        """All coefficients at scalar time ``t``, shape (4 states, 6)."""
        out = np.empty((4, 6))
        for s in range(4):
            for j in range(6):
                c = self._polys[s, j]
                out[s, j] = c[0] if c.size == 1 else P.polyval(t, c)
        return out

    def coefs(self, t, state) -> NodeCoefficients:
        """Coefficients at time(s) ``t`` in state(s) ``state``."""
        if np.ndim(t) == 0:
            rows = self.table(float(t))[np.asarray(state, dtype=np.intp)]
            return NodeCoefficients(*np.moveaxis(rows, -1, 0))
        t = np.asarray(t, dtype=float)
        state = np.broadcast_to(np.asarray(state, dtype=np.intp), t.shape)
        vals = np.empty((6,) + t.shape)
        for j in range(6):
            cols = np.stack([P.polyval(t, self._polys[s, j]) * np.ones_like(t) for s in range(4)])
            vals[j] = np.take_along_axis(cols, state[None], axis=0)[0]
        return NodeCoefficients(*vals)

    def at(self, t: float, state: DefaultState) -> NodeCoefficients:
        return NodeCoefficients(*(float(v) for v in self.table(t)[int(state)]))

    def sigma_max(self) -> float:
        return max(_poly_extrema(c.sigma, self.T)[1] for c in self.states.values())

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "ordered_defaults": self.ordered_defaults,
            "states": {st.label: self.states[st].to_dict() for st in DefaultState},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(
            {k: StateCoefficients(**v) for k, v in d["states"].items()},
            d.get("T", 1.0),
            bool(d.get("ordered_defaults", False)),
        )


def validate_params(raw: ModelParams) -> ModelParams:
    """Check the model invariants and return a cleaned copy.

    Raises
    ------
    ValidationError
        Naming the first invariant that fails.
    """
    T = raw.T
    if not (T > 0 and math.isfinite(T)):
        raise ValidationError(f"horizon T must be positive and finite, got {T}")
    for st in DefaultState:
        coef = raw.states[st]
        for name in COEF_NAMES:
            if not all(math.isfinite(v) for v in getattr(coef, name)):
                raise ValidationError(f"{name} not finite in state {st}")
        lo, _ = _poly_extrema(coef.sigma, T)
        if lo < 0:
            raise ValidationError(f"sigma < 0 in state {st}")
        for firm, alive in (("A", not st.hA), ("B", not st.hB)):
            lam = getattr(coef, "lambda" + firm)
            lam_lo, lam_hi = _poly_extrema(lam, T)
            if lam_lo < 0:
                raise ValidationError(f"lambda{firm} < 0 in state {st}")
            if not alive and lam_hi > 0:
                raise ValidationError(
                    f"lambda{firm} must vanish in state {st}: firm {firm} defaults only once"
                )
            if alive:
                jlo, _ = _poly_extrema(getattr(coef, "sigma" + firm), T)
                if 1.0 + jlo <= 0:
                    raise ValidationError(
                        f"bond positivity violated: 1+sigma{firm} <= 0 in state {st}"
                    )
    states = dict(raw.states)
    if raw.ordered_defaults:
        lo, hi = _poly_extrema(states[DefaultState.S00].lambdaB, T)
        if lo != 0.0 or hi != 0.0:
            raise ValidationError("ordered mode requires lambdaB=0 before tauA (state (0,0))")
        states[DefaultState.S00] = replace(states[DefaultState.S00], lambdaB=(0.0,))
    return ModelParams(states, T, raw.ordered_defaults)


def solve_rho(node: NodeCoefficients, rhoA, rhoB):
    """Brownian Girsanov control making the bond a local martingale.

    ``mu + rhoA sigmaA lambdaA + rhoB sigmaB lambdaB + rho sigma = 0``.
    """
    sigma = np.asarray(node.sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValidationError("complete-jump case not supported in HJB module; see closed_forms")
    rhoA = np.asarray(rhoA, dtype=float)
    rhoB = np.asarray(rhoB, dtype=float)
    if np.any(rhoA <= -1) or np.any(rhoB <= -1):
        raise ValidationError("jump controls must exceed -1")
    rho = -(node.mu + rhoA * node.sigmaA * node.lambdaA + rhoB * node.sigmaB * node.lambdaB) / sigma
    return rho if rho.ndim else float(rho)


# ---------------------------------------------------------------------------
# claims


class ClaimFunction:
    """Bounded payoff function of the bond value."""

    kind = "base"

    def __call__(self, x):
        raise NotImplementedError

    @property
    def bound(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ClaimFunction):
    value: float
    kind = "constant"

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value)) if np.ndim(x) else float(self.value)

    @property
    def bound(self) -> float:
        return abs(self.value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class CappedAffine(ClaimFunction):
    """``clip(intercept + slope * x, floor, cap)`` for x > 0."""

    slope: float = 1.0
    intercept: float = 0.0
    cap: float | None = None
    floor: float | None = None
    kind = "capped_affine"

    def __post_init__(self):
        if self.cap is not None and self.floor is not None and self.floor > self.cap:
            raise ValidationError("capped_affine floor exceeds cap")
        if not math.isfinite(self.bound):
            raise ValidationError("capped_affine payoff is unbounded; supply cap/floor")

    def __call__(self, x):
        y = self.intercept + self.slope * np.asarray(x, dtype=float)
        y = np.clip(y, self.floor, self.cap) if (self.cap is not None or self.floor is not None) else y
        return y if np.ndim(y) else float(y)

    @property
    def bound(self) -> float:
        # range over x in (0, inf)
        ends = [self.intercept, math.inf if self.slope > 0 else -math.inf if self.slope < 0 else self.intercept]
        lo, hi = min(ends), max(ends)
        if self.floor is not None:
            lo, hi = max(lo, self.floor), max(hi, self.floor)
        if self.cap is not None:
            lo, hi = min(lo, self.cap), min(hi, self.cap)
        return max(abs(lo), abs(hi))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "slope": self.slope, "intercept": self.intercept,
                "cap": self.cap, "floor": self.floor}


@dataclass(frozen=True)
class CappedCall(ClaimFunction):
    """``min(max(x - strike, 0), cap)``."""

    strike: float
    cap: float
    kind = "capped_call"

    def __call__(self, x):
        y = np.minimum(np.maximum(np.asarray(x, dtype=float) - self.strike, 0.0), self.cap)
        return y if np.ndim(y) else float(y)

    @property
    def bound(self) -> float:
        return abs(self.cap)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "strike": self.strike, "cap": self.cap}


@dataclass(frozen=True)
class CappedPut(ClaimFunction):
    """``min(max(strike - x, 0), cap)``."""

    strike: float
    cap: float | None = None
    kind = "capped_put"

    def __call__(self, x):
        y = np.maximum(self.strike - np.asarray(x, dtype=float), 0.0)
        if self.cap is not None:
            y = np.minimum(y, self.cap)
        return y if np.ndim(y) else float(y)

    @property
    def bound(self) -> float:
        b = max(self.strike, 0.0)
        return b if self.cap is None else min(b, abs(self.cap))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "strike": self.strike, "cap": self.cap}


@dataclass(frozen=True)
class PayoffSum(ClaimFunction):
    """Sum of payoff functions."""

    terms: tuple
    kind = "sum"

    def __call__(self, x):
        return sum(term(x) for term in self.terms)

    @property
    def bound(self) -> float:
        return sum(term.bound for term in self.terms)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "terms": [term.to_dict() for term in self.terms]}


_FAMILIES = {c.kind: c for c in (Constant, CappedAffine, CappedCall, CappedPut)}


def claim_function_from_dict(d) -> ClaimFunction:
    if isinstance(d, (int, float)):
        return Constant(float(d))
    d = dict(d)
    kind = d.pop("kind")
    if kind == "sum":
        return PayoffSum(tuple(claim_function_from_dict(t) for t in d["terms"]))
    if kind not in _FAMILIES:
        raise ValidationError(f"unknown payoff family {kind!r}")
    return _FAMILIES[kind](**d)


@dataclass(frozen=True)
class DefaultableClaim:
    """Promised payoffs ``XA, XB`` at T and recoveries ``ZA, ZB`` at default.

    A missing leg pays nothing.  The restricted form used by the HJB and
    BSDE solvers is ``XA = ZA = 0``, ``XB = g``, ``ZB = f``.
    """

    XA: ClaimFunction | None = None
    XB: ClaimFunction | None = None
    ZA: ClaimFunction | None = None
    ZB: ClaimFunction | None = None
    bound: float | None = None

    def __post_init__(self):
        legs = [leg for leg in (self.XA, self.XB, self.ZA, self.ZB) if leg is not None]
        if self.bound is not None:
            for leg in legs:
                if leg.bound > self.bound + 1e-12:
                    raise ValidationError(
                        f"payoff {leg.to_dict()} exceeds declared bound M={self.bound}"
                    )

    @classmethod
    def restricted(cls, g: ClaimFunction | float, f: ClaimFunction | float,
                   bound: float | None = None) -> "DefaultableClaim":
        g = Constant(float(g)) if isinstance(g, (int, float)) else g
        f = Constant(float(f)) if isinstance(f, (int, float)) else f
        return cls(XB=g, ZB=f, bound=bound)

    @property
    def is_restricted(self) -> bool:
        return self.XA is None and self.ZA is None

    @property
    def g(self) -> ClaimFunction:
        if not self.is_restricted:
            raise ValidationError("claim is not of the restricted (g, f) form")
        return self.XB if self.XB is not None else Constant(0.0)

    @property
    def f(self) -> ClaimFunction:
        if not self.is_restricted:
            raise ValidationError("claim is not of the restricted (g, f) form")
        return self.ZB if self.ZB is not None else Constant(0.0)

    @property
    def sup_norm(self) -> float:
        if self.bound is not None:
            return self.bound
        return sum(leg.bound for leg in (self.XA, self.XB, self.ZA, self.ZB) if leg is not None)

    def shifted(self, k: float) -> "DefaultableClaim":
        """Restricted claim plus cash ``k`` (paid whether or not B defaults)."""
        return DefaultableClaim.restricted(PayoffSum((self.g, Constant(k))),
                                           PayoffSum((self.f, Constant(k))))

    def to_dict(self) -> dict:
        out = {}
        for name in ("XA", "XB", "ZA", "ZB"):
            leg = getattr(self, name)
            if leg is not None:
                out[name] = leg.to_dict()
        if self.bound is not None:
            out["bound"] = self.bound
        if self.is_restricted:
            return {"form": "restricted", "g": self.g.to_dict(), "f": self.f.to_dict(),
                    **({"bound": self.bound} if self.bound is not None else {})}
        return {"form": "general", **out}

    @classmethod
    def from_dict(cls, d: dict) -> "DefaultableClaim":
        d = dict(d)
        bound = d.get("bound")
        if d.get("form", "restricted") == "restricted":
            return cls.restricted(claim_function_from_dict(d.get("g", 0.0)),
                                  claim_function_from_dict(d.get("f", 0.0)), bound)
        legs = {k: claim_function_from_dict(d[k]) for k in ("XA", "XB", "ZA", "ZB") if k in d}
        return cls(**legs, bound=bound)


# ---------------------------------------------------------------------------
# paths


class PathInfo(NamedTuple):
    """Default data of the paths being evaluated, for feedback strategies."""

    tauA: np.ndarray
    tauB: np.ndarray
    spot_pre_A: np.ndarray
    spot_pre_B: np.ndarray


@dataclass
class MarketPath:
    """One simulated trajectory (a view into a :class:`PathSet`)."""

    path_id: int
    time_grid: np.ndarray
    brownian_increments: np.ndarray
    bond: np.ndarray
    tauA: float
    tauB: float
    regime_index: np.ndarray
    spot_pre_A: float = math.nan
    spot_pre_B: float = math.nan
    w_to_A: float = 0.0
    w_to_B: float = 0.0

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])


@dataclass
class PathSet:
    """Simulated paths stored column-wise.

    ``tauA``/``tauB`` are ``inf`` when the default does not happen by T.
    ``w_to_A`` is ``W(tauA) - W(t_k)`` with ``t_k`` the start of the step
    containing ``tauA``; ``spot_pre_A`` is ``D(tauA-)``.
    """

    times: np.ndarray
    dW: np.ndarray
    bond: np.ndarray
    tauA: np.ndarray
    tauB: np.ndarray
    w_to_A: np.ndarray
    w_to_B: np.ndarray
    spot_pre_A: np.ndarray
    spot_pre_B: np.ndarray
    state: np.ndarray
    d0: float
    seed: int
    first_id: int = 0
    overflow: np.ndarray = field(default=None)

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def n_steps(self) -> int:
        return self.dW.shape[1]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return self.n_paths

    def __getitem__(self, i: int) -> MarketPath:
        return MarketPath(
            path_id=self.first_id + i,
            time_grid=self.times,
            brownian_increments=self.dW[i],
            bond=self.bond[i],
            tauA=float(self.tauA[i]),
            tauB=float(self.tauB[i]),
            regime_index=self.state[i],
            spot_pre_A=float(self.spot_pre_A[i]),
            spot_pre_B=float(self.spot_pre_B[i]),
            w_to_A=float(self.w_to_A[i]),
            w_to_B=float(self.w_to_B[i]),
        )

    def __iter__(self) -> Iterator[MarketPath]:
        for i in range(self.n_paths):
            yield self[i]

    def info(self, idx=slice(None)) -> PathInfo:
        return PathInfo(self.tauA[idx], self.tauB[idx], self.spot_pre_A[idx], self.spot_pre_B[idx])


def _hit_times(lam: np.ndarray, start: np.ndarray, E: np.ndarray, T: float) -> np.ndarray:
    """First t >= start with int_start^t lam = E, or inf if beyond T."""
    lam = np.asarray(lam, dtype=float)
    if lam.size == 1:
        if lam[0] <= 0:
            return np.full(start.shape, np.inf)
        t = start + E / lam[0]
        return np.where(t <= T, t, np.inf)
    Lam = P.polyint(lam)
    target = P.polyval(start, Lam) + E
    reach = P.polyval(T, Lam) >= target
    lo, hi = start.copy(), np.full(start.shape, T)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = P.polyval(mid, Lam) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.where(reach, hi, np.inf)


def _bridge(t0, t1, w0, w1, t, z):
    """Brownian bridge value at t given W(t0)=w0, W(t1)=w1."""
    span = t1 - t0
    frac = np.where(span > 0, (t - t0) / np.where(span > 0, span, 1.0), 0.0)
    var = np.maximum(span * frac * (1.0 - frac), 0.0)
    return w0 + frac * (w1 - w0) + np.sqrt(var) * z


def _simulate_block(params: ModelParams, times: np.ndarray, block: int, seed: int):
    """Raw draws and default times for one block of PATH_BLOCK paths."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))
    n_steps = times.size - 1
    B = PATH_BLOCK
    T = params.T
    dts = np.diff(times)
    dW = rng.standard_normal((B, n_steps)) * np.sqrt(dts)
    E = rng.standard_exponential((B, 3))
    zb = rng.standard_normal((B, 2))

    S = params.states
    zero = np.zeros(B)
    cA = _hit_times(np.asarray(S[DefaultState.S00].lambdaA), zero, E[:, 0], T)
    cB = _hit_times(np.asarray(S[DefaultState.S00].lambdaB), zero, E[:, 1], T)
    a_first = cA < cB
    first = np.minimum(cA, cB)
    tauA = np.where(a_first, cA, np.inf)
    tauB = np.where(~a_first & np.isfinite(cB), cB, np.inf)
    has = np.isfinite(first)
    start = np.where(has, first, 0.0)
    after_A = _hit_times(np.asarray(S[DefaultState.S10].lambdaB), start, E[:, 2], T)
    after_B = _hit_times(np.asarray(S[DefaultState.S01].lambdaA), start, E[:, 2], T)
    tauB = np.where(has & a_first, after_A, tauB)
    tauA = np.where(has & ~a_first, after_B, tauA)

    # Brownian values at the default times, bridged inside their steps
    wA = np.zeros(B)
    wB = np.zeros(B)
    kA = np.clip(np.searchsorted(times, tauA, side="left") - 1, 0, n_steps - 1)
    kB = np.clip(np.searchsorted(times, tauB, side="left") - 1, 0, n_steps - 1)
    rows = np.arange(B)
    for firm, tau, k, other_tau, other_k in (("A", tauA, kA, tauB, kB), ("B", tauB, kB, tauA, kA)):
        occurs = np.isfinite(tau)
        t0 = times[k]
        t1 = times[k + 1]
        dWk = dW[rows, k]
        is_first = ~(np.isfinite(other_tau) & (other_tau < tau))
        same_step = np.isfinite(other_tau) & (other_k == k) & ~is_first
        z = np.where(is_first, zb[:, 0], zb[:, 1])
        # bridge from step start, or from the earlier default in the same step
        w_other = wA if firm == "B" else wB
        t_start = np.where(same_step, np.where(np.isfinite(other_tau), other_tau, t0), t0)
        w_start = np.where(same_step, w_other, 0.0)
        w = _bridge(t_start, t1, w_start, dWk, np.where(occurs, tau, t0), z)
        if firm == "A":
            wA = np.where(occurs, w, 0.0)
        else:
            wB = np.where(occurs, w, 0.0)
    return dW, tauA, tauB, wA, wB


def simulate_paths(params: ModelParams, n_steps: int, n_paths: int, d0: float, seed: int,
                   first_id: int = 0, times: np.ndarray | None = None) -> PathSet:
    """Simulate bond paths with exactly sampled default times.

    Path ``i`` (global id ``first_id + i``) draws from a stream determined by
    ``(seed, (first_id + i) // PATH_BLOCK)``, so any chunking of the path range
    reproduces the same paths bit for bit.
    """
    if n_steps < 1:
        raise ValidationError("n_steps must be >= 1")
    if not d0 > 0:
        raise ValidationError("initial bond value d0 must be positive")
    if times is None:
        times = np.linspace(0.0, params.T, n_steps + 1)
    last = first_id + n_paths
    blocks = range(first_id // PATH_BLOCK, (last - 1) // PATH_BLOCK + 1) if n_paths else range(0)
    parts = [_simulate_block(params, times, b, seed) for b in blocks]
    lo = first_id - (first_id // PATH_BLOCK) * PATH_BLOCK
    sl = slice(lo, lo + n_paths)
    if parts:
        dW, tauA, tauB, wA, wB = (np.concatenate(x)[sl] for x in zip(*parts))
    else:
        dW = np.zeros((0, n_steps))
        tauA = tauB = wA = wB = np.zeros(0)

    hA = tauA[:, None] <= times[None, :]
    hB = tauB[:, None] <= times[None, :]
    state = (hA.astype(np.int8) + 2 * hB.astype(np.int8))

    paths = PathSet(
        times=times, dW=dW, bond=np.empty((n_paths, times.size)), tauA=tauA, tauB=tauB,
        w_to_A=wA, w_to_B=wB, spot_pre_A=np.full(n_paths, np.nan),
        spot_pre_B=np.full(n_paths, np.nan), state=state, d0=float(d0), seed=seed,
        first_id=first_id,
    )
    paths.bond[:, 0] = d0

    def on_jump(t, firm, state_before, spot_before, idx):
        if firm == "A":
            paths.spot_pre_A[idx] = spot_before
        else:
            paths.spot_pre_B[idx] = spot_before

    def on_step(k, spot, state_now):
        paths.bond[:, k] = spot

    with np.errstate(over="ignore", invalid="ignore"):
        walk_paths(paths, params, jump=on_jump, step_end=on_step)
    bad = ~np.all(np.isfinite(paths.bond) & (paths.bond > 0), axis=1)
    paths.overflow = bad
    if bad.any():
        warnings.warn(f"{int(bad.sum())} path(s) overflowed; see PathSet.overflow")
    return paths


def walk_paths(paths: PathSet, params: ModelParams, piece: Callable | None = None,
               jump: Callable | None = None, step_end: Callable | None = None) -> None:
    """Replay the bond dynamics piece by piece, splitting steps at defaults.

    Callbacks
    ---------
    piece(t, dt, dW, state, spot, idx, node)
        Called at the start of each continuous piece; ``node`` holds the
        coefficients frozen over the piece.
    jump(t, firm, state_before, spot_before, idx)
        Called at a default, before the bond jumps.  Firms are "A" or "B";
        a single call covers all paths in ``idx`` defaulting with that firm.
    step_end(k, spot, state)
        Called with grid index ``k`` after the step ending at ``times[k]``.
    """
    times = paths.times
    n = paths.n_paths
    logD = np.full(n, math.log(paths.d0))
    state = np.zeros(n, dtype=np.intp)
    everyone = np.arange(n)
    if step_end is not None:
        step_end(0, np.exp(logD), state)

    def advance(t, dt, dW, idx):
        node = params.coefs(t, state[idx])
        if piece is not None:
            piece(t, dt, dW, state[idx], np.exp(logD[idx]), idx, node)
        drift = node.mu - 0.5 * node.sigma ** 2 - node.sigmaA * node.lambdaA - node.sigmaB * node.lambdaB
        logD[idx] += drift * dt + node.sigma * dW

    def default(t, firm_is_A, idx):
        for firm, sel in (("A", firm_is_A), ("B", ~firm_is_A)):
            if not sel.any():
                continue
            sub = idx[sel]
            tt = t[sel]
            node = params.coefs(tt, state[sub])
            if jump is not None:
                jump(tt, firm, state[sub].copy(), np.exp(logD[sub]), sub)
            size = node.sigmaA if firm == "A" else node.sigmaB
            logD[sub] += np.log1p(size)
            state[sub] |= 1 if firm == "A" else 2

    for k in range(times.size - 1):
        t0, t1 = times[k], times[k + 1]
        dWk = paths.dW[:, k]
        inA = (paths.tauA > t0) & (paths.tauA <= t1)
        inB = (paths.tauB > t0) & (paths.tauB <= t1)
        ev = inA | inB
        if not ev.any():
            advance(t0, t1 - t0, dWk, everyone)
        else:
            tA = np.where(inA, paths.tauA, np.inf)
            tB = np.where(inB, paths.tauB, np.inf)
            a_first = tA < tB
            e1 = np.where(ev, np.minimum(tA, tB), t1)
            w1 = np.where(ev, np.where(a_first, paths.w_to_A, paths.w_to_B), dWk)
            advance(t0, e1 - t0, w1, everyone)
            S = np.flatnonzero(ev)
            default(e1[S], a_first[S], S)
            both = (inA & inB)[S]
            e2 = np.where(both, np.maximum(tA[S], tB[S]), t1)
            w2 = np.where(both, np.where(a_first[S], paths.w_to_B[S], paths.w_to_A[S]), dWk[S])
            advance(e1[S], e2 - e1[S], w2 - w1[S], S)
            if both.any():
                S2 = S[both]
                default(e2[both], ~a_first[S2], S2)
                advance(e2[both], t1 - e2[both], dWk[S2] - w2[both], S2)
        if step_end is not None:
            step_end(k + 1, np.exp(logD), state)


def claim_payoff(claim: DefaultableClaim, path: MarketPath | PathSet):
    """Payoff at T; recoveries are read at the pre-default bond value."""
    T = path.horizon if isinstance(path, MarketPath) else path.T
    bond_T = path.bond[-1] if isinstance(path, MarketPath) else path.bond[:, -1]
    tauA, tauB = np.asarray(path.tauA), np.asarray(path.tauB)
    preA, preB = np.asarray(path.spot_pre_A), np.asarray(path.spot_pre_B)
    out = np.zeros(np.shape(tauA))
    if claim.XA is not None:
        out = out + np.where(tauA > T, claim.XA(bond_T), 0.0)
    if claim.XB is not None:
        out = out + np.where(tauB > T, claim.XB(bond_T), 0.0)
    if claim.ZA is not None:
        out = out + np.where(tauA <= T, claim.ZA(np.where(tauA <= T, preA, 1.0)), 0.0)
    if claim.ZB is not None:
        out = out + np.where(tauB <= T, claim.ZB(np.where(tauB <= T, preB, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def _as_pathset(path) -> PathSet:
    if isinstance(path, PathSet):
        return path
    one = lambda v: np.array([v])  # noqa: E731
    return PathSet(
        times=path.time_grid, dW=path.brownian_increments[None], bond=path.bond[None],
        tauA=one(path.tauA), tauB=one(path.tauB), w_to_A=one(path.w_to_A),
        w_to_B=one(path.w_to_B), spot_pre_A=one(path.spot_pre_A),
        spot_pre_B=one(path.spot_pre_B), state=path.regime_index[None],
        d0=float(path.bond[0]), seed=-1, first_id=path.path_id,
    )


def simulate_wealth(paths: PathSet | MarketPath, params: ModelParams, strategy: Callable,
                    x0: float, record: Callable | None = None) -> np.ndarray:
    """Euler scheme for ``dX = pi [mu dt + sigma dW + sigmaA dM^A + sigmaB dM^B]``.

    ``strategy(t, wealth, spot, state, info)`` returns the money held in the
    bond.  It is re-evaluated at the start of every piece, so the jump at a
    default uses the position chosen before it.  Returns wealth on the time
    grid, shape ``(n_paths, n_steps + 1)``.
    """
    ps = _as_pathset(paths)
    n = ps.n_paths
    X = np.full(n, float(x0))
    pos = np.zeros(n)
    out = np.empty((n, ps.times.size))

    def on_piece(t, dt, dW, state, spot, idx, node):
        pi = np.broadcast_to(np.asarray(strategy(t, X[idx], spot, state, ps.info(idx)), dtype=float),
                             state.shape)
        pos[idx] = pi
        X[idx] += pi * ((node.mu - node.sigmaA * node.lambdaA - node.sigmaB * node.lambdaB) * dt
                        + node.sigma * dW)

    def on_jump(t, firm, state_before, spot_before, idx):
        node = params.coefs(t, state_before)
        X[idx] += pos[idx] * (node.sigmaA if firm == "A" else node.sigmaB)

    def on_step(k, spot, state):
        out[:, k] = X
        if record is not None:
            record(k, X, spot, state, ps)

    walk_paths(ps, params, piece=on_piece, jump=on_jump, step_end=on_step)
    return out[0] if isinstance(paths, MarketPath) else out


def paths_to_csv(paths: PathSet, stream: io.TextIOBase | None = None) -> str:
    """CSV with columns path_id, step, t, dW, bond, hA, hB (dW of the step ending at t)."""
    buf = stream if stream is not None else io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "step", "t", "dW", "bond", "hA", "hB"])
    for i in range(paths.n_paths):
        pid = paths.first_id + i
        for k in range(paths.times.size):
            dw = paths.dW[i, k - 1] if k > 0 else 0.0
            s = int(paths.state[i, k])
            w.writerow([pid, k, repr(float(paths.times[k])), repr(float(dw)),
                        repr(float(paths.bond[i, k])), s & 1, s >> 1])
    return buf.getvalue() if stream is None else ""


def tau_serialized(tau: float, T: float) -> float:
    """Non-occurring defaults are written as 2T."""
    return float(tau) if math.isfinite(tau) else 2.0 * T
