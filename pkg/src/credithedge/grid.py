"""Log-spot grids and the tridiagonal time stepper shared by the PDE solvers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .model import ModelParams, ValidationError

__all__ = ["GridSpec", "LogGrid", "make_grid", "interp_extrap", "d_ds", "TridiagonalStepper"]


@dataclass(frozen=True)
class GridSpec:
    """Discretization settings.

    Parameters
    ----------
    n_time, n_space : int
        Number of time steps and of log-spot nodes.
    halfwidth : float or None
        Half-width of the log-spot window around ``ln d0``.  ``None`` picks
        ``n_sd`` terminal standard deviations plus the largest jump.
    theta : float
        Time-stepping weight (1 implicit Euler, 0.5 Crank-Nicolson).
    rannacher : int
        Number of leading implicit Euler steps when ``theta < 1``.
    """

    n_time: int = 200
    n_space: int = 301
    halfwidth: float | None = None
    n_sd: float = 6.0
    theta: float = 0.5
    rannacher: int = 2

    def __post_init__(self):
        if self.n_time < 1 or self.n_space < 5:
            raise ValidationError("grid needs n_time >= 1 and n_space >= 5")
        if self.halfwidth is not None and not self.halfwidth > 0:
            raise ValidationError("log_spot_halfwidth must be positive")

    def refined(self) -> "GridSpec":
        """Half the time step and half the spatial step on the same window."""
        return GridSpec(2 * self.n_time, 2 * self.n_space - 1, self.halfwidth, self.n_sd,
                        self.theta, self.rannacher)

    def to_dict(self) -> dict:
        return {"n_time": self.n_time, "n_space": self.n_space,
                "log_spot_halfwidth": self.halfwidth, "n_sd": self.n_sd,
                "theta": self.theta, "rannacher": self.rannacher}


@dataclass(frozen=True)
class LogGrid:
    times: np.ndarray
    s: np.ndarray
    center: int

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def x(self) -> np.ndarray:
        return np.exp(self.s)

    @property
    def n_space(self) -> int:
        return self.s.size


def _max_jump(params: ModelParams) -> float:
    out = 0.0
    ts = np.linspace(0.0, params.T, 33)
    for st, coef in params.states.items():
        for name in ("sigmaA", "sigmaB"):
            vals = np.polynomial.polynomial.polyval(ts, np.asarray(getattr(coef, name)))
            vals = np.maximum(vals, -1 + 1e-12)
            out = max(out, float(np.max(np.abs(np.log1p(vals)))))
    return out


def make_grid(params: ModelParams, spec: GridSpec, d0: float) -> LogGrid:
    """Uniform grid centred on ``ln d0``; the centre is always a node."""
    half = spec.halfwidth
    if half is None:
        half = spec.n_sd * max(params.sigma_max(), 0.05) * math.sqrt(params.T) + _max_jump(params)
    n = spec.n_space if spec.n_space % 2 else spec.n_space + 1
    s = math.log(d0) + np.linspace(-half, half, n)
    return LogGrid(np.linspace(0.0, params.T, spec.n_time + 1), s, n // 2)


def interp_extrap(s_query, s_grid: np.ndarray, values: np.ndarray):
    """Linear interpolation on a uniform grid, extrapolated linearly past the ends."""
    q = np.asarray(s_query, dtype=float)
    h = s_grid[1] - s_grid[0]
    pos = (q - s_grid[0]) / h
    i = np.clip(np.floor(pos).astype(np.intp), 0, s_grid.size - 2)
    w = pos - i
    return values[..., i] * (1.0 - w) + values[..., i + 1] * w


def d_ds(values: np.ndarray, ds: float) -> np.ndarray:
    """First derivative along the last axis: central inside, one-sided at the ends."""
    out = np.empty_like(values)
    out[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2 * ds)
    out[..., 0] = (values[..., 1] - values[..., 0]) / ds
    out[..., -1] = (values[..., -1] - values[..., -2]) / ds
    return out


class TridiagonalStepper:
    """One backward step of ``u_t + D u_ss + A u_s + r u + q = 0``.

    ``D`` is a scalar, ``A``, ``r`` and ``q`` may vary in space.  Interior
    rows use central differences; the two boundary rows drop the diffusion
    and take a one-sided first difference, i.e. zero curvature at the edge.
    """

    def __init__(self, grid: LogGrid):
        self.grid = grid
        self.ds = grid.ds

    def check_peclet(self, D: float, A, where: str = "") -> None:
        A = np.asarray(A, dtype=float)
        if D <= 0:
            return
        worst = float(np.max(np.abs(A))) * self.ds / (2.0 * D)
        if worst > 1.0 + 1e-12:
            raise ValidationError(
                f"grid too coarse{where}: cell Peclet number {worst:.3g} > 1; "
                f"increase n_space or shrink the log-spot window"
            )

    def bands(self, D: float, A, r):
        """Bands (lower, diag, upper) of the spatial operator ``L = D d2 + A d1 + r``."""
        n = self.grid.n_space
        ds = self.ds
        A = np.broadcast_to(np.asarray(A, dtype=float), (n,))
        r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
        lo = np.empty(n)
        di = np.empty(n)
        up = np.empty(n)
        lo[1:-1] = D / ds ** 2 - A[1:-1] / (2 * ds)
        up[1:-1] = D / ds ** 2 + A[1:-1] / (2 * ds)
        di[1:-1] = -2 * D / ds ** 2 + r[1:-1]
        # boundary rows: first-order one-sided derivative pointing into the domain
        lo[0] = 0.0
        di[0] = -A[0] / ds + r[0]
        up[0] = A[0] / ds
        up[-1] = 0.0
        di[-1] = A[-1] / ds + r[-1]
        lo[-1] = -A[-1] / ds
        return lo, di, up

    @staticmethod
    def apply(bands, u):
        lo, di, up = bands
        out = di * u
        out[1:] += lo[1:] * u[:-1]
        out[:-1] += up[:-1] * u[1:]
        return out

    def step(self, u_next, dt, theta, bands_now, bands_next, q_now, q_next):
        """Return ``u`` at the earlier time level."""
        lo, di, up = bands_now
        rhs = u_next + dt * ((1 - theta) * self.apply(bands_next, u_next)
                             + theta * np.asarray(q_now) + (1 - theta) * np.asarray(q_next))
        ab = np.zeros((3, u_next.size))
        ab[0, 1:] = -dt * theta * up[:-1]
        ab[1] = 1.0 - dt * theta * di
        ab[2, :-1] = -dt * theta * lo[1:]
        return solve_banded((1, 1), ab, rhs, check_finite=False)

    def theta_for(self, spec: GridSpec, k_from_end: int) -> float:
        """Rannacher start: implicit for the first steps after the terminal slice."""
        return 1.0 if k_from_end < spec.rannacher else spec.theta
