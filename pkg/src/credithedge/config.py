"""JSON run configuration.

A config is one JSON document::

    {
      "schema_version": 1,
      "model": {"T": 1.0, "d0": 1.0, "ordered_defaults": true,
                "states": {"00": {"mu": 0.06, "sigma": 0.25, ...}, "10": {...}, ...}},
      "claim": {"form": "restricted", "g": {...}, "f": {...}, "bound": 1.0},
      "risk_aversion": 1.0,
      "x0": 0.3,
      "grids": {"n_time": 200, "n_space": 301, "log_spot_halfwidth": null, "l1_grid": null},
      "mc": {"n_paths": 20000, "seed": 7, "n_steps": 200},
      "tolerances": {"foc": 1e-8, "picard": 1e-8, "convergence": 1e-3, "tree": 1e-2},
      "verify": {"n_bumps": 10, "bump_scale": 0.1, "n_sigmas": 3.0}
    }

Coefficients are a number (constant) or a list of ascending polynomial
coefficients in t.  Missing states default to all-zero coefficients.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .grid import GridSpec
from .model import DefaultableClaim, ModelParams, ValidationError, validate_params

__all__ = ["SCHEMA_VERSION", "RunConfig", "load_config"]

SCHEMA_VERSION = 1

_GRID_DEFAULTS = {"n_time": 200, "n_space": 301, "log_spot_halfwidth": None, "l1_grid": None}
_MC_DEFAULTS = {"n_paths": 20000, "seed": 0, "n_steps": None}
_TOL_DEFAULTS = {"foc": 1e-8, "picard": 1e-8, "convergence": 1e-3, "tree": 1e-2}
_VERIFY_DEFAULTS = {"n_bumps": 10, "bump_scale": 0.1, "n_sigmas": 3.0, "statistical": True}


def _merge(defaults: dict, given: dict | None, block: str) -> dict:
    given = dict(given or {})
    unknown = set(given) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown key(s) in {block}: {sorted(unknown)}")
    return {**defaults, **given}


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    claim: DefaultableClaim
    d0: float = 1.0
    delta: float = 1.0
    x0: float = 0.0
    grids: dict = field(default_factory=lambda: dict(_GRID_DEFAULTS))
    mc: dict = field(default_factory=lambda: dict(_MC_DEFAULTS))
    tolerances: dict = field(default_factory=lambda: dict(_TOL_DEFAULTS))
    verify: dict = field(default_factory=lambda: dict(_VERIFY_DEFAULTS))

    @property
    def grid_spec(self) -> GridSpec:
        g = self.grids
        return GridSpec(int(g["n_time"]), int(g["n_space"]), g["log_spot_halfwidth"])

    @property
    def n_steps(self) -> int:
        return int(self.mc["n_steps"] or self.grids["n_time"])

    @property
    def n_paths(self) -> int:
        return int(self.mc["n_paths"])

    @property
    def seed(self) -> int:
        return int(self.mc["seed"])

    def with_overrides(self, seed: int | None = None, paths: int | None = None) -> "RunConfig":
        mc = dict(self.mc)
        if seed is not None:
            mc["seed"] = int(seed)
        if paths is not None:
            mc["n_paths"] = int(paths)
        return replace(self, mc=mc)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "schema_version" not in d:
            raise ValidationError("config is missing the mandatory schema_version field")
        if d["schema_version"] != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema_version {d['schema_version']!r}")
        if "model" not in d:
            raise ValidationError("config is missing the model block")
        model = dict(d["model"])
        d0 = float(model.pop("d0", 1.0))
        if not d0 > 0:
            raise ValidationError("initial bond value d0 must be positive")
        params = validate_params(ModelParams.from_dict(model))
        claim = DefaultableClaim.from_dict(d.get("claim", {"g": 0.0, "f": 0.0}))
        delta = float(d.get("risk_aversion", 1.0))
        if not delta > 0:
            raise ValidationError("risk_aversion must be positive")
        tol = _merge(_TOL_DEFAULTS, d.get("tolerances"), "tolerances")
        if any(not float(v) > 0 for v in tol.values()):
            raise ValidationError("tolerances must be positive")
        cfg = cls(params, claim, d0, delta, float(d.get("x0", 0.0)),
                  _merge(_GRID_DEFAULTS, d.get("grids"), "grids"),
                  _merge(_MC_DEFAULTS, d.get("mc"), "mc"), tol,
                  _merge(_VERIFY_DEFAULTS, d.get("verify"), "verify"))
        cfg.grid_spec  # validates grid sizes
        if cfg.n_paths < 0 or cfg.n_steps < 1:
            raise ValidationError("mc.n_paths must be >= 0 and n_steps >= 1")
        return cfg

    def to_dict(self) -> dict:
        model = self.params.to_dict()
        model["d0"] = self.d0
        return {
            "schema_version": SCHEMA_VERSION,
            "model": model,
            "claim": self.claim.to_dict(),
            "risk_aversion": self.delta,
            "x0": self.x0,
            "grids": dict(self.grids),
            "mc": dict(self.mc),
            "tolerances": dict(self.tolerances),
            "verify": dict(self.verify),
        }

    def dumps(self) -> str:
        # json writes floats with repr, the shortest round-trip form
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    return RunConfig.from_dict(raw)
