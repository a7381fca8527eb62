"""Shared instances and the acceptance summary printed at the end of a run."""
from __future__ import annotations

from pathlib import Path

import pytest

from credithedge.config import RunConfig, load_config
from credithedge.model import (
    CappedAffine,
    CappedCall,
    CappedPut,
    DefaultableClaim,
    ModelParams,
    validate_params,
)

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
SHIPPED = sorted(CONFIGS.glob("*.json"))

# criterion number -> (passed, one-line detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def shipped(name: str) -> RunConfig:
    return load_config(CONFIGS / f"{name}.json")


def flat_ordered_config(n_paths: int = 100_000, seed: int = 5) -> RunConfig:
    """Constant ordered-default market with a capped put and affine recovery."""
    params = validate_params(ModelParams.constant(
        mu=0.05, sigma=0.2, sigmaA=-0.4, sigmaB=-0.3, lambdaA=0.15, lambdaB=0.1, ordered_defaults=True))
    claim = DefaultableClaim.restricted(CappedPut(1.05, 0.5), CappedAffine(0.4, 0.0, 0.5, 0.0), 0.5)
    return RunConfig(params, claim, 1.0, 1.0, 0.1,
                     mc={"n_paths": n_paths, "seed": seed, "n_steps": None})


def hjb_instances() -> dict[str, RunConfig]:
    """Three constant-coefficient markets on which the HJB tier applies."""
    both = validate_params(ModelParams.constant(
        mu=0.05, sigma=0.2, sigmaA=-0.4, sigmaB=-0.3, lambdaA=0.1, lambdaB=0.05))
    call = DefaultableClaim.restricted(CappedCall(1.0, 0.5), 0.3)
    up = validate_params(ModelParams.constant(
        mu=0.03, sigma=0.25, sigmaA=0.2, sigmaB=-0.2, lambdaA=0.2, lambdaB=0.1))
    put = DefaultableClaim.restricted(CappedPut(1.1, 0.4), CappedAffine(0.3, 0.0, 0.4, 0.0))
    single = shipped("single_default")
    return {
        "two_firms_call": RunConfig(both, call, mc={"n_paths": 100_000, "seed": 3, "n_steps": None}),
        "two_firms_put": RunConfig(up, put, delta=0.5,
                                   mc={"n_paths": 100_000, "seed": 4, "n_steps": None}),
        "single_default": single.with_overrides(paths=100_000),
    }


@pytest.fixture(scope="session")
def acceptance_board():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
