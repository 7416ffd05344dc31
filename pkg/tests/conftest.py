"""Shared fixtures.

The settled reference states and the main continued branch are expensive
(minutes of microscopic integration), so they are session-scoped and
shared between the pipeline tests and the acceptance suite.  Setting
EQFREE_TEST_CACHE=1 additionally caches them on disk between runs (a
development convenience; leave it unset for a clean verification run).
"""

from __future__ import annotations

import os
import pickle
from hashlib import sha256
from pathlib import Path

import pytest

from eqfree import (
    CoarseSettings,
    IntegratorSettings,
    LiftContext,
    ModelParams,
    continue_branch,
    equilibrium_seed,
    integrate_path,
    perturbed_state,
)

CACHE_DIR = Path(__file__).parent / ".cache"


def _disk_cache(key: str, builder):
    if os.environ.get("EQFREE_TEST_CACHE") != "1":
        return builder()
    CACHE_DIR.mkdir(exist_ok=True)
    path = CACHE_DIR / (sha256(key.encode()).hexdigest()[:24] + ".pkl")
    if path.exists():
        with path.open("rb") as fh:
            return pickle.load(fh)
    value = builder()
    with path.open("wb") as fh:
        pickle.dump(value, fh)
    return value


@pytest.fixture(scope="session")
def params12() -> ModelParams:
    return ModelParams(h=1.2)


@pytest.fixture(scope="session")
def coarse() -> CoarseSettings:
    return CoarseSettings()


@pytest.fixture(scope="session")
def integ() -> IntegratorSettings:
    return IntegratorSettings()


def _settle(v0: float, params: ModelParams, integ: IntegratorSettings, t: float = 5e4):
    par = params.replace(v0=v0)
    states, _ = integrate_path(perturbed_state(par), par, [t], integ)
    return states[0]


@pytest.fixture(scope="session")
def settled91(params12, integ):
    """Jam state settled for 5e4 time units at v0=0.91, h=1.2."""
    return _disk_cache("settled91", lambda: _settle(0.91, params12, integ))


@pytest.fixture(scope="session")
def settled90(params12, integ):
    return _disk_cache("settled90", lambda: _settle(0.90, params12, integ))


@pytest.fixture(scope="session")
def jam_ctx(settled91, params12) -> LiftContext:
    return LiftContext.from_reference(settled91, params12.replace(v0=0.91))


@pytest.fixture(scope="session")
def eq91(settled91, params12, coarse):
    """Converged seed equilibrium at v0=0.91 (point, post-update context)."""
    return _disk_cache(
        "eq91",
        lambda: equilibrium_seed(0.91, params12, coarse, start=settled91),
    )


@pytest.fixture(scope="session")
def branch12(settled91, settled90, params12, coarse):
    """Full h=1.2 branch at standard settings: seeds at v0=0.91/0.90,
    arclength step 1e-3, traversed around the fold down to sigma < 5e-3."""

    def build():
        seed0, _ = equilibrium_seed(0.91, params12, coarse, start=settled91)
        seed1, ctx1 = equilibrium_seed(0.90, params12, coarse, start=settled90)
        return continue_branch(
            seed0, seed1, +1, 600, ctx1, params12, coarse, s=1e-3, sigma_stop=5e-3
        )

    branch = _disk_cache("branch12_s1e-3", build)
    assert not branch.truncated
    return branch
