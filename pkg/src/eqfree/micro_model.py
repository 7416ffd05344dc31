"""Microscopic optimal-velocity model: N cars following each other on a ring road.

Each car accelerates toward a preferred speed that depends on its headway
(the gap to the car in front).  The second-order car dynamics is stored as
first-order positions/velocities.  Positions are kept unwrapped so
headways never jump across the periodic boundary; the wraparound headway
of the last car closes the ring.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dp45 import IntegrationError, IntegratorSettings, check_times

__all__ = [
    "ModelParams",
    "MicroState",
    "IntegratorSettings",
    "IntegrationError",
    "IntegrationInfo",
    "ov_velocity",
    "rhs",
    "headways",
    "uniform_flow_state",
    "perturbed_state",
    "integrate",
    "integrate_path",
]


@dataclass(frozen=True)
class ModelParams:
    """Driver/road parameters.

    tau is the inertia of driver and car, v0 the velocity scale of the
    preferred-speed curve, h its inflection point (safety distance), L the
    ring length, N the number of cars and mu the amplitude of the sine
    perturbation used for near-uniform initial conditions.
    """

    tau: float = 1.0 / 1.7
    v0: float = 0.9
    h: float = 1.2
    L: float = 60.0
    N: int = 60
    mu: float = 0.1

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.v0 <= 0:
            raise ValueError("v0 must be positive")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")

    @property
    def tau_inv(self) -> float:
        return 1.0 / self.tau

    @property
    def mean_headway(self) -> float:
        return self.L / self.N

    def replace(self, **kwargs) -> "ModelParams":
        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class MicroState:
    """Positions and velocities of the N cars (unwrapped positions)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n_cars(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class IntegrationInfo:
    """Per-run diagnostics: accepted+rejected step count and the smallest
    headway seen at any accepted step (non-positive means a car overtook)."""

    steps: int
    min_headway: float

    @property
    def overtaking(self) -> bool:
        return self.min_headway <= 0.0


def ov_velocity(dx, params: ModelParams):
    """Preferred speed for headway dx: v0*(tanh(dx - h) + tanh(h)).

    Strictly increasing, zero at dx=0, saturating at v0*(1 + tanh(h)).
    Accepts scalars or arrays.
    """
    return params.v0 * (np.tanh(dx - params.h) + np.tanh(params.h))


def headways(state: MicroState, params: ModelParams) -> np.ndarray:
    """Gaps to the car in front; the last car wraps around the ring."""
    x = state.x
    d = np.empty_like(x)
    d[:-1] = x[1:] - x[:-1]
    d[-1] = x[0] + params.L - x[-1]
    return d


def _check_dims(state: MicroState, params: ModelParams) -> None:
    if state.n_cars != params.N:
        raise ValueError(
            f"state has {state.n_cars} cars but params.N = {params.N}"
        )


def rhs(state: MicroState, params: ModelParams) -> MicroState:
    """Time derivative of the car system.

    Positions change at the current velocities; velocities relax at rate
    1/tau toward the preferred speed for the current headway.
    """
    _check_dims(state, params)
    d = headways(state, params)
    return MicroState(
        x=state.y.copy(),
        y=params.tau_inv * (ov_velocity(d, params) - state.y),
    )


def uniform_flow_state(params: ModelParams) -> MicroState:
    """Equally spaced cars, all moving at the preferred speed for gap L/N."""
    n = np.arange(params.N, dtype=float)
    x = n * params.mean_headway
    y = np.full(params.N, float(ov_velocity(params.mean_headway, params)))
    return MicroState(x=x, y=y)


def perturbed_state(params: ModelParams) -> MicroState:
    """Uniform flow with a single-wavelength sine perturbation of size mu
    added to the positions."""
    n = np.arange(1, params.N + 1, dtype=float)
    x = (n - 1.0) * params.mean_headway + params.mu * np.sin(2.0 * np.pi * n / params.N)
    y = np.full(params.N, float(ov_velocity(params.mean_headway, params)))
    return MicroState(x=x, y=y)


def integrate_path(
    state: MicroState,
    params: ModelParams,
    times,
    settings: IntegratorSettings,
) -> tuple[list[MicroState], IntegrationInfo]:
    """Solve the car ODE from t=0, returning the state at each requested time.

    Times must be nondecreasing and nonnegative; each is hit exactly by
    clamping the final step.  Raises IntegrationError on step-budget
    exhaustion or step-size underflow.
    """
    _check_dims(state, params)
    targets = check_times(times)
    status, steps, t_fail, min_hw, X, Y = _kernels.integrate_ov(
        np.ascontiguousarray(state.x, dtype=float),
        np.ascontiguousarray(state.y, dtype=float),
        params.tau_inv,
        params.v0,
        params.h,
        params.L,
        targets,
        settings.abs_tol,
        settings.rel_tol,
        settings.initial_step,
        settings.max_step,
        settings.max_steps,
    )
    if status == 1:
        raise IntegrationError("max_steps", t_fail, steps)
    if status == 2:
        raise IntegrationError("step_underflow", t_fail, steps)
    states = [MicroState(x=X[j].copy(), y=Y[j].copy()) for j in range(targets.size)]
    return states, IntegrationInfo(steps=steps, min_headway=min_hw)


def integrate(
    state: MicroState,
    params: ModelParams,
    t: float,
    settings: IntegratorSettings,
) -> MicroState:
    """State of the car system after time t (adaptive 4/5 pair, exact endpoint)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    states, _ = integrate_path(state, params, [t], settings)
    return states[0]
