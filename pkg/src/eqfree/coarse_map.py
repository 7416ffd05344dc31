"""Restriction, lifting, and the healed coarse map of the ring-road model.

The macroscopic variable is the sample standard deviation sigma of the
headways.  Lifting rescales the headway profile of a stored reference
state so that its restriction equals p*sigma, rebuilds positions by
cumulative sums starting at x[0]=0, and initializes velocities on the
preferred-speed curve.  All coarse quantities are measured after a
healing time t_skip so the microscopic state has relaxed toward the slow
manifold; the macroscopic right-hand side is the difference quotient of
healed restrictions over a burst of length delta.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .dp45 import IntegratorSettings
from .micro_model import (
    MicroState,
    ModelParams,
    headways,
    integrate_path,
    ov_velocity,
)

__all__ = [
    "LiftContext",
    "CoarseSettings",
    "BurstValues",
    "restrict",
    "lift",
    "coarse_trajectory",
    "healed_sigma",
    "macro_rhs",
    "evaluate_burst",
]


@dataclass(frozen=True)
class LiftContext:
    """Reference profile for lifting: a microscopic state, its restriction,
    and the lifting bias p (p=1 makes restrict(lift(sigma)) == sigma)."""

    reference: MicroState
    reference_sigma: float
    p: float = 1.0

    def __post_init__(self) -> None:
        if self.reference_sigma <= 0:
            raise ValueError("reference_sigma must be positive (flat profiles cannot be rescaled)")
        if self.p <= 0:
            raise ValueError("lifting bias p must be positive")

    @classmethod
    def from_reference(
        cls, state: MicroState, params: ModelParams, p: float = 1.0
    ) -> "LiftContext":
        """Build a context from a reference state, recomputing its restriction."""
        return cls(reference=state, reference_sigma=restrict(state, params), p=p)


@dataclass(frozen=True)
class CoarseSettings:
    """Knobs of the coarse-level machinery.

    t_skip is the healing time, delta the burst length of the macroscopic
    difference quotient, d_* the finite-difference offsets, and nu the
    Newton relaxation factor (nu=1 is a full step).
    """

    t_skip: float = 300.0
    delta: float = 2000.0
    d_sigma: float = 1e-3
    d_v0: float = 1e-3
    d_h: float = 1e-3
    newton_tol: float = 1e-7
    newton_max_iter: int = 20
    nu: float = 1.0
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)

    def __post_init__(self) -> None:
        if self.t_skip <= 0 or self.delta <= 0:
            raise ValueError("t_skip and delta must be positive")
        if min(self.d_sigma, self.d_v0, self.d_h) <= 0:
            raise ValueError("finite-difference offsets must be positive")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter <= 0:
            raise ValueError("newton_max_iter must be positive")
        if not 0 < self.nu <= 1:
            raise ValueError("nu must be in (0, 1]")

    def replace(self, **kwargs) -> "CoarseSettings":
        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class BurstValues:
    """Healed restrictions from one microscopic burst of length t_skip+delta.

    healed and shifted are the restrictions at t_skip and t_skip+delta;
    rate is their difference quotient (the macroscopic right-hand side).
    mid_state, the microscopic state at t_skip, is kept for reference-profile
    updates.
    """

    healed: float
    shifted: float
    rate: float
    mid_state: MicroState


def restrict(state: MicroState, params: ModelParams) -> float:
    """Sample standard deviation of the headways.

    The mean headway is L/N exactly (the headway sum telescopes to L), so
    the restriction vanishes iff all headways are equal.
    """
    d = headways(state, params)
    dev = d - params.mean_headway
    return float(np.sqrt(np.dot(dev, dev) / (params.N - 1)))


def lift(sigma: float, ctx: LiftContext, params: ModelParams) -> MicroState:
    """Microscopic state whose headway profile is the reference profile
    rescaled to restriction p*sigma.

    Positions are rebuilt by cumulative sums with x[0] = 0; velocities sit
    on the preferred-speed curve for the new headways.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    d_ref = headways(ctx.reference, params)
    mean = params.mean_headway
    d_new = (ctx.p * sigma / ctx.reference_sigma) * (d_ref - mean) + mean
    x = np.zeros(params.N)
    x[1:] = np.cumsum(d_new[:-1])
    y = ov_velocity(d_new, params)
    return MicroState(x=x, y=np.asarray(y, dtype=float))


def evaluate_burst(
    sigma: float,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
) -> BurstValues:
    """Lift sigma, run one burst of length t_skip+delta, and restrict at both
    checkpoints.  The t_skip value is a by-product of the same integration."""
    state0 = lift(sigma, ctx, params)
    states, _ = integrate_path(
        state0,
        params,
        [settings.t_skip, settings.t_skip + settings.delta],
        settings.integrator,
    )
    healed = restrict(states[0], params)
    shifted = restrict(states[1], params)
    return BurstValues(
        healed=healed,
        shifted=shifted,
        rate=(shifted - healed) / settings.delta,
        mid_state=states[0],
    )


def coarse_trajectory(
    sigma: float,
    ctx: LiftContext,
    params: ModelParams,
    t: float,
    settings: CoarseSettings,
) -> float:
    """Restriction of the evolved lifted state: lift sigma, run for time t,
    restrict."""
    state0 = lift(sigma, ctx, params)
    if t == 0:
        return restrict(state0, params)
    states, _ = integrate_path(state0, params, [t], settings.integrator)
    return restrict(states[0], params)


def healed_sigma(
    sigma: float, ctx: LiftContext, params: ModelParams, settings: CoarseSettings
) -> float:
    """Restriction after the healing time t_skip."""
    return coarse_trajectory(sigma, ctx, params, settings.t_skip, settings)


def macro_rhs(
    sigma: float, ctx: LiftContext, params: ModelParams, settings: CoarseSettings
) -> float:
    """Macroscopic right-hand side: difference quotient of the healed
    restrictions at t_skip+delta and t_skip over delta."""
    return evaluate_burst(sigma, ctx, params, settings).rate
