"""Synthetic slow-fast benchmark for the implicit coarse stepper.

A three-dimensional system with one slow variable and two linearly
decaying fast variables, with tunable time-scale ratio epsilon and fast
decay constant.  Lifting places points a fixed offset away from the slow
manifold and the restriction mixes a fast component into the measured
coordinate, so the raw lift-evolve-restrict map is deliberately biased.
The implicit stepper must still converge to the slow flow exponentially
in the healing time, at a rate set by the slowest fast decay and
independent of epsilon and of the lifting offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dp45 import IntegratorSettings, integrate_to

__all__ = [
    "ToySystem",
    "toy_rhs",
    "toy_lift",
    "toy_restrict",
    "toy_implicit_step",
    "toy_reference_flow",
    "convergence_scan",
    "ScanEntry",
    "ScanResult",
]

TOY_INTEGRATOR = IntegratorSettings(
    abs_tol=1e-13, rel_tol=1e-13, initial_step=1e-3, max_step=1.0
)
TOY_NEWTON_TOL = 1e-12
TOY_FD_OFFSET = 1e-6
ERROR_FLOOR = 1e-13


@dataclass(frozen=True)
class ToySystem:
    """Benchmark parameters: time-scale ratio epsilon, fast decay constant,
    off-manifold lifting offsets (c1, c2) and the fast-variable weight in
    the restriction."""

    epsilon: float = 0.01
    fast_rate: float = 1.0
    lift_offsets: tuple[float, float] = (0.3, -0.2)
    restriction_mix: float = 0.1

    def __post_init__(self) -> None:
        # epsilon = 0 is the frozen singular limit, useful in tests
        if not 0.0 <= self.epsilon <= 0.1:
            raise ValueError("epsilon must be in [0, 0.1]")
        if self.fast_rate <= 0:
            raise ValueError("fast_rate must be positive")


def toy_rhs(u: np.ndarray, sys: ToySystem) -> np.ndarray:
    """Slow cubic drive with two fast variables relaxing onto x^2 and sin x."""
    x, y1, y2 = u
    return np.array(
        [
            sys.epsilon * (x - x**3 + y1),
            -sys.fast_rate * (y1 - x**2),
            -2.0 * sys.fast_rate * (y2 - math.sin(x)),
        ]
    )


def toy_lift(x: float, sys: ToySystem) -> np.ndarray:
    """Microscopic point for coarse value x, displaced off the critical
    manifold by the configured offsets."""
    c1, c2 = sys.lift_offsets
    return np.array([x, x**2 + c1, math.sin(x) + c2])


def toy_restrict(u: np.ndarray, sys: ToySystem) -> float:
    """Coarse measurement mixing the first fast variable into the slow one."""
    return float(u[0] + sys.restriction_mix * u[1])


def _healed(
    x: float, sys: ToySystem, times: Sequence[float], integ: IntegratorSettings
) -> list[float]:
    out = integrate_to(lambda u: toy_rhs(u, sys), toy_lift(x, sys), times, integ)
    return [toy_restrict(u, sys) for u in out]


def toy_implicit_step(
    x: float,
    delta: float,
    sys: ToySystem,
    t_skip: float,
    *,
    integ: IntegratorSettings = TOY_INTEGRATOR,
    newton_tol: float = TOY_NEWTON_TOL,
) -> float:
    """Implicit coarse step for the benchmark: solve for y whose healed
    restriction matches the healed-and-advanced restriction of x."""
    if delta == 0.0:
        return x
    (target,) = _healed(x, sys, [t_skip + delta], integ)
    y = x
    for _ in range(30):
        (fy,) = _healed(y, sys, [t_skip], integ)
        r = fy - target
        if abs(r) <= newton_tol:
            return y
        (fy2,) = _healed(y + TOY_FD_OFFSET, sys, [t_skip], integ)
        dr = (fy2 - fy) / TOY_FD_OFFSET
        y -= r / dr
    raise RuntimeError(f"benchmark implicit step did not converge at x={x:g}")


def toy_reference_flow(
    x: float,
    delta: float,
    sys: ToySystem,
    t_skip_ref: float | None = None,
    *,
    integ: IntegratorSettings = TOY_INTEGRATOR,
) -> float:
    """Slow-flow reference value: the implicit step with a healing time so
    long that the transversal contamination sits below round-off."""
    if t_skip_ref is None:
        t_skip_ref = 50.0 / sys.fast_rate
    if t_skip_ref < 40.0 / sys.fast_rate:
        raise ValueError("reference healing time must be at least 40/fast_rate")
    return toy_implicit_step(x, delta, sys, t_skip_ref, integ=integ)


@dataclass(frozen=True)
class ScanEntry:
    t_skip: float
    error: float


@dataclass(frozen=True)
class ScanResult:
    """Healing-time scan: per-t_skip error against the slow-flow reference
    and the least-squares slope of log(error) over t_skip (entries at the
    measurement floor are excluded from the fit)."""

    entries: tuple[ScanEntry, ...]
    slope: float
    reference: float

    def errors(self) -> np.ndarray:
        return np.array([e.error for e in self.entries])


def convergence_scan(
    x: float,
    delta: float,
    sys: ToySystem,
    tskip_list: Sequence[float],
    *,
    t_skip_ref: float | None = None,
) -> ScanResult:
    """Errors of the implicit step against the slow-flow reference for each
    healing time, with the fitted exponential decay rate."""
    ref = toy_reference_flow(x, delta, sys, t_skip_ref)
    entries = []
    for t_skip in tskip_list:
        y = toy_implicit_step(x, delta, sys, t_skip)
        entries.append(ScanEntry(t_skip=t_skip, error=abs(y - ref)))
    ts = np.array([e.t_skip for e in entries])
    errs = np.array([e.error for e in entries])
    mask = errs > ERROR_FLOOR
    if np.count_nonzero(mask) >= 2:
        slope = float(np.polyfit(ts[mask], np.log(errs[mask]), 1)[0])
    else:
        slope = math.nan
    return ScanResult(entries=tuple(entries), slope=slope, reference=ref)
