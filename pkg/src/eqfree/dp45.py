"""Adaptive embedded Runge-Kutta 4(5) integration (Dormand-Prince pair).

The module holds the Butcher tableau shared with the compiled ring-road
kernel and a generic pure-numpy driver used for the low-dimensional
benchmark systems.  Step control is proportional: the step size is scaled
by ``0.9 * err**(-1/5)``, clamped to [0.2, 5] per step, and the final step
before a requested output time is shortened to land on it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Dormand-Prince 5(4) pair: stage weights, 5th-order propagation weights,
# and the difference between the 5th- and embedded 4th-order weights.
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
ORDER_EXPONENT = -0.2  # 1/(order of the embedded error estimate)


class IntegrationError(RuntimeError):
    """Adaptive integration failed; ``kind`` is 'max_steps' or 'step_underflow'."""

    def __init__(self, kind: str, t: float, steps: int):
        self.kind = kind
        self.t = t
        self.steps = steps
        super().__init__(f"integration failed ({kind}) at t={t:g} after {steps} steps")


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances and step bounds for the embedded 4(5) integrator."""

    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    initial_step: float = 1e-2
    max_step: float = 100.0
    max_steps: int = 50_000_000

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.initial_step <= 0 or self.max_step <= 0:
            raise ValueError("step sizes must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


def check_times(times: Sequence[float]) -> np.ndarray:
    """Validate a nondecreasing array of nonnegative output times."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("need at least one output time")
    if not np.all(np.isfinite(t)) or t[0] < 0 or np.any(np.diff(t) < 0):
        raise ValueError("output times must be finite, nonnegative and nondecreasing")
    return t


def integrate_to(
    f: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    times: Sequence[float],
    settings: IntegratorSettings,
) -> np.ndarray:
    """Integrate the autonomous system ``y' = f(y)`` from t=0.

    Returns an array of shape ``(len(times), len(y0))`` with the solution at
    each requested time, hit exactly by step clamping.
    """
    targets = check_times(times)
    y = np.array(y0, dtype=float)
    t = 0.0
    hs = settings.initial_step
    steps = 0
    out = np.empty((targets.size, y.size))
    k1 = f(y)
    for j, t_end in enumerate(targets):
        while t < t_end:
            if steps >= settings.max_steps:
                raise IntegrationError("max_steps", t, steps)
            h = min(hs, t_end - t)
            if h < 1e-14 * max(abs(t), 1.0):
                raise IntegrationError("step_underflow", t, steps)
            k2 = f(y + h * (A21 * k1))
            k3 = f(y + h * (A31 * k1 + A32 * k2))
            k4 = f(y + h * (A41 * k1 + A42 * k2 + A43 * k3))
            k5 = f(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
            k6 = f(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
            y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
            k7 = f(y_new)
            err_vec = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
            scale = settings.abs_tol + settings.rel_tol * np.maximum(
                np.abs(y), np.abs(y_new)
            )
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            steps += 1
            if err <= 1.0:
                t += h
                y = y_new
                k1 = k7  # first-same-as-last
                fac = FAC_MAX if err == 0.0 else min(
                    FAC_MAX, max(FAC_MIN, SAFETY * err**ORDER_EXPONENT)
                )
                hs = min(h * fac, settings.max_step)
            else:
                hs = h * max(FAC_MIN, SAFETY * err**ORDER_EXPONENT)
        out[j] = y
    return out
