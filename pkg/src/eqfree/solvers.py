"""Newton solving and coarse-level time stepping built on microscopic bursts.

Systems here are 1- to 3-dimensional, so Jacobians are dense
finite-difference matrices rebuilt every iteration.  The Newton update is
x <- x - nu * J^-1 r; a 1-norm condition estimate above 1e10 is treated
as a singular Jacobian.  The implicit coarse stepper advances the
macroscopic variable by matching healed restrictions of its argument and
result, which also powers projective (possibly backward) Euler steps and
the forward-backward error estimate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coarse_map import (
    BurstValues,
    CoarseSettings,
    LiftContext,
    evaluate_burst,
    lift,
    restrict,
)
from .micro_model import MicroState, ModelParams, integrate_path

__all__ = [
    "NewtonReport",
    "StencilDerivatives",
    "NewtonError",
    "SingularJacobianError",
    "TransversalityError",
    "newton_solve",
    "fd_first_order",
    "fd_second_order",
    "implicit_step",
    "ImplicitStepResult",
    "coarse_equilibrium",
    "multiplier",
    "match_restriction",
    "projective_euler_step",
    "ProjectiveStep",
    "forward_backward_error",
]

CONDITION_LIMIT = 1e10


class NewtonError(RuntimeError):
    """Newton iteration could not produce a converged solution."""


class SingularJacobianError(NewtonError):
    """Finite-difference Jacobian is numerically singular."""


class TransversalityError(RuntimeError):
    """Healed-map derivative too small: the restriction direction has lost
    transversality to the slow manifold."""


@dataclass(frozen=True)
class NewtonReport:
    """Outcome of a Newton solve.  converged implies the final residual
    max-norm is at or below the requested tolerance."""

    solution: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()


@dataclass(frozen=True)
class StencilDerivatives:
    """First and second derivatives from the 17-point one-sided/centered
    stencil (one-sided in sigma because sigma is nonnegative)."""

    f: float
    f_sigma: float
    f_v0: float
    f_h: float
    f_sigma_sigma: float
    f_v0_sigma: float
    f_h_sigma: float


def _pmap(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Map preserving order; thread-parallel when threads > 1 (the compiled
    integrator releases the GIL)."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as ex:
        return list(ex.map(fn, items))


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    x0,
    settings: CoarseSettings,
    *,
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
    fd_offsets=None,
) -> NewtonReport:
    """Damped Newton iteration on a small nonlinear system.

    The residual at the start point is checked before any Jacobian work, so
    a start value that is already a root costs a single evaluation.  Without
    an explicit ``jacobian``, forward differences with per-component
    ``fd_offsets`` (default ``settings.d_sigma``) are used.  Returns a
    non-converged report when the iteration budget runs out; raises
    SingularJacobianError if the Jacobian condition estimate exceeds 1e10.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n = x.size
    if fd_offsets is None:
        offsets = np.full(n, settings.d_sigma)
    else:
        offsets = np.broadcast_to(np.asarray(fd_offsets, dtype=float), (n,)).copy()

    history: list[float] = []
    for it in range(settings.newton_max_iter + 1):
        r = np.atleast_1d(np.asarray(residual(x), dtype=float))
        if r.size != n:
            raise ValueError("residual dimension does not match the unknown")
        norm = float(np.max(np.abs(r)))
        history.append(norm)
        if norm <= settings.newton_tol:
            return NewtonReport(x, norm, it, True, tuple(history))
        if it == settings.newton_max_iter:
            break
        if jacobian is not None:
            J = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        else:
            J = np.empty((n, n))
            for j in range(n):
                xj = x.copy()
                xj[j] += offsets[j]
                rj = np.atleast_1d(np.asarray(residual(xj), dtype=float))
                J[:, j] = (rj - r) / offsets[j]
        if np.all(np.isfinite(J)):
            try:
                cond = np.linalg.cond(J, 1)
            except np.linalg.LinAlgError:
                cond = np.inf
        else:
            cond = np.inf
        if not cond <= CONDITION_LIMIT:
            raise SingularJacobianError(
                f"Jacobian condition estimate above {CONDITION_LIMIT:g} at iteration {it}"
            )
        x = x - settings.nu * np.linalg.solve(J, r)
    return NewtonReport(x, history[-1], settings.newton_max_iter, False, tuple(history))


def fd_first_order(
    F: Callable[[float, float], float],
    sigma: float,
    v0: float,
    settings: CoarseSettings,
    *,
    f0: float | None = None,
    threads: int = 1,
) -> tuple[float, float]:
    """One-sided first derivatives of F(sigma, v0) from evaluations at
    (sigma, v0), (sigma+d_sigma, v0) and (sigma, v0+d_v0).

    A precomputed base value can be passed as ``f0`` to avoid re-evaluating it.
    """
    points = [(sigma, v0)] if f0 is None else []
    points += [(sigma + settings.d_sigma, v0), (sigma, v0 + settings.d_v0)]
    vals = _pmap(lambda pt: F(pt[0], pt[1]), points, threads)
    if f0 is None:
        f0, f_s, f_v = vals
    else:
        f_s, f_v = vals
    return (f_s - f0) / settings.d_sigma, (f_v - f0) / settings.d_v0


def stencil_points(
    sigma: float, v0: float, h: float, settings: CoarseSettings
) -> list[tuple[float, float, float]]:
    """The 17 evaluation points of the second-order derivative stencil:
    five forward sigma offsets, centered v0 and h offsets, and their
    combinations with the first three sigma offsets."""
    ds, dv, dh = settings.d_sigma, settings.d_v0, settings.d_h
    return [
        (sigma, v0, h),
        (sigma + ds, v0, h),
        (sigma + 2 * ds, v0, h),
        (sigma + 3 * ds, v0, h),
        (sigma + 4 * ds, v0, h),
        (sigma, v0 - dv, h),
        (sigma, v0 + dv, h),
        (sigma + ds, v0 - dv, h),
        (sigma + ds, v0 + dv, h),
        (sigma + 2 * ds, v0 - dv, h),
        (sigma + 2 * ds, v0 + dv, h),
        (sigma, v0, h - dh),
        (sigma, v0, h + dh),
        (sigma + ds, v0, h - dh),
        (sigma + ds, v0, h + dh),
        (sigma + 2 * ds, v0, h - dh),
        (sigma + 2 * ds, v0, h + dh),
    ]


def fd_second_order(
    F: Callable[[float, float, float], float],
    point: tuple[float, float, float],
    settings: CoarseSettings,
    *,
    threads: int = 1,
) -> StencilDerivatives:
    """Second-order-accurate first and mixed second derivatives of
    F(sigma, v0, h) from exactly 17 evaluations.

    Sigma derivatives are one-sided (sigma is nonnegative); v0 and h
    derivatives are centered.  Exact for trivariate quadratics.
    """
    sigma, v0, h = point
    pts = stencil_points(sigma, v0, h, settings)
    f = _pmap(lambda pt: F(pt[0], pt[1], pt[2]), pts, threads)
    # one-indexed aliases keep the difference formulas readable
    (f1, f2, f3, f4, f5, f6, f7, f8, f9, f10,
     f11, f12, f13, f14, f15, f16, f17) = f
    ds, dv, dh = settings.d_sigma, settings.d_v0, settings.d_h
    f_sigma = (-3 * f1 + 4 * f2 - f3) / (2 * ds)
    f_v0 = (f7 - f6) / (2 * dv)
    f_h = (f13 - f12) / (2 * dh)
    f_ss = (
        -3 * (-3 * f1 + 4 * f2 - f3)
        + 4 * (-3 * f2 + 4 * f3 - f4)
        - (-3 * f3 + 4 * f4 - f5)
    ) / (4 * ds * ds)
    f_vs = ((-3 * f7 + 4 * f9 - f11) - (-3 * f6 + 4 * f8 - f10)) / (4 * ds * dv)
    f_hs = ((-3 * f13 + 4 * f15 - f17) - (-3 * f12 + 4 * f14 - f16)) / (4 * ds * dh)
    return StencilDerivatives(
        f=f1,
        f_sigma=f_sigma,
        f_v0=f_v0,
        f_h=f_h,
        f_sigma_sigma=f_ss,
        f_v0_sigma=f_vs,
        f_h_sigma=f_hs,
    )


def _healed_state(
    sigma: float, ctx: LiftContext, params: ModelParams, settings: CoarseSettings
) -> tuple[float, MicroState]:
    """Healed restriction of a lifted coarse value, and the healed state."""
    state0 = lift(sigma, ctx, params)
    states, _ = integrate_path(state0, params, [settings.t_skip], settings.integrator)
    return restrict(states[0], params), states[0]


def _solve_healed_equation(
    target: float,
    guesses: Sequence[float],
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
) -> tuple[float, MicroState, NewtonReport]:
    """Solve P(t_skip; y) = target for y, trying the start values in order.

    Each residual evaluation integrates only up to the healing time.
    Returns (y, healed state at y, report)."""
    last: dict[float, MicroState] = {}

    def res(x: np.ndarray) -> np.ndarray:
        s = max(float(x[0]), 0.0)
        value, state = _healed_state(s, ctx, params, settings)
        last[s] = state
        return np.array([value - target])

    err: Exception | None = None
    for guess in guesses:
        try:
            report = newton_solve(res, [max(guess, 0.0)], settings)
        except SingularJacobianError as exc:
            err = exc
            continue
        if report.converged:
            y = max(float(report.solution[0]), 0.0)
            return y, last[y], report
        err = NewtonError(
            f"healed-matching solve did not converge (residual {report.residual_norm:.3e})"
        )
    assert err is not None
    raise err


@dataclass(frozen=True)
class ImplicitStepResult:
    """Solution of one implicit coarse step, with the matched healed pair
    (restriction of the healed result, healed target from the argument)."""

    sigma: float
    healed: float
    target: float
    report: NewtonReport


def implicit_step(
    x: float,
    delta: float,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
) -> ImplicitStepResult:
    """Implicit coarse time step of length delta.

    Solves for y such that the restriction of the healed lift of y matches
    the restriction of the argument's lift evolved for t_skip+delta; both
    sides use the same healing time, so lifting errors cancel at the
    matched points.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        target, _ = _healed_state(x, ctx, params, settings)
        guesses = [x]
    else:
        burst = evaluate_burst(x, ctx, params, settings.replace(delta=delta))
        target = burst.shifted
        guesses = [x + (target - burst.healed), x]
    y, state, report = _solve_healed_equation(target, guesses, ctx, params, settings)
    return ImplicitStepResult(
        sigma=y, healed=restrict(state, params), target=target, report=report
    )


def coarse_equilibrium(
    guess: float,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
) -> NewtonReport:
    """Newton solve of the macroscopic fixed-point equation (burst rate
    zero, i.e. healed restrictions at t_skip and t_skip+delta agree)."""

    def res(x: np.ndarray) -> np.ndarray:
        s = max(float(x[0]), 0.0)
        return np.array([evaluate_burst(s, ctx, params, settings).rate])

    return newton_solve(res, [max(guess, 0.0)], settings)


def multiplier(
    sigma_star: float,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    base: BurstValues | None = None,
    threads: int = 1,
) -> float:
    """Linear stability multiplier of an equilibrium of the implicit coarse
    map: ratio of the sigma-derivatives of the healed restriction at
    t_skip+delta and at t_skip (generalized eigenvalue of the derivative
    pair; |multiplier| < 1 means macroscopically stable)."""
    if base is None:
        base, probe = _pmap(
            lambda s: evaluate_burst(s, ctx, params, settings),
            [sigma_star, sigma_star + settings.d_sigma],
            threads,
        )
    else:
        probe = evaluate_burst(sigma_star + settings.d_sigma, ctx, params, settings)
    den = (probe.healed - base.healed) / settings.d_sigma
    num = (probe.shifted - base.shifted) / settings.d_sigma
    if abs(den) < 1e-8:
        raise TransversalityError(
            f"healed-map derivative {den:.3e} is below threshold; "
            "restriction may have lost transversality"
        )
    return num / den


def match_restriction(
    x_target: float,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
) -> tuple[float, MicroState]:
    """Find the pre-image whose healed restriction equals x_target, and the
    healed microscopic state itself (a state on the slow manifold up to the
    healing residual)."""
    if x_target < 0:
        raise ValueError("x_target must be nonnegative")
    y, state, _ = _solve_healed_equation(
        x_target, [x_target / ctx.p, x_target], ctx, params, settings
    )
    return y, state


@dataclass(frozen=True)
class ProjectiveStep:
    """One projective Euler step: the new coarse value, its healed
    restriction (the solved matching target), and the healed microscopic
    state (usable as the next lifting reference when the chart is adapted
    along a projective trajectory)."""

    sigma: float
    healed: float
    state: MicroState
    report: NewtonReport


def projective_euler_step(
    sigma_j: float,
    step_h: float,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
) -> ProjectiveStep:
    """Projective Euler step of signed length step_h on the slow manifold.

    The healed restriction of the new point must equal the healed
    restriction of the current point plus rate*step_h; negative step_h
    integrates backward in time even though the microscopic system is only
    ever run forward.
    """
    if step_h == 0:
        raise ValueError("step_h must be nonzero")
    burst = evaluate_burst(sigma_j, ctx, params, settings)
    target = burst.healed + burst.rate * step_h
    y, state, report = _solve_healed_equation(
        target, [sigma_j, sigma_j + burst.rate * step_h], ctx, params, settings
    )
    return ProjectiveStep(
        sigma=y, healed=restrict(state, params), state=state, report=report
    )


def forward_backward_error(
    sigma_t: float,
    delta_t: float,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
) -> float:
    """Consistency error of one backward projective Euler step.

    From sigma_t, take a backward Euler step of (negative) length delta_t,
    then run the resulting point microscopically for t_skip - delta_t and
    compare its restriction against the healed restriction of sigma_t.  The
    two values coincide for an exact slow flow; their difference combines
    the Euler discretization error and the incomplete healing.
    """
    if delta_t >= 0:
        raise ValueError("delta_t must be negative (backward step)")
    burst = evaluate_burst(sigma_t, ctx, params, settings)
    sigma0_healed = burst.healed
    target = burst.healed + burst.rate * delta_t
    sigma1, _, _ = _solve_healed_equation(
        target, [sigma_t, sigma_t + burst.rate * delta_t], ctx, params, settings
    )
    lifted = lift(sigma1, ctx, params)
    states, _ = integrate_path(
        lifted, params, [settings.t_skip - delta_t], settings.integrator
    )
    omega0_healed = restrict(states[0], params)
    return abs(sigma0_healed - omega0_healed)
