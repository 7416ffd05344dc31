"""Pseudo-arclength continuation of coarse equilibria and of fold points.

Branches of the macroscopic fixed-point equation are traced with a secant
predictor of fixed arclength step and a Newton corrector constrained to
the hyperplane orthogonal to the (normalized) secant.  Folds are turning
points of the branch in the velocity-scale parameter; they are continued
in two parameters by additionally requiring the sigma-derivative of the
coarse right-hand side to vanish, with second derivatives supplied by the
17-point stencil.

The lifting reference profile is replaced after every accepted point by
the healed state of that point, which keeps lifted initial conditions
near the slow manifold as the branch moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coarse_map import (
    BurstValues,
    CoarseSettings,
    LiftContext,
    evaluate_burst,
)
from .dp45 import IntegrationError
from .micro_model import MicroState, ModelParams, integrate_path, perturbed_state
from .solvers import (
    NewtonError,
    TransversalityError,
    coarse_equilibrium,
    fd_second_order,
    newton_solve,
)

__all__ = [
    "BranchPoint",
    "Branch",
    "FoldEstimate",
    "ContinuationError",
    "CorrectorError",
    "FoldNotFoundError",
    "secant_direction",
    "predict",
    "correct",
    "continue_branch",
    "detect_fold",
    "refine_fold",
    "continue_fold",
    "equilibrium_seed",
]

# Reference profiles flatter than this are not stored (rescaling a flat
# profile is impossible); the previous chart is kept instead.
REFERENCE_SIGMA_FLOOR = 1e-4


class ContinuationError(RuntimeError):
    """Continuation machinery failure."""


class CorrectorError(ContinuationError):
    """Corrector Newton iteration failed to converge."""


class FoldNotFoundError(ContinuationError):
    """Branch contains no turning point."""


@dataclass(frozen=True)
class BranchPoint:
    """One accepted point of a continuation branch.

    sigma is the pre-image coordinate in the chart of ``context``;
    sigma_healed is the chart-independent healed restriction.  f_sigma is
    the one-sided derivative of the coarse right-hand side and multiplier
    the stability eigenvalue of the implicit coarse map (stable iff its
    modulus is below one).
    """

    sigma: float
    sigma_healed: float
    v0: float
    h: float
    f_sigma: float
    multiplier: float
    stable: bool
    context: LiftContext | None = None


@dataclass
class Branch:
    """Ordered accepted points plus the last secant direction and a
    settings/bookkeeping snapshot.  truncated marks an aborted traversal."""

    points: list[BranchPoint]
    secant: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    truncated: bool = False

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class FoldEstimate:
    """Interpolated turning point of a branch.  corroborated records
    whether f_sigma also changes sign near the turning index."""

    sigma: float
    sigma_healed: float
    v0: float
    h: float
    index: int
    corroborated: bool


def secant_direction(p0: BranchPoint, p1: BranchPoint, *, fold: bool = False) -> np.ndarray:
    """Unnormalized secant from p0 to p1 in (sigma, v0) or, for fold
    curves, (sigma, v0, h)."""
    if fold:
        w = np.array([p1.sigma - p0.sigma, p1.v0 - p0.v0, p1.h - p0.h])
    else:
        w = np.array([p1.sigma - p0.sigma, p1.v0 - p0.v0])
    if not np.any(w != 0.0):
        raise ContinuationError("secant endpoints coincide")
    return w


def predict(p1: BranchPoint, w: np.ndarray, s: float) -> np.ndarray:
    """Secant predictor: the point at arclength s from p1 along w/|w|."""
    w = np.asarray(w, dtype=float)
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise ContinuationError("secant direction has zero length")
    base = np.array([p1.sigma, p1.v0, p1.h][: w.size])
    return base + s * w / norm


@dataclass(frozen=True)
class CorrectorResult:
    """Accepted corrector point plus the healed microscopic state used for
    reference-profile updates."""

    point: BranchPoint
    mid_state: MicroState
    iterations: int


def _diagnostics(
    base: BurstValues, probe: BurstValues, settings: CoarseSettings
) -> tuple[float, float, bool]:
    """(f_sigma, multiplier, stable) from a base burst and its sigma-offset
    probe.  Falls back to the f_sigma sign when the healed-map derivative
    is too small for a meaningful multiplier."""
    f_sigma = (probe.rate - base.rate) / settings.d_sigma
    den = (probe.healed - base.healed) / settings.d_sigma
    num = (probe.shifted - base.shifted) / settings.d_sigma
    if abs(den) < 1e-8:
        return f_sigma, math.nan, f_sigma < 0
    lam = num / den
    return f_sigma, lam, abs(lam) < 1.0


def correct(
    prediction,
    w: np.ndarray,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    threads: int = 1,
) -> CorrectorResult:
    """Newton-correct a predicted (sigma, v0) point onto the branch.

    Solves the coarse fixed-point equation together with orthogonality to
    the normalized secant, starting from the prediction.  The accepted
    point carries healed value, f_sigma, multiplier and stability flag.
    Raises CorrectorError if Newton does not converge.
    """
    w = np.asarray(w, dtype=float)
    w_n = w / np.linalg.norm(w)
    pred = np.asarray(prediction, dtype=float)[:2]
    memo: dict[tuple[float, float], BurstValues] = {}

    def burst_at(s: float, v: float) -> BurstValues:
        key = (s, v)
        if key not in memo:
            memo[key] = evaluate_burst(
                max(s, 0.0), ctx, params.replace(v0=v), settings
            )
        return memo[key]

    current: dict[str, tuple] = {}

    def residual(X: np.ndarray) -> np.ndarray:
        s, v = float(X[0]), float(X[1])
        b = burst_at(s, v)
        current["base"] = (s, v, b)
        return np.array(
            [b.rate, w_n[0] * (s - pred[0]) + w_n[1] * (v - pred[1])]
        )

    def jacobian(X: np.ndarray) -> np.ndarray:
        s, v = float(X[0]), float(X[1])
        b = burst_at(s, v)
        bs = burst_at(s + settings.d_sigma, v)
        bv = burst_at(s, v + settings.d_v0)
        return np.array(
            [
                [
                    (bs.rate - b.rate) / settings.d_sigma,
                    (bv.rate - b.rate) / settings.d_v0,
                ],
                w_n,
            ]
        )

    report = newton_solve(residual, pred, settings, jacobian=jacobian)
    if not report.converged:
        raise CorrectorError(
            f"corrector did not converge (residual {report.residual_norm:.3e})"
        )
    s_acc, v_acc, base = current["base"]
    probe = burst_at(s_acc + settings.d_sigma, v_acc)
    f_sigma, lam, stable = _diagnostics(base, probe, settings)
    point = BranchPoint(
        sigma=s_acc,
        sigma_healed=base.healed,
        v0=v_acc,
        h=params.h,
        f_sigma=f_sigma,
        multiplier=lam,
        stable=stable,
        context=ctx,
    )
    return CorrectorResult(point=point, mid_state=base.mid_state, iterations=report.iterations)


def _updated_context(
    result: CorrectorResult, ctx: LiftContext, params: ModelParams
) -> LiftContext:
    """Replace the lifting reference by the accepted point's healed state,
    keeping the old chart if the new profile is too flat to rescale."""
    if result.point.sigma_healed <= REFERENCE_SIGMA_FLOOR:
        return ctx
    return LiftContext.from_reference(
        result.mid_state, params.replace(v0=result.point.v0), ctx.p
    )


def continue_branch(
    seed0: BranchPoint,
    seed1: BranchPoint,
    direction: int,
    n_steps: int,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    s: float = 1e-3,
    sigma_stop: float | None = 5e-3,
    max_halvings: int = 5,
    threads: int = 1,
) -> Branch:
    """Trace a branch of coarse equilibria in (sigma, v0) at fixed h.

    Starts from two converged seed points; ``direction`` (+1/-1) orients
    the first secant (with seeds ordered by decreasing v0, +1 continues
    toward decreasing v0).  The arclength step s is halved up to
    max_halvings times on corrector failure; repeated failure truncates
    the branch.  Traversal stops when sigma drops below sigma_stop, where
    the lifting chart degenerates.
    """
    points = [seed0, seed1]
    w = secant_direction(seed0, seed1) * float(direction)
    ctx_cur = ctx
    halvings: list[tuple[int, float]] = []
    truncated = False
    for _ in range(n_steps):
        s_try = s
        result: CorrectorResult | None = None
        for _attempt in range(max_halvings + 1):
            pred = predict(points[-1], w, s_try)
            pred[0] = max(pred[0], 0.0)
            try:
                result = correct(pred, w, ctx_cur, params, settings, threads=threads)
                break
            except (NewtonError, CorrectorError, TransversalityError, IntegrationError):
                s_try *= 0.5
        if result is None:
            truncated = True
            break
        if s_try != s:
            halvings.append((len(points), s_try))
        points.append(result.point)
        ctx_cur = _updated_context(result, ctx_cur, params)
        w_new = secant_direction(points[-2], points[-1])
        # orientation guard: corrector noise can drop a point slightly
        # behind its predecessor; keep the traversal direction
        w = w_new if float(np.dot(w_new, w)) >= 0.0 else -w_new
        if sigma_stop is not None and result.point.sigma < sigma_stop:
            break
    return Branch(
        points=points,
        secant=w,
        metadata={
            "kind": "one_parameter",
            "h": params.h,
            "s": s,
            "direction": direction,
            "sigma_stop": sigma_stop,
            "halvings": halvings,
            "settings": settings,
        },
        truncated=truncated,
    )


def detect_fold(branch: Branch) -> FoldEstimate:
    """Locate the turning point of the branch in v0.

    The turning point is the interior extremum of v0 along the traversal
    (minimum preferred).  Because corrector tolerances leave noise on v0
    that can exceed its variation near the flat fold, the vertex comes
    from a least-squares parabola over a window of points around the
    extremum, with sigma interpolated linearly at the vertex.  Points with
    sigma below 0.03 are excluded from the search: the v0-sensitivity of
    the coarse rate vanishes with sigma, so v0 noise explodes near the
    branch terminus (folds of this system sit above sigma = 0.05).  A sign
    change of f_sigma near the window corroborates the fold.  Raises
    FoldNotFoundError for monotone branches.
    """
    v0 = branch.column("v0")
    sig = branch.column("sigma")
    below = np.flatnonzero(sig < 0.03)
    n = int(below[0]) if below.size else v0.size
    v0 = v0[:n]
    if n < 3:
        raise FoldNotFoundError("need at least three points to detect a fold")
    i_min, i_max = int(np.argmin(v0)), int(np.argmax(v0))
    if 0 < i_min < n - 1:
        i = i_min
    elif 0 < i_max < n - 1:
        i = i_max
    else:
        raise FoldNotFoundError("branch has no interior v0 turning point")

    m = max(2, min(25, i, n - 1 - i))
    t = np.arange(-m, m + 1, dtype=float)
    window = slice(i - m, i + m + 1)
    qa, qb, qc = np.polyfit(t, v0[window], 2)
    if qa == 0.0:
        raise FoldNotFoundError("turning point is degenerate (no curvature)")
    t_star = float(np.clip(-qb / (2.0 * qa), -m, m))

    def linear_at(col: np.ndarray) -> float:
        la, lb = np.polyfit(t, col[window], 1)
        return float(la * t_star + lb)

    fs = branch.column("f_sigma")
    lo, hi = max(0, i - m), min(fs.size - 1, i + m)
    signs = np.sign(fs[lo : hi + 1])
    corroborated = bool(np.any(signs[:-1] * signs[1:] < 0))
    # anchor the index at the fitted vertex, not the noisy raw extremum
    index = int(np.clip(i + round(t_star), 0, n - 1))
    return FoldEstimate(
        sigma=linear_at(branch.column("sigma")),
        sigma_healed=linear_at(branch.column("sigma_healed")),
        v0=float(qa * t_star**2 + qb * t_star + qc),
        h=branch.points[index].h,
        index=index,
        corroborated=corroborated,
    )


@dataclass(frozen=True)
class FoldCorrectorResult:
    point: BranchPoint
    mid_state: MicroState
    f_sigma_sigma: float
    iterations: int


def _fold_correct(
    prediction: np.ndarray,
    w: np.ndarray,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    threads: int = 1,
) -> FoldCorrectorResult:
    """Newton-correct a predicted (sigma, v0, h) point onto the fold curve.

    Residual rows: coarse right-hand side, its one-sided sigma derivative,
    and orthogonality to the normalized secant.  The Jacobian comes from
    the 17-point second-order stencil, which shares its first three points
    with the residual's derivative probes.
    """
    w = np.asarray(w, dtype=float)
    w_n = w / np.linalg.norm(w)
    pred = np.asarray(prediction, dtype=float)[:3]
    memo: dict[tuple[float, float, float], BurstValues] = {}

    def burst_at(s: float, v: float, hh: float) -> BurstValues:
        key = (s, v, hh)
        if key not in memo:
            memo[key] = evaluate_burst(
                max(s, 0.0), ctx, params.replace(v0=v, h=hh), settings
            )
        return memo[key]

    def rate_at(s: float, v: float, hh: float) -> float:
        return burst_at(s, v, hh).rate

    current: dict[str, tuple] = {}

    def residual(X: np.ndarray) -> np.ndarray:
        s, v, hh = (float(X[0]), float(X[1]), float(X[2]))
        b = burst_at(s, v, hh)
        ds = settings.d_sigma
        f_sigma = (
            -3.0 * b.rate
            + 4.0 * rate_at(s + ds, v, hh)
            - rate_at(s + 2 * ds, v, hh)
        ) / (2.0 * ds)
        current["base"] = (s, v, hh, b)
        return np.array(
            [b.rate, f_sigma, float(np.dot(w_n, X - pred))]
        )

    def jacobian(X: np.ndarray) -> np.ndarray:
        s, v, hh = (float(X[0]), float(X[1]), float(X[2]))
        st = fd_second_order(rate_at, (s, v, hh), settings, threads=threads)
        current["stencil"] = (s, v, hh, st)
        return np.array(
            [
                [st.f_sigma, st.f_v0, st.f_h],
                [st.f_sigma_sigma, st.f_v0_sigma, st.f_h_sigma],
                w_n,
            ]
        )

    report = newton_solve(residual, pred, settings, jacobian=jacobian)
    if not report.converged:
        raise CorrectorError(
            f"fold corrector did not converge (residual {report.residual_norm:.3e})"
        )
    s_acc, v_acc, h_acc, base = current["base"]
    probe = burst_at(s_acc + settings.d_sigma, v_acc, h_acc)
    f_sigma, lam, stable = _diagnostics(base, probe, settings)
    f_ss = math.nan
    if "stencil" in current:
        f_ss = current["stencil"][3].f_sigma_sigma
    point = BranchPoint(
        sigma=s_acc,
        sigma_healed=base.healed,
        v0=v_acc,
        h=h_acc,
        f_sigma=f_sigma,
        multiplier=lam,
        stable=stable,
        context=ctx,
    )
    return FoldCorrectorResult(
        point=point,
        mid_state=base.mid_state,
        f_sigma_sigma=f_ss,
        iterations=report.iterations,
    )


def refine_fold(
    estimate: FoldEstimate,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    threads: int = 1,
) -> tuple[BranchPoint, LiftContext]:
    """Sharpen an interpolated fold into a solution of the fold system at
    fixed h (the orthogonality row pins h), returning the refined point and
    the updated lifting context."""
    pred = np.array([estimate.sigma, estimate.v0, estimate.h])
    result = _fold_correct(
        pred, np.array([0.0, 0.0, 1.0]), ctx, params, settings, threads=threads
    )
    ctx_next = _updated_context(
        CorrectorResult(result.point, result.mid_state, result.iterations), ctx, params
    )
    return result.point, ctx_next


def continue_fold(
    seed: BranchPoint,
    n_steps: int,
    ctx: LiftContext,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    s: float = 1e-2,
    direction: int = 1,
    h_range: tuple[float, float] | None = None,
    max_halvings: int = 5,
    cusp_tol: float = 1e-5,
    threads: int = 1,
) -> Branch:
    """Trace the fold curve in (sigma, v0, h) from a refined fold point.

    The first predictor moves along +/-h; afterwards secants take over.
    Points whose second sigma-derivative falls below cusp_tol are flagged
    in the metadata (approach to a cusp).  Stops when h leaves h_range.
    """
    points = [seed]
    ctx_cur = ctx
    w = np.array([0.0, 0.0, float(direction)])
    f_ss_values: list[float] = []
    cusp_flags: list[bool] = []
    halvings: list[tuple[int, float]] = []
    truncated = False
    for _ in range(n_steps):
        s_try = s
        result: FoldCorrectorResult | None = None
        for _attempt in range(max_halvings + 1):
            pred = predict(points[-1], w, s_try)
            pred[0] = max(pred[0], 0.0)
            try:
                result = _fold_correct(
                    pred, w, ctx_cur, params, settings, threads=threads
                )
                break
            except (NewtonError, CorrectorError, TransversalityError, IntegrationError):
                s_try *= 0.5
        if result is None:
            truncated = True
            break
        if s_try != s:
            halvings.append((len(points), s_try))
        points.append(result.point)
        f_ss_values.append(result.f_sigma_sigma)
        cusp_flags.append(
            math.isfinite(result.f_sigma_sigma) and abs(result.f_sigma_sigma) < cusp_tol
        )
        ctx_cur = _updated_context(
            CorrectorResult(result.point, result.mid_state, result.iterations),
            ctx_cur,
            params,
        )
        w_new = secant_direction(points[-2], points[-1], fold=True)
        w = w_new if float(np.dot(w_new, w)) >= 0.0 else -w_new
        hh = result.point.h
        if h_range is not None and not (h_range[0] <= hh <= h_range[1]):
            break
    return Branch(
        points=points,
        secant=w,
        metadata={
            "kind": "fold_curve",
            "s": s,
            "direction": direction,
            "h_range": h_range,
            "f_sigma_sigma": f_ss_values,
            "cusp_flags": cusp_flags,
            "halvings": halvings,
            "settings": settings,
        },
        truncated=truncated,
    )


def equilibrium_seed(
    v0: float,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    p: float = 1.0,
    settle_time: float = 5e4,
    start: MicroState | None = None,
    threads: int = 1,
) -> tuple[BranchPoint, LiftContext]:
    """Converged branch point at fixed v0, seeded from direct simulation.

    Runs the microscopic model from a perturbed uniform-flow state (or the
    given start state) for settle_time to obtain a reference jam profile,
    then Newton-solves the coarse fixed-point equation in its chart.
    Returns the seed point and the post-acceptance lifting context.
    """
    par = params.replace(v0=v0)
    state0 = perturbed_state(par) if start is None else start
    settled, _ = integrate_path(state0, par, [settle_time], settings.integrator)
    ctx0 = LiftContext.from_reference(settled[0], par, p)
    report = coarse_equilibrium(ctx0.reference_sigma / p, ctx0, par, settings)
    if not report.converged:
        raise NewtonError(
            f"seed equilibrium at v0={v0:g} did not converge "
            f"(residual {report.residual_norm:.3e})"
        )
    sigma_star = max(float(report.solution[0]), 0.0)
    base = evaluate_burst(sigma_star, ctx0, par, settings)
    probe = evaluate_burst(sigma_star + settings.d_sigma, ctx0, par, settings)
    f_sigma, lam, stable = _diagnostics(base, probe, settings)
    point = BranchPoint(
        sigma=sigma_star,
        sigma_healed=base.healed,
        v0=v0,
        h=params.h,
        f_sigma=f_sigma,
        multiplier=lam,
        stable=stable,
        context=ctx0,
    )
    result = CorrectorResult(point, base.mid_state, report.iterations)
    return point, _updated_context(result, ctx0, par)
