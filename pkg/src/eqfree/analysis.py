"""Analytic Hopf curve, branch comparison measures, and sensitivity sweeps.

The uniform flow loses stability to spatial mode j at an analytically
known velocity scale (from the linearization around equal spacing with a
rotating-wave ansatz).  Continued branches are compared as interpolated
graphs v0(sigma) with an integral norm, which quantifies how results
depend on the lifting bias p and on the healing time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .coarse_map import CoarseSettings, restrict
from .continuation import (
    Branch,
    BranchPoint,
    continue_branch,
    equilibrium_seed,
)
from .micro_model import ModelParams, integrate_path, perturbed_state

__all__ = [
    "BranchDistanceSpec",
    "BranchNotGraphError",
    "hopf_v0",
    "hopf_omega",
    "hopf_residual",
    "branch_distance",
    "direct_downsweep",
    "lifting_sweep",
    "LiftingSweepRow",
    "tskip_scan",
    "TskipScanRow",
]


class BranchNotGraphError(ValueError):
    """Branch cannot be read as a graph v0(sigma) over the requested window."""


def _dv(params: ModelParams) -> float:
    """Slope of the preferred-speed curve at the mean headway."""
    return params.v0 * (1.0 - math.tanh(params.mean_headway - params.h) ** 2)


def hopf_v0(h: float, j: int, params: ModelParams) -> float:
    """Velocity scale at which spatial mode j of the uniform flow turns
    neutrally stable.

    Symmetric under j -> N-j.  The zero-frequency mode (j = N/2 for even
    N) has no rotating-wave threshold and is rejected.
    """
    N = params.N
    if not 1 <= j <= N - 1:
        raise ValueError(f"mode index j must be in 1..{N - 1}")
    if 2 * j == N:
        raise ValueError(f"mode j={j} has zero frequency; threshold undefined")
    angle = 2.0 * math.pi * j / N
    s2 = math.sin(angle) ** 2
    gain = 1.0 - math.tanh(h - params.mean_headway) ** 2
    return (1.0 - math.cos(angle)) / (params.tau * s2 * gain)


def hopf_omega(v0: float, h: float, j: int, params: ModelParams) -> float:
    """Rotating-wave frequency of mode j at the stability threshold."""
    par = params.replace(v0=v0, h=h)
    return _dv(par) * math.sin(2.0 * math.pi * j / params.N)


def hopf_residual(
    v0: float, omega: float, h: float, j: int, params: ModelParams
) -> complex:
    """Characteristic-equation residual of the uniform flow linearization
    for a rotating wave of frequency omega: (1 - omega^2 tau/V' + i omega/V')^N - 1.

    Vanishes exactly at the mode thresholds (and trivially at omega = 0);
    the mode index j is accepted for bookkeeping symmetry with hopf_v0 but
    does not enter the residual.
    """
    del j
    par = params.replace(v0=v0, h=h)
    dv = _dv(par)
    if dv <= 0:
        raise ValueError("preferred-speed slope must be positive")
    z = 1.0 - omega**2 * params.tau / dv + 1j * omega / dv
    return z ** params.N - 1.0


@dataclass(frozen=True)
class BranchDistanceSpec:
    """Comparison window [a, b] in the sigma coordinate and the norm used
    for the interpolated difference of v0(sigma) graphs."""

    a: float
    b: float
    norm_kind: Literal["l2_squared", "l1"] = "l2_squared"
    interpolation: Literal["cubic-spline"] = "cubic-spline"

    def __post_init__(self) -> None:
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.norm_kind not in ("l2_squared", "l1"):
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")
        if self.interpolation != "cubic-spline":
            raise ValueError("only cubic-spline interpolation is supported")


def _monotone_graph(
    branch: Branch, coordinate: str, a: float, b: float
) -> tuple[np.ndarray, np.ndarray]:
    """Extract (sigma, v0) knots forming a strictly monotone graph covering
    as much of [a, b] as the branch allows.

    Walks the branch in traversal order keeping the monotone envelope:
    retrograde points (corrector noise, brief traversal U-turns) are
    skipped.  A retrograde excursion beyond 5% of the window means the
    curve genuinely reverses and cannot be read as a graph.  Knots are the
    points inside the window plus one bracketing point on each side.
    """
    sig = branch.column(coordinate)
    v0 = branch.column("v0")
    if sig.size < 2:
        raise BranchNotGraphError("branch too short to interpolate")
    direction = 1.0 if sig[-1] >= sig[0] else -1.0
    keep_s = [sig[0]]
    keep_v = [v0[0]]
    for i in range(1, sig.size):
        step = direction * (sig[i] - keep_s[-1])
        if step > 0:
            keep_s.append(sig[i])
            keep_v.append(v0[i])
        elif step < -0.05 * (b - a):
            raise BranchNotGraphError(
                f"branch reverses by {-step:.3g} in {coordinate}; "
                "not a graph over the window"
            )
    s_arr = np.array(keep_s)
    v_arr = np.array(keep_v)
    if direction < 0:
        s_arr = s_arr[::-1]
        v_arr = v_arr[::-1]
    if s_arr[-1] < a or s_arr[0] > b:
        raise BranchNotGraphError(
            f"branch covers [{s_arr[0]:.4g}, {s_arr[-1]:.4g}], "
            f"disjoint from window [{a:g}, {b:g}]"
        )
    # knots inside the window plus one bracketing knot on each side
    lo = max(0, int(np.searchsorted(s_arr, a, side="left")) - 1)
    hi = min(s_arr.size - 1, int(np.searchsorted(s_arr, b, side="right")))
    if hi - lo < 1:
        raise BranchNotGraphError("not enough knots around the window")
    return s_arr[lo : hi + 1], v_arr[lo : hi + 1]


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 60) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return rec(a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(
            m, b, fm, frm, fb, right, tol / 2.0, depth - 1
        )

    return rec(a, b, fa, fm, fb, whole, tol, depth)


def branch_distance(
    branch_f: Branch,
    branch_g: Branch,
    spec: BranchDistanceSpec,
    *,
    coordinate: str = "sigma_healed",
    allow_extrapolation: bool = False,
) -> float:
    """Integral norm of the difference of two branches read as graphs
    v0(sigma) over [spec.a, spec.b].

    Natural cubic splines interpolate each branch between its accepted
    points; adaptive Simpson quadrature (absolute tolerance 1e-10)
    integrates the squared or absolute difference.  coordinate selects the
    pre-image ("sigma") or healed ("sigma_healed") abscissa.  Branches must
    cover the window unless allow_extrapolation is set (mild spline
    extrapolation, used for direct-simulation references that cannot reach
    a fold exactly).
    """
    knots = []
    for br in (branch_f, branch_g):
        s_arr, v_arr = _monotone_graph(br, coordinate, spec.a, spec.b)
        if not allow_extrapolation and (s_arr[0] > spec.a or s_arr[-1] < spec.b):
            raise BranchNotGraphError(
                f"branch covers [{s_arr[0]:.4g}, {s_arr[-1]:.4g}] but the window "
                f"is [{spec.a:g}, {spec.b:g}]"
            )
        knots.append((s_arr, v_arr))
    f = CubicSpline(*knots[0], bc_type="natural", extrapolate=True)
    g = CubicSpline(*knots[1], bc_type="natural", extrapolate=True)
    if spec.norm_kind == "l2_squared":
        integrand = lambda s: float((f(s) - g(s)) ** 2)
    else:
        integrand = lambda s: float(abs(f(s) - g(s)))
    return _adaptive_simpson(integrand, spec.a, spec.b, 1e-10)


def direct_downsweep(
    v0_values: Sequence[float],
    params: ModelParams,
    settings: CoarseSettings,
    *,
    settle_time: float = 3e5,
    collapse_threshold: float = 1e-2,
) -> Branch:
    """Reference branch from long direct simulations.

    Simulates each v0 in the given (descending) order for settle_time,
    warm-starting from the previous end state; the first run starts from
    the perturbed uniform flow.  Points that collapsed to the uniform flow
    (restriction below collapse_threshold, i.e. below the fold) are
    dropped.  Restrictions of the settled states stand in for both the
    coordinate and its healed value.
    """
    points: list[BranchPoint] = []
    state = None
    for v0 in v0_values:
        par = params.replace(v0=v0)
        if state is None:
            state = perturbed_state(par)
        states, _ = integrate_path(state, par, [settle_time], settings.integrator)
        state = states[0]
        sigma = restrict(state, par)
        if sigma < collapse_threshold:
            break
        points.append(
            BranchPoint(
                sigma=sigma,
                sigma_healed=sigma,
                v0=v0,
                h=params.h,
                f_sigma=math.nan,
                multiplier=math.nan,
                stable=True,
            )
        )
    return Branch(
        points=points,
        metadata={"kind": "direct_downsweep", "settle_time": settle_time},
    )


@dataclass(frozen=True)
class LiftingSweepRow:
    """Per-bias results: the continued branch, and distances of its raw and
    healed stable segments to the direct-simulation reference."""

    p: float
    branch: Branch
    distance_unhealed: float
    distance_healed: float


def lifting_sweep(
    p_values: Sequence[float],
    h: float,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    reference: Branch,
    spec: BranchDistanceSpec,
    seed_v0: tuple[float, float] = (0.91, 0.90),
    seed_states=None,
    n_steps: int = 400,
    s: float = 1e-3,
    sigma_stop: float | None = 5e-3,
    threads: int = 1,
) -> list[LiftingSweepRow]:
    """Continue the jam branch once per lifting bias p and measure the
    distance of the raw (pre-image) and healed diagrams to the reference.

    seed_states may carry two pre-settled microscopic states for the seed
    velocities (the settle simulations do not depend on p, so callers can
    reuse them across the sweep).
    """
    par = params.replace(h=h)
    rows = []
    for p in p_values:
        kw0 = {"start": seed_states[0]} if seed_states else {}
        kw1 = {"start": seed_states[1]} if seed_states else {}
        seed0, _ = equilibrium_seed(seed_v0[0], par, settings, p=p, threads=threads, **kw0)
        seed1, ctx1 = equilibrium_seed(seed_v0[1], par, settings, p=p, threads=threads, **kw1)
        branch = continue_branch(
            seed0,
            seed1,
            +1,
            n_steps,
            ctx1,
            par,
            settings,
            s=s,
            sigma_stop=sigma_stop,
            threads=threads,
        )
        d_raw = branch_distance(
            branch, reference, spec, coordinate="sigma", allow_extrapolation=True
        )
        d_healed = branch_distance(
            branch, reference, spec, coordinate="sigma_healed", allow_extrapolation=True
        )
        rows.append(
            LiftingSweepRow(
                p=p, branch=branch, distance_unhealed=d_raw, distance_healed=d_healed
            )
        )
    return rows


@dataclass(frozen=True)
class TskipScanRow:
    """Per-healing-time results: the continued branch and its distance to
    the scan's reference diagram."""

    t_skip: float
    branch: Branch
    distance_to_reference: float


def tskip_scan(
    tskip_values: Sequence[float],
    h: float,
    params: ModelParams,
    settings: CoarseSettings,
    *,
    reference_tskip: float = 2000.0,
    spec: BranchDistanceSpec | None = None,
    seed_v0: tuple[float, float] = (0.91, 0.90),
    seed_states=None,
    n_steps: int = 400,
    s: float = 1e-3,
    sigma_stop: float | None = 5e-3,
    threads: int = 1,
) -> list[TskipScanRow]:
    """Continue the jam branch once per healing time and measure each
    diagram's distance to the reference_tskip diagram (distance zero for
    the reference row itself).

    The healed diagrams are compared as graphs over sigma_healed with the
    integral-of-absolute-difference norm unless spec overrides it.
    """
    if spec is None:
        spec = BranchDistanceSpec(a=0.01, b=0.28, norm_kind="l1")
    par = params.replace(h=h)
    values = list(tskip_values)
    if reference_tskip not in values:
        values = values + [reference_tskip]
    branches: dict[float, Branch] = {}
    for t_skip in values:
        st = settings.replace(t_skip=t_skip)
        kw0 = {"start": seed_states[0]} if seed_states else {}
        kw1 = {"start": seed_states[1]} if seed_states else {}
        seed0, _ = equilibrium_seed(seed_v0[0], par, st, threads=threads, **kw0)
        seed1, ctx1 = equilibrium_seed(seed_v0[1], par, st, threads=threads, **kw1)
        branches[t_skip] = continue_branch(
            seed0, seed1, +1, n_steps, ctx1, par, st,
            s=s, sigma_stop=sigma_stop, threads=threads,
        )
    rows = []
    for t_skip in tskip_values:
        if t_skip == reference_tskip:
            dist = 0.0
        else:
            dist = branch_distance(
                branches[t_skip],
                branches[reference_tskip],
                spec,
                coordinate="sigma_healed",
                allow_extrapolation=True,
            )
        rows.append(
            TskipScanRow(
                t_skip=t_skip, branch=branches[t_skip], distance_to_reference=dist
            )
        )
    return rows
