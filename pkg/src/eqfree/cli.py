"""Command-line front end: config parsing, orchestration, CSV/JSON output.

Configs are flat ``key = value`` text files (``#`` starts a comment,
lists are comma-separated); every key has a default, so an empty file
runs the standard parameter set.  All outputs are deterministic: no
timestamps, fixed evaluation order, floats printed with 17 significant
digits, LF line endings.  Each CSV gets a sidecar naming the config hash,
and every run writes a ``run.json`` recording the full parameter set.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analysis import (
    BranchDistanceSpec,
    direct_downsweep,
    hopf_v0,
    lifting_sweep,
    tskip_scan,
)
from .coarse_map import CoarseSettings, LiftContext, restrict
from .continuation import (
    Branch,
    continue_branch,
    continue_fold,
    detect_fold,
    equilibrium_seed,
    refine_fold,
)
from .convergence_lab import ToySystem, convergence_scan
from .dp45 import IntegratorSettings
from .micro_model import ModelParams, integrate_path, perturbed_state
from .solvers import projective_euler_step

__all__ = ["RunConfig", "ConfigError", "load_config", "run", "main"]

COMMANDS = (
    "simulate",
    "branch",
    "fold2",
    "backward",
    "hopf",
    "lifting-sweep",
    "tskip-scan",
    "fberror-scan",
    "converge-lab",
)

# value kinds: f float, i int, fl float list, il int list
_SCHEMA: dict[str, tuple[str, Any]] = {
    # model
    "tau_inv": ("f", 1.7),
    "v0": ("f", 0.9),
    "h": ("f", 1.2),
    "L": ("f", 60.0),
    "N": ("i", 60),
    "mu": ("f", 0.1),
    # coarse machinery
    "t_skip": ("f", 300.0),
    "delta": ("f", 2000.0),
    "d_sigma": ("f", 1e-3),
    "d_v0": ("f", 1e-3),
    "d_h": ("f", 1e-3),
    "newton_tol": ("f", 1e-7),
    "newton_max_iter": ("i", 20),
    "nu": ("f", 1.0),
    "p": ("f", 1.0),
    # integrator
    "abs_tol": ("f", 1e-8),
    "rel_tol": ("f", 1e-8),
    "initial_step": ("f", 1e-2),
    "max_step": ("f", 100.0),
    "max_steps": ("i", 50_000_000),
    # execution
    "threads": ("i", 0),
    # simulate
    "sim_time": ("f", 5e4),
    "sim_samples": ("i", 200),
    # branch seeding / traversal
    "seed_v0_a": ("f", 0.91),
    "seed_v0_b": ("f", 0.90),
    "settle_time": ("f", 5e4),
    "s": ("f", 1e-3),
    "n_steps": ("i", 600),
    "sigma_stop": ("f", 5e-3),
    "direction": ("i", 1),
    # two-parameter fold continuation
    "fold_s": ("f", 1e-2),
    "fold_steps": ("i", 40),
    "h_min": ("f", 1.1),
    "h_max": ("f", 1.25),
    # backward projective integration
    "bw_v0": ("f", 0.884),
    "bw_dt": ("f", -5000.0),
    "bw_steps": ("i", 30),
    "bw_offset": ("f", -5e-3),
    # analytic stability thresholds
    "hopf_h_min": ("f", 1.0),
    "hopf_h_max": ("f", 1.7),
    "hopf_h_count": ("i", 71),
    "hopf_modes": ("il", [1, 2, 3, 4]),
    # lifting sweep
    "p_values": ("fl", [0.95, 0.97, 0.99, 1.0, 1.02, 1.05]),
    "window_a": ("f", 0.125),
    "window_b": ("f", 0.25),
    "downsweep_v0_max": ("f", 0.91),
    "downsweep_v0_min": ("f", 0.8805),
    "downsweep_count": ("i", 20),
    "downsweep_time": ("f", 3e5),
    # healing-time scan
    "tskip_values": ("fl", [300.0, 2000.0, 4000.0]),
    "tskip_reference": ("f", 2000.0),
    # forward-backward error scan
    "fb_delta_values": ("fl", [300.0, 600.0, 1200.0, 2400.0, 4800.0]),
    "fb_tskip_values": ("fl", [300.0, 700.0, 1300.0, 2000.0]),
    "fb_v0": ("f", 0.884),
    "fb_offset": ("f", 2e-2),
    # synthetic convergence lab
    "lab_epsilon": ("f", 0.01),
    "lab_fast_rate": ("f", 1.0),
    "lab_x": ("f", 0.5),
    "lab_delta": ("f", 0.0),  # 0 selects 0.1/epsilon
    "lab_tskip_values": ("fl", [2.0, 4.0, 6.0, 8.0, 10.0, 12.0]),
    "lab_offset_1": ("f", 0.3),
    "lab_offset_2": ("f", -0.2),
    "lab_mix": ("f", 0.1),
}

# Table-range envelope for the bifurcation parameters; --unsafe bypasses.
_V0_KEYS = ("v0", "seed_v0_a", "seed_v0_b", "bw_v0", "fb_v0",
            "downsweep_v0_max", "downsweep_v0_min")
_H_KEYS = ("h", "h_min", "h_max", "hopf_h_min", "hopf_h_max")
V0_ENVELOPE = (0.8, 1.0)
H_ENVELOPE = (1.0, 1.7)


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Validated run description: command, model/coarse/integrator settings,
    the remaining option values, and execution context."""

    command: str
    model: ModelParams
    coarse: CoarseSettings
    options: dict[str, Any] = field(default_factory=dict)
    out_dir: Path = Path(".")
    threads: int = 1
    unsafe: bool = False
    config_sha256: str = ""
    config_path: str = ""

    @property
    def integrator(self) -> IntegratorSettings:
        return self.coarse.integrator


def _parse_value(key: str, kind: str, raw: str, lineno: int):
    try:
        if kind == "f":
            return float(raw)
        if kind == "i":
            return int(raw)
        if kind == "fl":
            return [float(v.strip()) for v in raw.split(",") if v.strip()]
        if kind == "il":
            return [int(v.strip()) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(
            f"line {lineno}: cannot parse value {raw!r} for key {key!r}"
        ) from None
    raise AssertionError(f"unknown kind {kind}")


def _parse_file(path: str | Path) -> dict[str, Any]:
    values: dict[str, Any] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind, _default = _SCHEMA[key]
        values[key] = _parse_value(key, kind, raw, lineno)
    return values


def _check_envelope(values: dict[str, Any]) -> None:
    for key in _V0_KEYS:
        v = values[key]
        if not V0_ENVELOPE[0] <= v <= V0_ENVELOPE[1]:
            raise ConfigError(
                f"key {key!r} = {v:g} outside the studied range "
                f"[{V0_ENVELOPE[0]:g}, {V0_ENVELOPE[1]:g}] (pass --unsafe to override)"
            )
    for key in _H_KEYS:
        v = values[key]
        if not H_ENVELOPE[0] <= v <= H_ENVELOPE[1]:
            raise ConfigError(
                f"key {key!r} = {v:g} outside the studied range "
                f"[{H_ENVELOPE[0]:g}, {H_ENVELOPE[1]:g}] (pass --unsafe to override)"
            )
    for v in values["p_values"]:
        if v <= 0:
            raise ConfigError("key 'p_values' entries must be positive")


def load_config(
    path: str | Path,
    *,
    command: str = "branch",
    out_dir: str | Path = ".",
    threads: int | None = None,
    unsafe: bool = False,
) -> RunConfig:
    """Parse and validate a config file, applying defaults for omitted keys.

    Raises ConfigError with a line number on parse problems and with the
    offending key name on validation problems.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = Path(path).read_bytes()
    values = {key: default for key, (_kind, default) in _SCHEMA.items()}
    values.update(_parse_file(path))

    try:
        model = ModelParams(
            tau=1.0 / values["tau_inv"],
            v0=values["v0"],
            h=values["h"],
            L=values["L"],
            N=values["N"],
            mu=values["mu"],
        )
        integrator = IntegratorSettings(
            abs_tol=values["abs_tol"],
            rel_tol=values["rel_tol"],
            initial_step=values["initial_step"],
            max_step=values["max_step"],
            max_steps=values["max_steps"],
        )
        coarse = CoarseSettings(
            t_skip=values["t_skip"],
            delta=values["delta"],
            d_sigma=values["d_sigma"],
            d_v0=values["d_v0"],
            d_h=values["d_h"],
            newton_tol=values["newton_tol"],
            newton_max_iter=values["newton_max_iter"],
            nu=values["nu"],
            integrator=integrator,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if values["p"] <= 0:
        raise ConfigError("key 'p' must be positive")
    if not unsafe:
        _check_envelope(values)

    resolved_threads = threads if threads is not None else values["threads"]
    if resolved_threads <= 0:
        resolved_threads = os.cpu_count() or 1
    options = {
        key: values[key]
        for key in _SCHEMA
        if key not in (
            "tau_inv", "v0", "h", "L", "N", "mu",
            "t_skip", "delta", "d_sigma", "d_v0", "d_h",
            "newton_tol", "newton_max_iter", "nu",
            "abs_tol", "rel_tol", "initial_step", "max_step", "max_steps",
            "threads",
        )
    }
    return RunConfig(
        command=command,
        model=model,
        coarse=coarse,
        options=options,
        out_dir=Path(out_dir),
        threads=resolved_threads,
        unsafe=unsafe,
        config_sha256=hashlib.sha256(raw).hexdigest(),
        config_path=str(path),
    )


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    return f"{v:.17g}"


def _write_csv(
    cfg: RunConfig, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]
) -> Path:
    path = cfg.out_dir / name
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    sidecar = {
        "config_sha256": cfg.config_sha256,
        "command": cfg.command,
        "columns": list(header),
        "package_version": __version__,
    }
    Path(str(path) + ".meta.json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    return path


BRANCH_COLUMNS = ("sigma", "sigma_healed", "v0", "h", "f_sigma", "multiplier", "stable")


def _branch_rows(branch: Branch, prefix: Sequence[Any] = ()) -> list[tuple]:
    return [
        (*prefix, p.sigma, p.sigma_healed, p.v0, p.h, p.f_sigma, p.multiplier, p.stable)
        for p in branch.points
    ]


def _settings_dict(cfg: RunConfig) -> dict[str, Any]:
    coarse = dataclasses.asdict(cfg.coarse)
    integrator = coarse.pop("integrator")
    return {
        "model": dataclasses.asdict(cfg.model),
        "coarse": coarse,
        "integrator": integrator,
        "options": cfg.options,
        "threads": cfg.threads,
        "unsafe": cfg.unsafe,
    }


def _write_run_json(cfg: RunConfig, outputs: list[str], results: dict[str, Any],
                    error: dict[str, Any] | None = None) -> None:
    doc = {
        "command": cfg.command,
        "config_path": cfg.config_path,
        "config_sha256": cfg.config_sha256,
        "package_version": __version__,
        "settings": _settings_dict(cfg),
        "outputs": sorted(outputs),
        "results": results,
        "error": error,
    }
    (cfg.out_dir / "run.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )


def _seed_pair(cfg: RunConfig, params: ModelParams):
    """Two seed equilibria from direct simulation, and the continuation
    context after the second."""
    opt = cfg.options
    seed0, _ = equilibrium_seed(
        opt["seed_v0_a"], params, cfg.coarse,
        p=opt["p"], settle_time=opt["settle_time"], threads=cfg.threads,
    )
    seed1, ctx1 = equilibrium_seed(
        opt["seed_v0_b"], params, cfg.coarse,
        p=opt["p"], settle_time=opt["settle_time"], threads=cfg.threads,
    )
    return seed0, seed1, ctx1


def _run_simulate(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    times = np.linspace(0.0, opt["sim_time"], opt["sim_samples"] + 1)[1:]
    state = perturbed_state(cfg.model)
    sigma0 = restrict(state, cfg.model)
    states, info = integrate_path(state, cfg.model, times, cfg.integrator)
    rows = [(0.0, sigma0)] + [
        (t, restrict(st, cfg.model)) for t, st in zip(times, states)
    ]
    _write_csv(cfg, "sigma_t.csv", ("t", "sigma"), rows)
    results = {
        "sigma_final": rows[-1][1],
        "steps": info.steps,
        "min_headway": info.min_headway,
    }
    return ["sigma_t.csv"], results, None


def _run_branch(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    seed0, seed1, ctx1 = _seed_pair(cfg, cfg.model)
    branch = continue_branch(
        seed0, seed1, opt["direction"], opt["n_steps"], ctx1, cfg.model, cfg.coarse,
        s=opt["s"], sigma_stop=opt["sigma_stop"], threads=cfg.threads,
    )
    _write_csv(cfg, "branch.csv", BRANCH_COLUMNS, _branch_rows(branch))
    results: dict[str, Any] = {
        "n_points": len(branch),
        "truncated": branch.truncated,
    }
    try:
        fold = detect_fold(branch)
        results["fold"] = {
            "sigma": fold.sigma,
            "sigma_healed": fold.sigma_healed,
            "v0": fold.v0,
            "h": fold.h,
            "corroborated": fold.corroborated,
        }
    except Exception:
        results["fold"] = None
    error = {"kind": "truncated_branch"} if branch.truncated else None
    return ["branch.csv"], results, error


def _run_fold2(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    seed0, seed1, ctx1 = _seed_pair(cfg, cfg.model)
    branch = continue_branch(
        seed0, seed1, opt["direction"], opt["n_steps"], ctx1, cfg.model, cfg.coarse,
        s=opt["s"], sigma_stop=opt["sigma_stop"], threads=cfg.threads,
    )
    estimate = detect_fold(branch)
    ctx_fold = branch.points[estimate.index].context or ctx1
    seed_fold, ctx_ref = refine_fold(
        estimate, ctx_fold, cfg.model, cfg.coarse, threads=cfg.threads
    )
    h_range = (opt["h_min"], opt["h_max"])
    up = continue_fold(
        seed_fold, opt["fold_steps"], ctx_ref, cfg.model, cfg.coarse,
        s=opt["fold_s"], direction=+1, h_range=h_range, threads=cfg.threads,
    )
    down = continue_fold(
        seed_fold, opt["fold_steps"], ctx_ref, cfg.model, cfg.coarse,
        s=opt["fold_s"], direction=-1, h_range=h_range, threads=cfg.threads,
    )
    points = list(reversed(down.points[1:])) + [seed_fold] + up.points[1:]
    curve = Branch(points=points, metadata={"kind": "fold_curve"})
    _write_csv(cfg, "fold_curve.csv", BRANCH_COLUMNS, _branch_rows(curve))
    results = {
        "n_points": len(curve),
        "seed_fold": {"sigma": seed_fold.sigma, "v0": seed_fold.v0, "h": seed_fold.h},
        "truncated": up.truncated or down.truncated,
    }
    error = {"kind": "truncated_branch"} if (up.truncated or down.truncated) else None
    return ["fold_curve.csv"], results, error


def _warm_jam_seed(cfg: RunConfig, v0: float):
    """Seed equilibrium at v0, warm-starting from a jam settled at
    seed_v0_a (below the uniform-flow threshold the jam is not reachable
    from a small perturbation, so it must be carried in)."""
    opt = cfg.options
    par_seed = cfg.model.replace(v0=opt["seed_v0_a"])
    settled, _ = integrate_path(
        perturbed_state(par_seed), par_seed, [opt["settle_time"]], cfg.integrator
    )
    return equilibrium_seed(
        v0, cfg.model, cfg.coarse,
        p=opt["p"], settle_time=opt["settle_time"], start=settled[0],
        threads=cfg.threads,
    )


def _run_backward(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    params = cfg.model.replace(v0=opt["bw_v0"])
    seed, ctx = _warm_jam_seed(cfg, opt["bw_v0"])
    sigma = seed.sigma + opt["bw_offset"]
    rows = [(0, sigma, math.nan)]
    for step in range(1, opt["bw_steps"] + 1):
        result = projective_euler_step(sigma, opt["bw_dt"], ctx, params, cfg.coarse)
        sigma = result.sigma
        rows.append((step, result.sigma, result.healed))
        if result.healed > 1e-4:  # adapt the lifting chart along the trajectory
            ctx = LiftContext.from_reference(result.state, params, ctx.p)
    _write_csv(cfg, "backward.csv", ("step", "sigma", "sigma_healed"), rows)
    results = {
        "start_sigma": seed.sigma + opt["bw_offset"],
        "final_sigma": rows[-1][1],
        "final_sigma_healed": rows[-1][2],
    }
    return ["backward.csv"], results, None


def _run_hopf(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    hs = np.linspace(opt["hopf_h_min"], opt["hopf_h_max"], opt["hopf_h_count"])
    rows = []
    for j in opt["hopf_modes"]:
        for h in hs:
            rows.append((h, j, hopf_v0(float(h), int(j), cfg.model)))
    _write_csv(cfg, "hopf.csv", ("h", "j", "v0"), rows)
    return ["hopf.csv"], {"n_rows": len(rows)}, None


def _run_lifting_sweep(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    v0_grid = np.linspace(
        opt["downsweep_v0_max"], opt["downsweep_v0_min"], opt["downsweep_count"]
    )
    reference = direct_downsweep(
        [float(v) for v in v0_grid], cfg.model, cfg.coarse,
        settle_time=opt["downsweep_time"],
    )
    spec = BranchDistanceSpec(a=opt["window_a"], b=opt["window_b"], norm_kind="l2_squared")
    rows = lifting_sweep(
        opt["p_values"], cfg.model.h, cfg.model, cfg.coarse,
        reference=reference, spec=spec,
        seed_v0=(opt["seed_v0_a"], opt["seed_v0_b"]),
        n_steps=opt["n_steps"], s=opt["s"], sigma_stop=opt["sigma_stop"],
        threads=cfg.threads,
    )
    summary = [
        (r.p, r.distance_unhealed, r.distance_healed, len(r.branch), r.branch.truncated)
        for r in rows
    ]
    _write_csv(
        cfg, "sweep_lifting.csv",
        ("p", "distance_unhealed", "distance_healed", "n_points", "truncated"),
        summary,
    )
    long_rows: list[tuple] = []
    for r in rows:
        long_rows += _branch_rows(r.branch, prefix=(r.p,))
    _write_csv(
        cfg, "sweep_lifting_branches.csv", ("p", *BRANCH_COLUMNS), long_rows
    )
    _write_csv(
        cfg, "sweep_reference.csv", BRANCH_COLUMNS, _branch_rows(reference)
    )
    truncated = any(r.branch.truncated for r in rows)
    error = {"kind": "truncated_branch"} if truncated else None
    return (
        ["sweep_lifting.csv", "sweep_lifting_branches.csv", "sweep_reference.csv"],
        {"rows": len(rows), "truncated": truncated},
        error,
    )


def _run_tskip_scan(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    spec = BranchDistanceSpec(a=opt["window_a"], b=opt["window_b"], norm_kind="l1")
    rows = tskip_scan(
        opt["tskip_values"], cfg.model.h, cfg.model, cfg.coarse,
        reference_tskip=opt["tskip_reference"], spec=spec,
        seed_v0=(opt["seed_v0_a"], opt["seed_v0_b"]),
        n_steps=opt["n_steps"], s=opt["s"], sigma_stop=opt["sigma_stop"],
        threads=cfg.threads,
    )
    _write_csv(
        cfg, "sweep_tskip.csv",
        ("t_skip", "distance_to_reference", "n_points", "truncated"),
        [(r.t_skip, r.distance_to_reference, len(r.branch), r.branch.truncated) for r in rows],
    )
    long_rows: list[tuple] = []
    for r in rows:
        long_rows += _branch_rows(r.branch, prefix=(r.t_skip,))
    _write_csv(cfg, "sweep_tskip_branches.csv", ("t_skip", *BRANCH_COLUMNS), long_rows)
    truncated = any(r.branch.truncated for r in rows)
    error = {"kind": "truncated_branch"} if truncated else None
    return (
        ["sweep_tskip.csv", "sweep_tskip_branches.csv"],
        {"rows": len(rows), "truncated": truncated},
        error,
    )


def _run_fberror_scan(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    from .solvers import forward_backward_error

    opt = cfg.options
    params = cfg.model.replace(v0=opt["fb_v0"])
    seed, ctx = _warm_jam_seed(cfg, opt["fb_v0"])
    sigma_base = seed.sigma + opt["fb_offset"]
    rows = []
    for t_skip in opt["fb_tskip_values"]:
        for delta in opt["fb_delta_values"]:
            st = cfg.coarse.replace(t_skip=t_skip, delta=delta)
            err = forward_backward_error(sigma_base, -2.0 * delta, ctx, params, st)
            rows.append((t_skip, delta, -2.0 * delta, err))
    _write_csv(cfg, "fberror.csv", ("t_skip", "delta", "delta_t", "error"), rows)
    return ["fberror.csv"], {"sigma_base": sigma_base, "n_rows": len(rows)}, None


def _run_converge_lab(cfg: RunConfig) -> tuple[list[str], dict, dict | None]:
    opt = cfg.options
    sys_ = ToySystem(
        epsilon=opt["lab_epsilon"],
        fast_rate=opt["lab_fast_rate"],
        lift_offsets=(opt["lab_offset_1"], opt["lab_offset_2"]),
        restriction_mix=opt["lab_mix"],
    )
    delta = opt["lab_delta"] if opt["lab_delta"] > 0 else 0.1 / sys_.epsilon
    scan = convergence_scan(opt["lab_x"], delta, sys_, opt["lab_tskip_values"])
    _write_csv(
        cfg, "convergence.csv", ("t_skip", "error"),
        [(e.t_skip, e.error) for e in scan.entries],
    )
    results = {
        "slope": scan.slope,
        "reference": scan.reference,
        "delta": delta,
        "fast_rate": sys_.fast_rate,
    }
    return ["convergence.csv"], results, None


_RUNNERS = {
    "simulate": _run_simulate,
    "branch": _run_branch,
    "fold2": _run_fold2,
    "backward": _run_backward,
    "hopf": _run_hopf,
    "lifting-sweep": _run_lifting_sweep,
    "tskip-scan": _run_tskip_scan,
    "fberror-scan": _run_fberror_scan,
    "converge-lab": _run_converge_lab,
}


def run(config: RunConfig) -> int:
    """Execute a validated run: dispatch, write artifacts, record metadata.

    Returns 0 on success and 1 on failure; failures still write run.json
    (and partial artifacts where available) with a structured error record.
    """
    config.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        outputs, results, error = _RUNNERS[config.command](config)
    except Exception as exc:  # noqa: BLE001 - structured reporting boundary
        error = {"kind": type(exc).__name__, "message": str(exc)}
        _write_run_json(config, [], {}, error)
        print(json.dumps({"error": error}, sort_keys=True), file=sys.stderr)
        return 1
    _write_run_json(config, outputs + ["run.json"], results, error)
    if error is not None:
        print(json.dumps({"error": error}, sort_keys=True), file=sys.stderr)
        return 1
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="eqfree",
        description="Equation-free analysis of the ring-road optimal-velocity model",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="key = value config file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="parallel burst evaluations (0 = all cores)")
        sp.add_argument("--unsafe", action="store_true",
                        help="allow parameters outside the studied ranges")
    args = parser.parse_args(argv)
    try:
        config = load_config(
            args.config,
            command=args.command,
            out_dir=args.out,
            threads=args.threads,
            unsafe=args.unsafe,
        )
    except (ConfigError, OSError) as exc:
        print(json.dumps({"error": {"kind": "config", "message": str(exc)}},
                         sort_keys=True), file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
