"""Analytic stability thresholds and branch-comparison measures."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqfree import (
    Branch,
    BranchDistanceSpec,
    BranchNotGraphError,
    BranchPoint,
    ModelParams,
    branch_distance,
    direct_downsweep,
    hopf_omega,
    hopf_residual,
    hopf_v0,
)
from eqfree.analysis import _monotone_graph

PARAMS = ModelParams()  # tau = 1/1.7, L = N = 60

# 40-digit evaluation of the mode-1 threshold at h = 1.2
HOPF_12_1 = 0.8868849823962802


def mp_threshold(h, j, params):
    """Independent high-precision oracle for the mode threshold."""
    mp.mp.dps = 40
    ang = 2 * mp.pi * j / params.N
    gain = 1 - mp.tanh(mp.mpf(repr(h)) - mp.mpf(params.L) / params.N) ** 2
    tau = 1 / mp.mpf("1.7")
    return float((1 - mp.cos(ang)) / (tau * mp.sin(ang) ** 2 * gain))


class TestHopfThreshold:
    def test_frozen_value(self):
        assert hopf_v0(1.2, 1, PARAMS) == pytest.approx(HOPF_12_1, rel=1e-14)
        assert hopf_v0(1.2, 1, PARAMS) == pytest.approx(0.8869, abs=1e-4)

    @pytest.mark.parametrize("h,j", [(1.0, 1), (1.2, 1), (1.2, 3), (1.5, 7)])
    def test_against_mpmath(self, h, j):
        assert hopf_v0(h, j, PARAMS) == pytest.approx(mp_threshold(h, j, PARAMS), rel=1e-13)

    def test_mode_symmetry(self):
        for j in range(1, 30):
            a = hopf_v0(1.2, j, PARAMS)
            b = hopf_v0(1.2, PARAMS.N - j, PARAMS)
            assert abs(a - b) <= 1e-12 * abs(a)

    def test_first_mode_destabilizes_first(self):
        modes = [j for j in range(1, 60) if j != 30]
        values = {j: hopf_v0(1.2, j, PARAMS) for j in modes}
        assert min(values, key=values.get) == 1

    def test_mean_headway_inflection(self):
        # at h = L/N the tanh gain factor drops out
        ang = 2 * math.pi / 60
        expected = (1 - math.cos(ang)) / (PARAMS.tau * math.sin(ang) ** 2)
        assert hopf_v0(1.0, 1, PARAMS) == pytest.approx(expected, rel=1e-13)

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            hopf_v0(1.2, 0, PARAMS)
        with pytest.raises(ValueError):
            hopf_v0(1.2, 60, PARAMS)
        with pytest.raises(ValueError):
            hopf_v0(1.2, 30, PARAMS)  # zero-frequency mode


class TestHopfResidual:
    def test_vanishes_at_threshold(self):
        for j in (1, 2, 3, 4):
            v0 = hopf_v0(1.2, j, PARAMS)
            omega = hopf_omega(v0, 1.2, j, PARAMS)
            assert abs(hopf_residual(v0, omega, 1.2, j, PARAMS)) <= 1e-8

    def test_zero_frequency_trivial_root(self):
        assert hopf_residual(0.95, 0.0, 1.2, 1, PARAMS) == 0.0

    def test_generic_point_nonzero(self):
        assert abs(hopf_residual(0.95, 0.1, 1.2, 1, PARAMS)) > 1e-3


def graph_branch(sigma, v0):
    pts = [
        BranchPoint(sigma=s, sigma_healed=s, v0=v, h=1.2,
                    f_sigma=math.nan, multiplier=math.nan, stable=True)
        for s, v in zip(sigma, v0)
    ]
    return Branch(points=pts)


SPEC_L2 = BranchDistanceSpec(a=0.125, b=0.25, norm_kind="l2_squared")
SPEC_L1 = BranchDistanceSpec(a=0.125, b=0.25, norm_kind="l1")


class TestBranchDistance:
    def test_identical_branches(self):
        sig = np.linspace(0.1, 0.3, 25)
        br = graph_branch(sig, 0.88 + sig**2)
        assert branch_distance(br, br, SPEC_L2) == 0.0

    def test_constant_offset_closed_form(self):
        sig = np.linspace(0.1, 0.3, 25)
        f = graph_branch(sig, 0.88 + sig**2)
        g = graph_branch(sig, 0.88 + sig**2 + 0.01)
        d = branch_distance(f, g, SPEC_L2)
        assert d == pytest.approx(0.01**2 * (0.25 - 0.125), rel=1e-8)
        d1 = branch_distance(f, g, SPEC_L1)
        assert d1 == pytest.approx(0.01 * (0.25 - 0.125), rel=1e-8)

    def test_symmetry(self):
        sig = np.linspace(0.1, 0.3, 25)
        f = graph_branch(sig, 0.88 + sig**2)
        g = graph_branch(sig, 0.885 + 0.5 * sig)
        assert branch_distance(f, g, SPEC_L1) == pytest.approx(
            branch_distance(g, f, SPEC_L1), rel=1e-12
        )

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        sig = np.linspace(0.1, 0.3, 20)
        branches = [
            graph_branch(sig, 0.88 + rng.normal(0, 0.01) + rng.normal(0, 0.05) * sig)
            for _ in range(3)
        ]
        d = lambda a, b: branch_distance(a, b, SPEC_L1)
        f, g, h = branches
        assert d(f, h) <= d(f, g) + d(g, h) + 1e-9

    def test_descending_traversal_accepted(self):
        sig = np.linspace(0.3, 0.1, 25)  # branch traversed downward
        f = graph_branch(sig, 0.88 + sig**2)
        g = graph_branch(sig[::-1], 0.88 + sig[::-1] ** 2 + 0.01)
        assert branch_distance(f, g, SPEC_L2) == pytest.approx(
            1e-4 * 0.125, rel=1e-8
        )

    def test_window_not_covered(self):
        sig = np.linspace(0.14, 0.2, 10)  # does not reach b = 0.25
        f = graph_branch(sig, 0.88 + sig**2)
        with pytest.raises(BranchNotGraphError):
            branch_distance(f, f, SPEC_L2)
        assert branch_distance(f, f, SPEC_L2, allow_extrapolation=True) == 0.0

    def test_disjoint_window(self):
        sig = np.linspace(0.4, 0.5, 10)
        f = graph_branch(sig, 0.88 + sig**2)
        with pytest.raises(BranchNotGraphError):
            branch_distance(f, f, SPEC_L2, allow_extrapolation=True)

    def test_small_retrograde_wiggles_skipped(self):
        # corrector noise can drop a point slightly behind its predecessor;
        # the graph keeps the monotone envelope
        sig = np.linspace(0.3, 0.1, 25)
        sig[10] = sig[9] + 1e-3  # one retrograde point
        br = graph_branch(sig, 0.88 + sig**2)
        s_arr, _ = _monotone_graph(br, "sigma", 0.125, 0.25)
        assert s_arr[0] <= 0.125 and s_arr[-1] >= 0.25
        assert np.all(np.diff(s_arr) > 0)

    def test_genuine_reversal_rejected(self):
        # a traversal that doubles back cannot be read as a graph
        sig_down = np.linspace(0.3, 0.12, 19)
        sig_up = np.linspace(0.13, 0.2, 8)
        sig = np.concatenate([sig_down, sig_up])
        br = graph_branch(sig, 0.88 + sig**2)
        with pytest.raises(BranchNotGraphError):
            _monotone_graph(br, "sigma", 0.125, 0.25)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BranchDistanceSpec(a=0.3, b=0.2)
        with pytest.raises(ValueError):
            BranchDistanceSpec(a=0.1, b=0.2, norm_kind="l3")
        with pytest.raises(ValueError):
            BranchDistanceSpec(a=0.1, b=0.2, interpolation="pchip")


class TestDirectDownsweep:
    def test_warm_started_sweep(self, coarse):
        params = ModelParams(h=1.2, v0=0.91)
        branch = direct_downsweep(
            [0.91, 0.905, 0.9], params, coarse, settle_time=2e4
        )
        sigmas = branch.column("sigma")
        assert len(branch) == 3
        assert np.all(np.diff(sigmas) < 0)  # jam shrinks with falling v0
        assert np.all(sigmas > 0.25)

    def test_collapse_below_fold_drops_points(self, coarse):
        params = ModelParams(h=1.2, v0=0.91)
        branch = direct_downsweep(
            [0.91, 0.86], params, coarse, settle_time=3e4
        )
        # the second point is far below the fold: the jam dissolves
        assert len(branch) == 1
