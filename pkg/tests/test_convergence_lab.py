"""Slow-fast benchmark: healing-time convergence of the implicit stepper."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from eqfree import (
    IntegratorSettings,
    ToySystem,
    convergence_scan,
    toy_implicit_step,
    toy_lift,
    toy_reference_flow,
    toy_restrict,
    toy_rhs,
)
from eqfree.dp45 import integrate_to


class TestToySystem:
    def test_validation(self):
        with pytest.raises(ValueError):
            ToySystem(epsilon=0.2)
        with pytest.raises(ValueError):
            ToySystem(epsilon=-0.01)
        with pytest.raises(ValueError):
            ToySystem(fast_rate=0.0)

    def test_origin_is_equilibrium(self):
        sys_ = ToySystem()
        assert np.array_equal(toy_rhs(np.zeros(3), sys_), np.zeros(3))

    def test_frozen_slow_variable_manifold(self):
        # at epsilon=0 every point of the critical manifold is an equilibrium
        sys_ = ToySystem(epsilon=0.0)
        for x in (-0.7, 0.0, 0.4, 1.3):
            u = np.array([x, x**2, math.sin(x)])
            assert np.allclose(toy_rhs(u, sys_), 0.0, atol=1e-16)

    def test_fast_decay_closed_form(self):
        # with the slow variable frozen the fast components decay linearly
        # toward (x^2, sin x) at rates fast_rate and 2*fast_rate
        sys_ = ToySystem(epsilon=0.0, fast_rate=1.3)
        x0, c1, c2 = 0.4, 0.25, -0.15
        u0 = np.array([x0, x0**2 + c1, math.sin(x0) + c2])
        t = 1.7
        integ = IntegratorSettings(abs_tol=1e-12, rel_tol=1e-12, initial_step=1e-3)
        (u,) = integrate_to(lambda v: toy_rhs(v, sys_), u0, [t], integ)
        assert u[0] == pytest.approx(x0, abs=1e-13)
        assert u[1] == pytest.approx(x0**2 + c1 * math.exp(-1.3 * t), abs=1e-10)
        assert u[2] == pytest.approx(math.sin(x0) + c2 * math.exp(-2.6 * t), abs=1e-10)


class TestReferenceFlow:
    def test_origin_fixed_point_exact_when_lift_is_exact(self):
        sys_ = ToySystem(epsilon=0.01, lift_offsets=(0.0, 0.0))
        assert toy_reference_flow(0.0, 10.0, sys_) == pytest.approx(0.0, abs=1e-11)

    def test_origin_nearly_fixed_with_offsets(self):
        # biased lifting shifts the chart by O(epsilon * offsets)
        sys_ = ToySystem(epsilon=0.01)
        assert abs(toy_reference_flow(0.0, 10.0, sys_)) < 1e-3

    def test_reference_healing_time_validation(self):
        sys_ = ToySystem()
        with pytest.raises(ValueError):
            toy_reference_flow(0.5, 10.0, sys_, t_skip_ref=30.0)

    def test_matches_independent_oracle(self):
        # oracle: same defining equations, but scipy's implicit integrator
        # and bracketing root solve, with an even longer healing time
        sys_ = ToySystem(epsilon=0.01)
        delta = 10.0  # epsilon * delta = 0.1

        def healed(x, t):
            sol = solve_ivp(
                lambda _t, u: toy_rhs(u, sys_),
                (0.0, t),
                toy_lift(x, sys_),
                method="Radau",
                rtol=1e-12,
                atol=1e-12,
            )
            return toy_restrict(sol.y[:, -1], sys_)

        t_ref = 60.0
        target = healed(0.5, t_ref + delta)
        oracle = brentq(
            lambda y: healed(y, t_ref) - target, 0.4, 0.7, xtol=1e-12
        )
        ours = toy_reference_flow(0.5, delta, sys_)
        assert ours == pytest.approx(oracle, abs=1e-6)

    def test_zero_delta_identity(self):
        sys_ = ToySystem()
        assert toy_implicit_step(0.5, 0.0, sys_, 5.0) == 0.5


class TestConvergenceScan:
    def test_exponential_decay_rate(self):
        sys_ = ToySystem(epsilon=0.01, fast_rate=1.0)
        scan = convergence_scan(0.5, 10.0, sys_, [2, 4, 6, 8, 10])
        assert -1.2 <= scan.slope <= -0.8

    def test_monotone_decay(self):
        sys_ = ToySystem(epsilon=0.01)
        scan = convergence_scan(0.5, 10.0, sys_, [2, 4, 6, 8, 10, 12])
        errs = scan.errors()
        floor = 1e-13
        assert all(
            b <= a or (a < floor and b < floor) for a, b in zip(errs, errs[1:])
        )

    def test_rate_robust_across_epsilon(self):
        slopes = []
        for eps in (0.001, 0.01, 0.05):
            sys_ = ToySystem(epsilon=eps, fast_rate=1.0)
            scan = convergence_scan(0.5, 0.1 / eps, sys_, [2, 4, 6, 8, 10, 12])
            slopes.append(scan.slope)
        spread = (max(slopes) - min(slopes)) / abs(np.median(slopes))
        assert spread < 0.15

    def test_on_manifold_lift_is_far_more_accurate(self):
        tuned = ToySystem(epsilon=0.001, fast_rate=1.0, lift_offsets=(0.0, 0.0))
        biased = ToySystem(epsilon=0.001, fast_rate=1.0)
        scan_tuned = convergence_scan(0.5, 100.0, tuned, [2, 6, 10])
        scan_biased = convergence_scan(0.5, 100.0, biased, [2, 6, 10])
        assert np.all(scan_tuned.errors() < 0.02 * scan_biased.errors())
        # and hits the measurement floor once transients are gone
        late = convergence_scan(0.5, 100.0, tuned, [30.0 / 1.0])
        assert late.errors()[0] <= 1e-12

    def test_lift_independence_after_healing(self):
        # the transversal imprint of the lifting offsets dies exponentially;
        # run at small epsilon so the O(eps^2 delta) chart difference of the
        # two pre-image coordinates sits below the transversal remnant
        eps = 1e-6
        A = ToySystem(epsilon=eps, fast_rate=1.0, lift_offsets=(0.3, -0.2))
        B = ToySystem(epsilon=eps, fast_rate=1.0, lift_offsets=(0.2, 0.1))
        diffs = []
        for t_skip in (6.0, 13.0, 20.0):
            pa = toy_implicit_step(0.5, 10.0, A, t_skip)
            pb = toy_implicit_step(0.5, 10.0, B, t_skip)
            diffs.append(abs(pa - pb))
        assert diffs[0] > diffs[1] > diffs[2]
        assert diffs[2] <= 1e-10
        # the steps themselves moved (the comparison is not vacuous)
        assert abs(toy_implicit_step(0.5, 10.0, A, 20.0) - 0.5) > 1e-6

    def test_zero_delta_scan_is_exact(self):
        sys_ = ToySystem(epsilon=0.01)
        scan = convergence_scan(0.5, 0.0, sys_, [2, 5, 8])
        assert np.all(scan.errors() == 0.0)
