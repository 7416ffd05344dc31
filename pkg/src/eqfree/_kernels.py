"""Compiled inner loop: adaptive 4(5) stepping of the ring-road ODE.

Positions are unwrapped (monotone within a lap); the last headway wraps
via x[0] + L - x[N-1], so the headway sum telescopes to L identically.
The kernel tracks the minimum headway seen over accepted steps as an
overtaking diagnostic.  Status codes: 0 ok, 1 step budget exceeded,
2 step-size underflow.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .dp45 import (
    A21, A31, A32, A41, A42, A43, A51, A52, A53, A54,
    A61, A62, A63, A64, A65, B1, B3, B4, B5, B6,
    E1, E3, E4, E5, E6, E7, SAFETY, FAC_MIN, FAC_MAX, ORDER_EXPONENT,
)


@njit(cache=True, nogil=True)
def _ov_rhs(x, y, dx, dxdt, dydt, n, tau_inv, v0, h, L, tanh_h):
    for i in range(n - 1):
        dx[i] = x[i + 1] - x[i]
    dx[n - 1] = x[0] + L - x[n - 1]
    for i in range(n):
        v = v0 * (np.tanh(dx[i] - h) + tanh_h)
        dxdt[i] = y[i]
        dydt[i] = tau_inv * (v - y[i])


@njit(cache=True, nogil=True)
def integrate_ov(x0, y0, tau_inv, v0, h_par, L, t_targets,
                 abs_tol, rel_tol, h_init, max_step, max_steps):
    n = x0.shape[0]
    m = t_targets.shape[0]
    X = np.empty((m, n))
    Y = np.empty((m, n))
    tanh_h = np.tanh(h_par)

    x = x0.copy()
    y = y0.copy()
    dx = np.empty(n)
    k1x = np.empty(n); k1y = np.empty(n)
    k2x = np.empty(n); k2y = np.empty(n)
    k3x = np.empty(n); k3y = np.empty(n)
    k4x = np.empty(n); k4y = np.empty(n)
    k5x = np.empty(n); k5y = np.empty(n)
    k6x = np.empty(n); k6y = np.empty(n)
    k7x = np.empty(n); k7y = np.empty(n)
    xs = np.empty(n); ys = np.empty(n)
    xn = np.empty(n); yn = np.empty(n)

    t = 0.0
    hs = h_init
    steps = 0
    min_headway = np.inf
    for i in range(n - 1):
        d = x[i + 1] - x[i]
        if d < min_headway:
            min_headway = d
    d = x[0] + L - x[n - 1]
    if d < min_headway:
        min_headway = d

    _ov_rhs(x, y, dx, k1x, k1y, n, tau_inv, v0, h_par, L, tanh_h)
    for j in range(m):
        t_end = t_targets[j]
        while t < t_end:
            if steps >= max_steps:
                return 1, steps, t, min_headway, X, Y
            h = hs
            if t + h > t_end:
                h = t_end - t
            if h < 1e-14 * max(abs(t), 1.0):
                return 2, steps, t, min_headway, X, Y

            for i in range(n):
                xs[i] = x[i] + h * A21 * k1x[i]
                ys[i] = y[i] + h * A21 * k1y[i]
            _ov_rhs(xs, ys, dx, k2x, k2y, n, tau_inv, v0, h_par, L, tanh_h)
            for i in range(n):
                xs[i] = x[i] + h * (A31 * k1x[i] + A32 * k2x[i])
                ys[i] = y[i] + h * (A31 * k1y[i] + A32 * k2y[i])
            _ov_rhs(xs, ys, dx, k3x, k3y, n, tau_inv, v0, h_par, L, tanh_h)
            for i in range(n):
                xs[i] = x[i] + h * (A41 * k1x[i] + A42 * k2x[i] + A43 * k3x[i])
                ys[i] = y[i] + h * (A41 * k1y[i] + A42 * k2y[i] + A43 * k3y[i])
            _ov_rhs(xs, ys, dx, k4x, k4y, n, tau_inv, v0, h_par, L, tanh_h)
            for i in range(n):
                xs[i] = x[i] + h * (A51 * k1x[i] + A52 * k2x[i]
                                    + A53 * k3x[i] + A54 * k4x[i])
                ys[i] = y[i] + h * (A51 * k1y[i] + A52 * k2y[i]
                                    + A53 * k3y[i] + A54 * k4y[i])
            _ov_rhs(xs, ys, dx, k5x, k5y, n, tau_inv, v0, h_par, L, tanh_h)
            for i in range(n):
                xs[i] = x[i] + h * (A61 * k1x[i] + A62 * k2x[i] + A63 * k3x[i]
                                    + A64 * k4x[i] + A65 * k5x[i])
                ys[i] = y[i] + h * (A61 * k1y[i] + A62 * k2y[i] + A63 * k3y[i]
                                    + A64 * k4y[i] + A65 * k5y[i])
            _ov_rhs(xs, ys, dx, k6x, k6y, n, tau_inv, v0, h_par, L, tanh_h)
            for i in range(n):
                xn[i] = x[i] + h * (B1 * k1x[i] + B3 * k3x[i] + B4 * k4x[i]
                                    + B5 * k5x[i] + B6 * k6x[i])
                yn[i] = y[i] + h * (B1 * k1y[i] + B3 * k3y[i] + B4 * k4y[i]
                                    + B5 * k5y[i] + B6 * k6y[i])
            _ov_rhs(xn, yn, dx, k7x, k7y, n, tau_inv, v0, h_par, L, tanh_h)

            err = 0.0
            for i in range(n):
                ex = h * (E1 * k1x[i] + E3 * k3x[i] + E4 * k4x[i]
                          + E5 * k5x[i] + E6 * k6x[i] + E7 * k7x[i])
                ey = h * (E1 * k1y[i] + E3 * k3y[i] + E4 * k4y[i]
                          + E5 * k5y[i] + E6 * k6y[i] + E7 * k7y[i])
                sx = abs_tol + rel_tol * max(abs(x[i]), abs(xn[i]))
                sy = abs_tol + rel_tol * max(abs(y[i]), abs(yn[i]))
                err += (ex / sx) ** 2 + (ey / sy) ** 2
            err = np.sqrt(err / (2.0 * n))

            steps += 1
            if err <= 1.0:
                t = t + h
                for i in range(n):
                    x[i] = xn[i]
                    y[i] = yn[i]
                    k1x[i] = k7x[i]
                    k1y[i] = k7y[i]
                for i in range(n - 1):
                    d = x[i + 1] - x[i]
                    if d < min_headway:
                        min_headway = d
                d = x[0] + L - x[n - 1]
                if d < min_headway:
                    min_headway = d
                if err == 0.0:
                    fac = FAC_MAX
                else:
                    fac = min(FAC_MAX, max(FAC_MIN, SAFETY * err ** ORDER_EXPONENT))
                hs = min(h * fac, max_step)
            else:
                hs = h * max(FAC_MIN, SAFETY * err ** ORDER_EXPONENT)
        for i in range(n):
            X[j, i] = x[i]
            Y[j, i] = y[i]
    return 0, steps, t, min_headway, X, Y
