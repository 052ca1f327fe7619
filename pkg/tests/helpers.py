"""Shared finite-difference oracles for the test suite."""

import numpy as np


def central_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of a scalar function at x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def mixed_second_trace(f, x, y, h=1e-4):
    """sum_a d^2/dx_a dy_a f(x, y) by a four-point central stencil."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    total = 0.0
    for a in range(x.size):
        ex = np.zeros_like(x)
        ex[a] = h
        ey = np.zeros_like(y)
        ey[a] = h
        total += (
            f(x + ex, y + ey) - f(x + ex, y - ey)
            - f(x - ex, y + ey) + f(x - ex, y - ey)
        ) / (4.0 * h * h)
    return total


def rel_err(approx, exact):
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = max(float(np.linalg.norm(exact)), 1e-300)
    return float(np.linalg.norm(approx - exact)) / denom
