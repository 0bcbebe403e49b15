"""Cubic interpolating spline with not-a-knot end conditions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded


class InsufficientDataError(ValueError):
    pass


class ExtrapolationError(ValueError):
    pass


@dataclass(frozen=True)
class Spline:
    """Piecewise cubic ``y = a + b·dt + c·dt² + d·dt³`` with ``dt = t - x[i]``."""

    x: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __call__(self, t):
        return eval_spline(self, t)


def _second_derivatives(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve for knot second derivatives ``M``.

    Interior rows are the usual C² continuity equations; the first and last
    rows force the third derivative to be continuous at ``x[1]`` and
    ``x[n-2]``. The system is banded with two sub- and super-diagonals.
    """
    n = len(x)
    h = np.diff(x)
    delta = np.diff(y) / h
    ab = np.zeros((5, n))  # row u + i - j holds A[i, j] for u = 2

    def put(i, j, v):
        ab[2 + i - j, j] = v

    rhs = np.zeros(n)
    put(0, 0, h[1])
    put(0, 1, -(h[0] + h[1]))
    put(0, 2, h[0])
    for i in range(1, n - 1):
        put(i, i - 1, h[i - 1])
        put(i, i, 2.0 * (h[i - 1] + h[i]))
        put(i, i + 1, h[i])
        rhs[i] = 6.0 * (delta[i] - delta[i - 1])
    put(n - 1, n - 3, h[n - 2])
    put(n - 1, n - 2, -(h[n - 3] + h[n - 2]))
    put(n - 1, n - 1, h[n - 3])
    return solve_banded((2, 2), ab, rhs)


def fit_cubic_spline(x, y) -> Spline:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"x and y must be equal-length 1-D arrays, got {x.shape} and {y.shape}")
    if len(x) < 4:
        raise InsufficientDataError(f"not-a-knot cubic spline needs at least 4 points, got {len(x)}")
    if not np.all(np.diff(x) > 0):
        raise ValueError("spline abscissae must be strictly increasing")
    M = _second_derivatives(x, y)
    h = np.diff(x)
    a = y[:-1].copy()
    b = np.diff(y) / h - h * (2.0 * M[:-1] + M[1:]) / 6.0
    c = M[:-1] / 2.0
    d = np.diff(M) / (6.0 * h)
    return Spline(x, a, b, c, d)


def eval_spline(s: Spline, t):
    """Evaluate inside ``[x[0], x[-1]]``; anything outside raises."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < s.x[0]) or np.any(t_arr > s.x[-1]):
        raise ExtrapolationError(f"evaluation outside spline support [{s.x[0]}, {s.x[-1]}]")
    i = np.clip(np.searchsorted(s.x, t_arr, side="right") - 1, 0, len(s.a) - 1)
    dt = t_arr - s.x[i]
    out = s.a[i] + dt * (s.b[i] + dt * (s.c[i] + dt * s.d[i]))
    return float(out) if np.ndim(t) == 0 else out
