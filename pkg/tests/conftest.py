"""Shared helpers for the test suite."""
from __future__ import annotations

import numpy as np

from shapemed.spline_basis import KnotSequence


def random_knots(rng: np.random.Generator, num_bases: int | None = None,
                 span: tuple[float, float] = (-2.0, 3.0),
                 min_gap: float = 0.05) -> KnotSequence:
    """Draw a valid doubled-endpoint knot sequence with well-separated knots.

    The minimum gap keeps curvature bounded so quadrature oracles hit their
    stated tolerances.
    """
    if num_bases is None:
        num_bases = int(rng.integers(2, 9))
    lo, hi = span
    width = hi - lo
    # Rejection-sample interior knots until all gaps clear the floor.
    while True:
        interior = np.sort(rng.uniform(lo + min_gap * width,
                                       hi - min_gap * width,
                                       size=num_bases - 2))
        edges = np.concatenate([[lo], interior, [hi]])
        if num_bases == 2 or np.min(np.diff(edges)) >= min_gap * width:
            break
    knots = np.concatenate([[lo, lo], interior, [hi, hi]])
    return KnotSequence(knots=knots, num_bases=num_bases)


def cumulative_integral(fn, lower: float, upper: float, breakpoints,
                        points_per_unit: int = 4000):
    """Midpoint-rule cumulative integral of ``fn`` from ``lower``.

    Returns (grid, integral-at-grid).  The grid contains every breakpoint, so
    panels never straddle a kink, and the midpoint rule never evaluates the
    integrand at a jump point (the spline families use half-open supports).
    """
    base = np.linspace(lower, upper, max(int((upper - lower) * points_per_unit), 2000))
    grid = np.unique(np.concatenate([base, np.asarray(breakpoints, dtype=float)]))
    grid = grid[(grid >= lower) & (grid <= upper)]
    steps = np.diff(grid)
    midpoints = grid[:-1] + 0.5 * steps
    increments = fn(midpoints) * steps
    integral = np.concatenate([[0.0], np.cumsum(increments)])
    return grid, integral
