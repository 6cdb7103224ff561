"""Monotone and convexity-restricted regression spline bases.

The bases here are built on a knot sequence with doubled endpoints,

    t_1 = t_2 < t_3 < ... < t_{k+1} = t_{k+2},

which carries k basis functions.  Basis i lives on the three consecutive
knots (t_i, t_{i+1}, t_{i+2}).  Three families are provided:

* M-splines: densities, each integrating to one over its support.  Order 1
  is a step function, higher orders come from the usual recursion.
* Quadratic I-splines: running integrals of the order-2 M-splines.  Each
  rises from 0 to 1, so a combination with non-negative coefficients is
  monotone non-decreasing.
* Cubic C-splines: running integrals of the I-splines.  Each is convex and
  non-decreasing, so a non-negative combination is convex.  A convex fit
  additionally needs a free linear term, which is left to the caller.

Negating a basis turns "non-decreasing" into "non-increasing" and "convex"
into "concave" under the same non-negative coefficient constraint.

Basis indices are 1-based throughout, matching the knot convention above.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class SplineFamily(Enum):
    """Which integrated spline family a basis matrix is built from."""

    I_QUADRATIC = "iquadratic"
    C_CUBIC = "ccubic"


@dataclass(frozen=True)
class BasisKind:
    """Spline family plus an optional sign flip of every basis column."""

    family: SplineFamily
    negated: bool = False


@dataclass(frozen=True)
class KnotSequence:
    """Knot sequence with doubled endpoints carrying ``num_bases`` bases."""

    knots: np.ndarray
    num_bases: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", arr)
        if arr.ndim != 1:
            raise ValueError("knots must be a one-dimensional sequence")
        if self.num_bases < 2:
            raise ValueError("a knot sequence needs at least two bases")
        if arr.size != self.num_bases + 2:
            raise ValueError(
                f"expected {self.num_bases + 2} knots for {self.num_bases} "
                f"bases, got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("knots must be finite")
        if arr[0] != arr[1] or arr[-1] != arr[-2]:
            raise ValueError("boundary knots must be doubled")
        core = arr[1:-1]
        if not np.all(np.diff(core) > 0):
            raise ValueError("interior knots must be strictly increasing")

    @property
    def lower(self) -> float:
        return float(self.knots[0])

    @property
    def upper(self) -> float:
        return float(self.knots[-1])

    def distinct(self) -> np.ndarray:
        """Distinct knot values, i.e. the edges of the non-empty intervals."""
        return self.knots[1:-1].copy()


@dataclass(frozen=True)
class BasisMatrix:
    """Dense basis evaluations: column j holds basis j+1 at every input."""

    values: np.ndarray
    kind: BasisKind
    knots: KnotSequence


def _check_index(index: int, max_index: int) -> None:
    if not 1 <= index <= max_index:
        raise ValueError(f"basis index {index} outside 1..{max_index}")


def _as_grid(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


def _restore(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


def mspline_eval(x, index: int, order: int, knots: KnotSequence):
    """Evaluate one M-spline.

    Order 1 is the indicator of [t_index, t_index+1) scaled to integrate to
    one; a zero-width interval contributes zero.  Higher orders use the
    standard two-term recursion.  Accepts a scalar or an array of points.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    t = knots.knots
    _check_index(index, t.size - order)
    grid, scalar = _as_grid(x)
    return _restore(_mspline(grid, index, order, t), scalar)


def _mspline(x: np.ndarray, index: int, order: int, t: np.ndarray) -> np.ndarray:
    lo = t[index - 1]
    hi = t[index - 1 + order]
    if hi <= lo:
        return np.zeros_like(x)
    support = (x >= lo) & (x < hi)
    if order == 1:
        return np.where(support, 1.0 / (hi - lo), 0.0)
    inner = (x - lo) * _mspline(x, index, order - 1, t)
    inner += (hi - x) * _mspline(x, index + 1, order - 1, t)
    value = order * inner / ((order - 1) * (hi - lo))
    return np.where(support, value, 0.0)


def ispline_eval(x, index: int, knots: KnotSequence):
    """Evaluate one quadratic I-spline (0 left of its knots, 1 right of them).

    Points at or beyond the upper knot of the basis take the value 1, so the
    right boundary of the data range is not dropped.
    """
    t = knots.knots
    _check_index(index, knots.num_bases)
    grid, scalar = _as_grid(x)
    lo, mid, hi = t[index - 1], t[index], t[index + 1]
    out = np.zeros_like(grid)
    if mid > lo:
        rising = (grid >= lo) & (grid < mid)
        out[rising] = (grid[rising] - lo) ** 2 / ((hi - lo) * (mid - lo))
    if hi > mid:
        settling = (grid >= mid) & (grid < hi)
        out[settling] = 1.0 - (hi - grid[settling]) ** 2 / ((hi - lo) * (hi - mid))
    out[grid >= hi] = 1.0
    return _restore(out, scalar)


def cspline_eval(x, index: int, knots: KnotSequence):
    """Evaluate one cubic C-spline (running integral of the I-spline).

    Beyond the upper knot of the basis the function continues linearly with
    unit slope; left of the lower knot it is identically zero.
    """
    t = knots.knots
    _check_index(index, knots.num_bases)
    grid, scalar = _as_grid(x)
    lo, mid, hi = t[index - 1], t[index], t[index + 1]
    centroid = (lo + mid + hi) / 3.0
    out = np.zeros_like(grid)
    if mid > lo:
        rising = (grid >= lo) & (grid < mid)
        out[rising] = (grid[rising] - lo) ** 3 / (3.0 * (hi - lo) * (mid - lo))
    if hi > mid:
        settling = (grid >= mid) & (grid < hi)
        tail = (hi - grid[settling]) ** 3 / (3.0 * (hi - lo) * (hi - mid))
        out[settling] = grid[settling] - centroid + tail
    beyond = grid >= hi
    out[beyond] = grid[beyond] - centroid
    return _restore(out, scalar)


def make_knots(values, num_bases: int) -> KnotSequence:
    """Place knots for the given data: doubled endpoints at the data range,
    interior knots at equally spaced sample quantiles."""
    data = np.asarray(values, dtype=float)
    if data.ndim != 1 or data.size < 2:
        raise ValueError("need a one-dimensional sample with at least 2 points")
    if not np.all(np.isfinite(data)):
        raise ValueError("values must be finite")
    if num_bases < 2:
        raise ValueError("need at least two bases")
    lo = float(data.min())
    hi = float(data.max())
    if lo == hi:
        raise ValueError("values are constant; no knot range")
    probs = np.linspace(0.0, 1.0, num_bases)[1:-1]
    interior = np.quantile(data, probs)
    knots = np.concatenate([[lo, lo], interior, [hi, hi]])
    return KnotSequence(knots=knots, num_bases=num_bases)


def basis_matrix(values, kind: BasisKind, knots: KnotSequence) -> BasisMatrix:
    """Evaluate every basis of the requested family at the given points."""
    grid, _ = _as_grid(values)
    if kind.family is SplineFamily.I_QUADRATIC:
        columns = [ispline_eval(grid, i, knots) for i in range(1, knots.num_bases + 1)]
    else:
        columns = [cspline_eval(grid, i, knots) for i in range(1, knots.num_bases + 1)]
    out = np.column_stack(columns) if columns else np.zeros((grid.size, 0))
    if kind.negated:
        out = -out
    return BasisMatrix(values=out, kind=kind, knots=knots)
