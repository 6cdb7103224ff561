"""Least squares over a polyhedral cone via an active-set hinge iteration.

Solves

    minimize  || y - U a - Z b ||^2   subject to  b >= 0,

where U collects the unconstrained columns and Z the sign-constrained ones.
The residual projected off the unconstrained block drives the iteration:
the inactive constrained column with the largest positive dual enters, the
equality-constrained least squares problem is re-solved, and any column
whose coefficient turns negative leaves.  The iteration stops once every
inactive dual is below tolerance, which is the KKT condition for the cone.

``refit_active`` re-runs ordinary least squares on the surviving columns and
expands coefficients and covariance back to full size, with exact zeros in
the rows and columns of the eliminated constrained coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RankDeficiencyError(RuntimeError):
    """Raised when a design block that must have full column rank does not."""


@dataclass(frozen=True)
class ConeProblem:
    """One constrained least squares problem.

    ``unconstrained`` may have zero columns; ``constrained`` holds the block
    whose coefficients are restricted to be non-negative.
    """

    response: np.ndarray
    unconstrained: np.ndarray
    constrained: np.ndarray

    def __post_init__(self) -> None:
        y = np.asarray(self.response, dtype=float)
        u = np.asarray(self.unconstrained, dtype=float)
        z = np.asarray(self.constrained, dtype=float)
        if y.ndim != 1:
            raise ValueError("response must be a vector")
        if u.ndim != 2 or z.ndim != 2:
            raise ValueError("design blocks must be matrices")
        if u.shape[0] != y.size or z.shape[0] != y.size:
            raise ValueError("design blocks and response must have equal rows")
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "unconstrained", u)
        object.__setattr__(self, "constrained", z)

    @property
    def n_obs(self) -> int:
        return self.response.size

    @property
    def n_unconstrained(self) -> int:
        return self.unconstrained.shape[1]

    @property
    def n_constrained(self) -> int:
        return self.constrained.shape[1]


@dataclass(frozen=True)
class ConeSolution:
    """Projection result: coefficients, surviving columns, fitted values."""

    unconstrained_coefs: np.ndarray
    constrained_coefs: np.ndarray
    active_set: np.ndarray
    fitted: np.ndarray
    residual_ss: float


def _lstsq(design: np.ndarray, response: np.ndarray) -> np.ndarray:
    coefs, _, _, _ = np.linalg.lstsq(design, response, rcond=None)
    return coefs


def _solve_subset(problem: ConeProblem, active: list[int]):
    design = np.hstack([problem.unconstrained, problem.constrained[:, active]])
    if design.shape[1] == 0:
        fitted = np.zeros(problem.n_obs)
        return np.zeros(0), np.zeros(0), fitted, problem.response.copy()
    coefs = _lstsq(design, problem.response)
    fitted = design @ coefs
    p = problem.n_unconstrained
    return coefs[:p], coefs[p:], fitted, problem.response - fitted


def project_onto_cone(problem: ConeProblem, tol: float = 1e-8) -> ConeSolution:
    """Project the response onto the cone spanned by the design.

    ``tol`` is a relative dual tolerance: the iteration stops when every
    inactive column's dual, normalised by the column's length after removing
    the unconstrained span, falls below ``tol * ||response||``.
    """
    y = problem.response
    u = problem.unconstrained
    z = problem.constrained
    p = problem.n_unconstrained
    q = problem.n_constrained

    if p:
        q_basis, r_factor = np.linalg.qr(u)
        diag = np.abs(np.diag(r_factor))
        scale = np.linalg.norm(u, axis=0)
        if np.any(diag <= 1e-12 * np.maximum(scale, 1.0)):
            raise RankDeficiencyError("unconstrained block is rank deficient")
        residual_off_u = z - q_basis @ (q_basis.T @ z)
    else:
        residual_off_u = z.copy()

    column_scale = np.linalg.norm(residual_off_u, axis=0)
    z_scale = np.maximum(np.linalg.norm(z, axis=0), 1.0)
    usable = column_scale > 1e-12 * z_scale
    dual_floor = tol * max(np.linalg.norm(y), 1e-30)

    active: list[int] = []
    alpha, beta, fitted, resid = _solve_subset(problem, active)
    cap = max(10 * q, 20)
    solves = 0
    while True:
        duals = np.full(q, -np.inf)
        inactive = np.array([j for j in range(q) if j not in active and usable[j]],
                            dtype=int)
        if inactive.size:
            duals[inactive] = (residual_off_u[:, inactive].T @ resid) \
                / column_scale[inactive]
        entering = int(np.argmax(duals)) if inactive.size else -1
        if entering < 0 or duals[entering] <= dual_floor:
            break
        active.append(entering)
        active.sort()
        while True:
            solves += 1
            if solves > cap:
                raise RuntimeError(
                    "cone projection failed to converge; the constrained "
                    "design is numerically degenerate")
            alpha, beta, fitted, resid = _solve_subset(problem, active)
            negative = np.where(beta < -1e-12)[0]
            if negative.size == 0:
                break
            worst = negative[np.argmin(beta[negative])]
            active.pop(int(worst))

    full_beta = np.zeros(q)
    if active:
        full_beta[np.array(active)] = np.maximum(beta, 0.0)
    return ConeSolution(
        unconstrained_coefs=alpha,
        constrained_coefs=full_beta,
        active_set=np.array(sorted(active), dtype=int),
        fitted=fitted,
        residual_ss=float(resid @ resid),
    )


def refit_active(problem: ConeProblem, active_set) -> tuple[np.ndarray, np.ndarray, float]:
    """Ordinary least squares on the unconstrained block plus the kept columns.

    Returns the full-length coefficient vector (eliminated constrained
    coefficients exactly zero), the matching covariance matrix (zero rows and
    columns for eliminated coefficients), and the residual variance estimate
    with one degree of freedom per retained column.
    """
    active = sorted(int(j) for j in np.asarray(active_set, dtype=int))
    p = problem.n_unconstrained
    q = problem.n_constrained
    if any(j < 0 or j >= q for j in active):
        raise ValueError("active set indices outside the constrained block")
    design = np.hstack([problem.unconstrained, problem.constrained[:, active]])
    n, cols = design.shape
    dof = n - cols
    if dof <= 0:
        raise ValueError("not enough observations for the retained columns")

    if cols:
        q_basis, r_factor = np.linalg.qr(design)
        diag = np.abs(np.diag(r_factor))
        scale = np.maximum(np.linalg.norm(design, axis=0), 1.0)
        if np.any(diag <= 1e-10 * scale):
            raise RankDeficiencyError("retained design columns are collinear")
        coefs = np.linalg.solve(r_factor, q_basis.T @ problem.response)
        resid = problem.response - design @ coefs
        sigma_sq = float(resid @ resid) / dof
        r_inv = np.linalg.solve(r_factor, np.eye(cols))
        cov_small = sigma_sq * (r_inv @ r_inv.T)
    else:
        resid = problem.response
        sigma_sq = float(resid @ resid) / dof
        coefs = np.zeros(0)
        cov_small = np.zeros((0, 0))

    keep = list(range(p)) + [p + j for j in active]
    full_coefs = np.zeros(p + q)
    full_cov = np.zeros((p + q, p + q))
    full_coefs[keep] = coefs
    full_cov[np.ix_(keep, keep)] = cov_small
    return full_coefs, full_cov, sigma_sq
