"""Outcome and mediator regressions for mediation with shape-restricted curves.

The outcome model lets the mediator act through a separate curve in each
exposure arm,

    Y = b0 + b1 A + f_exposed(M) A + f_unexposed(M) (1 - A) + b4' C + noise,

with each curve constrained to a declared shape (monotone or convex/concave).
Monotone curves use quadratic I-spline bases with non-negative coefficients;
convex and concave curves use cubic C-spline bases plus an unconstrained
linear term.  Decreasing and concave shapes negate their basis columns so the
same non-negativity cone applies.  The mediator model is an ordinary linear
regression of the mediator on exposure and confounders.

Fitted coefficients are reported on the natural scale: negated blocks are
sign-flipped back, so the returned curve coefficients can be fed straight
into a basis evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from shapemed.cone_projection import (
    ConeProblem,
    RankDeficiencyError,
    project_onto_cone,
    refit_active,
)
from shapemed.spline_basis import (
    BasisKind,
    KnotSequence,
    SplineFamily,
    basis_matrix,
    make_knots,
)


class Shape(Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    CONVEX = "convex"
    CONCAVE = "concave"

    @property
    def basis_kind(self) -> BasisKind:
        if self is Shape.INCREASING:
            return BasisKind(SplineFamily.I_QUADRATIC, negated=False)
        if self is Shape.DECREASING:
            return BasisKind(SplineFamily.I_QUADRATIC, negated=True)
        if self is Shape.CONVEX:
            return BasisKind(SplineFamily.C_CUBIC, negated=False)
        return BasisKind(SplineFamily.C_CUBIC, negated=True)

    @property
    def has_identity_term(self) -> bool:
        """Convexity-type shapes carry a free linear term in the mediator."""
        return self in (Shape.CONVEX, Shape.CONCAVE)


@dataclass(frozen=True)
class ShapeSpec:
    """Declared curve shapes for the exposed and unexposed arms."""

    exposed_shape: Shape
    unexposed_shape: Shape


@dataclass(frozen=True)
class Dataset:
    """Aligned arrays for one analysis sample.

    ``confounders`` is an n-by-d matrix (d may be zero) whose categorical
    columns, if any, are already one-hot encoded.
    """

    outcome: np.ndarray
    exposure: np.ndarray
    mediator: np.ndarray
    confounders: np.ndarray
    confounder_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = np.asarray(self.outcome, dtype=float)
        a = np.asarray(self.exposure, dtype=float)
        m = np.asarray(self.mediator, dtype=float)
        c = np.asarray(self.confounders, dtype=float)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.size == 0:
            c = c.reshape(y.size, 0)
        for name, arr in (("outcome", y), ("exposure", a), ("mediator", m)):
            if arr.ndim != 1 or arr.size != y.size:
                raise ValueError(f"{name} must be a vector matching the sample size")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains missing or non-finite values")
        if c.shape[0] != y.size:
            raise ValueError("confounders must have one row per observation")
        if not np.all(np.isfinite(c)):
            raise ValueError("confounders contain missing or non-finite values")
        if not np.all(np.isin(a, (0.0, 1.0))):
            raise ValueError("exposure must be coded 0/1")
        names = tuple(self.confounder_names)
        if names and len(names) != c.shape[1]:
            raise ValueError("confounder_names must match the confounder columns")
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "exposure", a)
        object.__setattr__(self, "mediator", m)
        object.__setattr__(self, "confounders", c)
        object.__setattr__(self, "confounder_names", names)

    @property
    def n_obs(self) -> int:
        return self.outcome.size

    @property
    def n_confounders(self) -> int:
        return self.confounders.shape[1]


@dataclass(frozen=True)
class DesignPartition:
    """Outcome design split into blocks, with a role label per column.

    ``labels`` names the model coefficient each design column estimates, in
    block order [free_intercepts | exposure-and-confounders | exposed curve |
    unexposed curve].  ``signs`` maps internal (cone-parametrised)
    coefficients to reported ones: reported = sign * internal.
    """

    free_block: np.ndarray
    linear_block: np.ndarray
    exposed_block: np.ndarray
    unexposed_block: np.ndarray
    labels: tuple[tuple[str, int], ...]
    signs: np.ndarray


def face_split(weights: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Scale each row of ``matrix`` by the matching entry of ``weights``."""
    w = np.asarray(weights, dtype=float)
    mat = np.asarray(matrix, dtype=float)
    if w.ndim != 1 or mat.ndim != 2 or mat.shape[0] != w.size:
        raise ValueError("weights must be a vector with one entry per row")
    return w[:, None] * mat


def build_outcome_design(data: Dataset, shapes: ShapeSpec,
                         knots: KnotSequence) -> DesignPartition:
    """Assemble the four-block outcome design for the declared shapes."""
    a = data.exposure
    m = data.mediator
    one = np.ones(data.n_obs)

    free_cols = [one]
    free_labels: list[tuple[str, int]] = [("beta0", 0)]
    exposed_kind = shapes.exposed_shape.basis_kind
    unexposed_kind = shapes.unexposed_shape.basis_kind

    if shapes.exposed_shape.has_identity_term:
        free_cols.append(m * a)
        free_labels.append(("beta2", 0))
    if shapes.unexposed_shape.has_identity_term:
        free_cols.append(m * (1.0 - a))
        free_labels.append(("beta3", 0))

    linear_cols = [a] + [data.confounders[:, j] for j in range(data.n_confounders)]
    linear_labels = [("beta1", 0)] + [("beta4", j) for j in range(data.n_confounders)]

    exposed_basis = basis_matrix(m, exposed_kind, knots).values
    unexposed_basis = basis_matrix(m, unexposed_kind, knots).values
    exposed_block = face_split(a, exposed_basis)
    unexposed_block = face_split(1.0 - a, unexposed_basis)

    offset_exposed = 1 if shapes.exposed_shape.has_identity_term else 0
    offset_unexposed = 1 if shapes.unexposed_shape.has_identity_term else 0
    exposed_labels = [("beta2", offset_exposed + i) for i in range(knots.num_bases)]
    unexposed_labels = [("beta3", offset_unexposed + i) for i in range(knots.num_bases)]

    labels = tuple(free_labels + linear_labels + exposed_labels + unexposed_labels)
    n_free = len(free_cols) + len(linear_cols)
    signs = np.concatenate([
        np.ones(n_free),
        np.full(knots.num_bases, -1.0 if exposed_kind.negated else 1.0),
        np.full(knots.num_bases, -1.0 if unexposed_kind.negated else 1.0),
    ])
    return DesignPartition(
        free_block=np.column_stack(free_cols),
        linear_block=np.column_stack(linear_cols),
        exposed_block=exposed_block,
        unexposed_block=unexposed_block,
        labels=labels,
        signs=signs,
    )


@dataclass(frozen=True)
class OutcomeFit:
    """Fitted outcome model on the reported (sign-corrected) scale.

    ``beta2`` and ``beta3`` hold the exposed and unexposed curve coefficients;
    for convexity-type shapes the first entry is the free linear term.  The
    covariance is ordered (beta0, beta1, beta2..., beta3..., beta4...), with
    exact zero rows and columns for curve coefficients that the cone
    projection eliminated.
    """

    beta0: float
    beta1: float
    beta2: np.ndarray
    beta3: np.ndarray
    beta4: np.ndarray
    sigma1_sq: float
    covariance: np.ndarray
    active_set: np.ndarray
    knots: KnotSequence
    shapes: ShapeSpec
    residual_dof: int

    @property
    def coef_slices(self) -> dict[str, slice]:
        n2 = self.beta2.size
        n3 = self.beta3.size
        return {
            "beta0": slice(0, 1),
            "beta1": slice(1, 2),
            "beta2": slice(2, 2 + n2),
            "beta3": slice(2 + n2, 2 + n2 + n3),
            "beta4": slice(2 + n2 + n3, 2 + n2 + n3 + self.beta4.size),
        }


@dataclass(frozen=True)
class MediatorFit:
    """OLS fit of the mediator on exposure and confounders.

    The covariance is ordered (gamma0, gamma1, gamma2...).  ``residual_dof``
    is n minus the number of regression coefficients, the denominator of
    ``sigma2_sq``.
    """

    gamma0: float
    gamma1: float
    gamma2: np.ndarray
    sigma2_sq: float
    covariance: np.ndarray
    residual_dof: int


def fit_outcome(data: Dataset, shapes: ShapeSpec, num_bases: int = 5,
                tol: float = 1e-8) -> OutcomeFit:
    """Fit the shape-restricted outcome model.

    Knots come from the pooled mediator sample.  After the cone projection
    picks the active basis columns, coefficients and covariance are re-derived
    by ordinary least squares on the surviving columns, then mapped back to
    the reported parameter order and sign convention.
    """
    knots = make_knots(data.mediator, num_bases)
    part = build_outcome_design(data, shapes, knots)
    unconstrained = np.hstack([part.free_block, part.linear_block])
    constrained = np.hstack([part.exposed_block, part.unexposed_block])
    problem = ConeProblem(response=data.outcome, unconstrained=unconstrained,
                          constrained=constrained)
    solution = project_onto_cone(problem, tol=tol)
    raw_coefs, raw_cov, sigma1_sq = refit_active(problem, solution.active_set)

    reported = part.signs * raw_coefs
    cov = part.signs[:, None] * raw_cov * part.signs[None, :]

    n2 = num_bases + (1 if shapes.exposed_shape.has_identity_term else 0)
    n3 = num_bases + (1 if shapes.unexposed_shape.has_identity_term else 0)
    d = data.n_confounders
    canonical: list[tuple[str, int]] = (
        [("beta0", 0), ("beta1", 0)]
        + [("beta2", j) for j in range(n2)]
        + [("beta3", j) for j in range(n3)]
        + [("beta4", j) for j in range(d)]
    )
    position = {label: i for i, label in enumerate(part.labels)}
    order = np.array([position[label] for label in canonical], dtype=int)
    coefs = reported[order]
    cov = cov[np.ix_(order, order)]

    return OutcomeFit(
        beta0=float(coefs[0]),
        beta1=float(coefs[1]),
        beta2=coefs[2:2 + n2].copy(),
        beta3=coefs[2 + n2:2 + n2 + n3].copy(),
        beta4=coefs[2 + n2 + n3:].copy(),
        sigma1_sq=sigma1_sq,
        covariance=cov,
        active_set=solution.active_set,
        knots=knots,
        shapes=shapes,
        residual_dof=data.n_obs - unconstrained.shape[1] - solution.active_set.size,
    )


def fit_mediator(data: Dataset) -> MediatorFit:
    """OLS of the mediator on an intercept, exposure, and confounders."""
    n = data.n_obs
    d = data.n_confounders
    design = np.column_stack([np.ones(n), data.exposure, data.confounders])
    dof = n - d - 2
    if dof <= 0:
        raise ValueError("not enough observations to fit the mediator model")
    q_basis, r_factor = np.linalg.qr(design)
    diag = np.abs(np.diag(r_factor))
    scale = np.maximum(np.linalg.norm(design, axis=0), 1.0)
    if np.any(diag <= 1e-10 * scale):
        raise RankDeficiencyError("mediator design is rank deficient")
    coefs = np.linalg.solve(r_factor, q_basis.T @ data.mediator)
    resid = data.mediator - design @ coefs
    sigma2_sq = float(resid @ resid) / dof
    r_inv = np.linalg.solve(r_factor, np.eye(design.shape[1]))
    cov = sigma2_sq * (r_inv @ r_inv.T)
    return MediatorFit(
        gamma0=float(coefs[0]),
        gamma1=float(coefs[1]),
        gamma2=coefs[2:].copy(),
        sigma2_sq=sigma2_sq,
        covariance=cov,
        residual_dof=dof,
    )


def encode_confounder_frame(frame: pd.DataFrame,
                            levels: dict[str, tuple[str, ...]] | None = None,
                            ) -> tuple[np.ndarray, list[str]]:
    """One-hot encode the non-numeric columns of a confounder table.

    Numeric columns pass through unchanged.  Each categorical column expands
    to indicator columns named ``col=level`` with the first level dropped as
    the reference.  ``levels`` fixes the level sets (and their order) per
    column; otherwise the sorted observed values are used.  A fixed level set
    keeps the encoded width stable when rare levels are absent from a sample.
    """
    columns: list[np.ndarray] = []
    names: list[str] = []
    for col in frame.columns:
        series = frame[col]
        if pd.api.types.is_numeric_dtype(series):
            columns.append(series.to_numpy(dtype=float))
            names.append(str(col))
            continue
        values = series.astype(str).to_numpy()
        if levels is not None and col in levels:
            cats = list(levels[col])
        else:
            cats = sorted(pd.unique(values))
        unexpected = set(values) - set(cats)
        if unexpected:
            raise ValueError(f"column {col!r} has unexpected levels {sorted(unexpected)}")
        for level in cats[1:]:
            columns.append((values == level).astype(float))
            names.append(f"{col}={level}")
    if not columns:
        return np.zeros((len(frame), 0)), []
    return np.column_stack(columns), names
