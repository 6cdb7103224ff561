"""Mediation effect estimates with delta-method confidence intervals.

Three standard effects of switching exposure from a reference level to an
active level are computed from the fitted outcome and mediator models:

* controlled direct effect (CDE), holding the mediator at a fixed value;
* natural direct effect (NDE), integrating the curves over the mediator
  distribution at the reference exposure;
* natural indirect effect (NIE), contrasting the mediator distributions at
  the two exposure levels under the curve active at the chosen level.

Mediator expectations of the fitted curves are Gaussian integrals evaluated
by panelled Gauss-Legendre quadrature: one panel per knot interval plus two
tail panels truncated several noise standard deviations from the conditional
mean, with wide panels subdivided so the Gaussian kernel is always resolved.
The free linear term of a convexity-shaped curve is integrated exactly.

Standard errors follow the delta method.  Outcome and mediator coefficient
estimates come from separate regressions and are treated as uncorrelated;
the mediator noise variance estimate contributes ``2 s^4 / dof``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import block_diag
from scipy.special import ndtri

from shapemed.cone_projection import RankDeficiencyError
from shapemed.mediation_models import Dataset, MediatorFit, OutcomeFit, fit_mediator
from shapemed.spline_basis import BasisKind, KnotSequence, SplineFamily, basis_matrix


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre panel layout for mediator expectations."""

    points: int = 20
    tail_sds: float = 8.0
    max_panel_sds: float = 2.0

    def __post_init__(self) -> None:
        if self.points < 2 or self.tail_sds <= 0 or self.max_panel_sds <= 0:
            raise ValueError("invalid quadrature specification")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class EffectQuery:
    """Exposure contrast and evaluation point for the effect estimates.

    ``m`` is the fixed mediator value for the CDE; ``c`` is the confounder
    vector at which the natural effects condition (encoded scale, matching
    the fitted models).
    """

    a: float = 1.0
    a_star: float = 0.0
    m: float | None = None
    c: np.ndarray | None = None
    level: float = 0.95

    def __post_init__(self) -> None:
        if self.a not in (0.0, 1.0) or self.a_star not in (0.0, 1.0):
            raise ValueError("exposure levels must be 0 or 1")
        if self.a == self.a_star:
            raise ValueError("exposure contrast needs two distinct levels")
        if not 0.0 < self.level < 1.0:
            raise ValueError("confidence level must be inside (0, 1)")
        if self.c is not None:
            object.__setattr__(self, "c", np.asarray(self.c, dtype=float).ravel())


@dataclass(frozen=True)
class EffectEstimate:
    kind: str
    estimate: float
    std_error: float
    ci_lower: float
    ci_upper: float
    level: float


def delta_variance(gradient: np.ndarray, covariance: np.ndarray) -> float:
    """Quadratic form g' Cov g, clipped at zero against roundoff."""
    g = np.asarray(gradient, dtype=float).ravel()
    cov = np.asarray(covariance, dtype=float)
    if cov.shape != (g.size, g.size):
        raise ValueError("gradient and covariance dimensions do not match")
    if not np.allclose(cov, cov.T, atol=1e-8 * (1.0 + np.abs(cov).max())):
        raise ValueError("covariance matrix is not symmetric")
    return max(float(g @ cov @ g), 0.0)


def confidence_interval(estimate: float, variance: float,
                        level: float = 0.95) -> tuple[float, float]:
    """Two-sided normal interval at the given coverage level."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be inside (0, 1)")
    if variance < 0.0:
        raise ValueError("variance must be non-negative")
    half = float(ndtri(0.5 + level / 2.0)) * np.sqrt(variance)
    return float(estimate - half), float(estimate + half)


def _family_for(shape) -> SplineFamily:
    return shape.basis_kind.family


def _curve_point_vector(kind_family: SplineFamily, knots: KnotSequence,
                        m: float) -> np.ndarray:
    """Per-coefficient values of one curve at a point (identity term first
    for the convexity family)."""
    family = BasisKind(kind_family)
    row = basis_matrix(np.array([m]), family, knots).values[0]
    if kind_family is SplineFamily.C_CUBIC:
        return np.concatenate([[m], row])
    return row


def eval_f(coefs: np.ndarray, kind: BasisKind, knots: KnotSequence, m):
    """Evaluate a curve given its coefficients against the basis ``kind``.

    For the convexity family the first coefficient multiplies the identity
    (which is never negated); the remaining coefficients multiply the basis.
    A fitted model's reported coefficients pair with the plain family basis,
    so pass ``BasisKind(shape.basis_kind.family)`` for those; the negated
    kinds match the raw non-negative cone coefficients.
    """
    coefs = np.asarray(coefs, dtype=float)
    grid = np.atleast_1d(np.asarray(m, dtype=float))
    sign = -1.0 if kind.negated else 1.0
    basis = basis_matrix(grid, BasisKind(kind.family), knots).values * sign
    if kind.family is SplineFamily.C_CUBIC:
        if coefs.size != knots.num_bases + 1:
            raise ValueError("convexity curves need one coefficient per basis "
                             "plus a leading linear term")
        values = coefs[0] * grid + basis @ coefs[1:]
    else:
        if coefs.size != knots.num_bases:
            raise ValueError("monotone curves need one coefficient per basis")
        values = basis @ coefs
    return values if np.ndim(m) else float(values[0])


@lru_cache(maxsize=8)
def _unit_rule(points: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(points)
    return nodes, weights


def _quadrature_grid(knots: KnotSequence, mean: float, sd: float,
                     quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights covering the knot span plus both Gaussian tails."""
    lo = mean - quad.tail_sds * sd
    hi = mean + quad.tail_sds * sd
    edges = np.unique(np.concatenate([knots.distinct(), [lo, hi]]))
    unit_x, unit_w = _unit_rule(quad.points)
    all_nodes = []
    all_weights = []
    limit = quad.max_panel_sds * sd
    for left, right in zip(edges[:-1], edges[1:]):
        width = right - left
        if width <= 0:
            continue
        pieces = min(int(np.ceil(width / limit)), 400) if limit > 0 else 1
        cuts = np.linspace(left, right, pieces + 1)
        for a, b in zip(cuts[:-1], cuts[1:]):
            half = 0.5 * (b - a)
            all_nodes.append(0.5 * (a + b) + half * unit_x)
            all_weights.append(half * unit_w)
    return np.concatenate(all_nodes), np.concatenate(all_weights)


@dataclass(frozen=True)
class _ExpectationParts:
    """A curve expectation with its partial derivatives."""

    value: float
    dcoefs: np.ndarray
    dmean: float
    dnoise_var: float


def _expectation_parts(coefs: np.ndarray, kind: BasisKind, knots: KnotSequence,
                       mean: float, noise_var: float,
                       quad: QuadratureSpec) -> _ExpectationParts:
    if noise_var <= 0:
        raise ValueError("mediator noise variance must be positive")
    coefs = np.asarray(coefs, dtype=float)
    sd = float(np.sqrt(noise_var))
    nodes, weights = _quadrature_grid(knots, mean, sd, quad)
    sign = -1.0 if kind.negated else 1.0
    basis = basis_matrix(nodes, BasisKind(kind.family), knots).values * sign
    z = (nodes - mean) / sd
    density = np.exp(-0.5 * z * z) / (sd * np.sqrt(2.0 * np.pi))
    mass = weights * density

    expected_basis = basis.T @ mass
    score = (nodes - mean) / noise_var
    dmean_basis = basis.T @ (mass * score)
    var_weight = -0.5 / noise_var + (nodes - mean) ** 2 / (2.0 * noise_var ** 2)
    dnoise_basis = basis.T @ (mass * var_weight)

    if kind.family is SplineFamily.C_CUBIC:
        if coefs.size != knots.num_bases + 1:
            raise ValueError("convexity curves need one coefficient per basis "
                             "plus a leading linear term")
        spline = coefs[1:]
        # The identity term integrates exactly: E[M] = mean.
        value = coefs[0] * mean + float(spline @ expected_basis)
        dcoefs = np.concatenate([[mean], expected_basis])
        dmean = coefs[0] + float(spline @ dmean_basis)
        dnoise = float(spline @ dnoise_basis)
    else:
        if coefs.size != knots.num_bases:
            raise ValueError("monotone curves need one coefficient per basis")
        value = float(coefs @ expected_basis)
        dcoefs = expected_basis
        dmean = float(coefs @ dmean_basis)
        dnoise = float(coefs @ dnoise_basis)
    return _ExpectationParts(value=value, dcoefs=dcoefs, dmean=dmean,
                             dnoise_var=dnoise)


def expected_f(coefs: np.ndarray, kind: BasisKind, knots: KnotSequence,
               mediator_fit: MediatorFit, a: float, c: np.ndarray,
               quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected curve value under the fitted mediator law at exposure ``a``."""
    c = np.asarray(c, dtype=float).ravel()
    if c.size != mediator_fit.gamma2.size:
        raise ValueError("confounder vector does not match the mediator fit")
    mean = mediator_fit.gamma0 + mediator_fit.gamma1 * a + float(mediator_fit.gamma2 @ c)
    parts = _expectation_parts(coefs, kind, knots, mean,
                               mediator_fit.sigma2_sq, quad)
    return parts.value


def _require_c(query: EffectQuery, fit: OutcomeFit) -> np.ndarray:
    d = fit.beta4.size
    c = query.c
    if c is None:
        if d == 0:
            return np.zeros(0)
        raise ValueError("this effect needs a confounder vector in the query")
    if c.size != d:
        raise ValueError("confounder vector does not match the fitted model")
    return c


def _curve_kinds(fit: OutcomeFit) -> tuple[SplineFamily, SplineFamily]:
    return (_family_for(fit.shapes.exposed_shape),
            _family_for(fit.shapes.unexposed_shape))


def _estimate(kind: str, value: float, variance: float, level: float) -> EffectEstimate:
    lo, hi = confidence_interval(value, variance, level)
    return EffectEstimate(kind=kind, estimate=value, std_error=float(np.sqrt(variance)),
                          ci_lower=lo, ci_upper=hi, level=level)


def _cde_with_gradient(fit: OutcomeFit, query: EffectQuery) -> tuple[float, np.ndarray]:
    if query.m is None:
        raise ValueError("the controlled direct effect needs a mediator value")
    fam1, fam2 = _curve_kinds(fit)
    diff = query.a - query.a_star
    vec1 = _curve_point_vector(fam1, fit.knots, float(query.m))
    vec2 = _curve_point_vector(fam2, fit.knots, float(query.m))
    value = (fit.beta1 + float(fit.beta2 @ vec1) - float(fit.beta3 @ vec2)) * diff
    gradient = np.concatenate([[diff], diff * vec1, -diff * vec2])
    return value, gradient


def _outcome_block(fit: OutcomeFit, include_beta1: bool) -> np.ndarray:
    sl = fit.coef_slices
    start = sl["beta1"].start if include_beta1 else sl["beta2"].start
    stop = sl["beta3"].stop
    return fit.covariance[start:stop, start:stop]


def _noise_var_variance(mediator_fit: MediatorFit) -> float:
    return 2.0 * mediator_fit.sigma2_sq ** 2 / mediator_fit.residual_dof


def cde(outcome_fit: OutcomeFit, query: EffectQuery) -> EffectEstimate:
    """Controlled direct effect at the query's fixed mediator value."""
    value, gradient = _cde_with_gradient(outcome_fit, query)
    variance = delta_variance(gradient, _outcome_block(outcome_fit, include_beta1=True))
    return _estimate("CDE", value, variance, query.level)


def _nde_with_gradient(fit: OutcomeFit, mediator_fit: MediatorFit,
                       query: EffectQuery,
                       quad: QuadratureSpec) -> tuple[float, np.ndarray]:
    c = _require_c(query, fit)
    fam1, fam2 = _curve_kinds(fit)
    diff = query.a - query.a_star
    mean_star = (mediator_fit.gamma0 + mediator_fit.gamma1 * query.a_star
                 + float(mediator_fit.gamma2 @ c))
    parts1 = _expectation_parts(fit.beta2, BasisKind(fam1), fit.knots,
                                mean_star, mediator_fit.sigma2_sq, quad)
    parts2 = _expectation_parts(fit.beta3, BasisKind(fam2), fit.knots,
                                mean_star, mediator_fit.sigma2_sq, quad)
    value = (fit.beta1 + parts1.value - parts2.value) * diff
    dmean_net = parts1.dmean - parts2.dmean
    gradient = np.concatenate([
        [diff],
        diff * parts1.dcoefs,
        -diff * parts2.dcoefs,
        [diff * dmean_net, diff * dmean_net * query.a_star],
        diff * dmean_net * c,
        [diff * (parts1.dnoise_var - parts2.dnoise_var)],
    ])
    return value, gradient


def nde(outcome_fit: OutcomeFit, mediator_fit: MediatorFit, query: EffectQuery,
        quad: QuadratureSpec = DEFAULT_QUADRATURE) -> EffectEstimate:
    """Natural direct effect, integrating over the mediator at the reference
    exposure."""
    value, gradient = _nde_with_gradient(outcome_fit, mediator_fit, query, quad)
    covariance = block_diag(
        _outcome_block(outcome_fit, include_beta1=True),
        mediator_fit.covariance,
        [[_noise_var_variance(mediator_fit)]],
    )
    variance = delta_variance(gradient, covariance)
    return _estimate("NDE", value, variance, query.level)


def _nie_with_gradient(fit: OutcomeFit, mediator_fit: MediatorFit,
                       query: EffectQuery,
                       quad: QuadratureSpec) -> tuple[float, np.ndarray]:
    c = _require_c(query, fit)
    fam1, fam2 = _curve_kinds(fit)
    noise_var = mediator_fit.sigma2_sq

    def conditional_mean(level: float) -> float:
        return (mediator_fit.gamma0 + mediator_fit.gamma1 * level
                + float(mediator_fit.gamma2 @ c))

    n2 = fit.beta2.size
    n3 = fit.beta3.size
    grad2 = np.zeros(n2)
    grad3 = np.zeros(n3)
    value = 0.0
    dmean_terms: list[tuple[float, float]] = []  # (weight on dmean, exposure level)
    dnoise = 0.0

    if query.a == 1.0:
        at_active = _expectation_parts(fit.beta2, BasisKind(fam1), fit.knots,
                                       conditional_mean(query.a), noise_var, quad)
        at_reference = _expectation_parts(fit.beta2, BasisKind(fam1), fit.knots,
                                          conditional_mean(query.a_star),
                                          noise_var, quad)
        value = at_active.value - at_reference.value
        grad2 = at_active.dcoefs - at_reference.dcoefs
        dmean_terms = [(at_active.dmean, query.a), (-at_reference.dmean, query.a_star)]
        dnoise = at_active.dnoise_var - at_reference.dnoise_var
    else:
        at_active = _expectation_parts(fit.beta3, BasisKind(fam2), fit.knots,
                                       conditional_mean(query.a), noise_var, quad)
        at_reference = _expectation_parts(fit.beta3, BasisKind(fam2), fit.knots,
                                          conditional_mean(query.a_star),
                                          noise_var, quad)
        value = at_active.value - at_reference.value
        grad3 = at_active.dcoefs - at_reference.dcoefs
        dmean_terms = [(at_active.dmean, query.a), (-at_reference.dmean, query.a_star)]
        dnoise = at_active.dnoise_var - at_reference.dnoise_var

    dgamma0 = sum(w for w, _ in dmean_terms)
    dgamma1 = sum(w * lvl for w, lvl in dmean_terms)
    gradient = np.concatenate([
        grad2,
        grad3,
        [dgamma0, dgamma1],
        dgamma0 * c,
        [dnoise],
    ])
    return value, gradient


def nie(outcome_fit: OutcomeFit, mediator_fit: MediatorFit, query: EffectQuery,
        quad: QuadratureSpec = DEFAULT_QUADRATURE) -> EffectEstimate:
    """Natural indirect effect: the mediator-distribution contrast under the
    curve active at the query's exposure level."""
    value, gradient = _nie_with_gradient(outcome_fit, mediator_fit, query, quad)
    covariance = block_diag(
        _outcome_block(outcome_fit, include_beta1=False),
        mediator_fit.covariance,
        [[_noise_var_variance(mediator_fit)]],
    )
    variance = delta_variance(gradient, covariance)
    return _estimate("NIE", value, variance, query.level)


def linear_baseline(data: Dataset, query: EffectQuery,
                    ) -> tuple[EffectEstimate, EffectEstimate, EffectEstimate]:
    """Effects from the ordinary linear interaction model.

    The outcome regression is Y ~ 1 + A + M + A*M + C; the mediator model is
    the same one used by the shape-restricted path.  Returns (CDE, NDE, NIE).
    """
    n = data.n_obs
    d = data.n_confounders
    design = np.column_stack([
        np.ones(n), data.exposure, data.mediator,
        data.exposure * data.mediator, data.confounders,
    ])
    dof = n - 4 - d
    if dof <= 0:
        raise ValueError("not enough observations for the linear model")
    q_basis, r_factor = np.linalg.qr(design)
    diag = np.abs(np.diag(r_factor))
    scale = np.maximum(np.linalg.norm(design, axis=0), 1.0)
    if np.any(diag <= 1e-10 * scale):
        raise RankDeficiencyError("linear outcome design is rank deficient")
    coefs = np.linalg.solve(r_factor, q_basis.T @ data.outcome)
    resid = data.outcome - design @ coefs
    sigma_sq = float(resid @ resid) / dof
    r_inv = np.linalg.solve(r_factor, np.eye(design.shape[1]))
    cov = sigma_sq * (r_inv @ r_inv.T)

    mediator_fit = fit_mediator(data)
    b1, b2, b3 = coefs[1], coefs[2], coefs[3]
    diff = query.a - query.a_star
    c = query.c if query.c is not None else np.zeros(d)
    c = np.asarray(c, dtype=float).ravel()
    if c.size != d:
        raise ValueError("confounder vector does not match the data")

    if query.m is None:
        raise ValueError("the controlled direct effect needs a mediator value")
    m = float(query.m)
    cde_value = (b1 + b3 * m) * diff
    cde_grad = np.array([diff, m * diff])
    cde_cov = cov[np.ix_([1, 3], [1, 3])]
    cde_est = _estimate("CDE", cde_value, delta_variance(cde_grad, cde_cov),
                        query.level)

    mean_star = (mediator_fit.gamma0 + mediator_fit.gamma1 * query.a_star
                 + float(mediator_fit.gamma2 @ c))
    nde_value = (b1 + b3 * mean_star) * diff
    nde_grad = np.concatenate([
        [diff, mean_star * diff],
        [b3 * diff, b3 * diff * query.a_star],
        b3 * diff * c,
    ])
    nde_cov = block_diag(cov[np.ix_([1, 3], [1, 3])], mediator_fit.covariance)
    nde_est = _estimate("NDE", nde_value, delta_variance(nde_grad, nde_cov),
                        query.level)

    gamma1 = mediator_fit.gamma1
    nie_value = (b2 + b3 * query.a) * gamma1 * diff
    nie_grad = np.array([gamma1 * diff, gamma1 * query.a * diff,
                         (b2 + b3 * query.a) * diff])
    nie_cov = block_diag(cov[np.ix_([2, 3], [2, 3])],
                         [[mediator_fit.covariance[1, 1]]])
    nie_est = _estimate("NIE", nie_value, delta_variance(nie_grad, nie_cov),
                        query.level)
    return cde_est, nde_est, nie_est
