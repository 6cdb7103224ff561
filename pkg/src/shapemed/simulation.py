"""Monte Carlo study harness for the mediation estimators.

Synthetic cohorts follow the two-equation generator

    M = gamma0 + gamma1 * A + gamma2' C + e2,   e2 ~ N(0, sigma2^2)
    Y = beta0 + beta1 * A + f1(M) * A + f2(M) * (1 - A) + beta4' C + e1

with A ~ Bernoulli(0.5) and a fixed confounder battery (maternal age on a
half-year grid, inverse weight on a fine grid, race, season of blood draw,
smoking, ovum donor, pre-existing diabetes).  Four mediator-outcome curve
patterns are provided, each with declared shape constraints; three are
nonlinear and one is linear so a misspecified linear analysis can be put
side by side with the shape-restricted one.

The generator intercepts and confounder loadings below are deliberate
choices, not estimates: they keep the mediator inside the domain where every
pattern curve is defined (the logarithmic curve needs M < ~7.8) and put the
outcome on a birth-weight-like scale.  Effect truths follow from the known
curves by Gauss-Hermite integration against the exact mediator law.

``run_study`` runs replicates on independent, splittable random streams, so
results are identical whether replicates run serially or in a process pool.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd
from scipy.special import expit

from shapemed.cone_projection import RankDeficiencyError
from shapemed.effects import EffectEstimate, EffectQuery, cde, linear_baseline, nde, nie
from shapemed.mediation_models import (
    Dataset,
    Shape,
    ShapeSpec,
    encode_confounder_frame,
    fit_mediator,
    fit_outcome,
)

METHODS = ("ShapeRestricted", "LinearBaseline")
EFFECTS = ("CDE", "NDE", "NIE")

RACE_LEVELS = ("race1", "race2", "race3", "race4", "race5")
RACE_PROBS = (0.46, 0.28, 0.13, 0.10, 0.03)
SEASON_LEVELS = ("season1", "season2", "season3", "season4")
CONFOUNDER_LEVELS = {"race": RACE_LEVELS, "season": SEASON_LEVELS}

AGE_GRID = np.arange(18.0, 40.0 + 0.25, 0.5)
INVERSE_WEIGHT_GRID = np.round(np.arange(0.0020, 0.0143 + 5e-5, 0.0001), 4)

# Encoded design width: age, inverse_weight, race2..5, season2..4, smoking,
# ovum_donor, diabetes.
N_ENCODED = 12


def curve_sigmoid(m):
    """Increasing sigmoid between 50 and 100 (midpoint where 2e^{-1.2m}=1)."""
    return 50.0 * expit(1.2 * np.asarray(m, dtype=float) - np.log(2.0)) + 50.0


def pattern1_exposed(m):
    m = np.asarray(m, dtype=float)
    return -6.0 * (m - 5.0 / 3.0) ** 2 / 5.0 + 100.0


def pattern2_exposed(m):
    m = np.asarray(m, dtype=float)
    return (-np.exp(m) - 100.0 * m ** 2) / 50.0 + 100.0


def pattern2_unexposed(m):
    m = np.asarray(m, dtype=float)
    return -6.0 * (m + 5.0 / 3.0) ** 2 / 5.0 + 100.0


def pattern3_unexposed(m):
    # Defined only while m + 40 > e^{m/2}, i.e. m below roughly 7.8; the
    # generator keeps the mediator well inside that range.
    m = np.asarray(m, dtype=float)
    return 300.0 * np.log(-np.exp(m / 2.0) + m + 40.0) - 1000.0


def linear_exposed(m):
    return 5.5 * np.asarray(m, dtype=float) + 70.0


def linear_unexposed(m):
    return 9.5 * np.asarray(m, dtype=float) + 60.0


@dataclass(frozen=True)
class PatternSpec:
    """A mediator-outcome curve pair and the shapes used to fit it."""

    name: str
    exposed_curve: Callable[[np.ndarray], np.ndarray]
    unexposed_curve: Callable[[np.ndarray], np.ndarray]
    shapes: ShapeSpec


PATTERNS: dict[str, PatternSpec] = {
    "pattern1": PatternSpec(
        "pattern1", pattern1_exposed, curve_sigmoid,
        ShapeSpec(Shape.CONCAVE, Shape.INCREASING)),
    "pattern2": PatternSpec(
        "pattern2", pattern2_exposed, pattern2_unexposed,
        ShapeSpec(Shape.CONCAVE, Shape.CONCAVE)),
    "pattern3": PatternSpec(
        "pattern3", curve_sigmoid, pattern3_unexposed,
        ShapeSpec(Shape.INCREASING, Shape.CONCAVE)),
    "linear": PatternSpec(
        "linear", linear_exposed, linear_unexposed,
        ShapeSpec(Shape.INCREASING, Shape.INCREASING)),
}


@dataclass(frozen=True)
class GeneratorCoefficients:
    """Known regression coefficients of the synthetic-data generator.

    The loadings are ordered to match the encoded confounder columns: age,
    inverse weight, race levels 2-5, season levels 2-4, smoking, ovum donor,
    diabetes.  The age loading dominates the mediator's marginal spread, so
    the nonlinear patterns are exercised over a wide mediator range while
    the conditional spread given the confounders stays at ``sigma2``.  The
    intercept recenters the mediator near zero, where every pattern curve
    is defined and curved.
    """

    beta0: float = 3300.0
    beta1: float = 16.0
    beta4: tuple[float, ...] = (-1.0, 50.0, 30.0, -20.0, 10.0, -40.0,
                                5.0, -5.0, 10.0, -30.0, 20.0, -25.0)
    gamma0: float = -8.7
    gamma1: float = 0.3
    gamma2: tuple[float, ...] = (0.3, -2.0, 0.01, 0.01, -0.01, -0.02,
                                 0.005, -0.005, 0.005, -0.04, 0.03, -0.02)

    def __post_init__(self) -> None:
        if len(self.beta4) != N_ENCODED or len(self.gamma2) != N_ENCODED:
            raise ValueError("confounder loadings must have one entry per "
                             "encoded confounder column")


@dataclass(frozen=True)
class StudyConfig:
    """One cell of the simulation study.

    ``sigma1`` and ``sigma2`` are noise standard deviations.  ``pattern``
    names an entry of ``PATTERNS``.
    """

    pattern: str
    sigma1: float
    n: int = 500
    reps: int = 500
    sigma2: float = 0.3
    coefficients: GeneratorCoefficients = field(default_factory=GeneratorCoefficients)
    seed: int = 0
    num_bases: int = 5

    def __post_init__(self) -> None:
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; expected one "
                             f"of {sorted(PATTERNS)}")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("noise standard deviations must be positive")
        if self.reps < 1 or self.n < 1:
            raise ValueError("need at least one replicate and one observation")

    @property
    def pattern_spec(self) -> PatternSpec:
        return PATTERNS[self.pattern]


def gen_confounders(n: int, rng: np.random.Generator) -> pd.DataFrame:
    """Draw the confounder battery for ``n`` subjects."""
    if n < 1:
        raise ValueError("need at least one subject")
    return pd.DataFrame({
        "age": rng.choice(AGE_GRID, size=n),
        "inverse_weight": rng.choice(INVERSE_WEIGHT_GRID, size=n),
        "race": rng.choice(RACE_LEVELS, size=n, p=RACE_PROBS),
        "season": rng.choice(SEASON_LEVELS, size=n),
        "smoking": rng.binomial(1, 0.05, size=n).astype(float),
        "ovum_donor": rng.binomial(1, 0.02, size=n).astype(float),
        "diabetes": rng.binomial(1, 0.05, size=n).astype(float),
    })


def gen_dataset(config: StudyConfig, rng: np.random.Generator) -> Dataset:
    """Draw one synthetic cohort.

    The draw order (confounders, exposure, mediator noise, outcome noise) is
    part of the determinism contract: a fixed stream yields a fixed cohort.
    """
    spec = config.pattern_spec
    coefs = config.coefficients
    frame = gen_confounders(config.n, rng)
    encoded, names = encode_confounder_frame(frame, CONFOUNDER_LEVELS)
    exposure = rng.binomial(1, 0.5, size=config.n).astype(float)
    gamma2 = np.asarray(coefs.gamma2)
    mediator = (coefs.gamma0 + coefs.gamma1 * exposure + encoded @ gamma2
                + rng.normal(0.0, config.sigma2, size=config.n))
    beta4 = np.asarray(coefs.beta4)
    outcome = (coefs.beta0 + coefs.beta1 * exposure
               + spec.exposed_curve(mediator) * exposure
               + spec.unexposed_curve(mediator) * (1.0 - exposure)
               + encoded @ beta4
               + rng.normal(0.0, config.sigma1, size=config.n))
    return Dataset(outcome=outcome, exposure=exposure, mediator=mediator,
                   confounders=encoded, confounder_names=tuple(names))


_HERMITE_NODES, _HERMITE_WEIGHTS = np.polynomial.hermite.hermgauss(64)


def _true_expected_curve(curve, mean: float, sd: float) -> float:
    """E[curve(M)] for M ~ N(mean, sd^2), by Gauss-Hermite quadrature."""
    points = mean + np.sqrt(2.0) * sd * _HERMITE_NODES
    return float(_HERMITE_WEIGHTS @ curve(points)) / np.sqrt(np.pi)


def true_effects(config: StudyConfig, c_bar: np.ndarray,
                 m_bar: float) -> tuple[float, float, float]:
    """True (CDE, NDE, NIE) for the contrast a=1 vs a*=0 at (c_bar, m_bar).

    Uses the generator's exact curves and mediator law, so this is the
    estimand the study's confidence intervals are judged against.
    """
    spec = config.pattern_spec
    coefs = config.coefficients
    c_bar = np.asarray(c_bar, dtype=float).ravel()
    gamma2 = np.asarray(coefs.gamma2)
    if c_bar.size != gamma2.size:
        raise ValueError("confounder vector does not match the generator")
    mean_ref = coefs.gamma0 + float(gamma2 @ c_bar)
    mean_active = mean_ref + coefs.gamma1

    cde_true = (coefs.beta1 + float(spec.exposed_curve(m_bar))
                - float(spec.unexposed_curve(m_bar)))
    e1_ref = _true_expected_curve(spec.exposed_curve, mean_ref, config.sigma2)
    e1_active = _true_expected_curve(spec.exposed_curve, mean_active, config.sigma2)
    e2_ref = _true_expected_curve(spec.unexposed_curve, mean_ref, config.sigma2)
    nde_true = coefs.beta1 + e1_ref - e2_ref
    nie_true = e1_active - e1_ref
    return cde_true, nde_true, nie_true


@dataclass(frozen=True)
class StudyResult:
    """Per-replicate effect estimates plus the summary metrics.

    Arrays are indexed by replicate; failed replicates hold NaN and are
    excluded from every metric.  ``estimates``, ``ci_lower``, and
    ``ci_upper`` are keyed by (method, effect); ``truths`` by effect (the
    truth is shared by both methods).
    """

    config: StudyConfig
    estimates: dict[tuple[str, str], np.ndarray]
    ci_lower: dict[tuple[str, str], np.ndarray]
    ci_upper: dict[tuple[str, str], np.ndarray]
    truths: dict[str, np.ndarray]
    failures: int

    def _ok(self, method: str, effect: str) -> np.ndarray:
        return ~np.isnan(self.estimates[(method, effect)])

    def coverage(self, method: str, effect: str) -> float:
        ok = self._ok(method, effect)
        if not ok.any():
            return float("nan")
        truth = self.truths[effect][ok]
        lo = self.ci_lower[(method, effect)][ok]
        hi = self.ci_upper[(method, effect)][ok]
        return float(np.mean((lo <= truth) & (truth <= hi)))

    def avg_abs_rel_bias(self, method: str, effect: str) -> float:
        ok = self._ok(method, effect)
        truth = self.truths[effect][ok]
        est = self.estimates[(method, effect)][ok]
        return float(np.mean(np.abs(est - truth) / np.abs(truth)))

    def avg_mse(self, method: str, effect: str) -> float:
        ok = self._ok(method, effect)
        truth = self.truths[effect][ok]
        est = self.estimates[(method, effect)][ok]
        return float(np.mean((est - truth) ** 2))

    def summary_rows(self) -> list[dict]:
        """One row per (method, effect), in a fixed order."""
        rows = []
        for method in METHODS:
            for effect in EFFECTS:
                rows.append({
                    "pattern": self.config.pattern,
                    "method": method,
                    "effect": effect,
                    "sigma1": self.config.sigma1,
                    "coverage": self.coverage(method, effect),
                    "avg_abs_rel_bias": self.avg_abs_rel_bias(method, effect),
                    "avg_mse": self.avg_mse(method, effect),
                    "failures": self.failures,
                })
        return rows


def _replicate_estimates(config: StudyConfig,
                         seed_seq: np.random.SeedSequence) -> dict | None:
    """Run one replicate; None marks a fit failure."""
    rng = np.random.default_rng(seed_seq)
    data = gen_dataset(config, rng)
    c_bar = data.confounders.mean(axis=0)
    m_bar = float(data.mediator.mean())
    cde_true, nde_true, nie_true = true_effects(config, c_bar, m_bar)
    query = EffectQuery(a=1.0, a_star=0.0, m=m_bar, c=c_bar)
    try:
        ofit = fit_outcome(data, config.pattern_spec.shapes,
                           num_bases=config.num_bases)
        mfit = fit_mediator(data)
        shape_estimates = (cde(ofit, query), nde(ofit, mfit, query),
                           nie(ofit, mfit, query))
        linear_estimates = linear_baseline(data, query)
    except (RankDeficiencyError, ValueError, RuntimeError,
            np.linalg.LinAlgError):
        return None

    def unpack(estimates: tuple[EffectEstimate, ...]) -> dict:
        return {est.kind: (est.estimate, est.ci_lower, est.ci_upper)
                for est in estimates}

    return {
        "ShapeRestricted": unpack(shape_estimates),
        "LinearBaseline": unpack(linear_estimates),
        "truths": {"CDE": cde_true, "NDE": nde_true, "NIE": nie_true},
    }


def _resolve_workers(workers: int | None) -> int:
    if workers is not None:
        return max(int(workers), 1)
    env = os.environ.get("SHAPEMED_WORKERS", "")
    return max(int(env), 1) if env.strip() else 1


def run_study(config: StudyConfig, workers: int | None = None) -> StudyResult:
    """Run all replicates of one study cell.

    Replicates use independent spawned random streams and land in
    replicate-index order, so the result does not depend on the worker count
    or on completion order.  ``workers`` falls back to the SHAPEMED_WORKERS
    environment variable, then to serial execution.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.reps)
    workers = _resolve_workers(workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replicate_estimates,
                                     [config] * config.reps, seeds,
                                     chunksize=max(config.reps // (4 * workers), 1)))
    else:
        outcomes = [_replicate_estimates(config, seed) for seed in seeds]

    estimates = {(m, e): np.full(config.reps, np.nan)
                 for m in METHODS for e in EFFECTS}
    ci_lower = {(m, e): np.full(config.reps, np.nan)
                for m in METHODS for e in EFFECTS}
    ci_upper = {(m, e): np.full(config.reps, np.nan)
                for m in METHODS for e in EFFECTS}
    truths = {e: np.full(config.reps, np.nan) for e in EFFECTS}
    failures = 0
    for i, rec in enumerate(outcomes):
        if rec is None:
            failures += 1
            continue
        for effect in EFFECTS:
            truths[effect][i] = rec["truths"][effect]
            for method in METHODS:
                est, lo, hi = rec[method][effect]
                estimates[(method, effect)][i] = est
                ci_lower[(method, effect)][i] = lo
                ci_upper[(method, effect)][i] = hi
    return StudyResult(config=config, estimates=estimates, ci_lower=ci_lower,
                       ci_upper=ci_upper, truths=truths, failures=failures)
