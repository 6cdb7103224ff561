"""Generator, truth-computation, and study-harness tests."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from shapemed.mediation_models import Shape
from shapemed.simulation import (
    EFFECTS,
    METHODS,
    PATTERNS,
    GeneratorCoefficients,
    StudyConfig,
    StudyResult,
    curve_sigmoid,
    gen_confounders,
    gen_dataset,
    pattern1_exposed,
    pattern2_exposed,
    pattern2_unexposed,
    pattern3_unexposed,
    run_study,
    true_effects,
)

# Mediator range the default generator can produce (age spread plus noise).
MEDIATOR_SPAN = np.linspace(-4.5, 4.5, 301)


class TestPatternCurves:
    def test_sigmoid_fixed_points_and_limits(self):
        assert curve_sigmoid(0.0) == pytest.approx(200.0 / 3.0, rel=1e-12)
        assert curve_sigmoid(np.log(2.0) / 1.2) == pytest.approx(75.0, rel=1e-12)
        assert curve_sigmoid(60.0) == pytest.approx(100.0, abs=1e-8)
        assert curve_sigmoid(-60.0) == pytest.approx(50.0, abs=1e-8)

    def test_parabola_and_log_curve_values(self):
        assert pattern1_exposed(5.0 / 3.0) == pytest.approx(100.0)
        assert pattern1_exposed(0.0) == pytest.approx(100.0 - 10.0 / 3.0)
        assert pattern2_exposed(0.0) == pytest.approx(99.98)
        assert pattern2_unexposed(-5.0 / 3.0) == pytest.approx(100.0)
        assert pattern3_unexposed(0.0) == pytest.approx(300.0 * np.log(39.0) - 1000.0)

    def test_declared_shapes_match_numeric_behavior(self):
        grids = {
            Shape.INCREASING: lambda v: np.all(np.diff(v) > 0),
            Shape.CONCAVE: lambda v: np.all(np.diff(v, n=2) < 1e-9),
        }
        for spec in PATTERNS.values():
            for curve, shape in ((spec.exposed_curve, spec.shapes.exposed_shape),
                                 (spec.unexposed_curve, spec.shapes.unexposed_shape)):
                values = curve(MEDIATOR_SPAN)
                assert grids[shape](values), (spec.name, shape)

    def test_registry_names(self):
        assert set(PATTERNS) == {"pattern1", "pattern2", "pattern3", "linear"}
        for name, spec in PATTERNS.items():
            assert spec.name == name


class TestGenConfounders:
    def test_marginal_frequencies(self):
        rng = np.random.default_rng(5)
        frame = gen_confounders(100_000, rng)
        race = frame["race"].value_counts(normalize=True)
        for level, prob in zip(("race1", "race2", "race3", "race4", "race5"),
                               (0.46, 0.28, 0.13, 0.10, 0.03)):
            assert abs(race[level] - prob) < 0.01
        season = frame["season"].value_counts(normalize=True)
        assert np.allclose(season.to_numpy(), 0.25, atol=0.01)
        assert abs(frame["smoking"].mean() - 0.05) < 0.005
        assert abs(frame["ovum_donor"].mean() - 0.02) < 0.005
        assert abs(frame["diabetes"].mean() - 0.05) < 0.005

    def test_numeric_columns_live_on_their_grids(self):
        rng = np.random.default_rng(6)
        frame = gen_confounders(5_000, rng)
        ages = frame["age"].to_numpy()
        assert ages.min() >= 18.0 and ages.max() <= 40.0
        assert np.allclose(2.0 * ages, np.round(2.0 * ages))
        weights = frame["inverse_weight"].to_numpy()
        assert weights.min() >= 0.0020 - 1e-12
        assert weights.max() <= 0.0143 + 1e-12
        steps = np.round(weights / 0.0001)
        assert np.allclose(weights, steps * 0.0001, atol=1e-12)

    def test_deterministic_given_seed(self):
        a = gen_confounders(200, np.random.default_rng(9))
        b = gen_confounders(200, np.random.default_rng(9))
        assert a.equals(b)


class TestGenDataset:
    def test_outcome_assembly_without_noise(self):
        config = StudyConfig(pattern="pattern1", sigma1=1e-12, sigma2=1e-12,
                             n=300, reps=1, seed=0)
        data = gen_dataset(config, np.random.default_rng(11))
        coefs = config.coefficients
        spec = config.pattern_spec
        mediator_mean = (coefs.gamma0 + coefs.gamma1 * data.exposure
                         + data.confounders @ np.asarray(coefs.gamma2))
        np.testing.assert_allclose(data.mediator, mediator_mean, atol=1e-9)
        expected = (coefs.beta0 + coefs.beta1 * data.exposure
                    + spec.exposed_curve(data.mediator) * data.exposure
                    + spec.unexposed_curve(data.mediator) * (1 - data.exposure)
                    + data.confounders @ np.asarray(coefs.beta4))
        np.testing.assert_allclose(data.outcome, expected, atol=1e-6)

    def test_mediator_noise_variance(self):
        config = StudyConfig(pattern="linear", sigma1=10.0, n=100_000, reps=1)
        data = gen_dataset(config, np.random.default_rng(12))
        coefs = config.coefficients
        resid = data.mediator - (coefs.gamma0 + coefs.gamma1 * data.exposure
                                 + data.confounders @ np.asarray(coefs.gamma2))
        assert abs(resid.var() - 0.09) < 0.009

    def test_exposure_is_balanced_bernoulli(self):
        config = StudyConfig(pattern="linear", sigma1=10.0, n=20_000, reps=1)
        data = gen_dataset(config, np.random.default_rng(13))
        assert abs(data.exposure.mean() - 0.5) < 3 * np.sqrt(0.25 / 20_000)

    def test_mediator_stays_inside_curve_domains(self):
        config = StudyConfig(pattern="pattern3", sigma1=10.0, n=50_000, reps=1)
        data = gen_dataset(config, np.random.default_rng(14))
        arg = -np.exp(data.mediator / 2.0) + data.mediator + 40.0
        assert arg.min() > 30.0

    def test_deterministic_given_seed(self):
        config = StudyConfig(pattern="pattern2", sigma1=20.0, n=150, reps=1)
        a = gen_dataset(config, np.random.default_rng(4))
        b = gen_dataset(config, np.random.default_rng(4))
        np.testing.assert_array_equal(a.outcome, b.outcome)
        np.testing.assert_array_equal(a.mediator, b.mediator)
        np.testing.assert_array_equal(a.confounders, b.confounders)


class TestTrueEffects:
    def setup_method(self):
        rng = np.random.default_rng(21)
        self.config = StudyConfig(pattern="linear", sigma1=10.0, n=400, reps=1)
        data = gen_dataset(self.config, rng)
        self.c_bar = data.confounders.mean(axis=0)
        self.m_bar = float(data.mediator.mean())

    def test_linear_pattern_closed_form(self):
        coefs = self.config.coefficients
        cde_true, nde_true, nie_true = true_effects(self.config, self.c_bar,
                                                    self.m_bar)
        mu0 = coefs.gamma0 + float(np.asarray(coefs.gamma2) @ self.c_bar)
        assert cde_true == pytest.approx(coefs.beta1 + 10.0 - 4.0 * self.m_bar,
                                         abs=1e-6)
        assert nde_true == pytest.approx(coefs.beta1 + 10.0 - 4.0 * mu0, abs=1e-6)
        assert nie_true == pytest.approx(5.5 * coefs.gamma1, abs=1e-6)

    def test_no_exposure_shift_means_no_indirect_effect(self):
        still = replace(self.config,
                        coefficients=replace(self.config.coefficients, gamma1=0.0))
        for pattern in PATTERNS:
            config = replace(still, pattern=pattern)
            _, _, nie_true = true_effects(config, self.c_bar, self.m_bar)
            assert nie_true == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("pattern", ["pattern1", "pattern3"])
    def test_matches_counterfactual_monte_carlo(self, pattern):
        config = replace(self.config, pattern=pattern)
        coefs = config.coefficients
        spec = config.pattern_spec
        cde_true, nde_true, nie_true = true_effects(config, self.c_bar, self.m_bar)

        rng = np.random.default_rng(99)
        n = 2_000_000
        mu0 = coefs.gamma0 + float(np.asarray(coefs.gamma2) @ self.c_bar)
        m_ref = mu0 + config.sigma2 * rng.standard_normal(n)
        m_active = mu0 + coefs.gamma1 + config.sigma2 * rng.standard_normal(n)

        # Outcome noise cancels in every contrast, so it is omitted.
        y_active_mref = coefs.beta1 + spec.exposed_curve(m_ref)
        y_ref_mref = spec.unexposed_curve(m_ref)
        y_active_mactive = coefs.beta1 + spec.exposed_curve(m_active)

        nde_draws = y_active_mref - y_ref_mref
        assert abs(nde_true - nde_draws.mean()) < 3 * nde_draws.std() / np.sqrt(n)
        nie_draws = y_active_mactive.mean() - y_active_mref.mean()
        nie_se = np.sqrt(spec.exposed_curve(m_active).var()
                         + spec.exposed_curve(m_ref).var()) / np.sqrt(n)
        assert abs(nie_true - nie_draws) < 3 * nie_se
        direct = (coefs.beta1 + spec.exposed_curve(self.m_bar)
                  - spec.unexposed_curve(self.m_bar))
        assert cde_true == pytest.approx(float(direct), rel=1e-12)

    def test_rejects_wrong_confounder_length(self):
        with pytest.raises(ValueError):
            true_effects(self.config, np.zeros(3), 0.0)


class TestStudyConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            StudyConfig(pattern="nope", sigma1=10.0)
        with pytest.raises(ValueError):
            StudyConfig(pattern="linear", sigma1=0.0)
        with pytest.raises(ValueError):
            StudyConfig(pattern="linear", sigma1=10.0, sigma2=-0.1)
        with pytest.raises(ValueError):
            StudyConfig(pattern="linear", sigma1=10.0, reps=0)

    def test_rejects_wrong_loading_length(self):
        with pytest.raises(ValueError):
            GeneratorCoefficients(beta4=(1.0, 2.0))


def tiny_result() -> StudyResult:
    config = StudyConfig(pattern="linear", sigma1=10.0, n=50, reps=4, seed=0)
    key = ("ShapeRestricted", "CDE")
    estimates = {(m, e): np.array([1.0, 1.0, 1.0, np.nan])
                 for m in METHODS for e in EFFECTS}
    ci_lower = {(m, e): np.array([0.0, 0.0, 0.0, np.nan])
                for m in METHODS for e in EFFECTS}
    ci_upper = {(m, e): np.array([2.0, 2.0, 2.0, np.nan])
                for m in METHODS for e in EFFECTS}
    truths = {e: np.array([1.0, 1.0, 1.0, np.nan]) for e in EFFECTS}
    # Replicate 4 failed; of the rest, CIs 1 and 2 cover, CI 3 misses low.
    estimates[key] = np.array([1.0, 2.0, 4.0, np.nan])
    ci_lower[key] = np.array([0.5, 1.8, 2.5, np.nan])
    ci_upper[key] = np.array([1.5, 2.2, 4.1, np.nan])
    truths["CDE"] = np.array([1.0, 2.0, 2.0, np.nan])
    return StudyResult(config=config, estimates=estimates, ci_lower=ci_lower,
                       ci_upper=ci_upper, truths=truths, failures=1)


class TestStudyResultMetrics:
    def test_hand_computed_metrics(self):
        res = tiny_result()
        assert res.coverage("ShapeRestricted", "CDE") == pytest.approx(2 / 3)
        assert res.avg_abs_rel_bias("ShapeRestricted", "CDE") == pytest.approx(
            (0.0 + 0.0 + 1.0) / 3)
        assert res.avg_mse("ShapeRestricted", "CDE") == pytest.approx(4.0 / 3)

    def test_summary_rows_layout(self):
        rows = tiny_result().summary_rows()
        assert len(rows) == len(METHODS) * len(EFFECTS)
        assert [r["method"] for r in rows[:3]] == ["ShapeRestricted"] * 3
        assert [r["effect"] for r in rows[:3]] == ["CDE", "NDE", "NIE"]
        assert all(r["failures"] == 1 for r in rows)
        assert all(r["pattern"] == "linear" and r["sigma1"] == 10.0 for r in rows)


class TestRunStudy:
    def test_smoke_and_bias_variance_identity(self):
        config = StudyConfig(pattern="pattern1", sigma1=10.0, n=300, reps=40,
                             seed=17)
        res = run_study(config)
        assert res.failures == 0
        for method in METHODS:
            for effect in EFFECTS:
                est = res.estimates[(method, effect)]
                truth = res.truths[effect]
                assert np.all(np.isfinite(est))
                mse = res.avg_mse(method, effect)
                bias_sq = float(np.mean(est - truth)) ** 2
                assert mse >= bias_sq - 1e-12

    def test_deterministic_given_seed(self):
        config = StudyConfig(pattern="pattern2", sigma1=20.0, n=200, reps=12,
                             seed=23)
        first = run_study(config)
        second = run_study(config)
        for key in first.estimates:
            np.testing.assert_array_equal(first.estimates[key],
                                          second.estimates[key])
        assert first.summary_rows() == second.summary_rows()

    def test_parallel_matches_serial(self):
        config = StudyConfig(pattern="linear", sigma1=10.0, n=150, reps=8,
                             seed=29)
        serial = run_study(config, workers=1)
        parallel = run_study(config, workers=2)
        for key in serial.estimates:
            np.testing.assert_array_equal(serial.estimates[key],
                                          parallel.estimates[key])

    def test_workers_env_fallback(self, monkeypatch):
        from shapemed.simulation import _resolve_workers
        monkeypatch.delenv("SHAPEMED_WORKERS", raising=False)
        assert _resolve_workers(None) == 1
        monkeypatch.setenv("SHAPEMED_WORKERS", "3")
        assert _resolve_workers(None) == 3
        assert _resolve_workers(2) == 2

    def test_true_effect_scale_is_birth_weight_plausible(self):
        # The generator is tuned so direct effects land in the tens of
        # grams and indirect effects stay small; the coverage studies
        # implicitly rely on this scale separation.
        config = StudyConfig(pattern="pattern1", sigma1=10.0, n=400, reps=1,
                             seed=31)
        data = gen_dataset(config, np.random.default_rng(31))
        c_bar = data.confounders.mean(axis=0)
        m_bar = float(data.mediator.mean())
        cde_true, nde_true, nie_true = true_effects(config, c_bar, m_bar)
        assert 30.0 < cde_true < 60.0
        assert 30.0 < nde_true < 60.0
        assert 0.5 < nie_true < 3.0
