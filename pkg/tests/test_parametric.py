"""Effect models, weighted least squares, sandwich errors, bootstrap."""

import numpy as np
import pytest

from ebmt.data_model import Sample, standardize
from ebmt.errors import (
    EbmtError,
    RankDeficientDesignError,
    TooManyFailedResamplesError,
)
from ebmt.parametric import (
    LinearEffectModel,
    bootstrap_ci,
    estimate_effects,
    fit_parametric,
    fit_rcam,
    fit_univariate_balance,
    interaction,
    intercept,
    main_effect,
    pipeline_theta,
    sandwich_variance,
    square,
    standardized_pipeline_theta,
    wald_ci,
)
from ebmt.parametric import _resample_indices, _wls, _z_quantile


def _linear_sample(n=60, p=2, q=3, seed=0, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, q))
    t = x[:, :p] * 0.8 + rng.normal(size=(n, p))
    y = 1.0 + t @ np.arange(1.0, p + 1.0) + x @ np.full(q, 0.3)
    y = y + noise * rng.normal(size=n)
    return Sample(y, t, x)


# ---------------------------------------------------------------------------
# Terms and formulas


def test_term_labels_and_columns():
    t = np.array([[2.0, 3.0], [4.0, 5.0]])
    assert intercept().label == "1"
    assert main_effect(2).label == "t2"
    assert interaction(2, 1).label == "t1:t2"
    assert square(1).label == "t1^2"
    np.testing.assert_array_equal(intercept().column(t), [1.0, 1.0])
    np.testing.assert_array_equal(main_effect(1).column(t), [2.0, 4.0])
    np.testing.assert_array_equal(interaction(1, 2).column(t), [6.0, 20.0])
    np.testing.assert_array_equal(square(2).column(t), [9.0, 25.0])


def test_interaction_needs_two_distinct_treatments():
    with pytest.raises(ValueError):
        interaction(2, 2)


def test_formula_round_trip_and_intercept_injection():
    model = LinearEffectModel.from_formula("1 + t1 + t2 + t1:t2 + t2^2")
    assert model.formula == "1 + t1 + t2 + t1:t2 + t2^2"
    assert model.max_index() == 2
    injected = LinearEffectModel.from_formula("t1 + t2")
    assert injected.formula == "1 + t1 + t2"


def test_formula_rejects_malformed_terms():
    for text in ("1 + t0", "1 + t1:t1", "1 + banana", "1 + t1^3"):
        with pytest.raises(ValueError):
            LinearEffectModel.from_formula(text)


def test_design_matrix_layout():
    model = LinearEffectModel.from_formula("1 + t1 + t2 + t1:t2 + t2^2")
    t = np.array([[2.0, 3.0]])
    np.testing.assert_array_equal(
        model.design_matrix(t), [[1.0, 2.0, 3.0, 6.0, 9.0]]
    )


def test_main_effects_constructor():
    model = LinearEffectModel.main_effects(3)
    assert model.labels == ("1", "t1", "t2", "t3")


# ---------------------------------------------------------------------------
# Weighted least squares and the sandwich


def test_wls_matches_normal_equations():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(50, 4))
    y = rng.normal(size=50)
    w = rng.uniform(0.5, 2.0, size=50)
    w /= w.sum()
    theta = _wls(a, y, w)
    aw = a * w[:, None]
    expected = np.linalg.solve(a.T @ aw, aw.T @ y)
    np.testing.assert_allclose(theta, expected, atol=1e-10)


def test_wls_uniform_weights_equal_ols():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    theta = _wls(a, y, np.full(40, 1.0 / 40))
    ols = np.linalg.lstsq(a, y, rcond=None)[0]
    np.testing.assert_allclose(theta, ols, atol=1e-10)


def test_wls_flags_rank_deficiency():
    rng = np.random.default_rng(3)
    t = rng.normal(size=(30, 2))
    t[:, 1] = 2.0 * t[:, 0]
    sample = Sample(rng.normal(size=30), t, rng.normal(size=(30, 2)))
    model = LinearEffectModel.main_effects(2)
    with pytest.raises(RankDeficientDesignError) as info:
        fit_parametric(sample, np.full(30, 1.0 / 30), model)
    assert isinstance(info.value.column, int)


def test_sandwich_intercept_only_closed_form():
    # Uniform weights, intercept-only model: the variance estimate is the
    # mean squared residual and the standard error is sd/sqrt(n).
    y = np.array([1.0, 2.0, 3.0, 4.0])
    sample = Sample(y, np.zeros((4, 1)) + [[1.0], [2.0], [3.0], [4.0]], np.ones((4, 1)))
    model = LinearEffectModel(terms=(intercept(),))
    w = np.full(4, 0.25)
    theta = np.array([y.mean()])
    cov = sandwich_variance(sample, w, model, theta)
    resid = y - y.mean()
    assert cov[0, 0] == pytest.approx(np.mean(resid**2), abs=1e-12)
    est = fit_parametric(sample, w, model)
    full = estimate_effects(sample, w, model)
    assert est.theta[0] == pytest.approx(2.5)
    assert full.standard_errors[0] == pytest.approx(np.sqrt(1.25 / 4), abs=1e-12)


def test_sandwich_matches_direct_formula():
    sample = _linear_sample(seed=4)
    model = LinearEffectModel.from_formula("1 + t1 + t2 + t1:t2")
    rng = np.random.default_rng(5)
    w = rng.uniform(0.5, 1.5, size=sample.n)
    w /= w.sum()
    theta = fit_parametric(sample, w, model).theta
    cov = sandwich_variance(sample, w, model, theta)

    h = model.design_matrix(sample.treatments)
    scaled = sample.n * w
    resid = sample.outcomes - h @ theta
    bread = h.T @ (h * scaled[:, None]) / sample.n
    meat = h.T @ (h * (scaled**2 * resid**2)[:, None]) / sample.n
    expected = np.linalg.solve(bread, np.linalg.solve(bread, meat).T)
    np.testing.assert_allclose(cov, expected, atol=1e-10)


def test_sandwich_scale_equivariance():
    sample = _linear_sample(seed=6)
    model = LinearEffectModel.main_effects(2)
    w = np.full(sample.n, 1.0 / sample.n)
    first = estimate_effects(sample, w, model)
    doubled = Sample(2.0 * sample.outcomes, sample.treatments, sample.covariates)
    second = estimate_effects(doubled, w, model)
    np.testing.assert_allclose(second.theta, 2.0 * first.theta, atol=1e-10)
    np.testing.assert_allclose(
        second.standard_errors, 2.0 * first.standard_errors, atol=1e-10
    )


def test_exact_linear_fit_has_zero_residual_error():
    sample = _linear_sample(seed=7, noise=0.0, q=2)
    design_model = LinearEffectModel.main_effects(2)
    w = np.full(sample.n, 1.0 / sample.n)
    est = fit_rcam(sample, design_model)
    np.testing.assert_allclose(est.theta, [1.0, 1.0, 2.0], atol=1e-8)
    np.testing.assert_allclose(est.standard_errors, 0.0, atol=1e-7)
    assert est is not None and w.sum() == pytest.approx(1.0)


def test_wald_interval_hand_value():
    model = LinearEffectModel(terms=(intercept(),))
    est = fit_parametric(
        Sample([1.0, 1.0, 1.0], np.ones((3, 1)), np.ones((3, 1))),
        np.full(3, 1 / 3),
        model,
    )
    est = type(est)(
        model=model,
        theta=np.array([1.0]),
        n_used=3,
        covariance=est.covariance,
        standard_errors=np.array([0.1]),
        level=0.95,
    )
    np.testing.assert_allclose(wald_ci(est, 0.95), [[0.804, 1.196]], atol=1e-12)


def test_z_quantile_values():
    assert _z_quantile(0.95) == 1.96
    assert _z_quantile(0.90) == pytest.approx(1.6448536, abs=1e-6)
    assert _z_quantile(0.99) == pytest.approx(2.5758293, abs=1e-6)


# ---------------------------------------------------------------------------
# Pipelines


def test_pipeline_scale_relationship():
    # Refitting on original treatments is an affine reparameterization of
    # the standardized fit, so main-effect slopes map through the sds.
    sample = _linear_sample(seed=8)
    model = LinearEffectModel.main_effects(2)
    theta_orig = pipeline_theta(sample, model)
    theta_std = standardized_pipeline_theta(sample, model)
    _, transform = standardize(sample)
    np.testing.assert_allclose(
        theta_std[1:], theta_orig[1:] * transform.treatment_sds, atol=1e-8
    )


def test_estimate_effects_recovers_coefficients():
    sample = _linear_sample(n=400, seed=9, noise=0.3)
    model = LinearEffectModel.main_effects(2)
    theta = pipeline_theta(sample, model)
    np.testing.assert_allclose(theta[1:], [1.0, 2.0], atol=0.15)


# ---------------------------------------------------------------------------
# Bootstrap


def test_bootstrap_percentile_oracle():
    # Recompute every resample estimate through the documented stream keys
    # and take the 1-based order statistics 13 and 487 at B=500 by hand.
    sample = _linear_sample(n=25, seed=10)
    model = LinearEffectModel(terms=(intercept(),))
    estimator = lambda s: np.array([s.outcomes.mean()])  # noqa: E731
    result = bootstrap_ci(sample, model, 500, level=0.95, seed=77, estimator=estimator)
    thetas = np.array(
        [
            sample.outcomes[_resample_indices(77, b, sample.n)].mean()
            for b in range(500)
        ]
    )
    ordered = np.sort(thetas)
    assert result.draws_used == 500
    assert result.intervals[0, 0] == ordered[13 - 1]
    assert result.intervals[0, 1] == ordered[487 - 1]
    assert result.standard_errors[0] == pytest.approx(thetas.std(ddof=1), abs=1e-14)


def test_bootstrap_interval_positions_after_failures():
    # Drop a known set of resamples and check the order statistics are
    # taken over the survivors only.
    sample = _linear_sample(n=25, seed=11)
    model = LinearEffectModel(terms=(intercept(),))
    means = np.array(
        [sample.outcomes[_resample_indices(5, b, sample.n)].mean() for b in range(100)]
    )
    cutoff = np.sort(means)[92]  # the top 7 resamples will fail

    def estimator(s):
        value = s.outcomes.mean()
        if value > cutoff:
            raise RankDeficientDesignError(0)
        return np.array([value])

    result = bootstrap_ci(
        sample, model, 100, level=0.95, seed=5,
        estimator=estimator, max_failure_fraction=0.1,
    )
    kept = np.sort(means[means <= cutoff])
    assert result.failures == 7
    assert result.draws_used == 93
    # ceil(0.025 * 93) = 3, floor(0.975 * 93) = 90.
    assert result.intervals[0, 0] == kept[3 - 1]
    assert result.intervals[0, 1] == kept[90 - 1]


def test_bootstrap_aborts_on_failure_overrun():
    sample = _linear_sample(n=20, seed=12)
    model = LinearEffectModel(terms=(intercept(),))

    def estimator(s):
        raise RankDeficientDesignError(0)

    with pytest.raises(TooManyFailedResamplesError):
        bootstrap_ci(sample, model, 50, level=0.9, seed=1, estimator=estimator)


def test_bootstrap_rejects_too_few_draws():
    sample = _linear_sample(n=20, seed=13)
    model = LinearEffectModel.main_effects(2)
    with pytest.raises(ValueError):
        bootstrap_ci(sample, model, 20, level=0.95, seed=1)


def test_bootstrap_worker_count_invariance():
    # Resampling shrinks the distinct support, so the balance problem needs
    # n well above the constraint count to stay feasible on every draw.
    sample = _linear_sample(n=200, seed=14)
    model = LinearEffectModel.main_effects(2)
    one = bootstrap_ci(sample, model, 40, level=0.95, seed=3, workers=1)
    two = bootstrap_ci(sample, model, 40, level=0.95, seed=3, workers=2)
    np.testing.assert_array_equal(one.intervals, two.intervals)
    np.testing.assert_array_equal(one.standard_errors, two.standard_errors)


# ---------------------------------------------------------------------------
# Reference estimators


def test_rcam_recovers_exact_linear_outcome():
    rng = np.random.default_rng(15)
    x = rng.normal(size=(80, 3))
    t = rng.normal(size=(80, 2)) + x[:, :2]
    y = 2.0 + 1.5 * t[:, 0] - 0.7 * t[:, 1] + x @ np.array([0.3, -0.2, 0.1])
    sample = Sample(y, t, x)
    est = fit_rcam(sample, LinearEffectModel.main_effects(2))
    np.testing.assert_allclose(est.theta, [2.0, 1.5, -0.7], atol=1e-9)
    assert est.labels == ("1", "t1", "t2")


def test_univariate_balance_single_treatment_matches_joint():
    # With one treatment the per-treatment problem IS the joint problem.
    sample = _linear_sample(n=80, p=1, q=3, seed=16)
    model = LinearEffectModel.main_effects(1)
    split = fit_univariate_balance(sample, model)
    joint = pipeline_theta(sample, model)
    np.testing.assert_allclose(split.theta, joint, atol=1e-9)


def test_univariate_balance_assembly_rule():
    from ebmt.data_model import build_balance_problem
    from ebmt.entropy_balance import solve_weights

    sample = _linear_sample(n=90, p=2, q=3, seed=17)
    model = LinearEffectModel.from_formula("1 + t1 + t2 + t1:t2")
    split = fit_univariate_balance(sample, model)

    std, _ = standardize(sample)
    per_fit = []
    for k in range(2):
        single = Sample(std.outcomes, std.treatments[:, [k]], std.covariates)
        weights = solve_weights(build_balance_problem(single)).weights
        per_fit.append(fit_parametric(sample, weights, model).theta)
    expected = np.array(
        [
            (per_fit[0][0] + per_fit[1][0]) / 2.0,  # intercept: average
            per_fit[0][1],  # t1 from the t1 fit
            per_fit[1][2],  # t2 from the t2 fit
            (per_fit[0][3] + per_fit[1][3]) / 2.0,  # interaction: average
        ]
    )
    np.testing.assert_allclose(split.theta, expected, atol=1e-12)


def test_estimator_errors_are_package_errors():
    assert issubclass(RankDeficientDesignError, EbmtError)
    assert issubclass(TooManyFailedResamplesError, EbmtError)
