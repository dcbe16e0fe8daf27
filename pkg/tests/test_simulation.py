"""Data generators, scenario configuration, and the replication harness."""

import numpy as np
import pytest

from ebmt._rng import Stage, substream
from ebmt.data_model import Sample, build_balance_problem, standardize
from ebmt.entropy_balance import solve_weights
from ebmt.parametric import fit_parametric, fit_rcam, fit_univariate_balance
from ebmt.simulation import (
    METHODS,
    PROFILES,
    UNAVAILABLE_METHODS,
    ScenarioConfig,
    apply_profile,
    expected_response_surface,
    gen_covariates,
    gen_outcome,
    gen_treatments,
    list_scenarios,
    load_scenario,
    run_scenario,
)

_B1 = np.array([[1.0, 1.0], [0.0, 0.2], [0.2, 0.0], [0.0, 0.0], [0.0, 0.0]])


def _basis_row(k):
    row = np.zeros((1, 5))
    row[0, k] = 1.0
    return row


# ---------------------------------------------------------------------------
# generators


def test_covariates_reproduce_documented_construction():
    # Mean-zero, unit-variance, equicorrelated 0.2, drawn through a fixed
    # Cholesky factor from the covariate stage of the seed.
    seed = 99
    chol = np.linalg.cholesky(0.2 + 0.8 * np.eye(5))
    rng = substream(seed, int(Stage.COVARIATES))
    expected = rng.standard_normal((7, 5)) @ chol.T
    np.testing.assert_array_equal(gen_covariates(7, seed), expected)


def test_covariate_moments():
    x = gen_covariates(200_000, 5)
    cov = np.cov(x, rowvar=False)
    np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=0.02)
    np.testing.assert_allclose(np.diag(cov), 1.0, atol=0.02)
    off = cov[~np.eye(5, dtype=bool)]
    np.testing.assert_allclose(off, 0.2, atol=0.02)


def test_covariates_rejects_empty():
    with pytest.raises(ValueError):
        gen_covariates(0, 1)


def test_treatment_means_per_model():
    # noise_scale=0 exposes the assignment map itself.
    cases = {
        "T2dL": {0: (1.0, 1.0), 1: (0.0, 0.2), 2: (0.2, 0.0)},
        "T2dNL": {0: (2.0, 2.0), 1: (0.0, 0.2)},
        "T2dNL-asym": {0: (1.0, 2.0), 1: (0.0, 0.2)},
        "T3dL": {0: (1.0, 1.0, 0.5), 2: (0.2, 0.0, 0.0)},
    }
    for model, rows in cases.items():
        for k, expected in rows.items():
            t = gen_treatments(_basis_row(k), model, seed=0, noise_scale=0.0)
            np.testing.assert_allclose(t[0], expected, atol=1e-14)


def test_nonlinear_models_differ_only_in_squares():
    # At x and -x the linear part flips sign while the square part does
    # not, so averaging the two isolates the square loadings.
    x = np.array([[0.5, -1.0, 2.0, 0.3, -0.7]])
    for model, loading_row in [("T2dNL", (1.0, 1.0)), ("T2dNL-asym", (0.0, 1.0))]:
        plus = gen_treatments(x, model, seed=0, noise_scale=0.0)
        minus = gen_treatments(-x, model, seed=0, noise_scale=0.0)
        squares = x[0, 0] ** 2 * np.asarray(loading_row)
        np.testing.assert_allclose((plus + minus) / 2.0, [squares], atol=1e-12)


def test_treatment_noise_covariance():
    x = np.zeros((200_000, 5))
    t = gen_treatments(x, "T2dL", seed=11)
    cov = np.cov(t, rowvar=False)
    np.testing.assert_allclose(cov, [[3.0, 0.8], [0.8, 3.0]], atol=0.06)


def test_treatment_model_names_are_forgiving():
    x = gen_covariates(4, 3)
    canonical = gen_treatments(x, "T2dNL-asym", seed=3)
    for alias in ("t2dnl_asym", "T2DNLASYM", "t2dNL-Asym"):
        np.testing.assert_array_equal(gen_treatments(x, alias, seed=3), canonical)
    with pytest.raises(ValueError, match="unknown treatment model"):
        gen_treatments(x, "T9dX", seed=3)


def test_treatments_reject_wrong_width():
    with pytest.raises(ValueError):
        gen_treatments(np.zeros((4, 3)), "T2dL", seed=0)


def test_outcome_values_by_spec():
    t = np.array([[1.0, 2.0]])
    x = np.array([[0.5, 1.0, 0.0, 0.0, 2.0]])
    # linear covariate part: 0.5 + 0.1 + 0.2 = 0.8; cubic variant:
    # (0.5 + 1)^3 + 0.3 = 3.675.
    expected = {"Y1": 3.8, "Y2": 4.2, "Y3": 4.8, "Y4": 6.675, "Y5": 7.075, "Y6": 7.675}
    for spec, value in expected.items():
        y = gen_outcome(t, x, spec, seed=0, noise_scale=0.0)
        assert y[0] == pytest.approx(value, abs=1e-12)


def test_outcome_coefficient_overrides():
    t = np.array([[1.0, 2.0]])
    x = np.zeros((1, 5))
    y = gen_outcome(
        t, x, "Y5", seed=0, coefficients={"t2": 0.8, "t1:t2": 0.5}, noise_scale=0.0
    )
    assert y[0] == pytest.approx(1.0 + 0.8 * 2.0 + 0.5 * 2.0 + 1.0, abs=1e-12)


def test_outcome_noise_scale():
    t = np.zeros((100_000, 2))
    x = np.zeros((100_000, 5))
    y = gen_outcome(t, x, "Y1", seed=21)
    assert y.std() == pytest.approx(2.0, abs=0.03)
    assert y.mean() == pytest.approx(0.0, abs=0.03)


def test_outcome_validation():
    with pytest.raises(ValueError, match="unknown outcome spec"):
        gen_outcome(np.zeros((3, 2)), np.zeros((3, 5)), "Y7", seed=0)
    with pytest.raises(ValueError, match="two treatments"):
        gen_outcome(np.zeros((3, 1)), np.zeros((3, 5)), "Y2", seed=0)
    with pytest.raises(ValueError):
        gen_outcome(np.zeros((3, 2)), np.zeros((4, 5)), "Y1", seed=0)


def test_expected_surface_matches_noiseless_outcomes():
    surface = expected_response_surface("Y3")
    assert surface(np.array([2.0, -1.0])) == pytest.approx(10.0)
    grid = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]])
    np.testing.assert_allclose(surface(grid), [0.0, 2.0, 10.0])
    cubic = expected_response_surface("Y4")
    assert cubic(np.array([0.0, 0.0])) == pytest.approx(4.0)
    tilted = expected_response_surface("Y5", {"t2": 0.8})
    assert tilted(np.array([1.0, 1.0])) == pytest.approx(1.0 + 0.8 + 0.2 + 4.0)


def test_generators_are_deterministic_and_stage_separated():
    seed = 1234
    x1 = gen_covariates(50, seed)
    x2 = gen_covariates(50, seed)
    np.testing.assert_array_equal(x1, x2)
    # Treatments at the same master seed draw from a different stage, so
    # the noise must not replay the covariate stream.
    noise = gen_treatments(np.zeros((50, 5)), "T2dL", seed)
    assert not np.allclose(noise[:, 0], x1[:, 0])


# ---------------------------------------------------------------------------
# scenario configuration


def test_config_fills_default_truths():
    config = ScenarioConfig(name="a", treatment_model="T2dL", outcome_spec="Y4")
    assert config.true_coefficients["1"] == 4.0
    assert config.true_coefficients["t1"] == 1.0
    assert config.true_coefficients["t1:t2"] == 0.2
    linear = ScenarioConfig(name="b", treatment_model="T2dL", outcome_spec="Y1")
    assert linear.true_coefficients["1"] == 0.0


def test_config_truth_overrides_win():
    config = ScenarioConfig(
        name="a",
        treatment_model="T2dNL-asym",
        outcome_spec="Y5",
        true_coefficients={"t2": 0.8},
    )
    assert config.true_coefficients["t2"] == 0.8
    assert config.true_coefficients["t1"] == 1.0


def test_config_validation_errors():
    base = dict(name="a", treatment_model="T2dL", outcome_spec="Y1")
    with pytest.raises(ValueError, match="mvGPS is not implemented"):
        ScenarioConfig(**base, methods=("EBMT", "mvGPS"))
    with pytest.raises(ValueError, match="unknown method"):
        ScenarioConfig(**base, methods=("EBMT", "GBM"))
    with pytest.raises(ValueError, match="at least 50"):
        ScenarioConfig(**base, n=49)
    with pytest.raises(ValueError, match="at least 40"):
        ScenarioConfig(**base, bootstrap_draws=10, level=0.95)
    with pytest.raises(ValueError, match="EBMT method only"):
        ScenarioConfig(**base, fit="spline", methods=("EBMT", "RCAM"))
    with pytest.raises(ValueError, match="parametric fits"):
        ScenarioConfig(**base, fit="spline", methods=("EBMT",), bootstrap_draws=100)
    with pytest.raises(ValueError, match="treatment model has 2 components"):
        ScenarioConfig(**base, model_formula="1 + t1 + t3")
    with pytest.raises(ValueError, match="strictly between"):
        ScenarioConfig(**base, level=1.0)
    with pytest.raises(ValueError, match="at least 1"):
        ScenarioConfig(**base, replications=0)
    with pytest.raises(ValueError, match="finite"):
        ScenarioConfig(**base, true_coefficients={"t1": float("nan")})


def test_config_deduplicates_methods():
    config = ScenarioConfig(
        name="a",
        treatment_model="T2dL",
        outcome_spec="Y1",
        methods=("ebmt", "EBMT", "rcam"),
    )
    assert config.methods == ("EBMT", "RCAM")


def test_apply_profile():
    config = ScenarioConfig(
        name="a", treatment_model="T2dL", outcome_spec="Y1", bootstrap_draws=40
    )
    desk = apply_profile(config, "desk")
    assert desk.replications == 200 and desk.bootstrap_draws == 200
    full = apply_profile(config, "full")
    assert full.replications == 1000 and full.bootstrap_draws == 500
    no_ci = ScenarioConfig(name="a", treatment_model="T2dL", outcome_spec="Y1")
    assert apply_profile(no_ci, "desk").bootstrap_draws == 0
    with pytest.raises(ValueError, match="unknown profile"):
        apply_profile(config, "overnight")
    assert set(PROFILES) == {"desk", "full"}


def test_shipped_scenarios_all_load():
    names = list_scenarios()
    assert len(names) == 16
    assert "both-misspecified" in names
    assert "T2dL-Y1" in names
    for name in names:
        config = load_scenario(name)
        assert config.name == name


def test_load_scenario_overrides_and_paths(tmp_path):
    config = load_scenario("T2dL-Y1", n=1000, replications=7)
    assert config.n == 1000 and config.replications == 7
    path = tmp_path / "custom.toml"
    path.write_text(
        'name = "custom"\ntreatment_model = "T2dL"\noutcome_spec = "Y2"\n'
        "n = 60\nreplications = 2\n[true_coefficients]\nt2 = 0.5\n"
    )
    custom = load_scenario(str(path))
    assert custom.outcome_spec == "Y2"
    assert custom.true_coefficients["t2"] == 0.5
    with pytest.raises(ValueError, match="unknown scenario"):
        load_scenario("no-such-scenario")


def test_both_misspecified_scenario_shape():
    config = load_scenario("both-misspecified")
    assert config.treatment_model == "T2dNL-asym"
    assert config.outcome_spec == "Y5"
    assert config.methods == METHODS
    assert config.true_coefficients["t2"] == 0.8


# ---------------------------------------------------------------------------
# harness


def _tiny_config(**overrides):
    fields = dict(
        name="tiny",
        treatment_model="T2dL",
        outcome_spec="Y1",
        n=120,
        replications=3,
        seed=515,
    )
    fields.update(overrides)
    return ScenarioConfig(**fields)


def test_run_scenario_matches_manual_composition():
    config = _tiny_config()
    report = run_scenario(config)
    rep = 1
    base = np.random.SeedSequence(entropy=config.seed, spawn_key=(rep,))
    x = gen_covariates(config.n, base)
    t = gen_treatments(x, config.treatment_model, base)
    y = gen_outcome(t, x, config.outcome_spec, base, coefficients=config.true_coefficients)
    sample = Sample(y, t, x)
    std_sample, _ = standardize(sample)
    weights = solve_weights(build_balance_problem(std_sample)).weights
    model = config.model
    record = report.records[rep]

    ebmt = fit_parametric(sample, weights, model)
    for label, value in zip(ebmt.labels, ebmt.theta):
        assert record.estimates["EBMT"][label] == pytest.approx(value, abs=1e-12)
    rcam = fit_rcam(sample, model)
    for label, value in zip(rcam.labels, rcam.theta):
        assert record.estimates["RCAM"][label] == pytest.approx(value, abs=1e-12)
    ebut = fit_univariate_balance(sample, model)
    for label, value in zip(ebut.labels, ebut.theta):
        assert record.estimates["EBUT"][label] == pytest.approx(value, abs=1e-12)


def test_run_scenario_summary_recomputes_from_records():
    config = _tiny_config(replications=5)
    report = run_scenario(config)
    truth = config.true_coefficients["t1"]
    values = np.array([r.estimates["EBMT"]["t1"] for r in report.records])
    summary = {s.term: s for s in report.coefficients["EBMT"]}["t1"]
    assert summary.mean == pytest.approx(values.mean())
    assert summary.sd == pytest.approx(values.std(ddof=1))
    assert summary.bias == pytest.approx(values.mean() - truth)
    assert summary.rmse == pytest.approx(np.sqrt(np.mean((values - truth) ** 2)))
    assert summary.replications_used == 5
    assert summary.coverage is None and summary.mean_ci_width is None
    stats = [r.balance["EBMT"] for r in report.records]
    assert report.balance["EBMT"] == pytest.approx(np.mean(stats))
    assert report.balance["unweighted"] > report.balance["EBMT"]


def test_run_scenario_worker_invariance():
    config = _tiny_config(n=200, replications=4, bootstrap_draws=40)
    serial = run_scenario(config, workers=1)
    parallel = run_scenario(config, workers=2)
    assert serial.to_records() == parallel.to_records()
    assert any(rec.intervals for rec in serial.records)


def test_run_scenario_coverage_fields():
    config = _tiny_config(n=200, replications=3, bootstrap_draws=40, methods=("EBMT",))
    report = run_scenario(config)
    summary = {s.term: s for s in report.coefficients["EBMT"]}["t1"]
    assert summary.intervals_used == 3
    assert summary.mean_ci_width > 0
    assert 0.0 <= summary.coverage <= 1.0
    widths = [
        rec.intervals["EBMT"]["t1"][1] - rec.intervals["EBMT"]["t1"][0]
        for rec in report.records
    ]
    assert summary.mean_ci_width == pytest.approx(np.mean(widths))


def test_run_scenario_spline_fit():
    config = _tiny_config(
        fit="spline",
        methods=("EBMT",),
        n=200,
        replications=2,
        spline_interior_knots=2,
    )
    report = run_scenario(config)
    assert report.coefficients == {}
    assert report.spline_rmse["EBMT"] > 0.0
    for rec in report.records:
        assert rec.spline_rmse["EBMT"] > 0.0
        assert rec.estimates == {}


def test_rmse_usually_shrinks_with_sample_size():
    # Estimation error is random, so the ordering is checked across 20
    # independent meta-repetitions rather than demanded pointwise.
    wins = 0
    for meta in range(20):
        rmses = {}
        for n in (500, 1000):
            config = ScenarioConfig(
                name="meta",
                treatment_model="T2dL",
                outcome_spec="Y1",
                n=n,
                replications=30,
                seed=7000 + meta,
                methods=("EBMT",),
            )
            report = run_scenario(config)
            rmses[n] = {s.term: s for s in report.coefficients["EBMT"]}["t1"].rmse
        wins += rmses[1000] < rmses[500]
    assert wins >= 16


def test_report_records_layout():
    config = _tiny_config(replications=2)
    report = run_scenario(config)
    records = report.to_records()
    kinds = [r["record"] for r in records]
    assert kinds[0] == "scenario"
    assert records[0]["name"] == "tiny"
    assert kinds.count("replication") == 2
    assert "coefficient_summary" in kinds
    assert "balance_summary" in kinds
    status = [r for r in records if r["record"] == "method_status"]
    assert status == [{"record": "method_status", "method": "mvGPS", "status": "not implemented"}]
    trimmed = report.to_records(include_replications=False)
    assert all(r["record"] != "replication" for r in trimmed)
    assert report.unavailable == UNAVAILABLE_METHODS


def test_resolve_workers_environment(monkeypatch):
    from ebmt.simulation import resolve_workers

    monkeypatch.delenv("EBMT_WORKERS", raising=False)
    assert resolve_workers(None) == 1
    assert resolve_workers(3) == 3
    monkeypatch.setenv("EBMT_WORKERS", "2")
    assert resolve_workers(None) == 2
    with pytest.raises(ValueError):
        resolve_workers(0)
