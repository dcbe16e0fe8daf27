"""Monte Carlo harness for the design experiments.

Generates treatments that depend on covariates through known matrices,
outcomes from six specifications crossing linear/interaction/curved
treatment effects with a linear or lumpy covariate contribution, and runs
the estimation methods side by side over many replications, summarizing
bias, RMSE, bootstrap coverage, interval width, balance statistics and
(for spline runs) surface RMSE.

Every stochastic stage draws from a counter-based stream keyed by
``(master seed, replication index, stage)``, so reports are bit-for-bit
identical no matter how replications are scheduled across workers.

Scenario definitions live in TOML files shipped with the package; see
:func:`list_scenarios` and :func:`load_scenario`.  The multivariate
propensity-score comparator has no implementation here and is reported as
an unavailable method rather than silently omitted.
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from numpy.typing import NDArray

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ._rng import Stage, substream
from .data_model import Sample, build_balance_problem, standardize
from .diagnostics import balance_test
from .entropy_balance import solve_weights
from .errors import EbmtError, IllConditionedBasisError
from .parametric import (
    LinearEffectModel,
    bootstrap_ci,
    fit_parametric,
    fit_rcam,
    fit_univariate_balance,
    pipeline_theta,
    rcam_theta,
    univariate_balance_theta,
)
from .splines import SplineConfig, default_interior_knots, fit_spline

__all__ = [
    "COVARIATE_DIM",
    "OUTCOME_SPECS",
    "ScenarioConfig",
    "ReplicationRecord",
    "CoefficientSummary",
    "ScenarioReport",
    "gen_covariates",
    "gen_treatments",
    "gen_outcome",
    "expected_response_surface",
    "run_scenario",
    "list_scenarios",
    "load_scenario",
    "apply_profile",
    "PROFILES",
]

COVARIATE_DIM = 5
OUTCOME_SPECS = ("Y1", "Y2", "Y3", "Y4", "Y5", "Y6")
METHODS = ("EBMT", "RCAM", "EBUT")
UNAVAILABLE_METHODS = {"mvGPS": "not implemented"}

# Covariates: mean zero, unit variance, common correlation 0.2.
_COVARIATE_COV = 0.2 + 0.8 * np.eye(COVARIATE_DIM)
_COVARIATE_CHOL = np.linalg.cholesky(_COVARIATE_COV)

# Linear treatment loadings (5 covariates -> 2 treatments).
_B1 = np.array(
    [
        [1.0, 1.0],
        [0.0, 0.2],
        [0.2, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
    ]
)
# Extra loadings on the squared covariates for the nonlinear assignment.
_B2 = np.array(
    [
        [1.0, 1.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
    ]
)
# One-sided variant: the squared first covariate drives the second
# treatment only.  Concentrating the unbalanced channel on one treatment
# is what makes the both-misspecified benchmark bias every method hard
# on that coefficient instead of diluting it across both.
_B2_ASYM = np.array(
    [
        [0.0, 1.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
    ]
)
_NOISE_COV_2 = np.array([[3.0, 0.8], [0.8, 3.0]])

# Three-treatment variant used only by the shipped smoke scenario.
_B1_3 = np.array(
    [
        [1.0, 1.0, 0.5],
        [0.0, 0.2, 0.0],
        [0.2, 0.0, 0.0],
        [0.0, 0.0, 0.2],
        [0.0, 0.0, 0.0],
    ]
)
_NOISE_COV_3 = 0.8 + 2.2 * np.eye(3)

OUTCOME_NOISE_SD = 2.0

_TREATMENT_MODELS = {
    "T2dL": (_B1, None, np.linalg.cholesky(_NOISE_COV_2)),
    "T2dNL": (_B1, _B2, np.linalg.cholesky(_NOISE_COV_2)),
    "T2dNL-asym": (_B1, _B2_ASYM, np.linalg.cholesky(_NOISE_COV_2)),
    "T3dL": (_B1_3, None, np.linalg.cholesky(_NOISE_COV_3)),
}

_DEFAULT_COEFFICIENTS = {"t1": 1.0, "t2": 1.0, "t1:t2": 0.2}

PROFILES = {
    "desk": {"replications": 200, "bootstrap_draws": 200},
    "full": {"replications": 1000, "bootstrap_draws": 500},
}


def _canonical_treatment_model(name: str) -> str:
    key = name.replace("-", "").replace("_", "").lower()
    for canonical in _TREATMENT_MODELS:
        if canonical.replace("-", "").lower() == key:
            return canonical
    raise ValueError(f"unknown treatment model {name!r}; choose from {sorted(_TREATMENT_MODELS)}")


def gen_covariates(n: int, seed) -> NDArray[np.float64]:
    """Draw ``n`` covariate rows, each mean zero, unit variance, pairwise
    correlation 0.2, through a fixed Cholesky factor."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = substream(seed, int(Stage.COVARIATES))
    return rng.standard_normal((n, COVARIATE_DIM)) @ _COVARIATE_CHOL.T


def gen_treatments(
    covariates,
    model: str,
    seed,
    noise_scale: float = 1.0,
) -> NDArray[np.float64]:
    """Treatments as a linear (or square-augmented) map of covariates plus
    correlated noise.

    ``noise_scale`` exists as a test hook; zero makes the map exact.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim != 2 or x.shape[1] != COVARIATE_DIM:
        raise ValueError(f"covariates must have {COVARIATE_DIM} columns")
    loading, square_loading, noise_chol = _TREATMENT_MODELS[_canonical_treatment_model(model)]
    mean = x @ loading
    if square_loading is not None:
        mean = mean + (x * x) @ square_loading
    rng = substream(seed, int(Stage.TREATMENTS))
    noise = rng.standard_normal(mean.shape) @ noise_chol.T
    return mean + noise_scale * noise


def _treatment_part(t: NDArray, spec: str, coefficients: dict) -> NDArray[np.float64]:
    mains = sum(
        coefficients.get(f"t{k + 1}", 1.0) * t[:, k] for k in range(t.shape[1])
    )
    if spec in ("Y2", "Y5"):
        mains = mains + coefficients.get("t1:t2", 0.2) * t[:, 0] * t[:, 1]
    if spec in ("Y3", "Y6"):
        mains = mains + (t[:, 0] - t[:, 1]) ** 2
    return mains


def _covariate_part(x: NDArray, spec: str) -> NDArray[np.float64]:
    first = (x[:, 0] + 1.0) ** 3 if spec in ("Y4", "Y5", "Y6") else x[:, 0]
    return first + 0.1 * x[:, 1] + 0.1 * x[:, 4]


def gen_outcome(
    treatments,
    covariates,
    spec: str,
    seed,
    coefficients: dict | None = None,
    noise_scale: float = 1.0,
) -> NDArray[np.float64]:
    """Outcomes for one of the six specifications.

    Y1-Y3 add a linear covariate contribution, Y4-Y6 replace its first
    term by ``(x1 + 1)^3``.  Y2/Y5 add a treatment interaction, Y3/Y6 a
    curvature term ``(t1 - t2)^2`` with coefficient one.  Noise is
    centered normal with standard deviation 2.
    """
    spec = spec.upper()
    if spec not in OUTCOME_SPECS:
        raise ValueError(f"unknown outcome spec {spec!r}")
    t = np.asarray(treatments, dtype=float)
    x = np.asarray(covariates, dtype=float)
    if t.ndim != 2 or x.ndim != 2 or t.shape[0] != x.shape[0]:
        raise ValueError("treatments and covariates must be 2-d with equal row counts")
    if spec in ("Y2", "Y3", "Y5", "Y6") and t.shape[1] < 2:
        raise ValueError(f"{spec} needs at least two treatments")
    coefficients = {**_DEFAULT_COEFFICIENTS, **(coefficients or {})}
    rng = substream(seed, int(Stage.OUTCOME))
    noise = OUTCOME_NOISE_SD * rng.standard_normal(t.shape[0])
    return _treatment_part(t, spec, coefficients) + _covariate_part(x, spec) + noise_scale * noise


def expected_response_surface(spec: str, coefficients: dict | None = None):
    """Mean potential outcome as a function of the treatment vector.

    Adds the expectation of the covariate contribution: zero for Y1-Y3 and
    ``E[(x1 + 1)^3] = 4`` for Y4-Y6 under the standard-normal first
    covariate.
    """
    spec = spec.upper()
    if spec not in OUTCOME_SPECS:
        raise ValueError(f"unknown outcome spec {spec!r}")
    coefficients = {**_DEFAULT_COEFFICIENTS, **(coefficients or {})}
    offset = 4.0 if spec in ("Y4", "Y5", "Y6") else 0.0

    def surface(treatments) -> NDArray[np.float64]:
        t = np.asarray(treatments, dtype=float)
        single = t.ndim == 1
        if single:
            t = t[None, :]
        values = _treatment_part(t, spec, coefficients) + offset
        return values[0] if single else values

    return surface


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario: generator settings, fitted model, methods.

    ``true_coefficients`` overrides both the generator coefficients and the
    targets that bias/coverage are computed against, so the two can never
    drift apart.  Keys are term labels (``"1"``, ``"t1"``, ``"t1:t2"``).
    """

    name: str
    treatment_model: str
    outcome_spec: str
    n: int = 500
    replications: int = 200
    bootstrap_draws: int = 0
    level: float = 0.95
    seed: int = 20260801
    model_formula: str = "1 + t1 + t2"
    fit: str = "parametric"
    methods: tuple[str, ...] = METHODS
    true_coefficients: dict = field(default_factory=dict)
    rcam_adjusts_covariates: bool = True
    spline_order: int = 4
    spline_interior_knots: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "treatment_model", _canonical_treatment_model(self.treatment_model)
        )
        spec = self.outcome_spec.upper()
        if spec not in OUTCOME_SPECS:
            raise ValueError(f"unknown outcome spec {self.outcome_spec!r}")
        object.__setattr__(self, "outcome_spec", spec)
        if self.n < 50:
            raise ValueError("n must be at least 50")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie strictly between 0 and 1")
        if self.bootstrap_draws < 0:
            raise ValueError("bootstrap_draws cannot be negative")
        if self.bootstrap_draws:
            if self.fit != "parametric":
                raise ValueError("bootstrap intervals are only defined for parametric fits")
            minimum = math.ceil(2.0 / (1.0 - self.level))
            if self.bootstrap_draws < minimum:
                raise ValueError(f"bootstrap_draws must be at least {minimum} at this level")
        if self.fit not in ("parametric", "spline"):
            raise ValueError("fit must be 'parametric' or 'spline'")
        methods = tuple(dict.fromkeys(m.upper() for m in self.methods))
        for m in methods:
            if m == "MVGPS":
                raise ValueError("mvGPS is not implemented; reports list it as unavailable")
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if not methods:
            raise ValueError("at least one method is required")
        if self.fit == "spline" and methods != ("EBMT",):
            raise ValueError("spline scenarios support the EBMT method only")
        object.__setattr__(self, "methods", methods)
        model = LinearEffectModel.from_formula(self.model_formula)
        p = _TREATMENT_MODELS[self.treatment_model][0].shape[1]
        if model.max_index() > p:
            raise ValueError(
                f"model references t{model.max_index()}, treatment model has {p} components"
            )
        truths = dict(_DEFAULT_COEFFICIENTS)
        truths.update({f"t{k}": 1.0 for k in range(1, p + 1)})
        truths["1"] = 4.0 if spec in ("Y4", "Y5", "Y6") else 0.0
        truths.update({"t1:t2": 0.2})
        for key, value in self.true_coefficients.items():
            if not isinstance(key, str) or not np.isfinite(value):
                raise ValueError("true_coefficients must map term labels to finite numbers")
            truths[key] = float(value)
        object.__setattr__(self, "true_coefficients", truths)
        if self.spline_order < 1:
            raise ValueError("spline_order must be at least 1")
        if self.spline_interior_knots is not None and self.spline_interior_knots < 0:
            raise ValueError("spline_interior_knots cannot be negative")

    @property
    def model(self) -> LinearEffectModel:
        return LinearEffectModel.from_formula(self.model_formula)

    @property
    def treatment_dim(self) -> int:
        return _TREATMENT_MODELS[self.treatment_model][0].shape[1]


def apply_profile(config: ScenarioConfig, profile: str) -> ScenarioConfig:
    """Rescale a scenario to a named effort profile.

    ``desk`` runs 200 replications with 200 bootstrap draws, ``full`` 1000
    with 500.  The bootstrap setting only applies to scenarios that have
    interval estimation switched on; a scenario with ``bootstrap_draws=0``
    stays interval-free.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    spec = PROFILES[profile]
    draws = spec["bootstrap_draws"] if config.bootstrap_draws else 0
    return replace(config, replications=spec["replications"], bootstrap_draws=draws)


def list_scenarios() -> tuple[str, ...]:
    """Names of the scenario definitions shipped with the package."""
    names = []
    for entry in resources.files("ebmt.scenarios").iterdir():
        if entry.name.endswith(".toml"):
            names.append(entry.name[: -len(".toml")])
    return tuple(sorted(names))


def load_scenario(source: str, **overrides) -> ScenarioConfig:
    """Load a scenario by shipped name or TOML file path.

    Keyword overrides replace the file's values field-for-field, e.g.
    ``load_scenario("T2dL-Y1", n=1000, bootstrap_draws=200)``.
    """
    if os.sep in source or source.endswith(".toml") or os.path.exists(source):
        with open(source, "rb") as handle:
            data = tomllib.load(handle)
    else:
        candidate = resources.files("ebmt.scenarios").joinpath(source + ".toml")
        if not candidate.is_file():
            raise ValueError(
                f"unknown scenario {source!r}; shipped scenarios: {', '.join(list_scenarios())}"
            )
        data = tomllib.loads(candidate.read_text())
    fields = {
        "name": data.get("name", source),
        "treatment_model": data["treatment_model"],
        "outcome_spec": data["outcome_spec"],
    }
    for key, toml_key in [
        ("n", "n"),
        ("replications", "replications"),
        ("bootstrap_draws", "bootstrap"),
        ("level", "level"),
        ("seed", "seed"),
        ("model_formula", "model"),
        ("fit", "fit"),
        ("rcam_adjusts_covariates", "rcam_adjusts_covariates"),
        ("spline_order", "spline_order"),
        ("spline_interior_knots", "spline_interior_knots"),
    ]:
        if toml_key in data:
            fields[key] = data[toml_key]
    if "methods" in data:
        fields["methods"] = tuple(data["methods"])
    if "true_coefficients" in data:
        fields["true_coefficients"] = dict(data["true_coefficients"])
    fields.update(overrides)
    return ScenarioConfig(**fields)


@dataclass(frozen=True)
class ReplicationRecord:
    """Everything one replication produced, keyed by method."""

    index: int
    estimates: dict
    intervals: dict
    balance: dict
    spline_rmse: dict
    errors: dict


@dataclass(frozen=True)
class CoefficientSummary:
    """Monte Carlo summary for one method and model term."""

    term: str
    mean: float
    sd: float
    truth: float | None
    bias: float | None
    rmse: float | None
    coverage: float | None
    mean_ci_width: float | None
    replications_used: int
    intervals_used: int


@dataclass(frozen=True)
class ScenarioReport:
    """Aggregated scenario results plus the per-replication audit log."""

    config: ScenarioConfig
    coefficients: dict
    balance: dict
    spline_rmse: dict
    failures: dict
    records: tuple[ReplicationRecord, ...]
    unavailable: dict = field(default_factory=lambda: dict(UNAVAILABLE_METHODS))

    def to_records(self, include_replications: bool = True) -> list[dict]:
        """Flatten into dict records for table or json-lines emission."""
        config = self.config
        out: list[dict] = [
            {
                "record": "scenario",
                "name": config.name,
                "treatment_model": config.treatment_model,
                "outcome_spec": config.outcome_spec,
                "n": config.n,
                "replications": config.replications,
                "bootstrap_draws": config.bootstrap_draws,
                "level": config.level,
                "seed": config.seed,
                "model": config.model_formula,
                "fit": config.fit,
                "methods": list(config.methods),
            }
        ]
        for method in config.methods:
            for summary in self.coefficients.get(method, ()):
                out.append(
                    {
                        "record": "coefficient_summary",
                        "method": method,
                        "term": summary.term,
                        "mean": summary.mean,
                        "sd": summary.sd,
                        "truth": summary.truth,
                        "bias": summary.bias,
                        "rmse": summary.rmse,
                        "coverage": summary.coverage,
                        "mean_ci_width": summary.mean_ci_width,
                        "replications_used": summary.replications_used,
                        "intervals_used": summary.intervals_used,
                    }
                )
        for name in sorted(self.balance):
            out.append(
                {
                    "record": "balance_summary",
                    "weighting": name,
                    "mean_statistic": self.balance[name],
                }
            )
        for method in sorted(self.spline_rmse):
            out.append(
                {
                    "record": "spline_summary",
                    "method": method,
                    "mean_rmse": self.spline_rmse[method],
                }
            )
        for name in sorted(self.failures):
            out.append({"record": "failures", "name": name, "count": self.failures[name]})
        for method, status in self.unavailable.items():
            out.append({"record": "method_status", "method": method, "status": status})
        if include_replications:
            for rec in self.records:
                out.append(
                    {
                        "record": "replication",
                        "index": rec.index,
                        "estimates": rec.estimates,
                        "intervals": rec.intervals,
                        "balance": rec.balance,
                        "spline_rmse": rec.spline_rmse,
                        "errors": rec.errors,
                    }
                )
        return out


def _uniform_theta(sample: Sample, model: LinearEffectModel) -> NDArray[np.float64]:
    """Unweighted fit of the treatment terms alone (covariate-blind)."""
    return fit_parametric(sample, np.full(sample.n, 1.0 / sample.n), model).theta


def _fit_spline_retrying(sample: Sample, weights, config: ScenarioConfig):
    """Fit the surface, shaving interior knots until the basis is usable."""
    m = config.spline_interior_knots
    if m is None:
        m = default_interior_knots(sample.n, sample.p, config.spline_order)
    last: IllConditionedBasisError | None = None
    while m >= 0:
        layout = SplineConfig.from_data(
            sample.treatments, order=config.spline_order, interior_knots=m
        )
        try:
            return fit_spline(sample, weights, layout)
        except IllConditionedBasisError as exc:
            last = exc
            m -= 1
    raise last if last is not None else IllConditionedBasisError(0.0)


def _run_replication(config: ScenarioConfig, rep: int) -> ReplicationRecord:
    base = np.random.SeedSequence(entropy=config.seed, spawn_key=(rep,))
    x = gen_covariates(config.n, base)
    t = gen_treatments(x, config.treatment_model, base)
    y = gen_outcome(t, x, config.outcome_spec, base, coefficients=config.true_coefficients)
    sample = Sample(y, t, x)
    model = config.model
    estimates: dict = {}
    intervals: dict = {}
    balance: dict = {}
    spline_rmse: dict = {}
    errors: dict = {}

    std_sample, _ = standardize(sample)
    balance["unweighted"] = balance_test(std_sample).statistic

    bootstrap_hooks = {}
    for method in config.methods:
        try:
            if method == "EBMT":
                problem = build_balance_problem(std_sample)
                solution = solve_weights(problem)
                balance["EBMT"] = balance_test(std_sample, solution.weights).statistic
                if config.fit == "spline":
                    fit = _fit_spline_retrying(sample, solution.weights, config)
                    surface = expected_response_surface(
                        config.outcome_spec, config.true_coefficients
                    )
                    err = fit.predict(sample.treatments) - surface(sample.treatments)
                    spline_rmse["EBMT"] = float(np.sqrt(np.mean(err**2)))
                    continue
                est = fit_parametric(sample, solution.weights, model)
                bootstrap_hooks[method] = pipeline_theta
            elif method == "RCAM":
                if config.rcam_adjusts_covariates:
                    est = fit_rcam(sample, model)
                    bootstrap_hooks[method] = rcam_theta
                else:
                    est = fit_parametric(sample, np.full(sample.n, 1.0 / sample.n), model)
                    bootstrap_hooks[method] = _uniform_theta
            else:  # EBUT
                est = fit_univariate_balance(sample, model)
                bootstrap_hooks[method] = univariate_balance_theta
            estimates[method] = {
                label: float(value) for label, value in zip(est.labels, est.theta)
            }
        except EbmtError as exc:
            errors[method] = type(exc).__name__

    if config.bootstrap_draws:
        for method, hook in bootstrap_hooks.items():
            if method not in estimates:
                continue
            try:
                result = bootstrap_ci(
                    sample,
                    model,
                    config.bootstrap_draws,
                    level=config.level,
                    seed=base,
                    estimator=functools.partial(hook, model=model),
                )
            except EbmtError as exc:
                errors[method + ".bootstrap"] = type(exc).__name__
                continue
            intervals[method] = {
                label: [float(lo), float(hi)]
                for label, (lo, hi) in zip(model.labels, result.intervals)
            }
    return ReplicationRecord(
        index=rep,
        estimates=estimates,
        intervals=intervals,
        balance=balance,
        spline_rmse=spline_rmse,
        errors=errors,
    )


def _replication_task(args) -> ReplicationRecord:
    return _run_replication(*args)


def resolve_workers(workers: int | None) -> int:
    """Explicit argument first, then the EBMT_WORKERS variable, then 1."""
    if workers is None:
        workers = int(os.environ.get("EBMT_WORKERS", "1"))
    if workers < 1:
        raise ValueError("worker count must be at least 1")
    return workers


def run_scenario(config: ScenarioConfig, workers: int | None = None) -> ScenarioReport:
    """Run all replications of a scenario and aggregate.

    Parameters
    ----------
    config : ScenarioConfig
    workers : int, optional
        Process count for replication-level parallelism; identical output
        for any value.

    Returns
    -------
    ScenarioReport
        Per-method failure counts record replications whose estimation (or
        bootstrap, counted separately) raised, rather than aborting the
        whole scenario.
    """
    workers = resolve_workers(workers)
    tasks = [(config, rep) for rep in range(config.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replication_task, tasks, chunksize=1))
    else:
        records = [_replication_task(task) for task in tasks]

    model = config.model
    coefficients: dict = {}
    for method in config.methods:
        if config.fit == "spline":
            continue
        summaries = []
        for label in model.labels:
            values = np.array(
                [r.estimates[method][label] for r in records if method in r.estimates]
            )
            ivs = [r.intervals[method][label] for r in records if method in r.intervals]
            truth = config.true_coefficients.get(label)
            mean = float(values.mean()) if values.size else float("nan")
            sd = float(values.std(ddof=1)) if values.size > 1 else float("nan")
            bias = rmse = None
            if truth is not None and values.size:
                bias = float(mean - truth)
                rmse = float(np.sqrt(np.mean((values - truth) ** 2)))
            coverage = width = None
            if ivs:
                arr = np.asarray(ivs, dtype=float)
                width = float(np.mean(arr[:, 1] - arr[:, 0]))
                if truth is not None:
                    coverage = float(np.mean((arr[:, 0] <= truth) & (truth <= arr[:, 1])))
            summaries.append(
                CoefficientSummary(
                    term=label,
                    mean=mean,
                    sd=sd,
                    truth=truth,
                    bias=bias,
                    rmse=rmse,
                    coverage=coverage,
                    mean_ci_width=width,
                    replications_used=int(values.size),
                    intervals_used=len(ivs),
                )
            )
        coefficients[method] = tuple(summaries)

    balance_names = sorted({name for r in records for name in r.balance})
    balance = {
        name: float(np.mean([r.balance[name] for r in records if name in r.balance]))
        for name in balance_names
    }
    rmse_methods = sorted({name for r in records for name in r.spline_rmse})
    spline_rmse = {
        name: float(np.mean([r.spline_rmse[name] for r in records if name in r.spline_rmse]))
        for name in rmse_methods
    }
    failure_names = sorted({name for r in records for name in r.errors})
    failures = {
        name: sum(1 for r in records if name in r.errors) for name in failure_names
    }
    return ScenarioReport(
        config=config,
        coefficients=coefficients,
        balance=balance,
        spline_rmse=spline_rmse,
        failures=failures,
        records=tuple(records),
    )
