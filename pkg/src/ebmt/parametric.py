"""Weighted parametric effect estimation with robust inference.

The effect curve is modeled as a linear combination of treatment basis
terms (intercept, main effects, pairwise interactions, squares).  Point
estimates come from weighted least squares; the balancing weights stand in
for the design that would have made treatments independent of covariates.

Standard errors use the sandwich form

    V = U^{-1} M U^{-1},
    U = (1/n) sum_i w~_i h_i h_i',
    M = (1/n) sum_i w~_i^2 (y_i - h_i' theta)^2 h_i h_i',

with ``w~_i = n * w_i`` so uniform weights reduce ``U`` to the usual Gram
matrix.  For a linear-in-parameters family the curvature term of ``U``
vanishes identically.  ``SE_j = sqrt(V_jj / n)``.

The percentile bootstrap re-runs the entire pipeline (standardization,
weight solve, fit) on each resample, so the interval reflects weight
estimation noise that the plug-in sandwich ignores.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_factor, cho_solve, qr, solve_triangular
from scipy.special import ndtri

from ._rng import Stage, substream
from .data_model import Sample, build_balance_problem, normalize_weights, standardize
from .entropy_balance import SolverConfig, solve_weights
from .errors import (
    DimensionMismatchError,
    EbmtError,
    RankDeficientDesignError,
    SingularBreadError,
    TooManyFailedResamplesError,
)

__all__ = [
    "Term",
    "LinearEffectModel",
    "EffectEstimate",
    "BootstrapResult",
    "fit_parametric",
    "sandwich_variance",
    "wald_ci",
    "estimate_effects",
    "bootstrap_ci",
    "pipeline_theta",
    "standardized_pipeline_theta",
    "fit_rcam",
    "rcam_theta",
    "fit_univariate_balance",
    "univariate_balance_theta",
]

_TERM_KINDS = ("intercept", "main", "interaction", "square")


@dataclass(frozen=True)
class Term:
    """One basis term of the effect curve.

    Treatment indices are 1-based, matching the ``t1, t2, ...`` naming in
    formulas and reports.  Interactions store their indices in increasing
    order.
    """

    kind: str
    first: int = 0
    second: int = 0

    def __post_init__(self):
        if self.kind not in _TERM_KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind == "intercept":
            if self.first or self.second:
                raise ValueError("intercept takes no treatment index")
        elif self.kind == "interaction":
            if not (1 <= self.first < self.second):
                raise ValueError("interaction needs two distinct 1-based indices in order")
        else:
            if self.first < 1 or self.second:
                raise ValueError(f"{self.kind} term needs one 1-based treatment index")

    @property
    def label(self) -> str:
        if self.kind == "intercept":
            return "1"
        if self.kind == "main":
            return f"t{self.first}"
        if self.kind == "interaction":
            return f"t{self.first}:t{self.second}"
        return f"t{self.first}^2"

    def max_index(self) -> int:
        return max(self.first, self.second)

    def column(self, treatments: NDArray) -> NDArray:
        if self.kind == "intercept":
            return np.ones(treatments.shape[0])
        if self.kind == "main":
            return treatments[:, self.first - 1]
        if self.kind == "interaction":
            return treatments[:, self.first - 1] * treatments[:, self.second - 1]
        return treatments[:, self.first - 1] ** 2


def intercept() -> Term:
    return Term("intercept")


def main_effect(k: int) -> Term:
    return Term("main", k)


def interaction(k: int, l: int) -> Term:
    if k == l:
        raise ValueError("interaction of a treatment with itself; use a square term")
    return Term("interaction", min(k, l), max(k, l))


def square(k: int) -> Term:
    return Term("square", k)


@dataclass(frozen=True)
class LinearEffectModel:
    """Ordered collection of distinct basis terms; the intercept is required.

    Construct from a formula string such as ``"1 + t1 + t2 + t1:t2"`` or
    ``"1 + t1 + t1^2"``; a missing ``1`` is added up front.
    """

    terms: tuple[Term, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("model needs at least one term")
        if len(set(terms)) != len(terms):
            raise ValueError("duplicate terms in model")
        if Term("intercept") not in terms:
            raise ValueError("model must include the intercept term")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_formula(cls, text: str) -> "LinearEffectModel":
        terms: list[Term] = []
        for raw in text.split("+"):
            piece = raw.strip()
            if not piece:
                raise ValueError(f"empty term in formula {text!r}")
            terms.append(_parse_term(piece))
        if Term("intercept") not in terms:
            terms.insert(0, Term("intercept"))
        return cls(tuple(terms))

    @classmethod
    def main_effects(cls, p: int) -> "LinearEffectModel":
        return cls((Term("intercept"),) + tuple(Term("main", k) for k in range(1, p + 1)))

    @property
    def size(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(term.label for term in self.terms)

    @property
    def formula(self) -> str:
        return " + ".join(self.labels)

    def max_index(self) -> int:
        return max(term.max_index() for term in self.terms)

    def design_matrix(self, treatments) -> NDArray[np.float64]:
        t = np.asarray(treatments, dtype=float)
        if t.ndim != 2:
            raise DimensionMismatchError("treatments must be a 2-d array")
        if self.max_index() > t.shape[1]:
            raise DimensionMismatchError(
                f"model references treatment t{self.max_index()}, data has {t.shape[1]} columns"
            )
        return np.column_stack([term.column(t) for term in self.terms])


def _parse_term(piece: str) -> Term:
    if piece == "1":
        return Term("intercept")
    if ":" in piece:
        left, _, right = piece.partition(":")
        return interaction(_parse_index(left), _parse_index(right))
    if "^" in piece:
        base, _, power = piece.partition("^")
        if power.strip() != "2":
            raise ValueError(f"only squares are supported, got {piece!r}")
        return Term("square", _parse_index(base))
    return Term("main", _parse_index(piece))


def _parse_index(token: str) -> int:
    token = token.strip()
    if not token.startswith("t") or not token[1:].isdigit() or int(token[1:]) < 1:
        raise ValueError(f"expected a treatment name like 't1', got {token!r}")
    return int(token[1:])


@dataclass(frozen=True)
class EffectEstimate:
    """Fitted coefficients with whatever inference has been attached.

    ``covariance`` is the sandwich matrix on the per-observation scale, so
    ``standard_errors[j] == sqrt(covariance[j, j] / n_used)``.
    """

    model: LinearEffectModel
    theta: NDArray[np.float64]
    n_used: int
    covariance: NDArray[np.float64] | None = None
    standard_errors: NDArray[np.float64] | None = None
    level: float = 0.95
    wald_ci: NDArray[np.float64] | None = None
    bootstrap_ci: NDArray[np.float64] | None = None
    bootstrap_se: NDArray[np.float64] | None = None
    bootstrap_draws_used: int = 0

    @property
    def labels(self) -> tuple[str, ...]:
        return self.model.labels


def _wls(design: NDArray, response: NDArray, weights: NDArray) -> NDArray:
    """Weighted least squares via column-pivoted QR with an explicit rank gate."""
    sw = np.sqrt(weights)
    a = design * sw[:, None]
    b = response * sw
    q_mat, r_mat, piv = qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    threshold = diag[0] * max(a.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > threshold))
    if rank < design.shape[1]:
        raise RankDeficientDesignError(int(piv[rank]))
    coef_piv = solve_triangular(r_mat, q_mat.T @ b)
    coef = np.empty_like(coef_piv)
    coef[piv] = coef_piv
    return coef


def fit_parametric(sample: Sample, weights, model: LinearEffectModel) -> EffectEstimate:
    """Weighted least squares fit of the effect curve.

    Parameters
    ----------
    sample : Sample
        Outcomes and the treatments the model terms refer to.
    weights : array_like, shape (n,)
        Strictly positive; renormalized to sum to one internally, so any
        positive scaling of the same vector gives the same fit.
    model : LinearEffectModel

    Returns
    -------
    EffectEstimate
        Point estimates only; attach inference with
        :func:`sandwich_variance` / :func:`wald_ci` or use
        :func:`estimate_effects`.

    Raises
    ------
    WeightVectorInvalidError
        If the weight vector is malformed.
    RankDeficientDesignError
        If the term columns are linearly dependent, e.g. an interaction of
        perfectly collinear treatments.  Carries the offending column.
    """
    w = normalize_weights(weights, sample.n)
    design = model.design_matrix(sample.treatments)
    theta = _wls(design, sample.outcomes, w)
    return EffectEstimate(model=model, theta=theta, n_used=sample.n)


def sandwich_variance(sample: Sample, weights, model: LinearEffectModel, theta) -> NDArray:
    """Sandwich covariance of the weighted least squares coefficients.

    Returns the ``J x J`` matrix ``V`` on the per-observation scale;
    divide the diagonal by ``n`` for squared standard errors.

    Raises
    ------
    SingularBreadError
        If the weighted Gram matrix cannot be factorized.
    """
    w = normalize_weights(weights, sample.n)
    design = model.design_matrix(sample.treatments)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.size,):
        raise DimensionMismatchError(f"theta has shape {theta.shape}, expected {(model.size,)}")
    n = sample.n
    scaled = n * w
    resid = sample.outcomes - design @ theta
    bread = design.T @ (design * scaled[:, None]) / n
    meat = design.T @ (design * (scaled**2 * resid**2)[:, None]) / n
    try:
        factor = cho_factor(bread, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularBreadError(str(exc)) from exc
    v = cho_solve(factor, cho_solve(factor, meat).T)
    return (v + v.T) / 2.0


def _z_quantile(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie strictly between 0 and 1")
    if level == 0.95:
        return 1.96
    return float(ndtri(0.5 + level / 2.0))


def wald_ci(estimate: EffectEstimate, level: float = 0.95) -> NDArray[np.float64]:
    """Per-coefficient normal-theory intervals ``theta_j +/- z * SE_j``."""
    if estimate.standard_errors is None:
        raise ValueError("estimate has no standard errors; run sandwich_variance first")
    z = _z_quantile(level)
    half = z * estimate.standard_errors
    return np.column_stack([estimate.theta - half, estimate.theta + half])


def estimate_effects(
    sample: Sample,
    weights,
    model: LinearEffectModel,
    level: float = 0.95,
) -> EffectEstimate:
    """Fit, sandwich variance and Wald intervals in one call."""
    est = fit_parametric(sample, weights, model)
    cov = sandwich_variance(sample, weights, model, est.theta)
    se = np.sqrt(np.diag(cov) / sample.n)
    est = replace(est, covariance=cov, standard_errors=se, level=level)
    return replace(est, wald_ci=wald_ci(est, level))


# ---------------------------------------------------------------------------
# Percentile bootstrap


@dataclass(frozen=True)
class BootstrapResult:
    """Percentile intervals and resampling standard errors."""

    intervals: NDArray[np.float64]
    standard_errors: NDArray[np.float64]
    draws_requested: int
    draws_used: int
    failures: int
    level: float


def pipeline_theta(
    sample: Sample,
    model: LinearEffectModel,
    solver_config: SolverConfig | None = None,
    covariate_squares: bool = False,
) -> NDArray[np.float64]:
    """Full-pipeline point estimate: standardize, solve weights, fit.

    The model is fitted on the treatments as given; only the balance solve
    happens on the standardized scale.
    """
    std_sample, _ = standardize(sample)
    problem = build_balance_problem(std_sample, covariate_squares=covariate_squares)
    solution = solve_weights(problem, solver_config)
    return fit_parametric(sample, solution.weights, model).theta


def standardized_pipeline_theta(
    sample: Sample,
    model: LinearEffectModel,
    solver_config: SolverConfig | None = None,
    covariate_squares: bool = False,
) -> NDArray[np.float64]:
    """Like :func:`pipeline_theta` but fits on standardized treatments."""
    std_sample, _ = standardize(sample)
    problem = build_balance_problem(std_sample, covariate_squares=covariate_squares)
    solution = solve_weights(problem, solver_config)
    return fit_parametric(std_sample, solution.weights, model).theta


def _resample_indices(seed, b: int, n: int) -> NDArray[np.int64]:
    rng = substream(seed, int(Stage.BOOTSTRAP), b)
    return rng.integers(0, n, size=n)


def _bootstrap_one(args):
    sample, estimator, seed, b = args
    idx = _resample_indices(seed, b, sample.n)
    try:
        return b, np.asarray(estimator(sample.take(idx)), dtype=float)
    except EbmtError:
        return b, None


def bootstrap_ci(
    sample: Sample,
    model: LinearEffectModel,
    draws: int,
    level: float = 0.95,
    seed: int = 0,
    estimator: Callable[[Sample], NDArray] | None = None,
    workers: int = 1,
    max_failure_fraction: float = 0.05,
) -> BootstrapResult:
    """Percentile bootstrap over full pipeline re-estimation.

    Each resample draws ``n`` rows with replacement and re-runs the whole
    estimator, weight solving included.  Resamples where any stage raises a
    package error are skipped; if more than ``max_failure_fraction`` of them
    fail the bootstrap aborts rather than reporting intervals from a
    censored distribution.

    Parameters
    ----------
    sample : Sample
    model : LinearEffectModel
        Used by the default estimator and for coefficient count/labels.
    draws : int
        Number of resamples ``B``; must satisfy ``B >= 2 / (1 - level)`` so
        both percentile order statistics exist.
    level : float
    seed : int or numpy.random.SeedSequence
        Resample ``b`` reads from an independent stream keyed by
        ``(seed, bootstrap stage, b)``, so results do not depend on worker
        count or scheduling.
    estimator : callable, optional
        Maps a resampled :class:`Sample` to a coefficient vector.  Defaults
        to :func:`pipeline_theta` with default solver settings.
    workers : int
        Process count for resample evaluation.  Any value yields identical
        output.

    Returns
    -------
    BootstrapResult

    Raises
    ------
    TooManyFailedResamplesError
    """
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie strictly between 0 and 1")
    min_draws = math.ceil(2.0 / (1.0 - level))
    if draws < min_draws:
        raise ValueError(f"need at least {min_draws} draws at level {level}")
    if estimator is None:
        estimator = functools.partial(pipeline_theta, model=model)

    tasks = [(sample, estimator, seed, b) for b in range(draws)]
    results: list[NDArray | None] = [None] * draws
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for b, theta in pool.map(_bootstrap_one, tasks, chunksize=8):
                results[b] = theta
    else:
        for task in tasks:
            b, theta = _bootstrap_one(task)
            results[b] = theta

    kept = [theta for theta in results if theta is not None]
    failures = draws - len(kept)
    if failures > max_failure_fraction * draws:
        raise TooManyFailedResamplesError(failures, draws)
    stacked = np.vstack(kept)
    used = stacked.shape[0]
    alpha_half = (1.0 - level) / 2.0
    lower_pos = max(1, math.ceil(alpha_half * used - 1e-9))
    upper_pos = min(used, math.floor((1.0 - alpha_half) * used + 1e-9))
    ordered = np.sort(stacked, axis=0)
    intervals = np.column_stack([ordered[lower_pos - 1], ordered[upper_pos - 1]])
    return BootstrapResult(
        intervals=intervals,
        standard_errors=stacked.std(axis=0, ddof=1),
        draws_requested=draws,
        draws_used=used,
        failures=failures,
        level=level,
    )


# ---------------------------------------------------------------------------
# Reference estimators used in the simulation studies


def fit_rcam(sample: Sample, model: LinearEffectModel, level: float = 0.95) -> EffectEstimate:
    """Unweighted regression of the outcome on the treatment terms plus all
    covariates, reported for the treatment terms only.

    The covariate main effects enter the design additively; their
    coefficients are nuisance and are dropped from the returned estimate.
    """
    design = np.column_stack([model.design_matrix(sample.treatments), sample.covariates])
    uniform = np.full(sample.n, 1.0 / sample.n)
    theta_full = _wls(design, sample.outcomes, uniform)
    n = sample.n
    resid = sample.outcomes - design @ theta_full
    bread = design.T @ design / n
    meat = design.T @ (design * (resid**2)[:, None]) / n
    try:
        factor = cho_factor(bread, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularBreadError(str(exc)) from exc
    v_full = cho_solve(factor, cho_solve(factor, meat).T)
    j = model.size
    cov = (v_full[:j, :j] + v_full[:j, :j].T) / 2.0
    se = np.sqrt(np.diag(cov) / n)
    est = EffectEstimate(
        model=model,
        theta=theta_full[:j],
        n_used=n,
        covariance=cov,
        standard_errors=se,
        level=level,
    )
    return replace(est, wald_ci=wald_ci(est, level))


def rcam_theta(sample: Sample, model: LinearEffectModel) -> NDArray[np.float64]:
    """Point-estimate hook for bootstrapping :func:`fit_rcam`."""
    return fit_rcam(sample, model).theta


def fit_univariate_balance(
    sample: Sample,
    model: LinearEffectModel,
    solver_config: SolverConfig | None = None,
) -> EffectEstimate:
    """One-treatment-at-a-time balancing baseline.

    Solves a separate balance problem per treatment, each constraining only
    that treatment's first moment and its covariate interactions, then fits
    the full model once per weight vector.  Each coefficient is read from
    the fits of the treatments its term references: main effects and
    squares from their own treatment's fit, interactions and the intercept
    averaged across the referenced (respectively all) fits.  Cross-products
    between distinct treatments are never balanced, which is the point of
    the comparison.
    """
    std_sample, _ = standardize(sample)
    fits = []
    for k in range(sample.p):
        single = Sample(
            std_sample.outcomes,
            std_sample.treatments[:, [k]],
            std_sample.covariates,
        )
        problem = build_balance_problem(single)
        solution = solve_weights(problem, solver_config)
        fits.append(fit_parametric(sample, solution.weights, model).theta)
    stacked = np.vstack(fits)
    theta = np.empty(model.size)
    for j, term in enumerate(model.terms):
        if term.kind == "intercept":
            theta[j] = stacked[:, j].mean()
        elif term.kind == "interaction":
            theta[j] = (stacked[term.first - 1, j] + stacked[term.second - 1, j]) / 2.0
        else:
            theta[j] = stacked[term.first - 1, j]
    return EffectEstimate(model=model, theta=theta, n_used=sample.n)


def univariate_balance_theta(sample: Sample, model: LinearEffectModel) -> NDArray[np.float64]:
    """Point-estimate hook for bootstrapping :func:`fit_univariate_balance`."""
    return fit_univariate_balance(sample, model).theta
