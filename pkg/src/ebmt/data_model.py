"""Core data containers and the balance-constraint construction.

A :class:`Sample` holds an outcome vector, an ``n x p`` treatment matrix and
an ``n x q`` covariate matrix.  Weight solving operates on standardized
columns (mean zero, sample standard deviation one, ``ddof=1``), so the
moment targets of the balance problem are exactly zero and never need to be
carried around.

The balance constraint matrix ``G`` stacks, per row ``i``,

    [ T_i1 X_i1, ..., T_ip X_i1, T_i1 X_i2, ..., T_ip X_iq,  T_i',  X_i' ]

i.e. all pairwise treatment-covariate products with the treatment index
varying fastest, then the treatments, then the covariates, for a total of
``p*q + p + q`` columns.  Balancing drives every weighted column mean of
``G`` to zero, which removes the weighted cross-correlation between
treatments and covariates along with their weighted first moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ConstantColumnError,
    DimensionMismatchError,
    NonpositiveBaseWeightError,
    WeightVectorInvalidError,
)

__all__ = [
    "Sample",
    "StandardizationTransform",
    "BalanceProblem",
    "standardize",
    "build_balance_problem",
    "normalize_weights",
]


def normalize_weights(weights, n: int) -> NDArray[np.float64]:
    """Validate an estimation weight vector and scale it to sum to one."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] != n:
        raise WeightVectorInvalidError(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise WeightVectorInvalidError("weights must be finite and strictly positive")
    return w / w.sum()


def _as_float_array(values, name: str, ndim: int) -> NDArray[np.float64]:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatchError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatchError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Sample:
    """Outcomes, treatments and covariates for ``n`` units.

    Attributes
    ----------
    outcomes : ndarray, shape (n,)
    treatments : ndarray, shape (n, p)
    covariates : ndarray, shape (n, q)
    """

    outcomes: NDArray[np.float64]
    treatments: NDArray[np.float64]
    covariates: NDArray[np.float64]

    def __post_init__(self):
        y = _as_float_array(self.outcomes, "outcomes", 1)
        t = _as_float_array(self.treatments, "treatments", 2)
        x = _as_float_array(self.covariates, "covariates", 2)
        n = y.shape[0]
        if t.shape[0] != n or x.shape[0] != n:
            raise DimensionMismatchError(
                f"row counts disagree: outcomes {n}, treatments {t.shape[0]}, "
                f"covariates {x.shape[0]}"
            )
        if n < 2:
            raise DimensionMismatchError("need at least two rows")
        if t.shape[1] < 1 or x.shape[1] < 1:
            raise DimensionMismatchError("treatments and covariates need at least one column")
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "treatments", t)
        object.__setattr__(self, "covariates", x)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def p(self) -> int:
        return self.treatments.shape[1]

    @property
    def q(self) -> int:
        return self.covariates.shape[1]

    def take(self, indices) -> "Sample":
        """Row subset (with repeats allowed), e.g. a bootstrap resample."""
        idx = np.asarray(indices, dtype=int)
        return Sample(self.outcomes[idx], self.treatments[idx], self.covariates[idx])


@dataclass(frozen=True)
class StandardizationTransform:
    """Column-wise affine map taking raw data to standardized form.

    ``apply`` subtracts the stored means and divides by the stored standard
    deviations; ``invert`` undoes that.  Outcomes are passed through
    untouched unless ``outcome_centered`` is set, in which case ``apply``
    subtracts ``outcome_mean``.
    """

    treatment_means: NDArray[np.float64]
    treatment_sds: NDArray[np.float64]
    covariate_means: NDArray[np.float64]
    covariate_sds: NDArray[np.float64]
    outcome_centered: bool = False
    outcome_mean: float = 0.0

    def __post_init__(self):
        tm = _as_float_array(self.treatment_means, "treatment_means", 1)
        ts = _as_float_array(self.treatment_sds, "treatment_sds", 1)
        xm = _as_float_array(self.covariate_means, "covariate_means", 1)
        xs = _as_float_array(self.covariate_sds, "covariate_sds", 1)
        if tm.shape != ts.shape or xm.shape != xs.shape:
            raise DimensionMismatchError("means and standard deviations must align")
        if np.any(ts <= 0) or np.any(xs <= 0):
            raise DimensionMismatchError("standard deviations must be strictly positive")
        object.__setattr__(self, "treatment_means", tm)
        object.__setattr__(self, "treatment_sds", ts)
        object.__setattr__(self, "covariate_means", xm)
        object.__setattr__(self, "covariate_sds", xs)

    def apply(self, sample: Sample) -> Sample:
        if sample.p != self.treatment_means.shape[0] or sample.q != self.covariate_means.shape[0]:
            raise DimensionMismatchError("transform was built for different column counts")
        y = sample.outcomes - self.outcome_mean if self.outcome_centered else sample.outcomes
        return Sample(
            y,
            (sample.treatments - self.treatment_means) / self.treatment_sds,
            (sample.covariates - self.covariate_means) / self.covariate_sds,
        )

    def invert(self, sample: Sample) -> Sample:
        if sample.p != self.treatment_means.shape[0] or sample.q != self.covariate_means.shape[0]:
            raise DimensionMismatchError("transform was built for different column counts")
        y = sample.outcomes + self.outcome_mean if self.outcome_centered else sample.outcomes
        return Sample(
            y,
            sample.treatments * self.treatment_sds + self.treatment_means,
            sample.covariates * self.covariate_sds + self.covariate_means,
        )


@dataclass(frozen=True)
class BalanceProblem:
    """Constraint matrix ``G`` and base weights ``v`` for one balance solve.

    Rows of ``G`` are per-unit constraint evaluations; ``v`` is strictly
    positive and sums to one.
    """

    G: NDArray[np.float64]
    v: NDArray[np.float64]

    def __post_init__(self):
        g = _as_float_array(self.G, "G", 2)
        v = _as_float_array(self.v, "v", 1)
        if v.shape[0] != g.shape[0]:
            raise DimensionMismatchError(
                f"base weights have length {v.shape[0]}, constraint matrix has {g.shape[0]} rows"
            )
        if np.any(v <= 0):
            raise NonpositiveBaseWeightError("base weights must be strictly positive")
        if abs(v.sum() - 1.0) > 1e-9:
            raise NonpositiveBaseWeightError("base weights must sum to one")
        object.__setattr__(self, "G", g)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def d(self) -> int:
        return self.G.shape[1]


def standardize(sample: Sample, center_outcomes: bool = False):
    """Standardize treatment and covariate columns of a sample.

    Every column is shifted to mean zero and scaled to sample standard
    deviation one (``ddof=1``).  Outcomes are untouched by default.

    Parameters
    ----------
    sample : Sample
    center_outcomes : bool
        When true, outcomes are also shifted to mean zero (never scaled).

    Returns
    -------
    (Sample, StandardizationTransform)
        The standardized sample and the transform that produced it.

    Raises
    ------
    ConstantColumnError
        If any treatment or covariate column has zero sample variance.
    """
    t_sd = sample.treatments.std(axis=0, ddof=1)
    x_sd = sample.covariates.std(axis=0, ddof=1)
    for j in range(sample.p):
        if not t_sd[j] > 0:
            raise ConstantColumnError("treatment", j)
    for k in range(sample.q):
        if not x_sd[k] > 0:
            raise ConstantColumnError("covariate", k)
    transform = StandardizationTransform(
        treatment_means=sample.treatments.mean(axis=0),
        treatment_sds=t_sd,
        covariate_means=sample.covariates.mean(axis=0),
        covariate_sds=x_sd,
        outcome_centered=center_outcomes,
        outcome_mean=float(sample.outcomes.mean()) if center_outcomes else 0.0,
    )
    return transform.apply(sample), transform


def build_balance_problem(
    sample: Sample,
    base_weights=None,
    covariate_squares: bool = False,
) -> BalanceProblem:
    """Assemble the balance constraints for a standardized sample.

    Parameters
    ----------
    sample : Sample
        Expected to be standardized; the constraint targets are all zero
        on that scale.
    base_weights : array_like of shape (n,), optional
        Strictly positive reference weights.  Renormalized to sum to one.
        Defaults to uniform ``1/n``.
    covariate_squares : bool
        When true, appends the centered squared covariates as additional
        constraint columns, balancing second moments as well.  Centering
        keeps the extra targets at zero and the problem feasible.

    Returns
    -------
    BalanceProblem
        With ``d = p*q + p + q`` columns (plus ``q`` more under
        ``covariate_squares``).
    """
    n = sample.n
    if base_weights is None:
        v = np.full(n, 1.0 / n)
    else:
        v = np.asarray(base_weights, dtype=float)
        if v.ndim != 1 or v.shape[0] != n:
            raise DimensionMismatchError(
                f"base weights have length {v.shape[0] if v.ndim == 1 else 'n/a'}, sample has {n} rows"
            )
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise NonpositiveBaseWeightError("base weights must be finite and strictly positive")
        v = v / v.sum()
    t, x = sample.treatments, sample.covariates
    # (i, k, j) -> column k*p + j: treatment index varies fastest.
    interactions = (x[:, :, None] * t[:, None, :]).reshape(n, sample.q * sample.p)
    blocks = [interactions, t, x]
    if covariate_squares:
        squares = x**2
        blocks.append(squares - squares.mean(axis=0))
    return BalanceProblem(G=np.hstack(blocks), v=v)
