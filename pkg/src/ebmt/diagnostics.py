"""Balance diagnostics: joint treatment-covariate association before and
after weighting.

The check regresses all treatments on all covariates at once and asks
whether the slope matrix is zero.  With the determinant ratio

    lambda = det(SSE) / det(SSE + SSH)

the likelihood-ratio statistic of that hypothesis is

    statistic = -n log(lambda) = n (log det(SSE + SSH) - log det(SSE))

which is asymptotically chi-square with ``q * p`` degrees of freedom under
no association.  Passing weights replaces every sum over units by its
weighted version (weights scaled to sum to ``n``), so a solved balance
problem should drive the statistic to numerical zero while the unweighted
statistic stays large whenever treatments actually depend on covariates.

Treatments and covariates are centered at their (weighted) means first,
which is the same as granting both the null and the alternative model an
intercept.  Determinants are computed in log space; the ratio is clamped
to at most one so rounding can never produce a negative statistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaincc

from .data_model import Sample, normalize_weights
from .errors import DimensionMismatchError, SingularCrossProductError

__all__ = ["BalanceReport", "balance_test", "chi_square_upper_tail"]

_WEIGHTED_CAVEAT = (
    "statistic computed under estimated weights; the chi-square reference "
    "treats them as fixed, so read the p-value as descriptive"
)


@dataclass(frozen=True)
class BalanceReport:
    """Result of the joint association test.

    ``statistic`` is ``-n log(lambda)``; small values mean the weighted
    treatments are unpredictable from the weighted covariates.
    """

    coefficients: NDArray[np.float64]
    sse: NDArray[np.float64]
    ssh: NDArray[np.float64]
    wilks_lambda: float
    statistic: float
    degrees_of_freedom: int
    p_value: float
    weighted: bool
    caveat: str | None = None


def chi_square_upper_tail(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if df < 1:
        raise ValueError("degrees of freedom must be at least 1")
    if not np.isfinite(x) or x < 0:
        raise ValueError("statistic must be finite and nonnegative")
    return float(gammaincc(df / 2.0, x / 2.0))


def balance_test(sample: Sample, weights=None) -> BalanceReport:
    """Joint association test of treatments on covariates.

    Parameters
    ----------
    sample : Sample
        Outcomes are ignored; only treatments and covariates enter.
    weights : array_like, shape (n,), optional
        Balancing weights.  When given, every cross-product is weighted
        and the report carries a caveat about the reference distribution.

    Returns
    -------
    BalanceReport

    Raises
    ------
    SingularCrossProductError
        If the (weighted) covariate cross-product or the residual
        cross-product is not positive definite.
    """
    n, p, q = sample.n, sample.p, sample.q
    if n <= p + q:
        raise DimensionMismatchError(f"need n > p + q rows, got n={n}, p={p}, q={q}")
    weighted = weights is not None
    w = normalize_weights(weights, n) if weighted else np.full(n, 1.0 / n)
    t = sample.treatments - w @ sample.treatments
    x = sample.covariates - w @ sample.covariates
    scaled = n * w
    xtx = x.T @ (x * scaled[:, None])
    xtt = x.T @ (t * scaled[:, None])
    ttt = t.T @ (t * scaled[:, None])
    try:
        coef = cho_solve(cho_factor(xtx, lower=True), xtt)
    except np.linalg.LinAlgError as exc:
        raise SingularCrossProductError("covariate cross-product is singular") from exc
    ssh = coef.T @ xtt
    sse = ttt - ssh
    sign_e, logdet_e = np.linalg.slogdet(sse)
    sign_t, logdet_t = np.linalg.slogdet(ttt)
    if sign_e <= 0 or sign_t <= 0:
        raise SingularCrossProductError("residual cross-product is not positive definite")
    statistic = max(0.0, n * (logdet_t - logdet_e))
    df = q * p
    return BalanceReport(
        coefficients=coef,
        sse=(sse + sse.T) / 2.0,
        ssh=(ssh + ssh.T) / 2.0,
        wilks_lambda=float(min(1.0, np.exp(logdet_e - logdet_t))),
        statistic=float(statistic),
        degrees_of_freedom=df,
        p_value=chi_square_upper_tail(statistic, df),
        weighted=weighted,
        caveat=_WEIGHTED_CAVEAT if weighted else None,
    )
