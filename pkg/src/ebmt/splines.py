"""Tensor-product B-spline regression of the effect surface.

Each treatment dimension gets a univariate B-spline basis of order ``r``
(degree ``r - 1``) on ``m`` interior knots, built on an extended knot
vector with the boundary knots repeated ``r`` times, so ``M = m + r``
functions per dimension.  The multivariate basis is the tensor product of
the univariate ones, ``Q = M^p`` functions in total, ordered
lexicographically with the first dimension's index varying slowest.

Weighted fitting solves the normal equations

    (Z' Z) beta = Z' diag(n * w) y

so uniform weights ``w_i = 1/n`` reduce exactly to unweighted least
squares.  Near-empty regions of the treatment space make ``Z' Z``
effectively singular; that surfaces as :class:`IllConditionedBasisError`
rather than as a garbage fit, and the caller is expected to retry with
fewer knots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_factor, cho_solve

from .data_model import Sample, normalize_weights
from .errors import DimensionMismatchError, IllConditionedBasisError, OutOfRangeError

__all__ = [
    "SplineConfig",
    "SplineFit",
    "bspline_basis_1d",
    "tensor_basis",
    "tensor_design",
    "fit_spline",
    "default_interior_knots",
]

# Points this close to the range are snapped to the boundary instead of
# being rejected; guards against representation noise at the edges.
_CLAMP = 1e-9

# Smallest acceptable eigenvalue of Z'Z/n before the basis is declared
# too rich for the data.
_MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class SplineConfig:
    """Knot layout shared by all treatment dimensions.

    Attributes
    ----------
    order : int
        Spline order ``r`` (polynomial degree plus one); 4 gives cubics.
    interior_knots : int
        Number ``m`` of interior knots per dimension.
    ranges : tuple of (low, high)
        Supported interval per treatment dimension.
    interior_positions : tuple of tuples, optional
        Explicit interior knot locations per dimension (e.g. at data
        quantiles).  Defaults to an even subdivision of each range.
    """

    order: int
    interior_knots: int
    ranges: tuple[tuple[float, float], ...]
    interior_positions: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be at least 1")
        if self.interior_knots < 0:
            raise ValueError("interior knot count cannot be negative")
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        if not ranges:
            raise ValueError("need at least one dimension")
        for d, (lo, hi) in enumerate(ranges):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"range for dimension {d} must be finite with low < high")
        object.__setattr__(self, "ranges", ranges)
        if self.interior_positions is not None:
            pos = tuple(tuple(float(v) for v in dim) for dim in self.interior_positions)
            if len(pos) != len(ranges):
                raise ValueError("interior_positions must cover every dimension")
            for d, dim_pos in enumerate(pos):
                lo, hi = ranges[d]
                if len(dim_pos) != self.interior_knots:
                    raise ValueError(
                        f"dimension {d}: expected {self.interior_knots} interior knots, "
                        f"got {len(dim_pos)}"
                    )
                if any(not lo < v < hi for v in dim_pos):
                    raise ValueError(f"dimension {d}: interior knots must lie inside the range")
                if any(b <= a for a, b in zip(dim_pos, dim_pos[1:])):
                    raise ValueError(f"dimension {d}: interior knots must strictly increase")
            object.__setattr__(self, "interior_positions", pos)

    @property
    def dims(self) -> int:
        return len(self.ranges)

    @property
    def basis_per_dim(self) -> int:
        return self.interior_knots + self.order

    @property
    def total_basis(self) -> int:
        return self.basis_per_dim ** self.dims

    def knots(self, dim: int) -> NDArray[np.float64]:
        """Extended knot vector for one dimension."""
        lo, hi = self.ranges[dim]
        if self.interior_positions is not None:
            inner = np.asarray(self.interior_positions[dim])
        else:
            inner = np.linspace(lo, hi, self.interior_knots + 2)[1:-1]
        return np.concatenate([np.full(self.order, lo), inner, np.full(self.order, hi)])

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "interior_knots": self.interior_knots,
            "ranges": [list(r) for r in self.ranges],
            "interior_positions": None
            if self.interior_positions is None
            else [list(p) for p in self.interior_positions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplineConfig":
        return cls(
            order=int(data["order"]),
            interior_knots=int(data["interior_knots"]),
            ranges=tuple((float(lo), float(hi)) for lo, hi in data["ranges"]),
            interior_positions=None
            if data.get("interior_positions") is None
            else tuple(tuple(float(v) for v in p) for p in data["interior_positions"]),
        )

    @classmethod
    def from_data(
        cls,
        treatments,
        order: int = 4,
        interior_knots: int | None = None,
        quantile_knots: bool = False,
        margin: float = 1e-9,
    ) -> "SplineConfig":
        """Choose a knot layout from observed treatments.

        The default interior knot count is ``ceil(n ** (1 / (2p + 1)))``,
        reduced until the tensor basis has at most ``n / 5`` functions.
        """
        t = np.asarray(treatments, dtype=float)
        if t.ndim != 2:
            raise DimensionMismatchError("treatments must be a 2-d array")
        n, p = t.shape
        if interior_knots is None:
            interior_knots = default_interior_knots(n, p, order)
        ranges = tuple(
            (float(t[:, d].min()) - margin, float(t[:, d].max()) + margin) for d in range(p)
        )
        positions = None
        if quantile_knots and interior_knots > 0:
            probs = np.arange(1, interior_knots + 1) / (interior_knots + 1)
            positions = tuple(
                tuple(float(v) for v in np.quantile(t[:, d], probs)) for d in range(p)
            )
        return cls(
            order=order,
            interior_knots=interior_knots,
            ranges=ranges,
            interior_positions=positions,
        )


def default_interior_knots(n: int, p: int, order: int = 4) -> int:
    """Interior knot count: ``ceil(n^(1/(2p+1)))`` capped so ``Q <= n / 5``."""
    m = math.ceil(n ** (1.0 / (2 * p + 1)))
    while m > 0 and (m + order) ** p > n / 5:
        m -= 1
    return m


def _basis_matrix(values: NDArray, knots: NDArray, order: int) -> NDArray[np.float64]:
    """All order-``order`` B-splines on ``knots`` evaluated at ``values``.

    Triangular recurrence on the spline order; zero-width cells contribute
    nothing and the right boundary point is assigned to the last real cell
    so the basis still sums to one there.
    """
    x = np.asarray(values, dtype=float)
    count = len(knots) - 1
    basis = np.zeros((x.size, count))
    for j in range(count):
        if knots[j + 1] > knots[j]:
            basis[:, j] = (x >= knots[j]) & (x < knots[j + 1])
    at_end = x == knots[-1]
    if at_end.any():
        last = max(j for j in range(count) if knots[j + 1] > knots[j])
        basis[at_end, last] = 1.0
    for k in range(2, order + 1):
        next_basis = np.zeros((x.size, len(knots) - k))
        for j in range(len(knots) - k):
            left_width = knots[j + k - 1] - knots[j]
            right_width = knots[j + k] - knots[j + 1]
            acc = 0.0
            if left_width > 0:
                acc = (x - knots[j]) / left_width * basis[:, j]
            if right_width > 0:
                acc = acc + (knots[j + k] - x) / right_width * basis[:, j + 1]
            next_basis[:, j] = acc
        basis = next_basis
    return basis


def _clamped(values: NDArray, config: SplineConfig, dim: int) -> NDArray[np.float64]:
    lo, hi = config.ranges[dim]
    x = np.asarray(values, dtype=float).copy()
    too_low = x < lo
    too_high = x > hi
    bad_low = x < lo - _CLAMP
    bad_high = x > hi + _CLAMP
    if bad_low.any() or bad_high.any():
        offender = x[bad_low | bad_high].ravel()[0]
        raise OutOfRangeError(float(offender), dim, lo, hi)
    x[too_low] = lo
    x[too_high] = hi
    return x


def bspline_basis_1d(t: float, config: SplineConfig, dim: int = 0) -> NDArray[np.float64]:
    """The ``M`` univariate basis functions of one dimension at scalar ``t``.

    Values within ``1e-9`` of the range are clamped to the boundary;
    anything further out raises :class:`OutOfRangeError`.
    """
    x = _clamped(np.array([t]), config, dim)
    return _basis_matrix(x, config.knots(dim), config.order)[0]


def tensor_basis(point, config: SplineConfig) -> NDArray[np.float64]:
    """The ``Q`` tensor-product basis functions at one point."""
    point = np.asarray(point, dtype=float).ravel()
    if point.shape[0] != config.dims:
        raise DimensionMismatchError(
            f"point has {point.shape[0]} coordinates, config has {config.dims} dimensions"
        )
    parts = [bspline_basis_1d(point[d], config, d) for d in range(config.dims)]
    out = parts[0]
    for part in parts[1:]:
        out = np.kron(out, part)
    return out


def tensor_design(treatments, config: SplineConfig) -> NDArray[np.float64]:
    """Row-wise tensor basis for a treatment matrix, shape ``(n, Q)``."""
    t = np.asarray(treatments, dtype=float)
    if t.ndim != 2 or t.shape[1] != config.dims:
        raise DimensionMismatchError(
            f"treatments must have shape (n, {config.dims}), got {t.shape}"
        )
    design = _basis_matrix(_clamped(t[:, 0], config, 0), config.knots(0), config.order)
    for d in range(1, config.dims):
        part = _basis_matrix(_clamped(t[:, d], config, d), config.knots(d), config.order)
        design = (design[:, :, None] * part[:, None, :]).reshape(t.shape[0], -1)
    return design


@dataclass(frozen=True)
class SplineFit:
    """Fitted tensor-product coefficients plus the layout that defines them."""

    config: SplineConfig
    coefficients: NDArray[np.float64]
    min_singular_value: float
    n_used: int

    def predict(self, treatments) -> NDArray[np.float64]:
        """Fitted surface at new points, shape ``(k,)`` for ``(k, p)`` input."""
        t = np.asarray(treatments, dtype=float)
        single = t.ndim == 1
        if single:
            t = t[None, :]
        values = tensor_design(t, self.config) @ self.coefficients
        return values[0] if single else values

    def to_dict(self) -> dict:
        data = self.config.to_dict()
        data["coefficients"] = [float(c) for c in self.coefficients]
        data["min_singular_value"] = float(self.min_singular_value)
        data["n_used"] = self.n_used
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SplineFit":
        config = SplineConfig.from_dict(data)
        return cls(
            config=config,
            coefficients=np.asarray(data["coefficients"], dtype=float),
            min_singular_value=float(data["min_singular_value"]),
            n_used=int(data["n_used"]),
        )


def fit_spline(sample: Sample, weights, config: SplineConfig) -> SplineFit:
    """Weighted tensor-product spline fit of outcomes on treatments.

    Parameters
    ----------
    sample : Sample
        Treatments must lie inside the configured ranges.
    weights : array_like, shape (n,)
        Strictly positive; renormalized internally.
    config : SplineConfig

    Raises
    ------
    IllConditionedBasisError
        If ``Q >= n`` or the smallest eigenvalue of ``Z'Z / n`` falls below
        ``1e-10``, both symptoms of more basis functions than the data can
        identify.  Retry with fewer interior knots.
    OutOfRangeError
        If any treatment lies outside the configured ranges.
    """
    if config.dims != sample.p:
        raise DimensionMismatchError(
            f"config has {config.dims} dimensions, sample has {sample.p} treatments"
        )
    w = normalize_weights(weights, sample.n)
    n, q_total = sample.n, config.total_basis
    if q_total >= n:
        raise IllConditionedBasisError(0.0)
    design = tensor_design(sample.treatments, config)
    gram = design.T @ design / n
    min_eig = float(np.linalg.eigvalsh(gram)[0])
    if min_eig < _MIN_EIGENVALUE:
        raise IllConditionedBasisError(max(min_eig, 0.0))
    rhs = design.T @ (n * w * sample.outcomes) / n
    try:
        beta = cho_solve(cho_factor(gram, lower=True), rhs)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedBasisError(max(min_eig, 0.0)) from exc
    return SplineFit(
        config=config,
        coefficients=beta,
        min_singular_value=min_eig,
        n_used=n,
    )
