"""Weight solving by exponential tilting of the base weights.

The weights minimize the Kullback-Leibler divergence from the base weights
``v`` subject to the linear balance constraints ``sum_i w_i G_i = 0`` and
``sum_i w_i = 1``.  By Lagrangian duality the solution has the closed form

    w_i(gamma) = v_i * exp(-gamma . G_i) / sum_j v_j * exp(-gamma . G_j)

where ``gamma`` minimizes the unconstrained convex dual

    f(gamma) = log sum_i v_i * exp(-gamma . G_i).

``f`` has gradient ``-sum_i w_i G_i`` (minus the constraint residual) and
Hessian equal to the weighted covariance of the rows of ``G``, so a damped
Newton iteration converges quadratically near the optimum.  All exponentials
go through a max-shifted log-sum-exp; weights stay finite even when the
tilts underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_factor, cho_solve

from .data_model import BalanceProblem
from .errors import NotConvergedError, SingularHessianError

__all__ = [
    "SolverConfig",
    "WeightSolution",
    "dual_objective",
    "dual_gradient",
    "dual_hessian",
    "solve_weights",
]

# Sufficient-decrease slope for the backtracking line search.
_ARMIJO = 1e-4
# Ridge escalation schedule when the Hessian factorization fails.
_RIDGE_FLOOR = 1e-10
_RIDGE_CAP = 1e-4
# Give up backtracking once the step is this small.
_MIN_STEP = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    """Newton solver knobs.

    Attributes
    ----------
    tolerance : float
        Convergence threshold on the sup-norm of the dual gradient, which
        equals the worst absolute constraint violation of the weights.
    max_iterations : int
        Cap on Newton updates.
    line_search_shrink : float
        Multiplicative step reduction during backtracking, in (0, 1).
    hessian_ridge : float
        Diagonal ridge added to the Hessian before factorizing.  Zero by
        default; escalated automatically if the factorization fails.
    """

    tolerance: float = 1e-9
    max_iterations: int = 200
    line_search_shrink: float = 0.5
    hessian_ridge: float = 0.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0.0 < self.line_search_shrink < 1.0:
            raise ValueError("line_search_shrink must lie strictly between 0 and 1")
        if self.hessian_ridge < 0:
            raise ValueError("hessian_ridge must be nonnegative")


@dataclass(frozen=True)
class WeightSolution:
    """Solved weights plus solver diagnostics.

    ``constraint_residual`` is the sup-norm of the weighted constraint
    means, the same quantity the convergence test uses.
    """

    weights: NDArray[np.float64]
    gamma: NDArray[np.float64]
    objective: float
    constraint_residual: float
    iterations: int
    converged: bool


def _tilted(gamma: NDArray, problem: BalanceProblem):
    """Weights and dual objective at ``gamma``, max-shifted for stability."""
    scores = np.log(problem.v) - problem.G @ gamma
    shift = scores.max()
    tilts = np.exp(scores - shift)
    total = tilts.sum()
    return tilts / total, float(shift + np.log(total))


def dual_objective(gamma, problem: BalanceProblem) -> float:
    """Value of the convex dual at ``gamma``."""
    return _tilted(np.asarray(gamma, dtype=float), problem)[1]


def dual_gradient(gamma, problem: BalanceProblem) -> NDArray[np.float64]:
    """Gradient of the dual: minus the weighted constraint means."""
    w, _ = _tilted(np.asarray(gamma, dtype=float), problem)
    return -(problem.G.T @ w)


def dual_hessian(gamma, problem: BalanceProblem) -> NDArray[np.float64]:
    """Hessian of the dual: the weighted covariance of the rows of ``G``."""
    w, _ = _tilted(np.asarray(gamma, dtype=float), problem)
    return _hessian_from_weights(w, problem.G)


def _hessian_from_weights(w: NDArray, G: NDArray) -> NDArray[np.float64]:
    mean = G.T @ w
    second = G.T @ (G * w[:, None])
    H = second - np.outer(mean, mean)
    return (H + H.T) / 2.0


def _newton_direction(H: NDArray, grad: NDArray, base_ridge: float) -> NDArray:
    """Solve ``H . direction = -grad`` with ridge escalation on failure."""
    ridges = [base_ridge]
    r = _RIDGE_FLOOR
    while r <= _RIDGE_CAP:
        if r > base_ridge:
            ridges.append(r)
        r *= 10.0
    eye = np.eye(H.shape[0])
    for ridge in ridges:
        try:
            factor = cho_factor(H + ridge * eye, lower=True)
            direction = cho_solve(factor, -grad)
        except (np.linalg.LinAlgError, ValueError):
            continue
        if np.all(np.isfinite(direction)):
            return direction
    raise SingularHessianError(
        f"dual Hessian could not be factorized even with ridge {_RIDGE_CAP:g}"
    )


def solve_weights(problem: BalanceProblem, config: SolverConfig | None = None) -> WeightSolution:
    """Minimize the dual by damped Newton iteration.

    Parameters
    ----------
    problem : BalanceProblem
    config : SolverConfig, optional

    Returns
    -------
    WeightSolution
        With ``converged=True``; the solver raises rather than returning a
        non-converged solution.

    Raises
    ------
    NotConvergedError
        If the gradient sup-norm is still above tolerance after
        ``max_iterations`` Newton updates, or the line search stalls.
        Infeasible constraints (an unbounded dual) surface this way.
    SingularHessianError
        If the Hessian cannot be factorized even at the largest ridge.
    """
    config = config or SolverConfig()
    gamma = np.zeros(problem.d)
    w, obj = _tilted(gamma, problem)
    iterations = 0
    while True:
        grad = -(problem.G.T @ w)
        residual = float(np.abs(grad).max()) if problem.d else 0.0
        if residual < config.tolerance:
            return WeightSolution(
                weights=w,
                gamma=gamma,
                objective=obj,
                constraint_residual=residual,
                iterations=iterations,
                converged=True,
            )
        if iterations >= config.max_iterations:
            raise NotConvergedError(iterations, residual)
        H = _hessian_from_weights(w, problem.G)
        direction = _newton_direction(H, grad, config.hessian_ridge)
        slope = float(grad @ direction)
        if slope >= 0.0:
            # Numerically non-descent Newton direction; fall back to steepest
            # descent for this update.
            direction = -grad
            slope = -float(grad @ grad)
        step = 1.0
        while True:
            candidate = gamma + step * direction
            w_new, obj_new = _tilted(candidate, problem)
            if np.isfinite(obj_new) and obj_new <= obj + _ARMIJO * step * slope:
                break
            step *= config.line_search_shrink
            if step < _MIN_STEP:
                raise NotConvergedError(iterations, residual)
        gamma, w, obj = candidate, w_new, obj_new
        iterations += 1
