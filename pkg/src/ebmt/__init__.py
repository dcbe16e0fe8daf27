"""Entropy balancing and effect estimation for multivariate continuous treatments.

Weights that balance several continuous treatments against covariates at
once, solved through a convex dual; parametric and tensor-product spline
estimation of the causal effect surface under those weights; sandwich and
percentile-bootstrap inference; a balance diagnostic; and a Monte Carlo
harness plus CLI wrapping it all.

Typical library use::

    from ebmt import (
        Sample, standardize, build_balance_problem, solve_weights,
        LinearEffectModel, estimate_effects, balance_test,
    )

    std_sample, transform = standardize(sample)
    weights = solve_weights(build_balance_problem(std_sample)).weights
    print(balance_test(std_sample, weights).statistic)
    model = LinearEffectModel.from_formula("1 + t1 + t2")
    print(estimate_effects(std_sample, weights, model).theta)
"""

from .data_model import (
    BalanceProblem,
    Sample,
    StandardizationTransform,
    build_balance_problem,
    normalize_weights,
    standardize,
)
from .diagnostics import BalanceReport, balance_test, chi_square_upper_tail
from .entropy_balance import (
    SolverConfig,
    WeightSolution,
    dual_gradient,
    dual_hessian,
    dual_objective,
    solve_weights,
)
from .errors import (
    ConstantColumnError,
    DimensionMismatchError,
    EbmtError,
    EmptyAfterFilteringError,
    IllConditionedBasisError,
    MissingColumnError,
    NonpositiveBaseWeightError,
    NotConvergedError,
    OutOfRangeError,
    ParseError,
    RankDeficientDesignError,
    SingularBreadError,
    SingularCrossProductError,
    SingularHessianError,
    TooManyFailedResamplesError,
    WeightVectorInvalidError,
)
from .parametric import (
    BootstrapResult,
    EffectEstimate,
    LinearEffectModel,
    Term,
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
from .simulation import (
    ScenarioConfig,
    ScenarioReport,
    apply_profile,
    expected_response_surface,
    gen_covariates,
    gen_outcome,
    gen_treatments,
    list_scenarios,
    load_scenario,
    run_scenario,
)
from .splines import (
    SplineConfig,
    SplineFit,
    bspline_basis_1d,
    fit_spline,
    tensor_basis,
    tensor_design,
)

__version__ = "0.1.0"

__all__ = [
    "BalanceProblem",
    "BalanceReport",
    "BootstrapResult",
    "ConstantColumnError",
    "DimensionMismatchError",
    "EbmtError",
    "EffectEstimate",
    "EmptyAfterFilteringError",
    "IllConditionedBasisError",
    "LinearEffectModel",
    "MissingColumnError",
    "NonpositiveBaseWeightError",
    "NotConvergedError",
    "OutOfRangeError",
    "ParseError",
    "RankDeficientDesignError",
    "Sample",
    "ScenarioConfig",
    "ScenarioReport",
    "SingularBreadError",
    "SingularCrossProductError",
    "SingularHessianError",
    "SolverConfig",
    "SplineConfig",
    "SplineFit",
    "StandardizationTransform",
    "Term",
    "TooManyFailedResamplesError",
    "WeightSolution",
    "WeightVectorInvalidError",
    "apply_profile",
    "balance_test",
    "bootstrap_ci",
    "bspline_basis_1d",
    "build_balance_problem",
    "chi_square_upper_tail",
    "dual_gradient",
    "dual_hessian",
    "dual_objective",
    "estimate_effects",
    "expected_response_surface",
    "fit_parametric",
    "fit_rcam",
    "fit_spline",
    "fit_univariate_balance",
    "gen_covariates",
    "gen_outcome",
    "gen_treatments",
    "interaction",
    "intercept",
    "list_scenarios",
    "load_scenario",
    "main_effect",
    "normalize_weights",
    "pipeline_theta",
    "run_scenario",
    "sandwich_variance",
    "solve_weights",
    "square",
    "standardize",
    "standardized_pipeline_theta",
    "tensor_basis",
    "tensor_design",
    "wald_ci",
    "__version__",
]
