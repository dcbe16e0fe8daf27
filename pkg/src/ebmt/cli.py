"""Command-line front end.

Subcommands
-----------
balance
    Ingest a CSV, solve balancing weights, report the association
    statistic before and after weighting plus solver diagnostics.
estimate
    The balance pipeline plus effect estimation: parametric fit with
    sandwich/Wald inference by default, percentile bootstrap on request,
    or a tensor-product spline fit of the surface.
simulate
    Run a shipped or user-provided scenario file and report the
    Monte Carlo summaries.
fixtures
    Write synthetic CSV files for trying out the other subcommands.

Reports are emitted as aligned text tables or as json-lines; both render
the same records, with table cells formatted at six significant digits.
Exit codes: 0 on success, 2 for input or configuration problems, 3 when
the weight solver fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import functools
import json
import sys
from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .data_model import Sample, build_balance_problem, standardize
from .diagnostics import balance_test
from .entropy_balance import solve_weights
from .errors import (
    EbmtError,
    EmptyAfterFilteringError,
    MissingColumnError,
    NotConvergedError,
    ParseError,
    SingularHessianError,
)
from .parametric import (
    LinearEffectModel,
    bootstrap_ci,
    estimate_effects,
    pipeline_theta,
    standardized_pipeline_theta,
)
from .simulation import (
    apply_profile,
    gen_covariates,
    gen_outcome,
    gen_treatments,
    list_scenarios,
    load_scenario,
    resolve_workers,
    run_scenario,
)
from .splines import SplineConfig, fit_spline

__all__ = ["AnalysisConfig", "ingest_csv", "run_analysis", "main"]

_EXIT_INPUT = 2
_EXIT_SOLVER = 3


@dataclass(frozen=True)
class AnalysisConfig:
    """Column roles and estimation settings for one CSV analysis."""

    input_path: str
    outcome: str
    treatments: tuple[str, ...]
    covariates: tuple[str, ...]
    model_formula: str | None = None
    spline: tuple[int | None, int] | None = None  # (interior knots m or None, order r)
    bootstrap_draws: int = 0
    level: float = 0.95
    seed: int = 0
    original_units: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not self.treatments or not self.covariates:
            raise ValueError("need at least one treatment and one covariate column")
        roles = [self.outcome, *self.treatments, *self.covariates]
        if len(set(roles)) != len(roles):
            raise ValueError("outcome, treatment and covariate columns must be disjoint")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie strictly between 0 and 1")
        if self.bootstrap_draws < 0:
            raise ValueError("bootstrap draw count cannot be negative")
        if self.model_formula is not None and self.spline is not None:
            raise ValueError("choose either a parametric model or a spline fit, not both")
        if self.spline is not None and self.bootstrap_draws:
            raise ValueError("bootstrap intervals are only available for parametric fits")

    @property
    def model(self) -> LinearEffectModel:
        if self.model_formula is not None:
            return LinearEffectModel.from_formula(self.model_formula)
        return LinearEffectModel.main_effects(len(self.treatments))


def ingest_csv(path: str, config: AnalysisConfig):
    """Read the configured columns from a CSV file, complete cases only.

    Returns
    -------
    (Sample, int)
        The sample and the number of rows dropped for missing or
        non-numeric values in used columns.

    Raises
    ------
    MissingColumnError, ParseError, EmptyAfterFilteringError
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyAfterFilteringError("input file has no header row") from None
        header = [name.strip() for name in header]
        positions = {}
        for name in (config.outcome, *config.treatments, *config.covariates):
            if name not in header:
                raise MissingColumnError(name)
            positions[name] = header.index(name)
        used = [positions[name] for name in (config.outcome, *config.treatments, *config.covariates)]
        rows = []
        dropped = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    line_no,
                    min(len(row), len(header)) + 1,
                    f"row has {len(row)} fields, header has {len(header)}",
                )
            values = []
            for pos in used:
                try:
                    value = float(row[pos])
                except ValueError:
                    value = float("nan")
                values.append(value)
            if all(np.isfinite(v) for v in values):
                rows.append(values)
            else:
                dropped += 1
    if len(rows) < 2:
        raise EmptyAfterFilteringError(
            f"{len(rows)} complete rows remain after dropping {dropped}; need at least 2"
        )
    data = np.asarray(rows, dtype=float)
    p = len(config.treatments)
    sample = Sample(
        outcomes=data[:, 0],
        treatments=data[:, 1 : 1 + p],
        covariates=data[:, 1 + p :],
    )
    return sample, dropped


def _float(value) -> float | None:
    return None if value is None else float(value)


def _pair(values) -> list | None:
    return None if values is None else [float(values[0]), float(values[1])]


def run_analysis(config: AnalysisConfig, weights_only: bool = False) -> list[dict]:
    """Execute the analysis pipeline and return report records."""
    sample, dropped = ingest_csv(config.input_path, config)
    std_sample, transform = standardize(sample)
    problem = build_balance_problem(std_sample)
    solution = solve_weights(problem)

    records: list[dict] = [
        {
            "record": "analysis",
            "input": config.input_path,
            "n_used": sample.n,
            "dropped_rows": dropped,
            "outcome": config.outcome,
            "treatments": list(config.treatments),
            "covariates": list(config.covariates),
            "fit": "weights-only"
            if weights_only
            else ("spline" if config.spline is not None else "parametric"),
            "model": None if config.spline is not None or weights_only else config.model.formula,
            "treatment_scale": "original"
            if config.original_units or config.spline is not None
            else "standardized",
            "level": config.level,
            "bootstrap_draws": config.bootstrap_draws,
            "seed": config.seed,
            "standardization": {
                "treatment_means": [float(v) for v in transform.treatment_means],
                "treatment_sds": [float(v) for v in transform.treatment_sds],
                "covariate_means": [float(v) for v in transform.covariate_means],
                "covariate_sds": [float(v) for v in transform.covariate_sds],
            },
        }
    ]
    for weighting, report in (
        ("unweighted", balance_test(std_sample)),
        ("EBMT", balance_test(std_sample, solution.weights)),
    ):
        records.append(
            {
                "record": "balance",
                "weighting": weighting,
                "statistic": float(report.statistic),
                "wilks_lambda": float(report.wilks_lambda),
                "degrees_of_freedom": report.degrees_of_freedom,
                "p_value": float(report.p_value),
                "caveat": report.caveat,
            }
        )
    records.append(
        {
            "record": "solver",
            "converged": solution.converged,
            "iterations": solution.iterations,
            "constraint_residual": float(solution.constraint_residual),
            "objective": float(solution.objective),
        }
    )
    if weights_only:
        return records

    if config.spline is not None:
        interior, order = config.spline
        layout = SplineConfig.from_data(
            sample.treatments, order=order, interior_knots=interior
        )
        fit = fit_spline(sample, solution.weights, layout)
        records.append({"record": "spline_fit", **fit.to_dict()})
        return records

    model = config.model
    fit_sample = sample if config.original_units else std_sample
    estimate = estimate_effects(fit_sample, solution.weights, model, level=config.level)
    boot = None
    if config.bootstrap_draws:
        hook = pipeline_theta if config.original_units else standardized_pipeline_theta
        boot = bootstrap_ci(
            sample,
            model,
            config.bootstrap_draws,
            level=config.level,
            seed=config.seed,
            estimator=functools.partial(hook, model=model),
            workers=resolve_workers(config.workers),
        )
    for j, label in enumerate(model.labels):
        records.append(
            {
                "record": "coefficient",
                "term": label,
                "estimate": float(estimate.theta[j]),
                "se": float(estimate.standard_errors[j]),
                "wald_ci": _pair(estimate.wald_ci[j]),
                "bootstrap_ci": _pair(boot.intervals[j]) if boot is not None else None,
                "bootstrap_se": _float(boot.standard_errors[j]) if boot is not None else None,
            }
        )
    if boot is not None:
        records.append(
            {
                "record": "bootstrap",
                "draws_requested": boot.draws_requested,
                "draws_used": boot.draws_used,
                "failures": boot.failures,
                "level": boot.level,
            }
        )
    return records


# ---------------------------------------------------------------------------
# Report rendering


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return format(value, ".6g")
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_cell(v) for v in value) + "]"
    return str(value)


def _table_section(rows: list[dict], columns: list[str], title: str) -> list[str]:
    if not rows:
        return []
    cells = [[_cell(row.get(col)) for col in columns] for row in rows]
    widths = [
        max(len(col), *(len(line[i]) for line in cells)) for i, col in enumerate(columns)
    ]
    out = [title, "  ".join(col.ljust(widths[i]) for i, col in enumerate(columns))]
    out += ["  ".join(line[i].ljust(widths[i]) for i in range(len(columns))) for line in cells]
    out.append("")
    return out


def render_table(records: list[dict]) -> str:
    """Aligned-text rendering; numbers at six significant digits."""
    by_kind: dict[str, list[dict]] = {}
    for record in records:
        by_kind.setdefault(record["record"], []).append(record)
    lines: list[str] = []
    for kind in ("analysis", "scenario"):
        for record in by_kind.pop(kind, []):
            lines.append(kind)
            for key, value in record.items():
                if key in ("record", "standardization"):
                    continue
                lines.append(f"  {key}: {_cell(value)}")
            if "standardization" in record:
                std = record["standardization"]
                for key in sorted(std):
                    lines.append(f"  {key}: {_cell(std[key])}")
            lines.append("")
    lines += _table_section(
        by_kind.pop("balance", []),
        ["weighting", "statistic", "wilks_lambda", "degrees_of_freedom", "p_value", "caveat"],
        "balance",
    )
    lines += _table_section(
        by_kind.pop("solver", []),
        ["converged", "iterations", "constraint_residual", "objective"],
        "solver",
    )
    lines += _table_section(
        by_kind.pop("coefficient", []),
        ["term", "estimate", "se", "wald_ci", "bootstrap_ci", "bootstrap_se"],
        "coefficients",
    )
    lines += _table_section(
        by_kind.pop("bootstrap", []),
        ["draws_requested", "draws_used", "failures", "level"],
        "bootstrap",
    )
    lines += _table_section(
        by_kind.pop("coefficient_summary", []),
        [
            "method",
            "term",
            "mean",
            "sd",
            "truth",
            "bias",
            "rmse",
            "coverage",
            "mean_ci_width",
            "replications_used",
            "intervals_used",
        ],
        "coefficient summaries",
    )
    lines += _table_section(
        by_kind.pop("balance_summary", []),
        ["weighting", "mean_statistic"],
        "balance summaries",
    )
    lines += _table_section(
        by_kind.pop("spline_summary", []), ["method", "mean_rmse"], "surface fit"
    )
    lines += _table_section(by_kind.pop("failures", []), ["name", "count"], "failures")
    lines += _table_section(
        by_kind.pop("method_status", []), ["method", "status"], "method status"
    )
    for record in by_kind.pop("spline_fit", []):
        lines.append("spline fit")
        for key in ("order", "interior_knots", "ranges", "min_singular_value", "n_used"):
            lines.append(f"  {key}: {_cell(record.get(key))}")
        lines.append(f"  coefficients: {_cell(record.get('coefficients'))}")
        lines.append("")
    by_kind.pop("replication", None)  # audit rows appear in json-lines only
    for kind, rows in by_kind.items():
        keys = [k for k in rows[0] if k != "record"]
        lines += _table_section(rows, keys, kind)
    return "\n".join(lines).rstrip() + "\n"


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not serializable: {type(value)!r}")


def render_json_lines(records: list[dict]) -> str:
    return "".join(
        json.dumps(record, sort_keys=True, default=_json_default) + "\n" for record in records
    )


def _emit(records: list[dict], fmt: str, output: str | None) -> None:
    text = render_json_lines(records) if fmt == "json-lines" else render_table(records)
    if output:
        with open(output, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Argument parsing


def _parse_bootstrap(text: str) -> int:
    value = text[2:] if text.startswith("B=") else text
    try:
        draws = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected B=<int>, got {text!r}") from None
    if draws < 0:
        raise argparse.ArgumentTypeError("bootstrap draw count cannot be negative")
    return draws


def _parse_spline(text: str) -> tuple[int | None, int]:
    interior: int | None = None
    order = 4
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        key, _, value = piece.partition("=")
        try:
            number = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"expected m=<int>,r=<int>, got {text!r}"
            ) from None
        if key == "m":
            interior = number
        elif key == "r":
            order = number
        else:
            raise argparse.ArgumentTypeError(f"unknown spline setting {key!r}")
    return interior, order


def _comma_list(text: str) -> tuple[str, ...]:
    names = tuple(name.strip() for name in text.split(",") if name.strip())
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list of column names")
    return names


def _add_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="input CSV path")
    parser.add_argument("--outcome", required=True, help="outcome column name")
    parser.add_argument(
        "--treatments", required=True, type=_comma_list, help="treatment columns, comma-separated"
    )
    parser.add_argument(
        "--covariates", required=True, type=_comma_list, help="covariate columns, comma-separated"
    )
    parser.add_argument("--output", help="write the report here instead of stdout")
    parser.add_argument(
        "--format", choices=("table", "json-lines"), default="table", help="report format"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebmt",
        description="Balancing weights and effect estimation for multivariate continuous treatments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_balance = sub.add_parser("balance", help="weight solving and balance diagnostics only")
    _add_io_flags(p_balance)

    p_estimate = sub.add_parser("estimate", help="balance pipeline plus effect estimation")
    _add_io_flags(p_estimate)
    p_estimate.add_argument(
        "--model", help="treatment terms, e.g. '1 + t1 + t2 + t1:t2' (default: main effects)"
    )
    p_estimate.add_argument(
        "--spline",
        type=_parse_spline,
        metavar="m=<int>,r=<int>",
        help="fit the surface with a tensor-product spline instead of a parametric model",
    )
    p_estimate.add_argument(
        "--bootstrap",
        type=_parse_bootstrap,
        default=0,
        metavar="B=<int>",
        help="add percentile bootstrap intervals from B full-pipeline resamples",
    )
    p_estimate.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p_estimate.add_argument(
        "--level", type=float, default=0.95, help="confidence level (default 0.95)"
    )
    p_estimate.add_argument(
        "--original-units",
        action="store_true",
        help="fit on treatments in their original units instead of standardized ones",
    )
    p_estimate.add_argument("--workers", type=int, help="bootstrap worker processes")

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p_sim.add_argument("--scenario", help="shipped scenario name or TOML file path")
    p_sim.add_argument("--list-scenarios", action="store_true", help="list shipped scenarios")
    p_sim.add_argument("--n", type=int, help="override sample size")
    p_sim.add_argument("--replications", type=int, help="override replication count")
    p_sim.add_argument(
        "--bootstrap", type=_parse_bootstrap, metavar="B=<int>", help="override bootstrap draws"
    )
    p_sim.add_argument("--seed", type=int, help="override master seed")
    p_sim.add_argument(
        "--profile", choices=("desk", "full"), help="replication/bootstrap effort preset"
    )
    p_sim.add_argument("--workers", type=int, help="replication worker processes")
    p_sim.add_argument("--output", help="write the report here instead of stdout")
    p_sim.add_argument(
        "--format", choices=("table", "json-lines"), default="table", help="report format"
    )

    p_fix = sub.add_parser("fixtures", help="write synthetic CSV fixtures")
    p_fix.add_argument(
        "--kind",
        choices=("linear", "survey"),
        default="linear",
        help="linear: 5 covariates with known unit effects; survey: 9 covariates, 2 treatments",
    )
    p_fix.add_argument("--n", type=int, default=500)
    p_fix.add_argument("--seed", type=int, default=0)
    p_fix.add_argument("--missing-rate", type=float, default=0.0, help="fraction of blanked cells")
    p_fix.add_argument("--output", required=True, help="CSV path to write")
    return parser


def _cmd_balance(args) -> int:
    config = AnalysisConfig(
        input_path=args.input,
        outcome=args.outcome,
        treatments=args.treatments,
        covariates=args.covariates,
    )
    _emit(run_analysis(config, weights_only=True), args.format, args.output)
    return 0


def _cmd_estimate(args) -> int:
    config = AnalysisConfig(
        input_path=args.input,
        outcome=args.outcome,
        treatments=args.treatments,
        covariates=args.covariates,
        model_formula=args.model,
        spline=args.spline,
        bootstrap_draws=args.bootstrap,
        level=args.level,
        seed=args.seed,
        original_units=args.original_units,
        workers=args.workers,
    )
    _emit(run_analysis(config), args.format, args.output)
    return 0


def _cmd_simulate(args) -> int:
    if args.list_scenarios:
        sys.stdout.write("\n".join(list_scenarios()) + "\n")
        return 0
    if not args.scenario:
        raise ValueError("--scenario is required (or use --list-scenarios)")
    config = load_scenario(args.scenario)
    if args.profile:
        config = apply_profile(config, args.profile)
    # Explicit flags win over both the file and the profile preset.
    overrides = {
        key: value
        for key, value in (
            ("n", args.n),
            ("replications", args.replications),
            ("bootstrap_draws", args.bootstrap),
            ("seed", args.seed),
        )
        if value is not None
    }
    if overrides:
        config = dataclasses.replace(config, **overrides)
    report = run_scenario(config, workers=args.workers)
    _emit(report.to_records(), args.format, args.output)
    return 0


def _write_csv(path: str, header: list[str], columns: list[np.ndarray], missing_mask) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        n = columns[0].shape[0]
        for i in range(n):
            row = []
            for j, column in enumerate(columns):
                if missing_mask is not None and missing_mask[i, j]:
                    row.append("")
                else:
                    row.append(format(float(column[i]), ".10g"))
            writer.writerow(row)


def _cmd_fixtures(args) -> int:
    if args.n < 50:
        raise ValueError("fixture size must be at least 50")
    if not 0.0 <= args.missing_rate < 1.0:
        raise ValueError("missing rate must lie in [0, 1)")
    if args.kind == "linear":
        x = gen_covariates(args.n, args.seed)
        t = gen_treatments(x, "T2dL", args.seed)
        y = gen_outcome(t, x, "Y1", args.seed)
        header = ["y", "t1", "t2", "x1", "x2", "x3", "x4", "x5"]
        columns = [y, t[:, 0], t[:, 1]] + [x[:, k] for k in range(5)]
        mask = None
        if args.missing_rate:
            rng = substream(args.seed, 9)
            mask = rng.random((args.n, len(columns))) < args.missing_rate
        _write_csv(args.output, header, columns, mask)
        return 0
    # survey: 9 covariates with assorted scales, 2 dependent treatments.
    rng = substream(args.seed, 9)
    n = args.n
    age = rng.uniform(20, 80, n)
    income = rng.lognormal(10.0, 0.5, n)
    education = rng.integers(8, 21, n).astype(float)
    household = rng.integers(1, 7, n).astype(float)
    urban = (rng.random(n) < 0.6).astype(float)
    insured = (rng.random(n) < 0.8).astype(float)
    exercise = rng.gamma(2.0, 1.5, n)
    alcohol = rng.poisson(3.0, n).astype(float)
    bmi = rng.normal(27.0, 4.0, n)
    duration = np.clip(
        0.5 * (age - 20) + 2.0 * (1 - insured) + rng.normal(0, 6, n), 0, None
    )
    frequency = np.clip(
        8.0 + 0.15 * bmi - 0.5 * exercise + 0.05 * (age - 50) + rng.normal(0, 3, n), 0, None
    )
    cost = (
        120.0
        + 9.0 * duration
        + 14.0 * frequency
        + 2.5 * (age - 50)
        + 0.4 * bmi**1.5
        - 6.0 * exercise
        + rng.normal(0, 40, n)
    )
    header = [
        "medical_cost",
        "duration",
        "frequency",
        "age",
        "income",
        "education",
        "household_size",
        "urban",
        "insured",
        "exercise",
        "alcohol",
        "bmi",
    ]
    columns = [
        cost,
        duration,
        frequency,
        age,
        income,
        education,
        household,
        urban,
        insured,
        exercise,
        alcohol,
        bmi,
    ]
    mask = None
    if args.missing_rate:
        mask = rng.random((n, len(columns))) < args.missing_rate
    _write_csv(args.output, header, columns, mask)
    return 0


_COMMANDS = {
    "balance": _cmd_balance,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "fixtures": _cmd_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (NotConvergedError, SingularHessianError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_SOLVER
    except (EbmtError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
