"""Command-line interface.

Three subcommands: ``fit`` ingests a CSV, fits the shape-restricted outcome
model and the mediator model, and writes a JSON report with effect estimates
and a fitted-curve table; ``simulate`` drives a coverage study from a JSON
config and writes a summary CSV; ``basis`` dumps spline basis evaluations on
a grid for plotting.

Exit codes: 0 success, 1 simulation replicates failed, 2 unusable input
(unparseable CSV, bad config, invalid knots), 3 non-binary exposure,
4 rank-deficient design.  All floating-point output is written with ``repr``
so reports round-trip exactly and reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .effects import EffectQuery, cde, eval_f, nde, nie
from .mediation_models import (
    Dataset,
    RankDeficiencyError,
    Shape,
    ShapeSpec,
    encode_confounder_frame,
    fit_mediator,
    fit_outcome,
)
from .simulation import GeneratorCoefficients, StudyConfig, run_study
from .spline_basis import (
    BasisKind,
    KnotSequence,
    SplineFamily,
    basis_matrix,
    mspline_eval,
)

EXIT_OK = 0
EXIT_REPLICATE_FAILURES = 1
EXIT_BAD_INPUT = 2
EXIT_NON_BINARY_EXPOSURE = 3
EXIT_RANK_DEFICIENT = 4

ENCODING_NOTE = ("non-numeric confounder columns are one-hot encoded as "
                 "'column=level' indicators with the lexicographically first "
                 "level dropped as the reference")


def _fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


@dataclass(frozen=True)
class FitRequest:
    """Everything ``fit`` needs: data location, column mapping, model and
    query settings, and the report destination.

    ``m`` and ``c`` are None to use sample means, otherwise an explicit
    mediator value / encoded confounder vector.
    """

    input_path: str
    outcome: str
    exposure: str
    mediator: str
    confounders: tuple[str, ...]
    shapes: ShapeSpec
    output_path: str
    num_bases: int = 5
    a: float = 1.0
    a_star: float = 0.0
    m: float | None = None
    c: tuple[float, ...] | None = None
    level: float = 0.95
    curve_points: int = 101


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _read_table(path: str) -> pd.DataFrame | None:
    try:
        return pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        _fail(f"cannot read {path!r}: no such file")
    except pd.errors.EmptyDataError:
        _fail(f"cannot parse {path!r}: file is empty")
    except (pd.errors.ParserError, UnicodeDecodeError, OSError) as exc:
        _fail(f"cannot parse {path!r}: {exc}")
    return None


def cmd_fit(request: FitRequest) -> int:
    frame = _read_table(request.input_path)
    if frame is None:
        return EXIT_BAD_INPUT

    mapped = [request.outcome, request.exposure, request.mediator,
              *request.confounders]
    missing_cols = [c for c in mapped if c not in frame.columns]
    if missing_cols:
        _fail(f"{request.input_path!r} lacks mapped columns {missing_cols}")
        return EXIT_BAD_INPUT

    subset = frame[mapped]
    keep = subset.notna().all(axis=1).to_numpy()
    rows_dropped = int((~keep).sum())
    subset = subset.loc[keep]
    if not len(subset):
        _fail("no complete rows left after dropping rows with missing cells")
        return EXIT_BAD_INPUT

    numeric = {}
    for col in (request.outcome, request.mediator):
        parsed = pd.to_numeric(subset[col], errors="coerce")
        if parsed.isna().any():
            _fail(f"column {col!r} has non-numeric values")
            return EXIT_BAD_INPUT
        numeric[col] = parsed.to_numpy(dtype=float)

    exposure = pd.to_numeric(subset[request.exposure], errors="coerce")
    exposure_values = exposure.to_numpy(dtype=float)
    if exposure.isna().any() or not np.all(np.isin(exposure_values, (0.0, 1.0))):
        _fail(f"exposure column {request.exposure!r} is not binary 0/1")
        return EXIT_NON_BINARY_EXPOSURE
    if np.unique(exposure_values).size < 2:
        _fail(f"exposure column {request.exposure!r} has no contrast "
              f"(every value is {exposure_values[0]:g})")
        return EXIT_NON_BINARY_EXPOSURE

    confounder_frame = subset[list(request.confounders)]
    encoded, encoded_names = encode_confounder_frame(confounder_frame)

    try:
        data = Dataset(outcome=numeric[request.outcome],
                       exposure=exposure_values,
                       mediator=numeric[request.mediator],
                       confounders=encoded,
                       confounder_names=tuple(encoded_names))
        mediator_fit = fit_mediator(data)
        outcome_fit = fit_outcome(data, request.shapes,
                                  num_bases=request.num_bases)
    except RankDeficiencyError as exc:
        _fail(str(exc))
        return EXIT_RANK_DEFICIENT
    except ValueError as exc:
        _fail(str(exc))
        return EXIT_BAD_INPUT

    m_value = float(data.mediator.mean()) if request.m is None else request.m
    if request.c is None:
        c_value = data.confounders.mean(axis=0)
    else:
        c_value = np.asarray(request.c, dtype=float)
        if c_value.size != data.n_confounders:
            _fail(f"explicit confounder vector has {c_value.size} entries; "
                  f"the encoded design has {data.n_confounders} columns "
                  f"({encoded_names})")
            return EXIT_BAD_INPUT
    try:
        query = EffectQuery(a=request.a, a_star=request.a_star, m=m_value,
                            c=c_value, level=request.level)
        estimates = [cde(outcome_fit, query),
                     nde(outcome_fit, mediator_fit, query),
                     nie(outcome_fit, mediator_fit, query)]
    except ValueError as exc:
        _fail(str(exc))
        return EXIT_BAD_INPUT

    knots = outcome_fit.knots
    grid = np.linspace(knots.lower, knots.upper, request.curve_points)
    # Reported coefficients pair with the plain (non-negated) family basis.
    f1 = eval_f(outcome_fit.beta2,
                BasisKind(request.shapes.exposed_shape.basis_kind.family),
                knots, grid)
    f2 = eval_f(outcome_fit.beta3,
                BasisKind(request.shapes.unexposed_shape.basis_kind.family),
                knots, grid)

    report = {
        "input": {
            "path": request.input_path,
            "rows_used": data.n_obs,
            "rows_dropped": rows_dropped,
            "column_mapping": {
                "outcome": request.outcome,
                "exposure": request.exposure,
                "mediator": request.mediator,
                "confounders": list(request.confounders),
            },
            "encoded_confounders": encoded_names,
            "encoding_note": ENCODING_NOTE,
        },
        "mediator_fit": {
            "gamma0": mediator_fit.gamma0,
            "gamma1": mediator_fit.gamma1,
            "gamma2": mediator_fit.gamma2,
            "sigma2_sq": mediator_fit.sigma2_sq,
            "covariance": mediator_fit.covariance,
            "residual_dof": mediator_fit.residual_dof,
        },
        "outcome_fit": {
            "beta0": outcome_fit.beta0,
            "beta1": outcome_fit.beta1,
            "beta2": outcome_fit.beta2,
            "beta3": outcome_fit.beta3,
            "beta4": outcome_fit.beta4,
            "sigma1_sq": outcome_fit.sigma1_sq,
            "covariance": outcome_fit.covariance,
            "active_set": outcome_fit.active_set,
            "knots": knots.knots,
            "num_bases": knots.num_bases,
            "shapes": {
                "exposed": request.shapes.exposed_shape.value,
                "unexposed": request.shapes.unexposed_shape.value,
            },
            "residual_dof": outcome_fit.residual_dof,
        },
        "query": {"a": request.a, "a_star": request.a_star, "m": m_value,
                  "c": c_value, "level": request.level},
        "effects": [
            {"kind": e.kind, "estimate": e.estimate, "std_error": e.std_error,
             "ci_lower": e.ci_lower, "ci_upper": e.ci_upper, "level": e.level}
            for e in estimates
        ],
        "fitted_curves": {"m": grid, "f1": f1, "f2": f2},
    }
    with open(request.output_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(report), fh, indent=2)
        fh.write("\n")

    print(f"fit: n={data.n_obs} (dropped {rows_dropped}), "
          f"bases={request.num_bases}, report -> {request.output_path}")
    for e in estimates:
        print(f"  {e.kind}: {e.estimate:.4g} (SE {e.std_error:.4g}, "
              f"{100 * e.level:g}% CI [{e.ci_lower:.4g}, {e.ci_upper:.4g}])")
    return EXIT_OK


CONFIG_KEYS = {"pattern", "sigma1", "n", "reps", "sigma2", "seed",
               "num_bases", "coefficients"}


def _load_simulate_config(path: str, seed_override: int | None,
                          ) -> list[StudyConfig] | None:
    """One StudyConfig per sigma1 value, or None after a diagnostic."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        _fail(f"cannot read {path!r}: no such file")
        return None
    except json.JSONDecodeError as exc:
        _fail(f"cannot parse config {path!r}: {exc}")
        return None
    if not isinstance(raw, dict):
        _fail(f"config {path!r} must be a JSON object")
        return None
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        _fail(f"config {path!r} has unknown keys {sorted(unknown)}")
        return None
    if "pattern" not in raw or "sigma1" not in raw:
        _fail(f"config {path!r} needs 'pattern' and 'sigma1'")
        return None

    sigma1 = raw["sigma1"]
    sigma1_values = list(sigma1) if isinstance(sigma1, list) else [sigma1]
    coefficients = GeneratorCoefficients()
    if "coefficients" in raw:
        spec = raw["coefficients"]
        if not isinstance(spec, dict):
            _fail("'coefficients' must be a JSON object")
            return None
        spec = {k: tuple(v) if isinstance(v, list) else v
                for k, v in spec.items()}
        try:
            coefficients = GeneratorCoefficients(**spec)
        except (TypeError, ValueError) as exc:
            _fail(f"bad 'coefficients': {exc}")
            return None

    base = {"n": raw.get("n", 500), "reps": raw.get("reps", 500),
            "sigma2": raw.get("sigma2", 0.3),
            "seed": seed_override if seed_override is not None
            else raw.get("seed", 0),
            "num_bases": raw.get("num_bases", 5)}
    try:
        return [StudyConfig(pattern=raw["pattern"], sigma1=float(s),
                            coefficients=coefficients, **base)
                for s in sigma1_values]
    except (TypeError, ValueError) as exc:
        _fail(f"bad config values: {exc}")
        return None


SUMMARY_COLUMNS = ("pattern", "method", "effect", "sigma1", "coverage",
                   "avg_abs_rel_bias", "avg_mse", "failures")


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_simulate(config_path: str, out_path: str, seed: int | None,
                 workers: int | None, replicates_out: str | None) -> int:
    configs = _load_simulate_config(config_path, seed)
    if configs is None:
        return EXIT_BAD_INPUT

    results = [run_study(config, workers=workers) for config in configs]

    lines = [",".join(SUMMARY_COLUMNS)]
    for result in results:
        for row in result.summary_rows():
            lines.append(",".join(_format_cell(row[col])
                                  for col in SUMMARY_COLUMNS))
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    if replicates_out is not None:
        _write_replicates(results, replicates_out)

    total_failures = sum(result.failures for result in results)
    print(f"simulate: {len(results)} cell(s), pattern "
          f"{configs[0].pattern}, summary -> {out_path}")
    print(f"{'sigma1':>8} {'method':<16} {'effect':<5} {'coverage':>9} "
          f"{'rel_bias':>9} {'mse':>12}")
    for result in results:
        for row in result.summary_rows():
            print(f"{row['sigma1']:>8g} {row['method']:<16} "
                  f"{row['effect']:<5} {row['coverage']:>9.3f} "
                  f"{row['avg_abs_rel_bias']:>9.3f} {row['avg_mse']:>12.4g}")
    if total_failures:
        print(f"warning: {total_failures} replicate(s) failed",
              file=sys.stderr)
        return EXIT_REPLICATE_FAILURES
    return EXIT_OK


def _write_replicates(results, path: str) -> None:
    header = "pattern,sigma1,replicate,method,effect,estimate,ci_lower,ci_upper,truth"
    lines = [header]
    for result in results:
        config = result.config
        for rep in range(config.reps):
            for (method, effect), est in result.estimates.items():
                lo = result.ci_lower[(method, effect)][rep]
                hi = result.ci_upper[(method, effect)][rep]
                truth = result.truths[effect][rep]
                lines.append(",".join([
                    config.pattern, repr(config.sigma1), str(rep), method,
                    effect, repr(float(est[rep])), repr(float(lo)),
                    repr(float(hi)), repr(float(truth)),
                ]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_basis(kind: str, knots_arg: str, order: int, grid_min: float,
              grid_max: float, grid_points: int, out_path: str | None) -> int:
    try:
        values = np.array([float(v) for v in knots_arg.split(",")])
    except ValueError:
        _fail(f"cannot parse knots {knots_arg!r} as comma-separated numbers")
        return EXIT_BAD_INPUT
    try:
        knots = KnotSequence(values, num_bases=values.size - 2)
    except ValueError as exc:
        _fail(f"invalid knots: {exc}")
        return EXIT_BAD_INPUT
    if grid_points < 0:
        _fail("grid points must be non-negative")
        return EXIT_BAD_INPUT

    grid = np.linspace(grid_min, grid_max, grid_points)
    k = knots.num_bases
    if kind == "mspline":
        columns = [mspline_eval(grid, i, order, knots) for i in range(1, k + 1)]
    else:
        family = (SplineFamily.I_QUADRATIC if kind == "iquadratic"
                  else SplineFamily.C_CUBIC)
        matrix = basis_matrix(grid, BasisKind(family), knots)
        columns = [matrix.values[:, j] for j in range(k)]

    lines = [",".join(["x"] + [f"basis_{i}" for i in range(1, k + 1)])]
    for row in range(grid.size):
        cells = [repr(float(grid[row]))]
        cells += [repr(float(col[row])) for col in columns]
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def _shape(name: str) -> Shape:
    try:
        return Shape(name.lower())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown shape {name!r}; choose from "
            f"{[s.value for s in Shape]}") from None


def _mean_or_float(text: str) -> float | None:
    if text.lower() == "mean":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'mean' or a number, got {text!r}") from None


def _mean_or_vector(text: str) -> tuple[float, ...] | None:
    if text.lower() == "mean":
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'mean' or comma-separated numbers, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapemed",
        description="Shape-restricted causal mediation analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit models to a CSV and report effects")
    fit.add_argument("--input", required=True, help="input CSV path")
    fit.add_argument("--outcome", required=True, help="outcome column name")
    fit.add_argument("--exposure", required=True,
                     help="binary exposure column name")
    fit.add_argument("--mediator", required=True, help="mediator column name")
    fit.add_argument("--confounders", default="",
                     help="comma-separated confounder column names")
    fit.add_argument("--shape-exposed", required=True, type=_shape,
                     help="curve shape under exposure: increasing, "
                          "decreasing, convex, or concave")
    fit.add_argument("--shape-unexposed", required=True, type=_shape,
                     help="curve shape without exposure")
    fit.add_argument("--bases", type=int, default=5,
                     help="number of spline bases (default 5)")
    fit.add_argument("--level", type=float, default=0.95,
                     help="confidence level (default 0.95)")
    fit.add_argument("--a", type=float, default=1.0,
                     help="active exposure level (default 1)")
    fit.add_argument("--a-star", type=float, default=0.0,
                     help="reference exposure level (default 0)")
    fit.add_argument("--m", type=_mean_or_float, default=None,
                     help="mediator value for the CDE: 'mean' (default) or "
                          "a number")
    fit.add_argument("--c", type=_mean_or_vector, default=None,
                     help="confounder vector (encoded scale): 'mean' "
                          "(default) or comma-separated numbers")
    fit.add_argument("--curve-points", type=int, default=101,
                     help="grid size of the fitted-curve table (default 101)")
    fit.add_argument("--out", required=True, help="output JSON path")

    sim = sub.add_parser("simulate", help="run a coverage study from a config")
    sim.add_argument("--config", required=True, help="JSON config path")
    sim.add_argument("--out", required=True, help="summary CSV path")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    sim.add_argument("--workers", type=int, default=None,
                     help="parallel replicate workers (default: "
                          "SHAPEMED_WORKERS or 1)")
    sim.add_argument("--replicates-out", default=None,
                     help="optional per-replicate CSV path")

    basis = sub.add_parser("basis", help="dump basis values on a grid to CSV")
    basis.add_argument("--kind", required=True,
                       choices=("mspline", "iquadratic", "ccubic"))
    basis.add_argument("--knots", required=True,
                       help="comma-separated knots with doubled endpoints")
    basis.add_argument("--order", type=int, default=2,
                       help="mspline order (default 2); ignored otherwise")
    basis.add_argument("--grid-min", type=float, required=True)
    basis.add_argument("--grid-max", type=float, required=True)
    basis.add_argument("--grid-points", type=int, required=True)
    basis.add_argument("--out", default=None,
                       help="output CSV path (default: stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fit":
        confounders = tuple(c for c in args.confounders.split(",") if c)
        request = FitRequest(
            input_path=args.input, outcome=args.outcome,
            exposure=args.exposure, mediator=args.mediator,
            confounders=confounders,
            shapes=ShapeSpec(exposed_shape=args.shape_exposed,
                             unexposed_shape=args.shape_unexposed),
            output_path=args.out, num_bases=args.bases, a=args.a,
            a_star=args.a_star, m=args.m, c=args.c, level=args.level,
            curve_points=args.curve_points)
        return cmd_fit(request)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, args.seed, args.workers,
                            args.replicates_out)
    return cmd_basis(args.kind, args.knots, args.order, args.grid_min,
                     args.grid_max, args.grid_points, args.out)


if __name__ == "__main__":
    sys.exit(main())
