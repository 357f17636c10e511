"""Command-line front end.

    python cli.py compute --data A.csv --loadings Z.csv [--method all] [--normalize]
    python cli.py solve --data A.csv --m 3 [--weights decreasing]
    python cli.py experiment pev-curves|ranking [--config run.json] [--out table.csv]
    python cli.py demo parasitic|counterexample-norm|anomaly-subspace|overcount

--seed, --out, --format and --log-level are accepted before or after the subcommand.

Exit codes: 0 ok, 2 invalid input, 3 iteration did not converge, 4 witness not found.
Results go to stdout (or --out); log messages go to stderr.
"""

import argparse
import logging
import sys

import pandas as pd

from blockpca import solve_weighted
from config import (
    BLOCK_PCA_MAX_ITER,
    BLOCK_PCA_TOL,
    DEFAULT_RANKING_TRIALS,
    DEFAULT_SEED,
    DEFINITIONS,
    EXIT_NO_WITNESS,
    EXIT_NON_CONVERGED,
    EXIT_OK,
    EXIT_VALIDATION,
    FIXED_POINT_MAX_ITER,
    FIXED_POINT_TOL,
    METHOD_NAMES,
    PROJECTED_METHODS,
)
from data_io import metadata_path, read_matrix_csv, write_csv, write_json
from demos import DEMOS, run_demo
from errors import ExpVarError, InvalidInput, NonConverged, WitnessNotFound
from expvar import (
    Loadings,
    Weights,
    normalized_var,
    optimal_projected_var,
    pev,
    projected_var,
    report,
    subspace_var,
)
from linalg import DataMatrix
from report import (
    collect_pev_samples,
    curve_table_from_samples,
    dispersion_table,
    run_ranking,
    write_curve_table,
    write_ranking,
)
from simulate import ExperimentConfig, SimScheme, load_experiment_config, run_metadata

logger = logging.getLogger(__name__)


# ── Inputs ────────────────────────────────────────────────────────


def _data_matrix(args) -> DataMatrix:
    values = read_matrix_csv(args.data, "data matrix")
    return DataMatrix.centered(values) if args.center else DataMatrix(values)


def _seed(args) -> int:
    return DEFAULT_SEED if args.seed is None else args.seed


def _format(args, default: str = "json") -> str:
    return default if args.format is None else args.format


# ── compute ───────────────────────────────────────────────────────


def compute_value(A: DataMatrix, Z: Loadings, method: str, weights: Weights | None = None, pivot: bool = True) -> float:
    """One definition by its --method name; the library call behind ``compute``."""
    if weights is not None and method not in PROJECTED_METHODS:
        raise InvalidInput(f"--weights applies to projected methods only ({', '.join(PROJECTED_METHODS)})")
    if method == "subsp":
        return subspace_var(A, Z)
    if method == "qrnorm":
        return normalized_var(A, Z, "qr", pivot)
    if method == "upnorm":
        return normalized_var(A, Z, "up", pivot)
    if method == "qrproj":
        return projected_var(A, Z, "qr", pivot, weights)
    if method == "upproj":
        return projected_var(A, Z, "up", pivot, weights)
    if method == "optproj":
        return optimal_projected_var(A, Z, weights, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER).value
    raise InvalidInput(f"unknown method {method!r}")


def cmd_compute(args) -> int:
    A = _data_matrix(args)
    raw = read_matrix_csv(args.loadings, "loadings")
    Z = Loadings.normalized(raw) if args.normalize else Loadings(raw)
    pivot = not args.no_pivot

    if args.method == "all":
        if args.weights:
            raise InvalidInput("--weights needs a single projected --method")
        rep = report(A, Z, pivot=pivot)
        rows = [(d, rep.value(d), rep.pev(d)) for d in DEFINITIONS]
        payload = rep.as_dict()
    else:
        weights = Weights.parse(args.weights, Z.m) if args.weights else None
        value = compute_value(A, Z, args.method, weights, pivot)
        definition = METHOD_NAMES[args.method]
        share = pev(value, A)
        rows = [(definition, value, share)]
        payload = {"method": args.method, "definition": definition, "value": value, "pev": share}

    if _format(args) == "csv":
        write_csv(pd.DataFrame(rows, columns=["definition", "value", "pev"]), args.out)
    else:
        write_json(payload, args.out)
    return EXIT_OK


# ── solve ─────────────────────────────────────────────────────────


def cmd_solve(args) -> int:
    A = _data_matrix(args)
    weights = Weights.parse(args.weights, args.m)
    code = EXIT_OK
    try:
        solution = solve_weighted(A, args.m, weights, tol=args.tol, max_iter=args.max_iter, seed=_seed(args))
    except NonConverged as exc:
        if exc.result is None:
            raise
        logger.error("%s", exc)
        solution, code = exc.result, EXIT_NON_CONVERGED

    if _format(args) == "csv":
        write_csv(pd.DataFrame(solution.Z_star), args.out, header=False)
    else:
        write_json(solution.as_dict(), args.out)
    return code


# ── experiment ────────────────────────────────────────────────────


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        return load_experiment_config(args.config, seed=args.seed)
    scheme = SimScheme.close(seed=_seed(args))
    if args.kind == "ranking":
        return ExperimentConfig(scheme=scheme, trials=DEFAULT_RANKING_TRIALS)
    return ExperimentConfig(scheme=scheme)


def cmd_experiment(args) -> int:
    config = _experiment_config(args)

    if args.kind == "ranking":
        reports = run_ranking(
            config.scheme,
            config.grid,
            config.trials,
            config.epsilons,
            pair_cap=config.pair_cap,
            lambda_fraction=config.lambda_fraction,
            subsample_pairs=config.subsample_pairs,
            workers=config.workers,
        )
        write_ranking(reports, args.out)
        return EXIT_OK

    samples = collect_pev_samples(config.scheme, config.grid, config.trials, config.workers)
    table = curve_table_from_samples(samples, config.scheme, run_metadata(config.scheme, config.grid, config.trials))
    if _format(args, default="csv") == "json":
        write_json({"rows": table.frame.to_dict(orient="records"), "metadata": table.metadata}, args.out)
    else:
        write_curve_table(table, args.out)
        if args.out is not None:
            logger.info("metadata written to %s", metadata_path(args.out))
    if args.dispersion:
        disp = dispersion_table(samples)
        write_csv(disp, None if args.out is None else f"{args.out}.dispersion.csv")
    return EXIT_OK


# ── demo ──────────────────────────────────────────────────────────


def cmd_demo(args) -> int:
    write_json(run_demo(args.name, seed=_seed(args)), args.out)
    return EXIT_OK


# ── Parser ────────────────────────────────────────────────────────


def _add_output_flags(parser: argparse.ArgumentParser, default=None, log_level="WARNING") -> None:
    parser.add_argument("--seed", type=int, default=default, help=f"random seed (default {DEFAULT_SEED})")
    parser.add_argument("--out", default=default, help="output path (default: stdout)")
    parser.add_argument(
        "--format",
        choices=["csv", "json"],
        default=default,
        help="output format (default csv for pev-curves, json otherwise)",
    )
    parser.add_argument(
        "--log-level",
        default=log_level,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="stderr log level (default WARNING)",
    )


def build_parser() -> argparse.ArgumentParser:
    """Top-level parser; --seed, --out, --format and --log-level go before or after the subcommand."""
    # suppressed defaults keep a flag given before the subcommand
    common = argparse.ArgumentParser(add_help=False)
    _add_output_flags(common, default=argparse.SUPPRESS, log_level=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        description="Explained variance of correlated principal components.",
        epilog="Exit codes: 0 ok, 2 invalid input, 3 did not converge, 4 witness not found.",
    )
    _add_output_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", parents=[common], help="explained variances of Y = AZ")
    p.add_argument("--data", required=True, help="n x p data matrix (headerless CSV)")
    p.add_argument("--loadings", required=True, help="p x m loadings (headerless CSV)")
    p.add_argument("--method", choices=["all", *METHOD_NAMES], default="all")
    p.add_argument("--weights", help="comma-separated non-increasing weights (projected methods only)")
    p.add_argument("--normalize", action="store_true", help="scale loading columns to unit norm")
    p.add_argument("--center", action="store_true", help="subtract column means from the data")
    p.add_argument("--no-pivot", action="store_true", help="QR without max-norm column pivoting")
    p.set_defaults(handler=cmd_compute)

    p = sub.add_parser("solve", parents=[common], help="weighted block-PCA maximizer")
    p.add_argument("--data", required=True, help="n x p data matrix (headerless CSV)")
    p.add_argument("--m", type=int, required=True, help="number of components")
    p.add_argument("--weights", default="decreasing", help="decreasing, constant or a comma-separated list")
    p.add_argument("--tol", type=float, default=BLOCK_PCA_TOL)
    p.add_argument("--max-iter", type=int, default=BLOCK_PCA_MAX_ITER)
    p.add_argument("--center", action="store_true", help="subtract column means from the data")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("experiment", parents=[common], help="pev curves or ranking agreement")
    p.add_argument("kind", choices=["pev-curves", "ranking"])
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--dispersion", action="store_true", help="also write the sd x 100 table at lambda = 0.3")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("demo", parents=[common], help="witnesses of the definitions' anomalies")
    p.add_argument("name", choices=list(DEMOS))
    p.set_defaults(handler=cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except WitnessNotFound as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NO_WITNESS
    except NonConverged as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NON_CONVERGED
    except ExpVarError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
