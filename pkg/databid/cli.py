"""``databid`` command line.

Exit codes: 0 success, 1 configuration or input error, 2 one or more failed
scenarios.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import pandas as pd

from .booking_store import BookingStore
from .config import BaselineConfig, RobustnessConfig, load_config, load_estimator_config
from .demand_model import DemandScenario
from .dp_optimal import compute_value_and_bid, write_bid_matrix_csv
from .emsr import NormalDemandClass, data_driven_emsr, emsr_curve
from .estimator import EstimatorKind, expand_to_daily, fit, fit_simple_average, save_estimator
from .exceptions import DatabidError
from .experiments import (
    read_results_csv,
    run_baseline,
    run_robustness,
    summarize,
    write_failures_csv,
    write_results_csv,
)
from .observation_builder import (
    assemble_training_set,
    build_dcp_grid,
    group_flights,
    read_bookings_csv,
    read_observations_csv,
    write_observations_csv,
)

logger = logging.getLogger("databid")

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_FAILED_SCENARIOS = 2
DEFAULT_BOOKINGS_TABLE = "bookings"


def _add_common(parser: argparse.ArgumentParser, config_help: str) -> None:
    parser.add_argument("--config", type=Path, help=config_help)
    parser.add_argument("--seed", type=int, help="Master seed (overrides the config file).")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="Output directory.")
    parser.add_argument(
        "--paper-scale",
        dest="full_scale",
        action="store_true",
        help="Start from the full-scale presets.",
    )
    parser.add_argument("--workers", type=int, help="Scenario worker processes.")


def _run_experiment(args: argparse.Namespace, kind, runner: Callable, group_by: str) -> int:
    config = load_config(
        kind, args.config, args.full_scale, master_seed=args.seed, workers=args.workers
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    run = runner(config, out_dir=args.out_dir)
    write_results_csv(run.results, args.out_dir / "results.csv")
    if run.results:
        summarize(run.results, group_by=group_by).to_csv(args.out_dir / "summary.csv", index=False)
    if run.failures:
        write_failures_csv(run.failures, args.out_dir / "failures.csv")
        logger.error("%d scenario(s) failed, see failures.csv", len(run.failures))
        return EXIT_FAILED_SCENARIOS
    return EXIT_OK


def _simulate_baseline(args: argparse.Namespace) -> int:
    return _run_experiment(args, BaselineConfig, run_baseline, "lambda")


def _simulate_robustness(args: argparse.Namespace) -> int:
    return _run_experiment(args, RobustnessConfig, run_robustness, "ratio")


def _build_observations(args: argparse.Namespace) -> int:
    if args.dsn:
        flights = group_flights(BookingStore(dsn=args.dsn).read_bookings(args.table))
    elif args.bookings:
        flights = group_flights(read_bookings_csv(args.bookings))
    else:
        raise DatabidError("build-observations needs a bookings CSV or --dsn")
    grid = build_dcp_grid(args.horizon_days, args.n_dcps)
    observations = assemble_training_set(flights, args.capacity, grid)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_observations_csv(observations, args.out_dir / "observations.csv")
    logger.info("wrote %d observations of %d flights", len(observations), observations.n_flights)
    return EXIT_OK


def _train(args: argparse.Namespace) -> int:
    observations = read_observations_csv(args.observations, capacity=args.capacity)
    if EstimatorKind(args.estimator) == EstimatorKind.SIMPLE_AVERAGE:
        model = fit_simple_average(observations)
    else:
        model = fit(observations, load_estimator_config(args.config, seed=args.seed))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_estimator(model, args.out_dir / "model.npz")
    horizon_days = args.horizon_days or observations.grid.boundaries[0] + 1
    matrix = expand_to_daily(model, observations.capacity, horizon_days, observations.grid)
    write_bid_matrix_csv(matrix, args.out_dir / "bidprices_data_driven.csv")
    return EXIT_OK


def _dp_solve(args: argparse.Namespace) -> int:
    config = load_config(BaselineConfig, args.config, args.full_scale)
    scenario = DemandScenario(
        lambda_per_day=args.lambda_per_day,
        alpha=config.alpha,
        p0=config.p0,
        capacity=config.capacity,
        horizon_days=config.horizon_days,
    )
    _, matrix = compute_value_and_bid(scenario, config.dt)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_bid_matrix_csv(matrix, args.out_dir / "bidprices_optimal.csv")
    return EXIT_OK


def _emsr_curve(args: argparse.Namespace) -> int:
    demand_class = NormalDemandClass(fare=args.fare, mean=args.mean, std_dev=args.std_dev)
    frame = pd.DataFrame(
        {
            "seat": range(1, args.capacity + 1),
            "emsr": emsr_curve(demand_class, args.capacity),
        }
    )
    for n in _parse_samples(args.samples):
        frame[f"dd_{n}"] = data_driven_emsr(demand_class, args.capacity, n, args.seed or 0)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    frame.to_csv(args.out_dir / "emsr.csv", index=False)
    return EXIT_OK


def _parse_samples(samples: Optional[str]) -> List[int]:
    if not samples:
        return []
    try:
        return [int(n) for n in samples.split(",")]
    except ValueError as e:
        raise DatabidError(f"--samples must be comma separated integers, got {samples!r}") from e


def _summarize(args: argparse.Namespace) -> int:
    results = read_results_csv(args.results)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    summarize(results, group_by=args.group_by).to_csv(args.out_dir / "summary.csv", index=False)
    return EXIT_OK


def _load_bookings(args: argparse.Namespace) -> int:
    records = read_bookings_csv(args.bookings)
    store = BookingStore(dsn=args.dsn)
    store.create_table(args.table)
    written = store.insert_bookings(args.table, records)
    logger.info("loaded %d bookings into %s", written, args.table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="databid",
        description="Data-driven bid prices: DP benchmark, observation building, training and simulation.",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(
        name: str,
        handler: Callable[[argparse.Namespace], int],
        help_text: str,
        config_help: str = "YAML configuration file.",
    ):
        command = sub.add_parser(name, help=help_text)
        _add_common(command, config_help)
        command.set_defaults(handler=handler)
        return command

    add("simulate-baseline", _simulate_baseline, "Run the baseline experiment.")
    add("simulate-robustness", _simulate_robustness, "Run the demand misspecification experiment.")

    command = add("build-observations", _build_observations, "Bookings to training observations.")
    command.add_argument("bookings", nargs="?", type=Path, help="Bookings CSV.")
    command.add_argument("--dsn", help="Read bookings from this database instead.")
    command.add_argument("--table", default=DEFAULT_BOOKINGS_TABLE)
    command.add_argument("--capacity", type=int, required=True)
    command.add_argument("--horizon-days", type=int, required=True)
    command.add_argument("--n-dcps", type=int, default=10)

    command = add(
        "train",
        _train,
        "Fit an estimator and expand it to daily bid prices.",
        config_help="YAML with estimator settings, either bare or under an estimator: key.",
    )
    command.add_argument("observations", type=Path, help="Observations CSV.")
    command.add_argument(
        "--estimator", choices=[k.value for k in EstimatorKind], default=EstimatorKind.NEURAL.value
    )
    command.add_argument("--capacity", type=int)
    command.add_argument("--horizon-days", type=int)

    command = add("dp-solve", _dp_solve, "Optimal bid prices for one arrival rate.")
    command.add_argument("--lambda", dest="lambda_per_day", type=float, required=True)

    command = add("emsr-curve", _emsr_curve, "EMSR curve of a normal demand class.")
    command.add_argument("--fare", type=float, default=400.0)
    command.add_argument("--mean", type=float, default=3.0)
    command.add_argument("--std-dev", type=float, default=2.0)
    command.add_argument("--capacity", type=int, default=10)
    command.add_argument("--samples", help="Comma separated sample sizes, e.g. 5,100.")

    command = add("summarize", _summarize, "Aggregate a results CSV.")
    command.add_argument("results", type=Path, help="results.csv")
    command.add_argument("--group-by", choices=["lambda", "ratio"], default="lambda")

    command = add("load-bookings", _load_bookings, "Write a bookings CSV into a database table.")
    command.add_argument("bookings", type=Path, help="Bookings CSV.")
    command.add_argument("--dsn", required=True)
    command.add_argument("--table", default=DEFAULT_BOOKINGS_TABLE)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (DatabidError, OSError, ValueError) as e:
        logger.error("%s", e)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
