"""Baseline and robustness experiments over randomly drawn demand scenarios.

Seeds are derived from ``master_seed`` per scenario ``i``:

* ``(i, 0)`` draws the arrival rate(s),
* ``(i, 1)`` generates the training streams,
* ``(i, 2)`` generates the test streams of a robustness scenario,
* ``(i, 3)`` seeds the estimator.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ._utils import derive_seed, make_rng
from .config import BaselineConfig, RobustnessConfig
from .demand_model import DemandScenario
from .dp_optimal import BidPriceMatrix, compute_value_and_bid, write_bid_matrix_csv
from .estimator import expand_to_daily, fit
from .exceptions import InvalidInputError
from .observation_builder import (
    assemble_training_set,
    build_dcp_grid,
    write_observations_csv,
)
from .schema import (
    ExperimentResult,
    ExperimentRun,
    FlightOutcome,
    PolicyName,
    ScenarioFailure,
)
from .simulator import (
    PolicyHandle,
    generate_streams,
    load_factor_gap,
    mean_load_factor,
    mean_revenue,
    replay,
    revenue_gap,
    write_outcomes_csv,
)

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "scenario_id",
    "lambda_train",
    "lambda_test",
    "ratio",
    "policy",
    "mean_revenue",
    "mean_load_factor",
    "revenue_gap_vs_optimal",
    "load_factor_gap_vs_optimal",
    "total_arrivals",
]
FAILURE_COLUMNS = ["scenario_id", "error"]

ExperimentConfig = Union[BaselineConfig, RobustnessConfig]
ScenarioOutput = Tuple[List[ExperimentResult], Optional[ScenarioFailure]]


def _scenario(config: ExperimentConfig, lambda_per_day: float) -> DemandScenario:
    return DemandScenario(
        lambda_per_day=lambda_per_day,
        alpha=config.alpha,
        p0=config.p0,
        capacity=config.capacity,
        horizon_days=config.horizon_days,
    )


def _policy(config: ExperimentConfig, matrix: BidPriceMatrix, name: PolicyName) -> PolicyHandle:
    return PolicyHandle(
        matrix=matrix,
        alpha=config.alpha,
        p0=config.p0,
        name=name,
        day_offset=config.bid_day_offset,
    )


def _histories(outcomes: Sequence[FlightOutcome]) -> Dict[int, Tuple[List[float], List[int]]]:
    # every flight, including the ones that sold nothing
    return {
        index: (
            [b.price for b in outcome.bookings],
            [b.days_to_departure for b in outcome.bookings],
        )
        for index, outcome in enumerate(outcomes)
    }


def _train_data_driven(
    config: ExperimentConfig,
    scenario_id: int,
    training_outcomes: Sequence[FlightOutcome],
    out_dir: Optional[Path],
) -> BidPriceMatrix:
    grid = build_dcp_grid(config.horizon_days, config.n_dcps)
    observations = assemble_training_set(
        _histories(training_outcomes), config.capacity, grid
    )
    estimator_config = config.estimator.model_copy(
        update={"seed": derive_seed(config.estimator.seed, config.master_seed, scenario_id, 3)}
    )
    model = fit(observations, estimator_config)
    if out_dir is not None:
        write_observations_csv(observations, out_dir / f"observations_{scenario_id}.csv")
    return expand_to_daily(model, config.capacity, config.horizon_days, grid)


def _results(
    scenario_id: int,
    lambda_train: float,
    lambda_test: float,
    named_outcomes: Sequence[Tuple[PolicyName, Sequence[FlightOutcome]]],
) -> List[ExperimentResult]:
    """Rows per policy; the first entry is the optimal reference."""
    _, reference = named_outcomes[0]
    reference_revenue = mean_revenue(reference)
    reference_lf = mean_load_factor(reference)
    rows = []
    for policy, outcomes in named_outcomes:
        revenue = mean_revenue(outcomes)
        lf = mean_load_factor(outcomes)
        if policy == PolicyName.OPTIMAL:
            gap, lf_gap = 0.0, 0.0
        elif reference_revenue == 0 and revenue == 0:
            gap, lf_gap = 0.0, load_factor_gap(lf, reference_lf)
        else:
            gap, lf_gap = revenue_gap(revenue, reference_revenue), load_factor_gap(lf, reference_lf)
        rows.append(
            ExperimentResult(
                scenario_id=scenario_id,
                lambda_train=lambda_train,
                lambda_test=lambda_test,
                policy=policy,
                mean_revenue=revenue,
                mean_load_factor=lf,
                revenue_gap_vs_optimal=gap,
                load_factor_gap_vs_optimal=lf_gap,
                total_arrivals=sum(o.n_arrivals for o in outcomes),
            )
        )
    return rows


def _write_matrices(
    out_dir: Optional[Path], scenario_id: int, matrices: Dict[PolicyName, BidPriceMatrix]
) -> None:
    if out_dir is None:
        return
    for policy, matrix in matrices.items():
        write_bid_matrix_csv(matrix, out_dir / f"bidprices_{scenario_id}_{policy.value}.csv")


def _write_outcomes(
    out_dir: Optional[Path],
    scenario_id: int,
    named_outcomes: Sequence[Tuple[PolicyName, Sequence[FlightOutcome]]],
) -> None:
    if out_dir is None:
        return
    path = out_dir / f"outcomes_{scenario_id}.csv"
    for position, (policy, outcomes) in enumerate(named_outcomes):
        write_outcomes_csv(outcomes, scenario_id, policy, path, append=position > 0)


def _baseline_scenario(
    config: BaselineConfig, scenario_id: int, out_dir: Optional[Path]
) -> List[ExperimentResult]:
    rng = make_rng(config.master_seed, scenario_id, 0)
    lam = float(rng.uniform(*config.lambda_range))
    scenario = _scenario(config, lam)
    _, optimal = compute_value_and_bid(scenario, config.dt)

    streams = generate_streams(
        scenario, config.n_flights, derive_seed(config.master_seed, scenario_id, 1)
    )
    (optimal_outcomes,) = replay(streams, [_policy(config, optimal, PolicyName.OPTIMAL)])
    data_driven = _train_data_driven(config, scenario_id, optimal_outcomes, out_dir)
    (dd_outcomes,) = replay(streams, [_policy(config, data_driven, PolicyName.DATA_DRIVEN)])

    _write_matrices(
        out_dir, scenario_id, {PolicyName.OPTIMAL: optimal, PolicyName.DATA_DRIVEN: data_driven}
    )
    named_outcomes = [(PolicyName.OPTIMAL, optimal_outcomes), (PolicyName.DATA_DRIVEN, dd_outcomes)]
    _write_outcomes(out_dir, scenario_id, named_outcomes)
    return _results(scenario_id, lam, lam, named_outcomes)


def _robustness_scenario(
    config: RobustnessConfig, scenario_id: int, out_dir: Optional[Path]
) -> List[ExperimentResult]:
    rng = make_rng(config.master_seed, scenario_id, 0)
    lambda_train = float(rng.uniform(*config.lambda_train_range))
    lambda_test = float(rng.uniform(*config.lambda_test_range))

    train_scenario = _scenario(config, lambda_train)
    _, misspecified = compute_value_and_bid(train_scenario, config.dt)
    training_streams = generate_streams(
        train_scenario, config.n_flights, derive_seed(config.master_seed, scenario_id, 1)
    )
    (training_outcomes,) = replay(
        training_streams, [_policy(config, misspecified, PolicyName.MISSPECIFIED_DP)]
    )
    data_driven = _train_data_driven(config, scenario_id, training_outcomes, out_dir)

    test_scenario = _scenario(config, lambda_test)
    _, optimal = compute_value_and_bid(test_scenario, config.dt)
    test_streams = generate_streams(
        test_scenario, config.n_flights, derive_seed(config.master_seed, scenario_id, 2)
    )
    matrices = {
        PolicyName.OPTIMAL: optimal,
        PolicyName.DATA_DRIVEN: data_driven,
        PolicyName.MISSPECIFIED_DP: misspecified,
    }
    outcomes = replay(test_streams, [_policy(config, m, name) for name, m in matrices.items()])
    named_outcomes = list(zip(matrices, outcomes))
    _write_matrices(out_dir, scenario_id, matrices)
    _write_outcomes(out_dir, scenario_id, named_outcomes)
    return _results(scenario_id, lambda_train, lambda_test, named_outcomes)


def _run_scenario(
    config: ExperimentConfig, scenario_id: int, out_dir: Optional[Path]
) -> ScenarioOutput:
    started = time.perf_counter()
    runner = _robustness_scenario if isinstance(config, RobustnessConfig) else _baseline_scenario
    try:
        rows = runner(config, scenario_id, out_dir)
    except Exception as e:
        logger.warning("scenario %d failed: %s: %s", scenario_id, type(e).__name__, e)
        return [], ScenarioFailure(scenario_id=scenario_id, error=f"{type(e).__name__}: {e}")
    logger.info(
        "scenario %d lambda_train=%.4f lambda_test=%.4f done in %.1fs; revenue gaps %s",
        scenario_id,
        rows[0].lambda_train,
        rows[0].lambda_test,
        time.perf_counter() - started,
        ", ".join(f"{r.policy.value}={r.revenue_gap_vs_optimal:+.4%}" for r in rows[1:]),
    )
    return rows, None


def _run(config: ExperimentConfig, out_dir: Optional[Union[str, Path]]) -> ExperimentRun:
    artifacts_dir = None
    if out_dir is not None and config.write_artifacts:
        artifacts_dir = Path(out_dir)
        artifacts_dir.mkdir(parents=True, exist_ok=True)

    outputs: Dict[int, ScenarioOutput] = {}
    if config.workers == 1:
        for i in range(config.n_scenarios):
            outputs[i] = _run_scenario(config, i, artifacts_dir)
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            futures = {
                executor.submit(_run_scenario, config, i, artifacts_dir): i
                for i in range(config.n_scenarios)
            }
            for future in as_completed(futures):
                i = futures[future]
                try:
                    outputs[i] = future.result()
                except Exception as e:
                    logger.warning("scenario %d worker crashed: %s", i, e)
                    outputs[i] = ([], ScenarioFailure(scenario_id=i, error=f"{type(e).__name__}: {e}"))

    run = ExperimentRun()
    for i in sorted(outputs):
        rows, failure = outputs[i]
        run.results.extend(rows)
        if failure is not None:
            run.failures.append(failure)
    logger.info(
        "%d/%d scenarios succeeded", config.n_scenarios - len(run.failures), config.n_scenarios
    )
    return run


def run_baseline(
    config: BaselineConfig, out_dir: Optional[Union[str, Path]] = None
) -> ExperimentRun:
    """
    Data-driven vs optimal bid prices when the training and test demand agree.

    For each scenario: draw ``lambda`` from ``lambda_range``, solve the DP,
    sell ``n_flights`` flights with the optimal policy, train the estimator on
    the resulting bookings and sell the *same* arrival streams again with the
    expanded data-driven matrix.

    .. code-block:: python

        from databid.config import BaselineConfig
        from databid.experiments import run_baseline, summarize

        run = run_baseline(BaselineConfig(n_scenarios=5), out_dir="out")
        summarize(run.results, group_by="lambda")
    """
    return _run(config, out_dir)


def run_robustness(
    config: RobustnessConfig, out_dir: Optional[Union[str, Path]] = None
) -> ExperimentRun:
    """
    Data-driven vs misspecified-DP bid prices when test demand differs.

    Both policies are built from ``lambda_train`` data; the optimal reference
    and the shared test streams use an independently drawn ``lambda_test``.
    """
    return _run(config, out_dir)


def results_frame(results: Sequence[ExperimentResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (
                r.scenario_id,
                r.lambda_train,
                r.lambda_test,
                r.ratio,
                r.policy.value,
                r.mean_revenue,
                r.mean_load_factor,
                r.revenue_gap_vs_optimal,
                r.load_factor_gap_vs_optimal,
                r.total_arrivals,
            )
            for r in results
        ],
        columns=RESULT_COLUMNS,
    )


def write_results_csv(results: Sequence[ExperimentResult], path: Union[str, Path]) -> None:
    results_frame(results).to_csv(path, index=False)


def read_results_csv(path: Union[str, Path]) -> List[ExperimentResult]:
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise InvalidInputError(f"{path}: missing result column(s) {missing}")
    return [
        ExperimentResult(
            scenario_id=int(row.scenario_id),
            lambda_train=float(row.lambda_train),
            lambda_test=float(row.lambda_test),
            policy=PolicyName(row.policy),
            mean_revenue=float(row.mean_revenue),
            mean_load_factor=float(row.mean_load_factor),
            revenue_gap_vs_optimal=float(row.revenue_gap_vs_optimal),
            load_factor_gap_vs_optimal=float(row.load_factor_gap_vs_optimal),
            total_arrivals=int(row.total_arrivals),
        )
        for row in frame.itertuples(index=False)
    ]


def write_failures_csv(failures: Sequence[ScenarioFailure], path: Union[str, Path]) -> None:
    pd.DataFrame(
        [(f.scenario_id, f.error) for f in failures], columns=FAILURE_COLUMNS
    ).to_csv(path, index=False)


def summarize(
    results: Sequence[ExperimentResult], group_by: Literal["lambda", "ratio"] = "lambda"
) -> pd.DataFrame:
    """
    Per bucket and policy: scenario count, mean revenue and load factor, and
    mean/min/max of both gaps.

    Buckets are ``lambda_test`` (``group_by="lambda"``) or
    ``lambda_test / lambda_train`` (``group_by="ratio"``) rounded to one
    decimal. When a bucket holds both data-driven and misspecified-DP rows,
    ``revenue_ratio`` (total revenue) and ``load_factor_ratio`` (average load
    factor) of data-driven over misspecified-DP are added to its rows.
    """
    if not results:
        raise InvalidInputError("no results to summarize")
    if group_by not in ("lambda", "ratio"):
        raise InvalidInputError(f"group_by must be 'lambda' or 'ratio', got {group_by!r}")
    frame = results_frame(results)
    source = "lambda_test" if group_by == "lambda" else "ratio"
    frame["bucket"] = frame[source].round(1)

    summary = (
        frame.groupby(["bucket", "policy"], sort=True)
        .agg(
            n_scenarios=("scenario_id", "count"),
            mean_revenue=("mean_revenue", "mean"),
            mean_load_factor=("mean_load_factor", "mean"),
            revenue_gap_mean=("revenue_gap_vs_optimal", "mean"),
            revenue_gap_min=("revenue_gap_vs_optimal", "min"),
            revenue_gap_max=("revenue_gap_vs_optimal", "max"),
            load_factor_gap_mean=("load_factor_gap_vs_optimal", "mean"),
            load_factor_gap_min=("load_factor_gap_vs_optimal", "min"),
            load_factor_gap_max=("load_factor_gap_vs_optimal", "max"),
        )
        .reset_index()
    )

    per_policy = frame.groupby(["bucket", "policy"]).agg(
        total_revenue=("mean_revenue", "sum"), average_lf=("mean_load_factor", "mean")
    )
    policies = set(frame["policy"])
    if {PolicyName.DATA_DRIVEN.value, PolicyName.MISSPECIFIED_DP.value} <= policies:
        wide = per_policy.unstack("policy")
        dd, mis = PolicyName.DATA_DRIVEN.value, PolicyName.MISSPECIFIED_DP.value
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = pd.DataFrame(
                {
                    "revenue_ratio": wide[("total_revenue", dd)] / wide[("total_revenue", mis)],
                    "load_factor_ratio": wide[("average_lf", dd)] / wide[("average_lf", mis)],
                }
            ).reset_index()
        summary = summary.merge(ratios, on="bucket", how="left")
    return summary.rename(columns={"bucket": group_by})
