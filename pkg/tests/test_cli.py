import numpy as np
import pandas as pd
import pytest

import databid.experiments as experiments_module
from databid.cli import EXIT_CONFIG_ERROR, EXIT_FAILED_SCENARIOS, EXIT_OK, main
from databid.dp_optimal import read_bid_matrix_csv
from databid.exceptions import EstimatorError
from databid.experiments import RESULT_COLUMNS
from tests.constant import BOOKINGS, EMSR_TABLE

TINY_BASELINE = """\
n_scenarios: 2
n_flights: 10
capacity: 5
horizon_days: 8
n_dcps: 4
estimator:
  hidden_layer_sizes: [8]
  max_epochs: 5
"""

TINY_ROBUSTNESS = """\
n_scenarios: 2
n_flights: 10
capacity: 5
horizon_days: 8
n_dcps: 4
lambda_train_range: [2.4, 3.6]
lambda_test_range: [1.8, 3.6]
estimator:
  hidden_layer_sizes: [8]
  max_epochs: 5
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "baseline.yaml"
    path.write_text(TINY_BASELINE, encoding="utf-8")
    return path


@pytest.fixture
def bookings_csv(tmp_path):
    path = tmp_path / "bookings.csv"
    lines = ["flight_id,days_to_departure,price"]
    lines += [f"{flight},{days},{price}" for flight, days, price in BOOKINGS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_emsr_curve(tmp_path):
    assert main(["emsr-curve", "--out-dir", str(tmp_path), "--samples", "5,50"]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "emsr.csv")
    assert frame.columns.tolist() == ["seat", "emsr", "dd_5", "dd_50"]
    assert frame["seat"].tolist() == list(range(1, 11))
    assert np.allclose(frame["emsr"], EMSR_TABLE, atol=0.01)


def test_emsr_curve_bad_samples(tmp_path):
    assert main(["emsr-curve", "--out-dir", str(tmp_path), "--samples", "5,x"]) == EXIT_CONFIG_ERROR


def test_dp_solve(tmp_path, tiny_config):
    argv = ["dp-solve", "--config", str(tiny_config), "--lambda", "2.0", "--out-dir", str(tmp_path)]
    assert main(argv) == EXIT_OK
    matrix = read_bid_matrix_csv(tmp_path / "bidprices_optimal.csv")
    assert matrix.values.shape == (5, 8)
    assert np.all(matrix.values[:, 0] == 0.0)


def test_simulate_baseline(tmp_path, tiny_config):
    out_dir = tmp_path / "out"
    argv = ["simulate-baseline", "--config", str(tiny_config), "--seed", "4", "--out-dir", str(out_dir)]
    assert main(argv) == EXIT_OK
    results = pd.read_csv(out_dir / "results.csv")
    assert results.columns.tolist() == RESULT_COLUMNS
    assert results["policy"].tolist() == ["optimal", "data_driven"] * 2
    assert (out_dir / "summary.csv").exists()
    assert not (out_dir / "failures.csv").exists()
    assert (out_dir / "bidprices_0_data_driven.csv").exists()
    outcomes = pd.read_csv(out_dir / "outcomes_0.csv")
    assert outcomes["policy"].tolist() == ["optimal"] * 10 + ["data_driven"] * 10


def test_simulate_baseline_without_demand(tmp_path, tiny_config):
    path = tmp_path / "no_demand.yaml"
    path.write_text(tiny_config.read_text(encoding="utf-8") + "lambda_range: [0.0, 0.0]\n", encoding="utf-8")
    out_dir = tmp_path / "out"
    assert main(["simulate-baseline", "--config", str(path), "--out-dir", str(out_dir)]) == EXIT_OK
    results = pd.read_csv(out_dir / "results.csv")
    assert results["ratio"].isna().all()
    assert (results["revenue_gap_vs_optimal"] == 0.0).all()
    assert (out_dir / "summary.csv").exists()


def test_simulate_robustness_is_reproducible(tmp_path):
    path = tmp_path / "robustness.yaml"
    path.write_text(TINY_ROBUSTNESS, encoding="utf-8")
    runs = []
    for name in ("first", "second"):
        out_dir = tmp_path / name
        argv = ["simulate-robustness", "--config", str(path), "--seed", "3", "--out-dir", str(out_dir)]
        assert main(argv) == EXIT_OK
        runs.append(out_dir)

    first, second = runs
    assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes()
    results = pd.read_csv(first / "results.csv")
    assert results["policy"].tolist() == ["optimal", "data_driven", "misspecified_dp"] * 2
    assert (results.groupby("scenario_id")["total_arrivals"].nunique() == 1).all()
    assert (first / "summary.csv").exists()
    assert (first / "bidprices_1_misspecified_dp.csv").exists()


def test_simulate_with_unknown_config_key(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("n_scenario: 2\n", encoding="utf-8")
    argv = ["simulate-baseline", "--config", str(path), "--out-dir", str(tmp_path)]
    assert main(argv) == EXIT_CONFIG_ERROR


def test_simulate_with_failed_scenarios(tmp_path, tiny_config, monkeypatch):
    def broken_fit(*args, **kwargs):
        raise EstimatorError("training diverged")

    monkeypatch.setattr(experiments_module, "fit", broken_fit)
    argv = ["simulate-baseline", "--config", str(tiny_config), "--out-dir", str(tmp_path)]
    assert main(argv) == EXIT_FAILED_SCENARIOS
    failures = pd.read_csv(tmp_path / "failures.csv")
    assert failures["scenario_id"].tolist() == [0, 1]
    assert not (tmp_path / "summary.csv").exists()


def test_summarize(tmp_path, tiny_config):
    run_dir = tmp_path / "run"
    assert main(["simulate-baseline", "--config", str(tiny_config), "--out-dir", str(run_dir)]) == EXIT_OK
    out_dir = tmp_path / "summary"
    argv = ["summarize", str(run_dir / "results.csv"), "--group-by", "ratio", "--out-dir", str(out_dir)]
    assert main(argv) == EXIT_OK
    summary = pd.read_csv(out_dir / "summary.csv")
    assert "ratio" in summary.columns
    assert set(summary["ratio"]) == {1.0}


def test_summarize_missing_file(tmp_path):
    assert main(["summarize", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path)]) == EXIT_CONFIG_ERROR


def test_build_observations_and_train(tmp_path, bookings_csv):
    argv = [
        "build-observations",
        str(bookings_csv),
        "--capacity",
        "3",
        "--horizon-days",
        "50",
        "--n-dcps",
        "5",
        "--out-dir",
        str(tmp_path),
    ]
    assert main(argv) == EXIT_OK
    observations = pd.read_csv(tmp_path / "observations.csv")
    assert len(observations) == 3 * 3 * 5

    argv = [
        "train",
        str(tmp_path / "observations.csv"),
        "--estimator",
        "simple_average",
        "--horizon-days",
        "50",
        "--out-dir",
        str(tmp_path),
    ]
    assert main(argv) == EXIT_OK
    assert (tmp_path / "model.npz").exists()
    matrix = read_bid_matrix_csv(tmp_path / "bidprices_data_driven.csv")
    assert matrix.values.shape == (3, 50)
    assert np.all(matrix.values >= 0)


def test_build_observations_needs_a_source(tmp_path):
    argv = ["build-observations", "--capacity", "3", "--horizon-days", "5", "--out-dir", str(tmp_path)]
    assert main(argv) == EXIT_CONFIG_ERROR


def test_load_bookings_then_build_from_database(tmp_path, bookings_csv):
    dsn = f"sqlite:///{tmp_path / 'bookings.db'}"
    assert main(["load-bookings", str(bookings_csv), "--dsn", dsn, "--table", "history"]) == EXIT_OK

    from_csv, from_db = tmp_path / "csv", tmp_path / "db"
    common = ["--capacity", "3", "--horizon-days", "50", "--n-dcps", "5"]
    assert main(["build-observations", str(bookings_csv), *common, "--out-dir", str(from_csv)]) == EXIT_OK
    argv = ["build-observations", "--dsn", dsn, "--table", "history", *common, "--out-dir", str(from_db)]
    assert main(argv) == EXIT_OK
    assert (from_csv / "observations.csv").read_bytes() == (from_db / "observations.csv").read_bytes()


@pytest.fixture
def observations_csv(tmp_path, bookings_csv):
    argv = ["build-observations", str(bookings_csv), "--capacity", "3", "--horizon-days", "50"]
    assert main([*argv, "--n-dcps", "5", "--out-dir", str(tmp_path)]) == EXIT_OK
    return tmp_path / "observations.csv"


def test_train_with_capacity_below_observations(tmp_path, observations_csv):
    argv = ["train", str(observations_csv), "--estimator", "simple_average", "--capacity", "2"]
    assert main([*argv, "--out-dir", str(tmp_path / "model")]) == EXIT_CONFIG_ERROR
    assert not (tmp_path / "model" / "model.npz").exists()


def test_train_reads_estimator_section_of_experiment_config(tmp_path, observations_csv, tiny_config):
    out_dir = tmp_path / "model"
    argv = ["train", str(observations_csv), "--config", str(tiny_config), "--seed", "2"]
    assert main([*argv, "--out-dir", str(out_dir)]) == EXIT_OK
    matrix = read_bid_matrix_csv(out_dir / "bidprices_data_driven.csv")
    assert matrix.values.shape == (3, 50)
