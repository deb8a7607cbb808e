import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import databid.estimator as estimator_module
from databid._utils import make_rng
from databid.config import EstimatorConfig
from databid.dp_optimal import BidOrigin
from databid.estimator import (
    EstimatorKind,
    expand_to_daily,
    fit,
    fit_simple_average,
    load_estimator,
    predict_bid,
    predict_grid,
    save_estimator,
)
from databid.exceptions import BidRangeError, EstimatorError, InvalidInputError, InvalidParameterError
from databid.observation_builder import DcpGrid, ObservationSet, assemble_training_set, build_dcp_grid
from tests._utils import group_by_mean
from tests.constant import EXAMPLE_CAPACITY, EXAMPLE_DAYS, EXAMPLE_GRID, EXAMPLE_PRICES

FAST_CONFIG = EstimatorConfig(
    hidden_layer_sizes=[64, 32],
    learning_rate=0.01,
    regularization_rate=0.0,
    batch_size=32,
    early_stopping_patience=50,
    max_epochs=2000,
    seed=1,
)


def _constant_observations(value: float, n_flights: int = 20) -> ObservationSet:
    grid = DcpGrid((2, 1, 0))
    capacity = 5
    rows = n_flights * capacity * len(grid)
    return ObservationSet(
        flight_ids=tuple(range(n_flights)),
        capacity_index=np.tile(np.arange(1, capacity + 1), n_flights * len(grid)),
        dcp=np.tile(np.repeat(np.asarray(grid.boundaries), capacity), n_flights),
        target=np.full(rows, value),
        capacity=capacity,
        grid=grid,
    )


def _example_observations() -> ObservationSet:
    flights = list(zip(EXAMPLE_PRICES, EXAMPLE_DAYS))
    return assemble_training_set(flights, EXAMPLE_CAPACITY, DcpGrid(EXAMPLE_GRID))


def _random_observations(seed: int, n_flights: int, capacity: int, horizon: int, n_dcps: int):
    rng = make_rng(seed)
    flights = []
    for _ in range(n_flights):
        n = int(rng.integers(0, capacity + 3))
        flights.append(
            (rng.uniform(50, 400, size=n).round(2).tolist(), rng.integers(0, horizon, size=n).tolist())
        )
    return assemble_training_set(flights, capacity, build_dcp_grid(horizon, n_dcps))


def test_simple_average_example():
    flights = [(EXAMPLE_PRICES[0], [0] * 3), (EXAMPLE_PRICES[1], [0] * 4)]
    observations = assemble_training_set(flights, EXAMPLE_CAPACITY, DcpGrid((0,)))
    model = fit_simple_average(observations)
    assert model.kind == EstimatorKind.SIMPLE_AVERAGE
    assert [predict_bid(model, x, 0) for x in range(1, 6)] == [90, 80, 70, 35, 0]


def test_simple_average_single_flight():
    observations = assemble_training_set([(EXAMPLE_PRICES[0], EXAMPLE_DAYS[0])], 5, DcpGrid(EXAMPLE_GRID))
    model = fit_simple_average(observations)
    assert np.array_equal(predict_grid(model, 5, EXAMPLE_GRID), observations.flight_block(0))


@pytest.mark.parametrize("seed", range(5))
def test_simple_average_matches_group_by_mean(seed):
    observations = _random_observations(seed, n_flights=30, capacity=6, horizon=20, n_dcps=4)
    model = fit_simple_average(observations)
    oracle = group_by_mean(observations)
    for (x, d), expected in oracle.items():
        assert predict_bid(model, x, d) == expected


def test_simple_average_unknown_cell():
    model = fit_simple_average(_example_observations())
    with pytest.raises(BidRangeError):
        predict_bid(model, 1, 7)
    with pytest.raises(BidRangeError):
        predict_bid(model, 0, 2)
    with pytest.raises(BidRangeError):
        predict_bid(model, 6, 2)


def test_empty_observations():
    empty = assemble_training_set([], 5, DcpGrid((1, 0)))
    with pytest.raises(InvalidInputError):
        fit(empty)
    with pytest.raises(InvalidInputError):
        fit_simple_average(empty)


def test_fit_recovers_constant():
    model = fit(_constant_observations(50.0), FAST_CONFIG)
    predictions = predict_grid(model, 5, (2, 1, 0))
    assert np.all(np.abs(predictions - 50.0) <= 0.5)


def test_fit_all_zero_targets():
    model = fit(_constant_observations(0.0), FAST_CONFIG)
    predictions = predict_grid(model, 5, (2, 1, 0))
    assert np.all(predictions >= 0)
    assert np.all(predictions <= 0.01 * 90)


def test_fit_example_fixture():
    model = fit(_example_observations(), FAST_CONFIG)
    assert abs(predict_bid(model, 1, 2) - 90.0) <= 10.0
    # two flights leave no validation flight; training loss is monitored
    assert model.history.validation_flights == ()
    assert model.history.validation_loss == []


def test_fit_is_deterministic(tiny_estimator_config):
    observations = _random_observations(3, n_flights=20, capacity=5, horizon=10, n_dcps=5)
    first = fit(observations, tiny_estimator_config)
    second = fit(observations, tiny_estimator_config)
    probe_x = np.arange(1, 6).repeat(5)
    probe_d = np.tile(np.asarray(observations.grid.boundaries), 5)
    assert np.array_equal(
        estimator_module.predict_many(first, probe_x, probe_d),
        estimator_module.predict_many(second, probe_x, probe_d),
    )


def test_validation_split_is_flight_disjoint(tiny_estimator_config):
    observations = _random_observations(4, n_flights=23, capacity=4, horizon=12, n_dcps=3)
    model = fit(observations, tiny_estimator_config)
    training = set(model.history.training_flights)
    validation = set(model.history.validation_flights)
    assert not training & validation
    assert training | validation == set(observations.flight_ids)
    assert len(validation) == math.floor(0.2 * 23)
    assert len(model.history.validation_loss) == model.history.stopped_epoch
    assert 1 <= model.history.best_epoch <= model.history.stopped_epoch


def test_early_stopping_restores_best_epoch(tiny_estimator_config):
    config = tiny_estimator_config.model_copy(update={"max_epochs": 200, "early_stopping_patience": 2})
    observations = _random_observations(5, n_flights=20, capacity=4, horizon=10, n_dcps=2)
    model = fit(observations, config)
    history = model.history
    assert history.stopped_epoch <= config.max_epochs
    best = min(history.validation_loss)
    assert history.validation_loss[history.best_epoch - 1] == best
    if history.stopped_epoch < config.max_epochs:
        assert history.stopped_epoch - history.best_epoch == config.early_stopping_patience


def test_diverging_training_raises(monkeypatch, tiny_estimator_config):
    monkeypatch.setattr(estimator_module, "_loss", lambda *args: float("nan"))
    observations = _random_observations(6, n_flights=10, capacity=3, horizon=6, n_dcps=2)
    with pytest.raises(EstimatorError):
        fit(observations, tiny_estimator_config)


@pytest.mark.parametrize("activation", ["relu", "softplus"])
def test_predictions_are_nonnegative(activation, tiny_estimator_config):
    config = tiny_estimator_config.model_copy(update={"output_activation": activation})
    observations = _random_observations(7, n_flights=15, capacity=8, horizon=30, n_dcps=3)
    model = fit(observations, config)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 8), st.integers(-50, 400))
    def check(x, d):
        assert predict_bid(model, x, d) >= 0

    check()


def test_neural_out_of_range_capacity(tiny_estimator_config):
    model = fit(_constant_observations(10.0, n_flights=5), tiny_estimator_config)
    with pytest.raises(BidRangeError):
        predict_bid(model, 0, 1)
    with pytest.raises(BidRangeError):
        predict_bid(model, 6, 1)


def test_expand_constant_model():
    model = fit_simple_average(_constant_observations(42.0, n_flights=2))
    matrix = expand_to_daily(model, 5, 6, DcpGrid((2, 1, 0)))
    assert matrix.origin == BidOrigin.DATA_DRIVEN
    assert matrix.values.shape == (5, 6)
    assert np.all(matrix.values == 42.0)


def test_expand_interpolates_and_holds_endpoints():
    observations = ObservationSet(
        flight_ids=("a",),
        capacity_index=np.array([1, 1]),
        dcp=np.array([10, 0]),
        target=np.array([0.0, 10.0]),
        capacity=1,
        grid=DcpGrid((10, 0)),
    )
    model = fit_simple_average(observations)
    matrix = expand_to_daily(model, 1, 15, observations.grid)
    assert matrix.values[0, 5] == 5.0
    assert matrix.values[0, 0] == 10.0
    assert matrix.values[0, 10] == 0.0
    assert np.all(matrix.values[0, 11:] == 0.0)


def test_expand_every_day_grid():
    observations = _random_observations(8, n_flights=10, capacity=4, horizon=6, n_dcps=6)
    model = fit_simple_average(observations)
    matrix = expand_to_daily(model, 4, 6, observations.grid)
    raw = predict_grid(model, 4, observations.grid.boundaries)
    assert np.array_equal(matrix.values, raw[:, ::-1])


def test_expand_stays_within_bracketing_predictions():
    observations = _random_observations(9, n_flights=25, capacity=5, horizon=40, n_dcps=4)
    model = fit_simple_average(observations)
    grid = observations.grid
    matrix = expand_to_daily(model, 5, 40, grid)
    raw = predict_grid(model, 5, grid.boundaries)
    for j in range(len(grid) - 1):
        upper, lower = grid.boundaries[j], grid.boundaries[j + 1]
        for day in range(lower, upper + 1):
            low = np.minimum(raw[:, j], raw[:, j + 1])
            high = np.maximum(raw[:, j], raw[:, j + 1])
            assert np.all(matrix.values[:, day] >= low)
            assert np.all(matrix.values[:, day] <= high)


def test_expand_grid_outside_horizon():
    model = fit_simple_average(_constant_observations(1.0, n_flights=1))
    with pytest.raises(InvalidParameterError):
        expand_to_daily(model, 5, 2, DcpGrid((2, 1, 0)))


@pytest.mark.parametrize("kind", ["neural", "simple_average"])
def test_save_and_load(tmp_path, kind, tiny_estimator_config):
    observations = _random_observations(10, n_flights=12, capacity=4, horizon=8, n_dcps=4)
    if kind == "neural":
        model = fit(observations, tiny_estimator_config)
    else:
        model = fit_simple_average(observations)
    path = tmp_path / "model.npz"
    save_estimator(model, path)
    loaded = load_estimator(path)

    assert loaded.kind == model.kind
    assert loaded.config == model.config
    assert loaded.dcps == model.dcps
    assert set(loaded.parameters) == set(model.parameters)
    for key, value in model.parameters.items():
        assert np.array_equal(loaded.parameters[key], value, equal_nan=True)
    assert np.array_equal(
        predict_grid(loaded, 4, observations.grid.boundaries),
        predict_grid(model, 4, observations.grid.boundaries),
    )


def test_load_rejects_unknown_version(tmp_path):
    path = tmp_path / "model.npz"
    np.savez(path, format_version=np.asarray(99))
    with pytest.raises(InvalidInputError):
        load_estimator(path)
