"""Bid-price estimators fitted on observation sets.

Two estimators map ``(remaining capacity, DCP)`` to a bid price:

* ``neural``: a fully connected feedforward regressor (ReLU hidden layers,
  softplus or ReLU output, squared error + L2, Adam, early stopping on a
  flight-disjoint validation split), written directly against numpy.
* ``simple_average``: the per-cell mean of the observations.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ._types import FloatArray
from ._utils import make_rng
from .config import EstimatorConfig
from .dp_optimal import BidOrigin, BidPriceMatrix
from .exceptions import BidRangeError, EstimatorError, InvalidInputError, InvalidParameterError
from .observation_builder import DcpGrid, ObservationSet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
ADAM_BETA_1 = 0.9
ADAM_BETA_2 = 0.999
ADAM_EPSILON = 1e-7


class EstimatorKind(str, Enum):
    NEURAL = "neural"
    SIMPLE_AVERAGE = "simple_average"


@dataclass(frozen=True, eq=False)
class FeatureScaling:
    """Per-feature affine map ``(x - mean) / scale`` fitted on training rows."""

    mean: FloatArray
    scale: FloatArray

    @classmethod
    def fit(cls, features: FloatArray) -> "FeatureScaling":
        mean = features.mean(axis=0)
        scale = features.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    def apply(self, features: FloatArray) -> FloatArray:
        return (features - self.mean) / self.scale


@dataclass
class TrainingHistory:
    train_loss: List[float] = field(default_factory=list)
    validation_loss: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    training_flights: Tuple = ()
    validation_flights: Tuple = ()


@dataclass(frozen=True, eq=False)
class FittedEstimator:
    """
    .. _fitted_estimator_class: #databid.estimator.FittedEstimator
    .. |fitted_estimator_class| replace:: :py:class:`.~databid.estimator.FittedEstimator`

    Immutable after fitting; safe to share across threads for prediction.
    """

    kind: EstimatorKind
    capacity: int
    dcps: Tuple[int, ...]
    parameters: Dict[str, FloatArray]
    feature_scaling: Optional[FeatureScaling] = None
    target_scale: float = 1.0
    config: Optional[EstimatorConfig] = None
    history: Optional[TrainingHistory] = None

    def __post_init__(self) -> None:
        for array in self.parameters.values():
            array.setflags(write=False)

    @property
    def n_layers(self) -> int:
        return sum(1 for key in self.parameters if key.startswith("W"))


# -- network primitives -------------------------------------------------------


def _init_parameters(
    layer_sizes: Sequence[int], rng: np.random.Generator
) -> Dict[str, FloatArray]:
    parameters = {}
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        parameters[f"W{i}"] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        parameters[f"b{i}"] = np.zeros(fan_out, dtype=np.float64)
    return parameters


def _output(z: FloatArray, activation: str) -> FloatArray:
    if activation == "softplus":
        return np.logaddexp(0.0, z)
    return np.maximum(z, 0.0)


def _output_grad(z: FloatArray, activation: str) -> FloatArray:
    if activation == "softplus":
        return expit(z)
    return (z > 0).astype(np.float64)


def _forward(
    parameters: Dict[str, FloatArray], features: FloatArray, activation: str
) -> Tuple[FloatArray, List[FloatArray], List[FloatArray]]:
    n_layers = sum(1 for key in parameters if key.startswith("W"))
    inputs = [features]
    pre_activations = []
    a = features
    for i in range(n_layers):
        z = a @ parameters[f"W{i}"] + parameters[f"b{i}"]
        pre_activations.append(z)
        a = np.maximum(z, 0.0) if i < n_layers - 1 else _output(z, activation)
        inputs.append(a)
    return a[:, 0], inputs, pre_activations


def _l2_penalty(parameters: Dict[str, FloatArray], rate: float) -> float:
    if rate == 0:
        return 0.0
    return rate * sum(float(np.sum(w * w)) for k, w in parameters.items() if k.startswith("W"))


def _loss(
    parameters: Dict[str, FloatArray],
    features: FloatArray,
    targets: FloatArray,
    config: EstimatorConfig,
) -> float:
    prediction, _, _ = _forward(parameters, features, config.output_activation)
    return float(np.mean((prediction - targets) ** 2)) + _l2_penalty(
        parameters, config.regularization_rate
    )


def _gradients(
    parameters: Dict[str, FloatArray],
    features: FloatArray,
    targets: FloatArray,
    config: EstimatorConfig,
) -> Tuple[float, Dict[str, FloatArray]]:
    prediction, inputs, pre_activations = _forward(
        parameters, features, config.output_activation
    )
    n_layers = len(pre_activations)
    error = prediction - targets
    loss = float(np.mean(error**2)) + _l2_penalty(parameters, config.regularization_rate)

    grads: Dict[str, FloatArray] = {}
    delta = (2.0 / features.shape[0]) * error[:, None] * _output_grad(
        pre_activations[-1], config.output_activation
    )
    for i in reversed(range(n_layers)):
        grads[f"W{i}"] = inputs[i].T @ delta + 2.0 * config.regularization_rate * parameters[f"W{i}"]
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ parameters[f"W{i}"].T) * (pre_activations[i - 1] > 0)
    return loss, grads


class _Adam:
    def __init__(self, parameters: Dict[str, FloatArray], learning_rate: float) -> None:
        self.learning_rate = learning_rate
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in parameters.items()}
        self.v = {k: np.zeros_like(v) for k, v in parameters.items()}

    def update(self, parameters: Dict[str, FloatArray], grads: Dict[str, FloatArray]) -> None:
        self.step += 1
        correction = math.sqrt(1.0 - ADAM_BETA_2**self.step) / (1.0 - ADAM_BETA_1**self.step)
        rate = self.learning_rate * correction
        for key, grad in grads.items():
            self.m[key] = ADAM_BETA_1 * self.m[key] + (1.0 - ADAM_BETA_1) * grad
            self.v[key] = ADAM_BETA_2 * self.v[key] + (1.0 - ADAM_BETA_2) * grad * grad
            parameters[key] -= rate * self.m[key] / (np.sqrt(self.v[key]) + ADAM_EPSILON)


def _split_flights(
    n_flights: int, fraction: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Flight positions for training and validation; no flight is in both."""
    n_validation = int(math.floor(fraction * n_flights))
    permutation = rng.permutation(n_flights)
    validation = np.sort(permutation[:n_validation])
    training = np.sort(permutation[n_validation:])
    return training, validation


# -- public API ---------------------------------------------------------------


def fit(
    observations: ObservationSet, config: Optional[EstimatorConfig] = None
) -> FittedEstimator:
    """
    Train the feedforward bid-price regressor on ``observations``.

    The validation split is drawn over flights (departure dates), not rows.
    When the split leaves no validation flight (fewer than
    ``1 / validation_fraction`` flights) early stopping watches the training
    loss instead. The weights of the best monitored epoch are returned.

    .. code-block:: python

        from databid.config import EstimatorConfig
        from databid.estimator import fit, predict_bid

        model = fit(observations, EstimatorConfig(seed=7))
        predict_bid(model, remaining=10, dcp=29)
    """
    config = config or EstimatorConfig()
    if len(observations) == 0:
        raise InvalidInputError("cannot fit an estimator on empty observations")

    rng = make_rng(config.seed)
    per_flight = observations.capacity * len(observations.grid)
    row_flight = np.repeat(np.arange(observations.n_flights), per_flight)
    training_flights, validation_flights = _split_flights(
        observations.n_flights, config.validation_fraction, rng
    )
    train_rows = np.isin(row_flight, training_flights)
    validation_rows = np.isin(row_flight, validation_flights)

    features = observations.X.astype(np.float64)
    scaling = FeatureScaling.fit(features[train_rows])
    scaled = scaling.apply(features)
    target_scale = float(np.max(observations.target[train_rows], initial=0.0))
    if target_scale <= 0:
        target_scale = 1.0
    targets = observations.target / target_scale

    x_train, y_train = scaled[train_rows], targets[train_rows]
    x_val, y_val = scaled[validation_rows], targets[validation_rows]
    has_validation = x_val.shape[0] > 0

    layer_sizes = [features.shape[1], *config.hidden_layer_sizes, 1]
    parameters = _init_parameters(layer_sizes, rng)
    optimizer = _Adam(parameters, config.learning_rate)
    history = TrainingHistory(
        training_flights=tuple(observations.flight_ids[i] for i in training_flights),
        validation_flights=tuple(observations.flight_ids[i] for i in validation_flights),
    )

    best_loss = math.inf
    best_parameters = {k: v.copy() for k, v in parameters.items()}
    wait = 0
    n_train = x_train.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = _gradients(parameters, x_train[batch], y_train[batch], config)
            optimizer.update(parameters, grads)
            batch_losses.append(loss * batch.shape[0])
        train_loss = sum(batch_losses) / n_train
        history.train_loss.append(train_loss)
        monitored = train_loss
        if has_validation:
            monitored = _loss(parameters, x_val, y_val, config)
            history.validation_loss.append(monitored)
        if not math.isfinite(monitored):
            raise EstimatorError(f"training diverged at epoch {epoch} (loss={monitored})")
        logger.debug("epoch %d train_loss=%.6g monitored=%.6g", epoch, train_loss, monitored)

        history.stopped_epoch = epoch
        if monitored < best_loss:
            best_loss = monitored
            best_parameters = {k: v.copy() for k, v in parameters.items()}
            history.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= config.early_stopping_patience:
                break

    logger.info(
        "fitted neural estimator on %d rows (%d/%d flights) in %d epochs, best epoch %d, loss %.6g",
        n_train,
        len(training_flights),
        observations.n_flights,
        history.stopped_epoch,
        history.best_epoch,
        best_loss,
    )
    return FittedEstimator(
        kind=EstimatorKind.NEURAL,
        capacity=observations.capacity,
        dcps=observations.grid.boundaries,
        parameters=best_parameters,
        feature_scaling=scaling,
        target_scale=target_scale,
        config=config,
        history=history,
    )


def fit_simple_average(observations: ObservationSet) -> FittedEstimator:
    """Per-cell arithmetic mean of the targets over all flights."""
    if len(observations) == 0:
        raise InvalidInputError("cannot fit an estimator on empty observations")
    dcps = observations.grid.boundaries
    dcp_position = {d: j for j, d in enumerate(dcps)}
    rows = observations.capacity_index - 1
    cols = np.asarray([dcp_position[int(d)] for d in observations.dcp], dtype=np.int64)
    sums = np.zeros((observations.capacity, len(dcps)), dtype=np.float64)
    counts = np.zeros_like(sums)
    np.add.at(sums, (rows, cols), observations.target)
    np.add.at(counts, (rows, cols), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, np.nan)
    return FittedEstimator(
        kind=EstimatorKind.SIMPLE_AVERAGE,
        capacity=observations.capacity,
        dcps=dcps,
        parameters={"means": means},
    )


def _check_capacity(model: FittedEstimator, remaining: np.ndarray) -> None:
    if remaining.size and (remaining.min() < 1 or remaining.max() > model.capacity):
        raise BidRangeError(
            f"remaining capacity outside 1..{model.capacity}: "
            f"{remaining[(remaining < 1) | (remaining > model.capacity)][:5].tolist()}"
        )


def predict_many(
    model: FittedEstimator, remaining: Sequence[int], dcp: Sequence[int]
) -> FloatArray:
    """Vectorised :py:func:`predict_bid`."""
    remaining_arr = np.asarray(remaining, dtype=np.int64)
    dcp_arr = np.asarray(dcp, dtype=np.int64)
    _check_capacity(model, remaining_arr)

    if model.kind == EstimatorKind.SIMPLE_AVERAGE:
        dcp_position = {d: j for j, d in enumerate(model.dcps)}
        try:
            cols = np.asarray([dcp_position[int(d)] for d in dcp_arr], dtype=np.int64)
        except KeyError as e:
            raise BidRangeError(f"dcp {e.args[0]} was not in the training data") from e
        values = model.parameters["means"][remaining_arr - 1, cols]
        if np.any(np.isnan(values)):
            raise BidRangeError("query at a (capacity, dcp) cell absent from training")
        return values

    features = np.column_stack([remaining_arr, dcp_arr]).astype(np.float64)
    scaled = model.feature_scaling.apply(features)
    prediction, _, _ = _forward(model.parameters, scaled, model.config.output_activation)
    return np.maximum(prediction * model.target_scale, 0.0)


def predict_bid(model: FittedEstimator, remaining: int, dcp: int) -> float:
    """Nonnegative bid-price prediction with ``remaining`` seats at DCP ``dcp``."""
    return float(predict_many(model, [remaining], [dcp])[0])


def predict_grid(model: FittedEstimator, capacity: int, dcps: Sequence[int]) -> FloatArray:
    """Predictions for every ``(x, d)``, shape ``(capacity, len(dcps))``."""
    remaining = np.tile(np.arange(1, capacity + 1), len(dcps))
    dcp_values = np.repeat(np.asarray(dcps, dtype=np.int64), capacity)
    return predict_many(model, remaining, dcp_values).reshape(len(dcps), capacity).T


def expand_to_daily(
    model: FittedEstimator, capacity: int, horizon_days: int, grid: DcpGrid
) -> BidPriceMatrix:
    """
    Daily bid-price matrix from DCP-level predictions.

    Days between two DCPs are linearly interpolated; days above ``d_1`` hold the
    ``d_1`` prediction and days below ``d_|D|`` hold the ``d_|D|`` prediction.
    """
    if grid.boundaries[0] >= horizon_days or grid.boundaries[-1] < 0:
        raise InvalidParameterError(
            f"DCP grid {grid.boundaries} is not within [0, {horizon_days})"
        )
    at_dcps = predict_grid(model, capacity, grid.boundaries)
    ascending_days = np.asarray(grid.boundaries[::-1], dtype=np.float64)
    days = np.arange(horizon_days, dtype=np.float64)
    values = np.empty((capacity, horizon_days), dtype=np.float64)
    for x in range(capacity):
        values[x] = np.interp(days, ascending_days, at_dcps[x, ::-1])
    return BidPriceMatrix(
        values=np.maximum(values, 0.0),
        capacity=capacity,
        horizon_days=horizon_days,
        origin=BidOrigin.DATA_DRIVEN,
    )


def save_estimator(model: FittedEstimator, path: Union[str, Path]) -> None:
    """Write ``model`` to an ``.npz`` container (float64 round-trips bit-exactly)."""
    payload = {
        "format_version": np.asarray(FORMAT_VERSION),
        "kind": np.asarray(model.kind.value),
        "capacity": np.asarray(model.capacity),
        "dcps": np.asarray(model.dcps, dtype=np.int64),
        "target_scale": np.asarray(model.target_scale, dtype=np.float64),
        "config": np.asarray(model.config.model_dump_json() if model.config else ""),
    }
    if model.feature_scaling is not None:
        payload["scaling_mean"] = model.feature_scaling.mean
        payload["scaling_scale"] = model.feature_scaling.scale
    for key, array in model.parameters.items():
        payload[f"param_{key}"] = array
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_estimator(path: Union[str, Path]) -> FittedEstimator:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise InvalidInputError(
                f"{path}: unsupported estimator format version {version}"
            )
        config_json = str(data["config"])
        scaling = None
        if "scaling_mean" in data.files:
            scaling = FeatureScaling(
                mean=data["scaling_mean"].copy(), scale=data["scaling_scale"].copy()
            )
        return FittedEstimator(
            kind=EstimatorKind(str(data["kind"])),
            capacity=int(data["capacity"]),
            dcps=tuple(int(d) for d in data["dcps"]),
            parameters={
                key[len("param_") :]: data[key].copy()
                for key in data.files
                if key.startswith("param_")
            },
            feature_scaling=scaling,
            target_scale=float(data["target_scale"]),
            config=EstimatorConfig.model_validate(json.loads(config_json)) if config_json else None,
        )
