"""Experiment configuration models and YAML loading."""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError

CONFIG_MODEL_CONFIG = ConfigDict(extra="forbid", frozen=True)

T = TypeVar("T", bound=BaseModel)


class EstimatorConfig(BaseModel):
    """Feedforward regressor hyperparameters; defaults are the tuned selection."""

    model_config = CONFIG_MODEL_CONFIG

    hidden_layer_sizes: List[int] = Field(default_factory=lambda: [512, 8, 32])
    batch_size: int = Field(default=128, gt=0)
    learning_rate: float = Field(default=0.001, gt=0)
    regularization_rate: float = Field(default=0.001, ge=0)
    output_activation: Literal["relu", "softplus"] = "softplus"
    early_stopping_patience: int = Field(default=5, gt=0)
    max_epochs: int = Field(default=500, gt=0)
    validation_fraction: float = Field(default=0.2, gt=0, lt=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("hidden_layer_sizes")
    @classmethod
    def _positive_layers(cls, sizes: List[int]) -> List[int]:
        if not sizes or any(size <= 0 for size in sizes):
            raise ValueError(f"hidden_layer_sizes must be non-empty and positive, got {sizes}")
        return sizes


def _check_range(name: str, bounds: Tuple[float, float], strictly_positive: bool) -> None:
    low, high = bounds
    if low > high:
        raise ValueError(f"{name}: low {low} > high {high}")
    if low < 0 or (strictly_positive and low <= 0):
        raise ValueError(f"{name}: bounds must be {'> 0' if strictly_positive else '>= 0'}")


class _ExperimentConfig(BaseModel):
    model_config = CONFIG_MODEL_CONFIG

    n_scenarios: int = Field(default=20, ge=1)
    n_flights: int = Field(default=100, ge=1)
    capacity: int = Field(default=50, ge=1)
    horizon_days: int = Field(default=100, ge=1)
    n_dcps: int = Field(default=10, ge=1)
    alpha: float = Field(default=100.0, gt=0)
    p0: float = Field(default=50.0, ge=0)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    dt: float = Field(default=0.01, gt=0)
    workers: int = Field(default=1, ge=1)
    bid_day_offset: int = Field(default=0, ge=0)
    write_artifacts: bool = True

    def _max_lambda(self) -> float:
        # upper bound of every lambda range the experiment draws from
        return max(
            (getattr(self, name)[1] for name in type(self).model_fields if name.endswith("_range")),
            default=0.0,
        )

    @model_validator(mode="after")
    def _check_shape(self):
        if self.n_dcps > self.horizon_days:
            raise ValueError(
                f"n_dcps ({self.n_dcps}) cannot exceed horizon_days ({self.horizon_days})"
            )
        if self._max_lambda() * self.dt > 0.1:
            raise ValueError(
                f"dt={self.dt} is too coarse for lambda up to {self._max_lambda()} "
                "(lambda * dt must stay <= 0.1)"
            )
        return self


class BaselineConfig(_ExperimentConfig):
    lambda_range: Tuple[float, float] = (2.4, 3.6)

    @field_validator("lambda_range")
    @classmethod
    def _valid_range(cls, bounds: Tuple[float, float]) -> Tuple[float, float]:
        _check_range("lambda_range", bounds, strictly_positive=False)
        return bounds


class RobustnessConfig(_ExperimentConfig):
    n_scenarios: int = Field(default=50, ge=1)
    lambda_train_range: Tuple[float, float] = (2.4, 3.6)
    lambda_test_range: Tuple[float, float] = (1.8, 3.6)

    @field_validator("lambda_train_range", "lambda_test_range")
    @classmethod
    def _valid_range(cls, bounds: Tuple[float, float], info) -> Tuple[float, float]:
        _check_range(info.field_name, bounds, strictly_positive=True)
        return bounds


FULL_SCALE: Dict[Type[BaseModel], Dict[str, Any]] = {
    BaselineConfig: {
        "n_scenarios": 100,
        "n_flights": 300,
        "capacity": 100,
        "horizon_days": 300,
        "n_dcps": 10,
        "lambda_range": (2.4, 3.6),
    },
    RobustnessConfig: {
        "n_scenarios": 500,
        "n_flights": 500,
        "capacity": 100,
        "horizon_days": 300,
        "n_dcps": 10,
        "lambda_train_range": (2.4, 3.6),
        "lambda_test_range": (1.8, 3.6),
    },
}


def _validate(kind: Type[T], data: Dict[str, Any], source: str) -> T:
    try:
        return kind.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid {kind.__name__} in {source}:\n{e}") from e


def _read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config file {path}: {e}") from e
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ConfigError(f"config file {path} must hold a key/value mapping")
    return loaded


def load_config(
    kind: Type[T],
    path: Optional[Union[str, Path]] = None,
    full_scale: bool = False,
    **overrides: Any,
) -> T:
    """
    Build a config of type ``kind`` from defaults, the full-scale preset, an
    optional YAML file and keyword overrides, in that order of precedence.

    .. code-block:: python

        from databid.config import BaselineConfig, load_config

        config = load_config(BaselineConfig, "baseline.yaml", master_seed=7)
    """
    data: Dict[str, Any] = {}
    if full_scale:
        data.update(FULL_SCALE[kind])
    source = "defaults"
    if path is not None:
        source = str(path)
        data.update(_read_yaml(path))
    data.update({key: value for key, value in overrides.items() if value is not None})
    return _validate(kind, data, source)


def load_estimator_config(
    path: Optional[Union[str, Path]] = None, **overrides: Any
) -> EstimatorConfig:
    """
    Build an :class:`EstimatorConfig` from an optional YAML file.

    The file is either a bare estimator mapping or an experiment config, in
    which case only its ``estimator:`` section is used.
    """
    data: Dict[str, Any] = {}
    source = "defaults"
    if path is not None:
        source = str(path)
        data = _read_yaml(path)
        if "estimator" in data:
            data = data["estimator"] or {}
            if not isinstance(data, dict):
                raise ConfigError(f"config file {path}: 'estimator' must be a key/value mapping")
    data = {**data, **{key: value for key, value in overrides.items() if value is not None}}
    return _validate(EstimatorConfig, data, source)
