"""Single-class expected marginal seat revenue and Littlewood's rule."""

import logging
import math
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.stats import norm

from ._types import FLIGHT_HISTORY
from ._utils import make_rng, require_finite
from .estimator import fit_simple_average, predict_grid
from .exceptions import InvalidParameterError
from .observation_builder import DcpGrid, assemble_training_set

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormalDemandClass:
    """High-fare class with normally distributed total demand."""

    fare: float
    mean: float
    std_dev: float

    def __post_init__(self) -> None:
        for name in ("fare", "mean", "std_dev"):
            require_finite(name, getattr(self, name))
        if self.fare < 0:
            raise InvalidParameterError(f"fare must be >= 0, got {self.fare}")
        if self.std_dev < 0:
            raise InvalidParameterError(f"std_dev must be >= 0, got {self.std_dev}")


def emsr_curve(demand_class: NormalDemandClass, capacity: int) -> List[float]:
    """
    ``fare * P(D > s)`` for ``s = 1..capacity``.

    .. code-block:: python

        emsr_curve(NormalDemandClass(fare=400.0, mean=3.0, std_dev=2.0), 3)
        # [336.54..., 276.58..., 200.0]
    """
    if capacity < 1:
        raise InvalidParameterError(f"capacity must be >= 1, got {capacity}")
    mean, std_dev = demand_class.mean, demand_class.std_dev
    if std_dev == 0:
        survival = [float(mean > seat) for seat in range(1, capacity + 1)]
    else:
        survival = [normal_sf((seat - mean) / std_dev) for seat in range(1, capacity + 1)]
    return [demand_class.fare * p for p in survival]


def littlewood_accept(
    lower_fare: float, demand_class: NormalDemandClass, remaining: int
) -> bool:
    """Sell at ``lower_fare`` iff it covers the EMSR of the ``remaining``-th seat."""
    if remaining < 1:
        raise InvalidParameterError(f"remaining must be >= 1, got {remaining}")
    return lower_fare >= emsr_curve(demand_class, remaining)[remaining - 1]


def sample_single_class_flights(
    demand_class: NormalDemandClass, n_flights: int, seed: int
) -> List[FLIGHT_HISTORY]:
    """
    Booking histories of ``n_flights`` unconstrained single-class flights.

    A flight's demand is a normal draw floored at zero; it sells
    ``floor(demand)`` seats at the fare, all recorded on day 0. Flooring keeps
    ``P(seats sold >= s) == P(D > s)`` for whole ``s``, so averaging the
    observations converges to :py:func:`emsr_curve`.
    """
    if n_flights < 1:
        raise InvalidParameterError(f"n_flights must be >= 1, got {n_flights}")
    rng = make_rng(seed)
    demand = np.maximum(rng.normal(demand_class.mean, demand_class.std_dev, size=n_flights), 0.0)
    seats_sold = np.floor(demand).astype(np.int64)
    return [([demand_class.fare] * int(n), [0] * int(n)) for n in seats_sold]


def data_driven_emsr(
    demand_class: NormalDemandClass, capacity: int, n_flights: int, seed: int
) -> List[float]:
    """Simple-average bid prices per seat from ``n_flights`` sampled flights."""
    flights = sample_single_class_flights(demand_class, n_flights, seed)
    grid = DcpGrid((0,))
    observations = assemble_training_set(flights, capacity, grid)
    model = fit_simple_average(observations)
    values = predict_grid(model, capacity, grid.boundaries)[:, 0]
    logger.debug(
        "data-driven EMSR from %d flights: max abs deviation %.4g",
        n_flights,
        float(np.max(np.abs(values - np.asarray(emsr_curve(demand_class, capacity))))),
    )
    return values.tolist()


def normal_sf(z: float) -> float:
    """Standard normal survival function ``P(Z > z)``."""
    if math.isnan(z):
        raise InvalidParameterError("z must not be NaN")
    return float(norm.sf(z))
