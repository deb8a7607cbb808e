"""Stochastic demand: Poisson arrivals with shifted-exponential willingness to pay."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ._types import FloatArray
from ._utils import make_rng, require_finite
from .exceptions import InvalidParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DemandScenario:
    """
    .. _demand_scenario_class: #databid.demand_model.DemandScenario
    .. |demand_scenario_class| replace:: :py:class:`.~databid.demand_model.DemandScenario`

    One simulated market: stationary arrival rate ``lambda_per_day``, mean WTP
    increment ``alpha`` above the floor price ``p0``, ``capacity`` seats and a
    booking horizon of ``horizon_days``.
    """

    lambda_per_day: float
    alpha: float
    p0: float
    capacity: int
    horizon_days: int

    def __post_init__(self) -> None:
        for name in ("lambda_per_day", "alpha", "p0"):
            require_finite(name, getattr(self, name))
        if self.lambda_per_day < 0:
            raise InvalidParameterError(
                f"lambda_per_day must be >= 0, got {self.lambda_per_day}"
            )
        if self.alpha <= 0:
            raise InvalidParameterError(f"alpha must be > 0, got {self.alpha}")
        if self.p0 < 0:
            raise InvalidParameterError(f"p0 must be >= 0, got {self.p0}")
        if self.capacity < 1:
            raise InvalidParameterError(f"capacity must be >= 1, got {self.capacity}")
        if self.horizon_days < 1:
            raise InvalidParameterError(
                f"horizon_days must be >= 1, got {self.horizon_days}"
            )

    def with_lambda(self, lambda_per_day: float) -> "DemandScenario":
        return DemandScenario(
            lambda_per_day=lambda_per_day,
            alpha=self.alpha,
            p0=self.p0,
            capacity=self.capacity,
            horizon_days=self.horizon_days,
        )


@dataclass(frozen=True)
class Arrival:
    time_to_departure: float
    wtp: float


@dataclass(frozen=True, eq=False)
class ArrivalStream:
    """
    Arrivals of one flight, sorted by strictly decreasing ``time_to_departure``.

    Stored column-wise (``times``, ``wtps``) for the simulator's hot loop; the
    ``arrivals`` property gives the record view.
    """

    scenario: DemandScenario
    seed: int
    times: FloatArray
    wtps: FloatArray
    flight_index: int = 0

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def arrivals(self) -> Tuple[Arrival, ...]:
        return tuple(
            Arrival(time_to_departure=float(t), wtp=float(w))
            for t, w in zip(self.times, self.wtps)
        )

    def to_bytes(self) -> bytes:
        return self.times.tobytes() + self.wtps.tobytes()


def purchase_probability(price: float, p0: float, alpha: float) -> float:
    """Probability that a customer's WTP is at least ``price``.

    ``exp(-(price - p0) / alpha)`` above the floor, clamped to ``1.0`` below it.

    .. code-block:: python

        purchase_probability(150.0, p0=50.0, alpha=100.0)  # e**-1
    """
    if not math.isfinite(alpha) or alpha <= 0:
        raise InvalidParameterError(f"alpha must be finite and > 0, got {alpha!r}")
    require_finite("price", price)
    if price <= p0:
        return 1.0
    return math.exp(-(price - p0) / alpha)


def sample_wtp(
    p0: float,
    alpha: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> Union[float, FloatArray]:
    """Draw ``p0 + Exponential(mean=alpha)``; ``alpha == 0`` degenerates to ``p0``."""
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0:
        return p0 if size is None else np.full(size, float(p0))
    return p0 + rng.exponential(alpha, size=size)


def sample_arrival_stream(
    scenario: DemandScenario, seed: int, flight_index: int = 0
) -> ArrivalStream:
    """
    Homogeneous Poisson arrivals over ``[0, horizon_days)`` with independent WTPs.

    The count is drawn first, then the arrival times uniformly over the horizon
    (order statistics of a Poisson process), then one WTP per arrival in
    departure-ward order. Identical ``(scenario, seed)`` reproduce the stream.
    """
    rng = make_rng(seed)
    horizon = float(scenario.horizon_days)
    count = int(rng.poisson(scenario.lambda_per_day * horizon))
    times = rng.uniform(0.0, horizon, size=count)
    # uniform() is half-open in theory; guard the float edge.
    times = np.minimum(times, np.nextafter(horizon, 0.0))
    order = np.argsort(-times, kind="stable")
    times = times[order]
    wtps = np.asarray(
        sample_wtp(scenario.p0, scenario.alpha, rng, size=count), dtype=np.float64
    )
    return ArrivalStream(
        scenario=scenario,
        seed=int(seed),
        times=times,
        wtps=wtps,
        flight_index=flight_index,
    )
