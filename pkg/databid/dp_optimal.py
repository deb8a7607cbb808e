"""Exact single-leg dynamic pricing by backward induction.

The value function is solved on a grid of ``dt`` days with the inner price
maximisation done in closed form (exponential WTP), and bid prices are the
capacity differences of the value function sampled at whole days.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ._types import FloatArray
from .demand_model import DemandScenario
from .exceptions import BidRangeError, InvalidInputError, InvalidParameterError

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.01
MAX_ARRIVALS_PER_STEP = 0.1
# largest correction the monotone projection may apply before we call it a bug
ROUNDOFF_TOLERANCE = 1e-9


class BidOrigin(str, Enum):
    DP_OPTIMAL = "dp_optimal"
    DATA_DRIVEN = "data_driven"


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """
    ``values[x, k]`` is the expected revenue-to-come with ``x`` seats left and
    ``k * dt`` days to departure, for ``x = 0..C`` and ``k = 0..T/dt``.
    """

    values: FloatArray
    dt: float
    steps_per_day: int

    @property
    def capacity(self) -> int:
        return self.values.shape[0] - 1

    @property
    def horizon_days(self) -> int:
        return (self.values.shape[1] - 1) // self.steps_per_day

    def at_day(self, day: int) -> FloatArray:
        """Value column at the whole-day boundary ``day``."""
        return self.values[:, day * self.steps_per_day]


@dataclass(frozen=True, eq=False)
class BidPriceMatrix:
    """
    .. _bid_price_matrix_class: #databid.dp_optimal.BidPriceMatrix
    .. |bid_price_matrix_class| replace:: :py:class:`.~databid.dp_optimal.BidPriceMatrix`

    ``values[x - 1, t]`` is the bid price with ``x`` seats left on day ``t``
    before departure, ``x = 1..capacity`` and ``t = 0..horizon_days - 1``.
    """

    values: FloatArray
    capacity: int
    horizon_days: int
    origin: BidOrigin

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.array(self.values, dtype=np.float64))
        if self.values.shape != (self.capacity, self.horizon_days):
            raise InvalidInputError(
                f"bid matrix shape {self.values.shape} does not match "
                f"capacity={self.capacity}, horizon_days={self.horizon_days}"
            )
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InvalidInputError("bid prices must be finite and nonnegative")
        if self.origin == BidOrigin.DP_OPTIMAL and np.any(self.values[:, 0] != 0):
            raise InvalidInputError("optimal bid prices must be zero on day 0")
        self.values.setflags(write=False)


def _validate_dt(scenario: DemandScenario, dt: float) -> int:
    if not math.isfinite(dt) or dt <= 0:
        raise InvalidParameterError(f"dt must be finite and > 0, got {dt!r}")
    if scenario.lambda_per_day * dt > MAX_ARRIVALS_PER_STEP + 1e-12:
        raise InvalidParameterError(
            f"lambda_per_day * dt = {scenario.lambda_per_day * dt:.4g} exceeds "
            f"{MAX_ARRIVALS_PER_STEP}; two arrivals per step are no longer negligible"
        )
    steps_per_day = round(1.0 / dt)
    if steps_per_day < 1 or abs(steps_per_day * dt - 1.0) > 1e-9:
        raise InvalidParameterError(
            f"dt must divide one day into a whole number of steps, got {dt!r}"
        )
    return steps_per_day


def _monotone_envelope(bids: FloatArray) -> FloatArray:
    # nonincreasing in x (axis 0), then nondecreasing in t (axis 1); the second
    # pass keeps the first because a max of nonincreasing columns is nonincreasing
    projected = np.maximum(bids, 0.0)
    projected = np.minimum.accumulate(projected, axis=0)
    projected = np.maximum.accumulate(projected, axis=1)
    return projected


def compute_value_and_bid(
    scenario: DemandScenario, dt: float = DEFAULT_DT
) -> Tuple[ValueFunction, BidPriceMatrix]:
    """Solve the pricing DP for ``scenario`` and return ``(V, b*)``.

    Each step applies::

        V(x, t) = V(x, t - dt) + lambda * dt * P_w(p*) * (p* - b(x, t - dt))
        p*      = max(p0, alpha + b(x, t - dt))
        b(x, t) = V(x, t) - V(x - 1, t)

    .. code-block:: python

        from databid.demand_model import DemandScenario
        from databid.dp_optimal import compute_value_and_bid

        scenario = DemandScenario(lambda_per_day=3.0, alpha=100.0, p0=50.0, capacity=50, horizon_days=100)
        value_function, bids = compute_value_and_bid(scenario, dt=0.01)
    """
    steps_per_day = _validate_dt(scenario, dt)
    capacity = scenario.capacity
    n_steps = steps_per_day * scenario.horizon_days
    arrival_prob = scenario.lambda_per_day * dt
    alpha, p0 = scenario.alpha, scenario.p0

    values = np.zeros((capacity + 1, n_steps + 1), dtype=np.float64)
    for k in range(1, n_steps + 1):
        previous = values[:, k - 1]
        bid = previous[1:] - previous[:-1]
        price = np.maximum(p0, alpha + bid)
        gain = arrival_prob * np.exp(-(price - p0) / alpha) * (price - bid)
        values[1:, k] = previous[1:] + gain

    value_function = ValueFunction(values=values, dt=dt, steps_per_day=steps_per_day)

    day_columns = values[:, : n_steps : steps_per_day]
    raw_bids = day_columns[1:, :] - day_columns[:-1, :]
    bids = _monotone_envelope(raw_bids)
    correction = float(np.max(np.abs(bids - raw_bids))) if bids.size else 0.0
    if correction > ROUNDOFF_TOLERANCE * max(1.0, float(np.max(np.abs(raw_bids)))):
        logger.warning(
            "monotone projection moved a bid price by %.3g; "
            "the value function is not concave at this resolution",
            correction,
        )
    logger.debug(
        "solved DP lambda=%.4f C=%d T=%d steps=%d (projection %.2g)",
        scenario.lambda_per_day,
        capacity,
        scenario.horizon_days,
        n_steps,
        correction,
    )
    matrix = BidPriceMatrix(
        values=bids,
        capacity=capacity,
        horizon_days=scenario.horizon_days,
        origin=BidOrigin.DP_OPTIMAL,
    )
    return value_function, matrix


def optimal_price(bid: float, alpha: float, p0: float) -> float:
    """Posted price ``max(p0, alpha + bid)`` under exponential WTP."""
    if not bid >= 0:
        raise InvalidParameterError(f"bid must be >= 0, got {bid!r}")
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be > 0, got {alpha!r}")
    return max(p0, alpha + bid)


def optimal_price_matrix(matrix: BidPriceMatrix, alpha: float, p0: float) -> FloatArray:
    """:py:func:`optimal_price` for every cell of ``matrix``."""
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be > 0, got {alpha!r}")
    return np.maximum(p0, alpha + matrix.values)


def bid_price_lookup(matrix: BidPriceMatrix, remaining: int, day: int) -> float:
    """
    Real-time lookup of ``b(remaining, day)``.

    ``remaining == 0`` is the caller's business (no seat, no sale).
    """
    if not 1 <= remaining <= matrix.capacity:
        raise BidRangeError(
            f"remaining={remaining} outside 1..{matrix.capacity}"
        )
    if not 0 <= day < matrix.horizon_days:
        raise BidRangeError(f"day={day} outside 0..{matrix.horizon_days - 1}")
    return float(matrix.values[remaining - 1, day])


def write_bid_matrix_csv(matrix: BidPriceMatrix, path: Union[str, Path]) -> None:
    """Header ``capacity,horizon_days,origin``, its values, then one row per ``x``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("capacity,horizon_days,origin\n")
        fh.write(f"{matrix.capacity},{matrix.horizon_days},{matrix.origin.value}\n")
        np.savetxt(fh, matrix.values, delimiter=",", fmt="%.17g")


def read_bid_matrix_csv(path: Union[str, Path]) -> BidPriceMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "capacity,horizon_days,origin":
            raise InvalidInputError(f"{path}: not a bid price matrix file")
        capacity, horizon_days, origin = fh.readline().strip().split(",")
        values = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
    return BidPriceMatrix(
        values=values.reshape(int(capacity), int(horizon_days)),
        capacity=int(capacity),
        horizon_days=int(horizon_days),
        origin=BidOrigin(origin),
    )
