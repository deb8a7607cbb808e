"""Replay of seeded arrival streams against bid-price pricing policies."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ._types import FloatArray
from ._utils import derive_seed
from .demand_model import ArrivalStream, DemandScenario, sample_arrival_stream
from .dp_optimal import BidPriceMatrix, optimal_price_matrix
from .exceptions import InvalidInputError, InvalidParameterError
from .schema import BookingRecord, FlightId, FlightOutcome, PolicyName

logger = logging.getLogger(__name__)

OUTCOME_COLUMNS = ["scenario_id", "policy", "flight_index", "revenue", "load_factor", "bookings"]


@dataclass(frozen=True, eq=False)
class PolicyHandle:
    """
    .. _policy_handle_class: #databid.simulator.PolicyHandle
    .. |policy_handle_class| replace:: :py:class:`.~databid.simulator.PolicyHandle`

    A bid-price matrix plus the pricing parameters that turn a bid into a
    posted price. With ``day_offset = k`` an arrival on day ``t`` is priced
    from column ``max(0, t - k)``.
    """

    matrix: BidPriceMatrix
    alpha: float
    p0: float
    name: Union[PolicyName, str] = "policy"
    day_offset: int = 0
    prices: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.day_offset < 0:
            raise InvalidParameterError(f"day_offset must be >= 0, got {self.day_offset}")
        prices = optimal_price_matrix(self.matrix, self.alpha, self.p0)
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    def covers(self, scenario: DemandScenario) -> bool:
        return (
            self.matrix.capacity >= scenario.capacity
            and self.matrix.horizon_days >= scenario.horizon_days
        )


def simulate_flight(
    stream: ArrivalStream,
    policy: PolicyHandle,
    flight_id: Optional[FlightId] = None,
) -> FlightOutcome:
    """
    Sell one flight: arrivals come in decreasing time to departure, each is
    offered ``max(p0, alpha + b(x, t))`` and buys iff its WTP reaches it.
    """
    scenario = stream.scenario
    if not policy.covers(scenario):
        raise InvalidInputError(
            f"policy {policy.name} matrix {policy.matrix.values.shape} does not cover "
            f"capacity={scenario.capacity}, horizon_days={scenario.horizon_days}"
        )
    flight_id = stream.flight_index if flight_id is None else flight_id
    prices = policy.prices
    remaining = scenario.capacity
    bookings: List[BookingRecord] = []
    for time_to_departure, wtp in zip(stream.times.tolist(), stream.wtps.tolist()):
        if remaining == 0:
            continue
        day = int(math.floor(time_to_departure))
        offered = float(prices[remaining - 1, max(0, day - policy.day_offset)])
        if wtp >= offered:
            bookings.append(
                BookingRecord(flight_id=flight_id, days_to_departure=day, price=offered)
            )
            remaining -= 1
    return FlightOutcome(
        bookings=bookings,
        revenue=math.fsum(b.price for b in bookings),
        load_factor=(scenario.capacity - remaining) / scenario.capacity,
        final_remaining=remaining,
        n_arrivals=len(stream),
    )


def generate_streams(
    scenario: DemandScenario, n_flights: int, base_seed: int
) -> List[ArrivalStream]:
    """Flight ``i`` is drawn from ``derive_seed(base_seed, i)``."""
    if n_flights < 1:
        raise InvalidParameterError(f"n_flights must be >= 1, got {n_flights}")
    return [
        sample_arrival_stream(scenario, derive_seed(base_seed, i), flight_index=i)
        for i in range(n_flights)
    ]


def replay(
    streams: Sequence[ArrivalStream], policies: Sequence[PolicyHandle]
) -> List[List[FlightOutcome]]:
    """Outcomes per policy, each list aligned with ``streams``."""
    return [[simulate_flight(stream, policy) for stream in streams] for policy in policies]


def simulate_scenario(
    scenario: DemandScenario,
    n_flights: int,
    base_seed: int,
    policies: Sequence[PolicyHandle],
) -> List[List[FlightOutcome]]:
    """
    Generate each flight's stream once and replay it against every policy.

    .. code-block:: python

        from databid.dp_optimal import compute_value_and_bid
        from databid.simulator import PolicyHandle, simulate_scenario

        _, bids = compute_value_and_bid(scenario)
        policy = PolicyHandle(bids, alpha=scenario.alpha, p0=scenario.p0, name="optimal")
        (outcomes,) = simulate_scenario(scenario, n_flights=100, base_seed=7, policies=[policy])
    """
    streams = generate_streams(scenario, n_flights, base_seed)
    logger.debug(
        "replaying %d flights (%d arrivals) against %d policies",
        n_flights,
        sum(len(s) for s in streams),
        len(policies),
    )
    return replay(streams, policies)


def revenue_gap(candidate: float, reference: float) -> float:
    """Relative gap ``(candidate - reference) / reference``."""
    if not reference > 0:
        raise InvalidInputError(f"reference revenue must be > 0, got {reference!r}")
    return (candidate - reference) / reference


def load_factor_gap(candidate_lf: float, reference_lf: float) -> float:
    """Absolute gap in load-factor points."""
    for name, value in (("candidate_lf", candidate_lf), ("reference_lf", reference_lf)):
        if not 0.0 <= value <= 1.0:
            raise InvalidInputError(f"{name} must be within [0, 1], got {value!r}")
    return candidate_lf - reference_lf


def mean_revenue(outcomes: Sequence[FlightOutcome]) -> float:
    if not outcomes:
        raise InvalidInputError("no outcomes to average")
    return float(np.mean([o.revenue for o in outcomes]))


def mean_load_factor(outcomes: Sequence[FlightOutcome]) -> float:
    if not outcomes:
        raise InvalidInputError("no outcomes to average")
    return float(np.mean([o.load_factor for o in outcomes]))


def write_outcomes_csv(
    outcomes: Sequence[FlightOutcome],
    scenario_id: int,
    policy: Union[PolicyName, str],
    path: Union[str, Path],
    append: bool = False,
) -> None:
    """One row per flight; ``bookings`` is the number of seats sold."""
    policy_name = policy.value if isinstance(policy, PolicyName) else str(policy)
    frame = pd.DataFrame(
        {
            "scenario_id": scenario_id,
            "policy": policy_name,
            "flight_index": range(len(outcomes)),
            "revenue": [o.revenue for o in outcomes],
            "load_factor": [o.load_factor for o in outcomes],
            "bookings": [len(o.bookings) for o in outcomes],
        },
        columns=OUTCOME_COLUMNS,
    )
    write_header = not (append and Path(path).exists())
    frame.to_csv(path, mode="a" if append else "w", header=write_header, index=False)
