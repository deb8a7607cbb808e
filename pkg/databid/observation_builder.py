"""Observation building: historical bookings to bid-price proxy observations.

For every flight and every data collection point (DCP) ``d_j`` the prices
booked at ``d_j`` days or fewer before departure are sorted in decreasing order
and zero-padded to the capacity. Entry ``k`` of that vector is the revenue the
``k``-th most valuable seat would have earned with perfect hindsight, i.e. a
proxy of the bid price with ``k`` seats left at ``d_j``.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ._types import FLIGHT_HISTORY, FloatArray, IntArray
from .exceptions import InvalidInputError, InvalidParameterError
from .schema import BookingRecord, FlightId

logger = logging.getLogger(__name__)

BOOKING_COLUMNS = ("flight_id", "days_to_departure", "price")
OBSERVATION_COLUMNS = ["flight_id", "dcp", "capacity_index", "target"]


@dataclass(frozen=True)
class DcpGrid:
    """Strictly decreasing DCP boundaries ``d_1 > d_2 > ... > d_|D|`` in days."""

    boundaries: Tuple[int, ...]

    def __post_init__(self) -> None:
        boundaries = tuple(int(d) for d in self.boundaries)
        object.__setattr__(self, "boundaries", boundaries)
        if not boundaries:
            raise InvalidParameterError("a DCP grid needs at least one boundary")
        if any(d < 0 for d in boundaries):
            raise InvalidParameterError(f"DCP boundaries must be >= 0: {boundaries}")
        if any(a <= b for a, b in zip(boundaries, boundaries[1:])):
            raise InvalidParameterError(
                f"DCP boundaries must be strictly decreasing: {boundaries}"
            )

    def __len__(self) -> int:
        return len(self.boundaries)

    def __iter__(self):
        return iter(self.boundaries)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """
    Training set in row order (flight, DCP in grid order, capacity index 1..C).

    ``X`` holds ``(capacity_index, dcp)`` pairs and ``Y`` the bid-price proxies.
    """

    flight_ids: Tuple[FlightId, ...]
    capacity_index: IntArray
    dcp: IntArray
    target: FloatArray
    capacity: int
    grid: DcpGrid

    def __len__(self) -> int:
        return int(self.target.shape[0])

    @property
    def X(self) -> IntArray:
        return np.column_stack([self.capacity_index, self.dcp])

    @property
    def Y(self) -> FloatArray:
        return self.target

    @property
    def row_flight_ids(self) -> List[FlightId]:
        per_flight = self.capacity * len(self.grid)
        return [fid for fid in self.flight_ids for _ in range(per_flight)]

    @property
    def n_flights(self) -> int:
        return len(self.flight_ids)

    def flight_block(self, position: int) -> FloatArray:
        """Targets of the ``position``-th flight as a ``C x |D|`` matrix."""
        per_flight = self.capacity * len(self.grid)
        block = self.target[position * per_flight : (position + 1) * per_flight]
        return block.reshape(len(self.grid), self.capacity).T


def build_dcp_grid(horizon_days: int, n_groups: int) -> DcpGrid:
    """
    Split ``horizon_days`` into ``n_groups`` uniform intervals; each boundary is
    the largest days-to-departure value of its interval.

    When the horizon does not divide evenly the earliest intervals are one day
    wider.

    .. code-block:: python

        build_dcp_grid(300, 10).boundaries  # (299, 269, 239, ..., 29)
    """
    if horizon_days < 1:
        raise InvalidParameterError(f"horizon_days must be >= 1, got {horizon_days}")
    if not 1 <= n_groups <= horizon_days:
        raise InvalidParameterError(
            f"n_groups must be within 1..{horizon_days}, got {n_groups}"
        )
    base, remainder = divmod(horizon_days, n_groups)
    boundaries = []
    upper = horizon_days - 1
    for j in range(n_groups):
        boundaries.append(upper)
        upper -= base + (1 if j < remainder else 0)
    return DcpGrid(tuple(boundaries))


def transform_flight(
    prices: Sequence[float],
    days: Sequence[int],
    capacity: int,
    grid: DcpGrid,
) -> FloatArray:
    """
    Sorted, zero-padded bid-price proxies of one flight, shape ``(C, |D|)``.

    Column ``j`` uses the bookings made at ``d_j`` days or fewer before
    departure; the first column uses every booking. Only the ``C`` largest
    prices are kept when a column qualifies more than ``C`` bookings.
    """
    if capacity < 1:
        raise InvalidParameterError(f"capacity must be >= 1, got {capacity}")
    price_arr = np.asarray(prices, dtype=np.float64)
    day_arr = np.asarray(days, dtype=np.int64)
    if price_arr.shape != day_arr.shape or price_arr.ndim != 1:
        raise InvalidInputError(
            f"prices and days must be 1-D of equal length, got "
            f"{price_arr.shape} and {day_arr.shape}"
        )
    order = np.argsort(-price_arr, kind="stable")
    sorted_prices = price_arr[order]
    sorted_days = day_arr[order]

    matrix = np.zeros((capacity, len(grid)), dtype=np.float64)
    for j, boundary in enumerate(grid.boundaries):
        if j == 0:
            qualifying = sorted_prices
        else:
            qualifying = sorted_prices[sorted_days <= boundary]
        kept = qualifying[:capacity]
        matrix[: kept.shape[0], j] = kept
    return matrix


def assemble_training_set(
    flights: Union[Sequence[FLIGHT_HISTORY], Mapping[FlightId, FLIGHT_HISTORY]],
    capacity: int,
    grid: DcpGrid,
) -> ObservationSet:
    """
    Stack the transformed flights row-wise into one observation set.

    ``flights`` is either a sequence of ``(prices, days)`` (flight ids become
    positions) or a mapping from flight id to ``(prices, days)``.
    """
    if isinstance(flights, Mapping):
        items = list(flights.items())
    else:
        items = list(enumerate(flights))

    blocks = []
    truncated = 0
    for _, (prices, days) in items:
        if len(prices) > capacity:
            truncated += 1
        blocks.append(transform_flight(prices, days, capacity, grid).T.ravel())
    if truncated:
        logger.warning(
            "%d flight(s) have more bookings than capacity %d; kept the %d largest prices",
            truncated,
            capacity,
            capacity,
        )

    n_flights = len(items)
    capacity_index = np.tile(np.arange(1, capacity + 1, dtype=np.int64), n_flights * len(grid))
    dcp = np.tile(
        np.repeat(np.asarray(grid.boundaries, dtype=np.int64), capacity), n_flights
    )
    target = np.concatenate(blocks) if blocks else np.zeros(0, dtype=np.float64)
    return ObservationSet(
        flight_ids=tuple(fid for fid, _ in items),
        capacity_index=capacity_index,
        dcp=dcp,
        target=target,
        capacity=capacity,
        grid=grid,
    )


def group_flights(
    records: Iterable[BookingRecord],
) -> "OrderedDict[FlightId, FLIGHT_HISTORY]":
    """Group bookings per flight, flights in order of first appearance."""
    grouped: "OrderedDict[FlightId, Tuple[List[float], List[int]]]" = OrderedDict()
    for record in records:
        prices, days = grouped.setdefault(record.flight_id, ([], []))
        prices.append(record.price)
        days.append(record.days_to_departure)
    return grouped


def read_bookings_csv(path: Union[str, Path]) -> List[BookingRecord]:
    """
    Read ``flight_id,days_to_departure,price[,quantity]``.

    A row with quantity ``q`` becomes ``q`` identical unit bookings.
    """
    frame = pd.read_csv(
        path, dtype={"flight_id": str}, encoding="utf-8", float_precision="round_trip"
    )
    missing = [c for c in BOOKING_COLUMNS if c not in frame.columns]
    if missing:
        raise InvalidInputError(f"{path}: missing booking column(s) {missing}")
    if "quantity" in frame.columns:
        quantity = frame["quantity"].fillna(1).astype(np.int64).to_numpy()
        if np.any(quantity < 0):
            raise InvalidInputError(f"{path}: negative quantity")
        frame = frame.loc[frame.index.repeat(quantity)]
    return [
        BookingRecord(
            flight_id=flight_id,
            days_to_departure=int(days),
            price=float(price),
        )
        for flight_id, days, price in zip(
            frame["flight_id"], frame["days_to_departure"], frame["price"]
        )
    ]


def write_observations_csv(observations: ObservationSet, path: Union[str, Path]) -> None:
    frame = pd.DataFrame(
        {
            "flight_id": observations.row_flight_ids,
            "dcp": observations.dcp,
            "capacity_index": observations.capacity_index,
            "target": observations.target,
        },
        columns=OBSERVATION_COLUMNS,
    )
    frame.to_csv(path, index=False)


def read_observations_csv(
    path: Union[str, Path], capacity: Optional[int] = None
) -> ObservationSet:
    """Load an observation CSV; capacity and DCP grid are recovered from the rows."""
    frame = pd.read_csv(
        path, dtype={"flight_id": str}, encoding="utf-8", float_precision="round_trip"
    )
    missing = [c for c in OBSERVATION_COLUMNS if c not in frame.columns]
    if missing:
        raise InvalidInputError(f"{path}: missing observation column(s) {missing}")
    if frame.empty:
        raise InvalidInputError(f"{path}: no observations")
    capacity_index = frame["capacity_index"].to_numpy(dtype=np.int64)
    dcp = frame["dcp"].to_numpy(dtype=np.int64)
    capacity = int(capacity or capacity_index.max())
    if capacity_index.min() < 1 or capacity_index.max() > capacity:
        raise InvalidInputError(
            f"{path}: capacity_index must lie in 1..{capacity}, "
            f"found {capacity_index.min()}..{capacity_index.max()}"
        )
    grid = DcpGrid(tuple(sorted(np.unique(dcp).tolist(), reverse=True)))
    per_flight = capacity * len(grid)
    if len(frame) % per_flight:
        raise InvalidInputError(
            f"{path}: {len(frame)} rows is not a multiple of capacity x DCPs = {per_flight}"
        )
    n_flights = len(frame) // per_flight
    flight_ids = tuple(pd.unique(frame["flight_id"]).tolist())
    expected_ids = [fid for fid in flight_ids for _ in range(per_flight)]
    expected_index = np.tile(np.arange(1, capacity + 1), n_flights * len(grid))
    expected_dcp = np.tile(np.repeat(np.asarray(grid.boundaries), capacity), n_flights)
    if (
        len(flight_ids) != n_flights
        or frame["flight_id"].tolist() != expected_ids
        or not np.array_equal(capacity_index, expected_index)
        or not np.array_equal(dcp, expected_dcp)
    ):
        raise InvalidInputError(
            f"{path}: rows must be ordered by flight, then DCP {grid.boundaries}, "
            f"then capacity_index 1..{capacity}"
        )
    return ObservationSet(
        flight_ids=flight_ids,
        capacity_index=capacity_index,
        dcp=dcp,
        target=frame["target"].to_numpy(dtype=np.float64),
        capacity=capacity,
        grid=grid,
    )
