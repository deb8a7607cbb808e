import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Union

FlightId = Union[int, str]


class PolicyName(str, Enum):
    OPTIMAL = "optimal"
    DATA_DRIVEN = "data_driven"
    MISSPECIFIED_DP = "misspecified_dp"


@dataclass(frozen=True)
class BookingRecord:
    """
    .. _schema_booking_record_class: #databid.schema.BookingRecord
    .. |schema_booking_record_class| replace:: :py:class:`.~databid.schema.BookingRecord`

    One historical unit sale.
    """

    flight_id: FlightId
    days_to_departure: int
    price: float

    def __post_init__(self) -> None:
        if self.days_to_departure < 0:
            raise ValueError(
                f"days_to_departure must be >= 0, got {self.days_to_departure}"
            )
        if not self.price >= 0:
            raise ValueError(f"price must be >= 0, got {self.price}")


@dataclass
class FlightOutcome:
    """
    .. _schema_flight_outcome_class: #databid.schema.FlightOutcome
    .. |schema_flight_outcome_class| replace:: :py:class:`.~databid.schema.FlightOutcome`
    """

    bookings: List[BookingRecord]
    revenue: float
    load_factor: float
    final_remaining: int
    n_arrivals: int = 0


@dataclass
class ExperimentResult:
    """
    .. _schema_experiment_result_class: #databid.schema.ExperimentResult
    .. |schema_experiment_result_class| replace:: :py:class:`.~databid.schema.ExperimentResult`

    Per-scenario, per-policy aggregate over all simulated flights.
    """

    scenario_id: int
    lambda_train: float
    lambda_test: float
    policy: PolicyName
    mean_revenue: float
    mean_load_factor: float
    revenue_gap_vs_optimal: float
    load_factor_gap_vs_optimal: float
    total_arrivals: int = 0

    @property
    def ratio(self) -> float:
        """``lambda_test / lambda_train``; NaN when no demand was trained on."""
        if self.lambda_train == 0:
            return math.nan
        return self.lambda_test / self.lambda_train


@dataclass
class ScenarioFailure:
    scenario_id: int
    error: str
    lambda_train: Optional[float] = None
    lambda_test: Optional[float] = None


@dataclass
class ExperimentRun:
    """Everything a harness run produced: result rows plus failed scenarios."""

    results: List[ExperimentResult] = field(default_factory=list)
    failures: List[ScenarioFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures
