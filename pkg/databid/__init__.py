from .booking_store import BookingStore
from .demand_model import DemandScenario
from .dp_optimal import BidPriceMatrix, compute_value_and_bid
from .estimator import FittedEstimator
from . import schema

__all__ = [
    "BidPriceMatrix",
    "BookingStore",
    "DemandScenario",
    "FittedEstimator",
    "compute_value_and_bid",
    "schema",
]
