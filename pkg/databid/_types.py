from typing import Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from sqlalchemy.orm import Session
from sqlalchemy.engine import Engine
from sqlalchemy.ext.asyncio import AsyncEngine, AsyncSession

ENGINE_TYPE = Union[Engine, AsyncEngine]
SESSION_TYPE = Union[Session, AsyncSession]

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

# (prices, days_to_departure) of one flight, in booking order
FLIGHT_HISTORY = Tuple[Sequence[float], Sequence[int]]
