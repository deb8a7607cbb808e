import math
import re

import numpy as np
from sqlalchemy.orm import sessionmaker, Session
from sqlalchemy.ext.asyncio import AsyncSession

from ._types import ENGINE_TYPE, SESSION_TYPE
from .exceptions import InvalidParameterError

ASYNC_DRIVERS = ("asyncpg", "aiosqlite", "psycopg_async")
TABLE_NAME_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
MAX_TABLE_NAME_LENGTH = 48


def get_session_type(engine: ENGINE_TYPE) -> SESSION_TYPE:
    if engine.dialect.is_async:
        return AsyncSession
    return Session


def is_async_session_maker(session_maker: sessionmaker) -> bool:
    return AsyncSession in session_maker.class_.__mro__


def is_async_dsn(dsn: str) -> bool:
    scheme = dsn.split("://", 1)[0]
    return any(scheme.endswith(f"+{driver}") for driver in ASYNC_DRIVERS)


def validate_table_name(table: str) -> None:
    if len(table) > MAX_TABLE_NAME_LENGTH:
        raise ValueError(
            f"table name is too long, maximum length is {MAX_TABLE_NAME_LENGTH} characters"
        )
    if not TABLE_NAME_PATTERN.match(table):
        raise ValueError(f"table name {table!r} is not a valid identifier")


def derive_seed(base_seed: int, *keys: int) -> int:
    """Derive an independent 64-bit sub-seed from ``base_seed`` and integer keys.

    Uses numpy's ``SeedSequence`` entropy mixing, so ``derive_seed(s, i)`` and
    ``derive_seed(s, j)`` give statistically independent streams for ``i != j``.
    """
    sequence = np.random.SeedSequence([int(base_seed), *(int(k) for k in keys)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator seeded from ``seed`` and optional sub-keys."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))
    )


def require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
