import pytest
from pytest import FixtureRequest
from sqlalchemy import create_engine
from sqlalchemy.ext.asyncio import create_async_engine, AsyncSession
from sqlalchemy.orm import sessionmaker, Session

from databid import BookingStore
from databid.config import BaselineConfig, EstimatorConfig, RobustnessConfig
from databid.demand_model import DemandScenario
from tests.constant import ASYNC_DRIVERS, SYNC_DRIVERS


@pytest.fixture(scope="function")
def get_db_path(tmp_path):
    return tmp_path / "bookings.db"


@pytest.fixture(scope="function", params=SYNC_DRIVERS)
def get_dsn(request: FixtureRequest, get_db_path):
    driver = request.param
    return f"sqlite+{driver}:///{get_db_path}"


@pytest.fixture(scope="function", params=ASYNC_DRIVERS)
def get_async_dsn(request: FixtureRequest, get_db_path):
    driver = request.param
    return f"sqlite+{driver}:///{get_db_path}"


@pytest.fixture(scope="function")
def get_engine(get_db_path):
    return create_engine(f"sqlite:///{get_db_path}")


@pytest.fixture(scope="function")
def get_async_engine(get_async_dsn):
    return create_async_engine(get_async_dsn)


@pytest.fixture(scope="function")
def get_session_maker(get_engine):
    return sessionmaker(bind=get_engine, class_=Session)


@pytest.fixture(scope="function")
def get_async_session_maker(get_async_engine):
    return sessionmaker(bind=get_async_engine, class_=AsyncSession)


@pytest.fixture(scope="function")
def store_by_dsn(get_dsn):
    return BookingStore(dsn=get_dsn)


@pytest.fixture(scope="function")
def store_by_async_dsn(get_async_dsn):
    return BookingStore(dsn=get_async_dsn)


@pytest.fixture(scope="function")
def store_by_engine(get_engine):
    return BookingStore(engine=get_engine)


@pytest.fixture(scope="function")
def store_by_async_engine(get_async_engine):
    return BookingStore(engine=get_async_engine)


@pytest.fixture(scope="function")
def store_by_session_maker(get_session_maker):
    return BookingStore(session_maker=get_session_maker)


@pytest.fixture(scope="function")
def store_by_async_session_maker(get_async_session_maker):
    return BookingStore(session_maker=get_async_session_maker)


@pytest.fixture(scope="function")
def store_by_dsn_and_engine(get_dsn, get_engine):
    return BookingStore(dsn=get_dsn, engine=get_engine)


@pytest.fixture(scope="function")
def db_session(get_session_maker) -> Session:
    return get_session_maker()


@pytest.fixture(scope="module")
def small_scenario() -> DemandScenario:
    return DemandScenario(
        lambda_per_day=3.0, alpha=100.0, p0=50.0, capacity=10, horizon_days=20
    )


@pytest.fixture(scope="module")
def tiny_estimator_config() -> EstimatorConfig:
    return EstimatorConfig(hidden_layer_sizes=[16, 8], max_epochs=15, batch_size=64, seed=3)


@pytest.fixture(scope="module")
def tiny_baseline_config(tiny_estimator_config) -> BaselineConfig:
    return BaselineConfig(
        n_scenarios=2,
        n_flights=12,
        capacity=6,
        horizon_days=10,
        n_dcps=5,
        estimator=tiny_estimator_config,
        master_seed=11,
    )


@pytest.fixture(scope="module")
def tiny_robustness_config(tiny_estimator_config) -> RobustnessConfig:
    return RobustnessConfig(
        n_scenarios=2,
        n_flights=12,
        capacity=6,
        horizon_days=10,
        n_dcps=5,
        estimator=tiny_estimator_config,
        master_seed=5,
    )
