"""
Database connection and session management for the sweep ledger.
"""
from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from app.core.config import settings


def build_engine(database_url: str):
    return create_engine(
        database_url,
        connect_args={"check_same_thread": False} if "sqlite" in database_url else {}
    )


# Default engine; nothing touches the file until the first connection
engine = build_engine(settings.DATABASE_URL)

# Session factory
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

# Base class for models
Base = declarative_base()


def session_factory_for(database_url: str) -> sessionmaker:
    """Session factory bound to a ledger other than the configured default."""
    return sessionmaker(autocommit=False, autoflush=False, bind=build_engine(database_url))


def init_db(session_factory: sessionmaker = SessionLocal):
    """Initialize ledger tables on the factory's engine."""
    from app.models.models import SweepCase, ContractViolation  # noqa
    Base.metadata.create_all(bind=session_factory.kw["bind"])
