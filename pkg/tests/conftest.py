import json

import numpy as np
import pytest

from app.core.database import init_db, session_factory_for
from app.models.schemas import CanonicalDiagonal, ExactPolynomial, ProblemSpec, TrigSum


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ledger(tmp_path):
    """Session factory bound to a fresh SQLite ledger."""
    factory = session_factory_for(f"sqlite:///{tmp_path / 'ledger.db'}")
    init_db(factory)
    return factory


@pytest.fixture
def cubic_l1_spec():
    # u = x(1-x)^2 solves lambda*u + D^3u = f with lambda=1
    return ProblemSpec(
        l=1, lam=1.0, length=1.0,
        bc=CanonicalDiagonal(a=[], b=[]),
        forcing=ExactPolynomial(coeffs=[6.0, 1.0, -2.0, 1.0]),
    )


@pytest.fixture
def l2_spec():
    return ProblemSpec(
        l=2, lam=1.0, length=1.0,
        bc=CanonicalDiagonal(a=[0.0], b=[1.0]),
        forcing=TrigSum(terms=[(1.0, 2.0, 0.3)]),
    )


@pytest.fixture
def write_spec(tmp_path):
    def _write(spec: ProblemSpec, name: str = "spec.json"):
        path = tmp_path / name
        path.write_text(json.dumps(spec.model_dump(by_alias=True, mode="json")), encoding="utf-8")
        return path
    return _write
