"""
SQLAlchemy models for the estimate sweep ledger.
"""
from sqlalchemy import Boolean, Column, DateTime, Float, Integer, String, Text, UniqueConstraint
from sqlalchemy.sql import func
from app.core.database import Base


class SweepCase(Base):
    """
    One Monte-Carlo case of an estimate sweep.

    Attributes:
        run_label: Deterministic label of the sweep (seed, grid, accuracy order)
        l: Order parameter of the case
        case_index: Position of the case within its order
        M1: Smallest admissibility margin
        l2_ratio: lambda*||u||/||f||
        trace_lhs / trace_rhs: Both sides of the boundary-trace bound
        homogeneous_max: max |u_h| of the zero-forcing solve
        singular_ratio: sigma_min/sigma_max of the equilibrated system
    """
    __tablename__ = "sweep_cases"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_label = Column(String(100), nullable=False, index=True)
    l = Column(Integer, nullable=False)
    case_index = Column(Integer, nullable=False)
    lam = Column(Float, nullable=False)
    length = Column(Float, nullable=False)
    M1 = Column(Float, nullable=True)
    l2_ratio = Column(Float, nullable=True)
    trace_lhs = Column(Float, nullable=True)
    trace_rhs = Column(Float, nullable=True)
    hl_ratio = Column(Float, nullable=True)
    h2l1_ratio = Column(Float, nullable=True)
    homogeneous_max = Column(Float, nullable=True)
    singular_ratio = Column(Float, nullable=True)
    passed = Column(Boolean, nullable=False, default=False)
    error = Column(Text, nullable=True)
    recorded_at = Column(DateTime(timezone=True), server_default=func.now(), nullable=False)

    # A rerun of the same sweep must not duplicate its cases
    __table_args__ = (
        UniqueConstraint('run_label', 'l', 'case_index', name='uq_run_case'),
    )

    def __repr__(self):
        return f"<SweepCase({self.run_label}, l={self.l}, case={self.case_index}, passed={self.passed})>"


class ContractViolation(Base):
    """
    A sweep case that broke one of the checked contracts.

    Attributes:
        contract: 'l2_bound', 'trace_bound', 'uniqueness' or 'solver_error'
        severity: 'critical' or 'warning'
        repro_path: Reproduction file holding the offending spec
        resolved_at: When the violation was resolved (NULL while open)
    """
    __tablename__ = "contract_violations"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_label = Column(String(100), nullable=False, index=True)
    l = Column(Integer, nullable=False)
    case_index = Column(Integer, nullable=False)
    contract = Column(String(50), nullable=False)
    severity = Column(String(10), nullable=False)
    message = Column(Text, nullable=True)
    repro_path = Column(String(255), nullable=True)
    triggered_at = Column(DateTime(timezone=True), server_default=func.now(), nullable=False)
    resolved_at = Column(DateTime(timezone=True), nullable=True)

    def __repr__(self):
        return f"<ContractViolation({self.run_label}, l={self.l}, case={self.case_index}, {self.contract})>"
