"""
Contract checks over finished sweep cases.

Implements the rules:
- lambda*||u||/||f|| above 1 + tol_l2 -> CRITICAL
- boundary-trace sum above ||f||^2/(lambda*M1) * (1 + tol_trace) -> CRITICAL
- homogeneous solve not returning zero -> CRITICAL
- case aborted by a solver error -> WARNING

Every violated case also gets a reproduction file with its spec.
"""
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from sqlalchemy.orm import sessionmaker

from app.core.config import settings
from app.core.database import SessionLocal
from app.models.models import ContractViolation
from app.models.schemas import ProblemSpec, SweepCaseResult
from app.services.reporting import write_json

logger = logging.getLogger(__name__)

# (contract, severity, message)
Finding = Tuple[str, str, str]


class ContractChecker:
    """Records contract violations of sweep cases in the ledger."""

    def __init__(
        self,
        session_factory: sessionmaker = SessionLocal,
        out_dir: Optional[Path] = None,
        tol_l2: Optional[float] = None,
        tol_trace: Optional[float] = None,
    ):
        self.session_factory = session_factory
        self.out_dir = Path(out_dir) if out_dir is not None else Path(settings.OUT_DIR)
        self.tol_l2 = settings.TOL_L2 if tol_l2 is None else tol_l2
        self.tol_trace = settings.TOL_TRACE if tol_trace is None else tol_trace
        self.uniqueness_tol = settings.UNIQUENESS_TOL
        self.singular_ratio_tol = settings.SINGULAR_RATIO_TOL

    def check_all(
        self,
        run_label: str,
        cases: Sequence[Tuple[ProblemSpec, SweepCaseResult]],
    ) -> List[ContractViolation]:
        """
        Run all contract checks.

        Returns:
            List of newly recorded violations
        """
        db = self.session_factory()
        violations: List[ContractViolation] = []

        try:
            for spec, result in cases:
                findings = [
                    finding for finding in (
                        self._check_solver_error(result),
                        self._check_l2_bound(result),
                        self._check_trace_bound(result),
                        self._check_uniqueness(result),
                    ) if finding is not None
                ]
                if not findings:
                    continue

                self._write_repro(spec, result)
                for contract, severity, message in findings:
                    violation = self._create_violation(db, run_label, result, contract, severity, message)
                    if violation:
                        violations.append(violation)

            return violations

        finally:
            db.close()

    def _check_solver_error(self, result: SweepCaseResult) -> Optional[Finding]:
        if result.error is None:
            return None
        return "solver_error", "warning", f"case aborted: {result.error}"

    def _check_l2_bound(self, result: SweepCaseResult) -> Optional[Finding]:
        if result.l2_ratio is None or result.l2_ratio <= 1 + self.tol_l2:
            return None
        message = f"lambda*||u||/||f|| = {result.l2_ratio:.6g} exceeds {1 + self.tol_l2:.6g}"
        return "l2_bound", "critical", message

    def _check_trace_bound(self, result: SweepCaseResult) -> Optional[Finding]:
        if result.trace_lhs is None or result.trace_rhs is None:
            return None
        limit = result.trace_rhs * (1 + self.tol_trace)
        if result.trace_lhs <= limit:
            return None
        return "trace_bound", "critical", f"trace sum {result.trace_lhs:.6g} exceeds {limit:.6g}"

    def _check_uniqueness(self, result: SweepCaseResult) -> Optional[Finding]:
        if result.homogeneous_max is not None and result.homogeneous_max > self.uniqueness_tol:
            return "uniqueness", "critical", f"homogeneous solve has max |u| = {result.homogeneous_max:.3e}"
        if result.singular_ratio is not None and result.singular_ratio < self.singular_ratio_tol:
            return "uniqueness", "critical", f"sigma_min/sigma_max = {result.singular_ratio:.3e}"
        return None

    def _repro_path(self, result: SweepCaseResult) -> Path:
        return self.out_dir / f"repro_l{result.l}_case{result.case_index}.json"

    def _write_repro(self, spec: ProblemSpec, result: SweepCaseResult) -> Path:
        path = self._repro_path(result)
        write_json(path, {
            "spec": spec.model_dump(by_alias=True, mode="json"),
            "result": result.model_dump(mode="json"),
        })
        return path

    def _create_violation(
        self,
        db,
        run_label: str,
        result: SweepCaseResult,
        contract: str,
        severity: str,
        message: str,
    ) -> Optional[ContractViolation]:
        """
        Create a violation unless an open one exists for the same case and contract.
        """
        existing = db.query(ContractViolation).filter(
            ContractViolation.run_label == run_label,
            ContractViolation.l == result.l,
            ContractViolation.case_index == result.case_index,
            ContractViolation.contract == contract,
            ContractViolation.resolved_at.is_(None)
        ).first()

        if existing:
            logger.debug(f"Violation already open for {run_label}/l={result.l}/case={result.case_index}/{contract}")
            return None

        try:
            violation = ContractViolation(
                run_label=run_label,
                l=result.l,
                case_index=result.case_index,
                contract=contract,
                severity=severity,
                message=message,
                repro_path=str(self._repro_path(result)),
                triggered_at=datetime.now(timezone.utc)
            )

            db.add(violation)
            db.commit()
            db.refresh(violation)
            db.expunge(violation)

            log = logger.critical if severity == "critical" else logger.warning
            log(f"[l={result.l} case={result.case_index}] {message}")
            return violation

        except Exception as e:
            db.rollback()
            logger.error(f"Error recording violation: {e}", exc_info=True)
            return None


def open_violations(session_factory: sessionmaker = SessionLocal) -> List[ContractViolation]:
    """All unresolved violations, newest first."""
    db = session_factory()
    try:
        return (
            db.query(ContractViolation)
            .filter(ContractViolation.resolved_at.is_(None))
            .order_by(ContractViolation.triggered_at.desc(), ContractViolation.id.desc())
            .all()
        )
    finally:
        db.close()


def resolve_violation(violation_id: int, session_factory: sessionmaker = SessionLocal) -> bool:
    """
    Mark a violation resolved.

    Returns:
        False if it does not exist or is already resolved
    """
    db = session_factory()
    try:
        violation = db.get(ContractViolation, violation_id)
        if violation is None:
            logger.warning(f"Violation {violation_id} not found")
            return False
        if violation.resolved_at is not None:
            logger.warning(f"Violation {violation_id} is already resolved")
            return False

        violation.resolved_at = datetime.now(timezone.utc)
        db.commit()
        logger.info(f"Resolved violation {violation_id} ({violation.contract})")
        return True

    except Exception as e:
        db.rollback()
        logger.error(f"Error resolving violation {violation_id}: {e}", exc_info=True)
        return False

    finally:
        db.close()
