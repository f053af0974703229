"""
Monte-Carlo sweep of the a priori estimates.

Each case draws random admissible diagonal coefficients, a random lambda and a
random trigonometric forcing from its own seed, then runs the estimate check
and the homogeneous uniqueness solve.

Features:
- Deterministic: case k of order l always uses the seed sequence (seed, l, k)
- Resilient: a failing case is recorded and the sweep continues
- Idempotent: rerunning a sweep against the same ledger doesn't duplicate cases
"""
import asyncio
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import sessionmaker

from app.core.config import settings
from app.core.database import SessionLocal, init_db
from app.core.exceptions import DispersiveError
from app.models.models import SweepCase
from app.models.schemas import ProblemSpec, SweepCaseResult, TrigSum
from app.services.admissibility import random_admissible_canonical
from app.services.contract_checker import ContractChecker
from app.services.discretize import Grid
from app.services.verify import estimate_check, uniqueness_check

logger = logging.getLogger(__name__)


def random_trig_forcing(rng: np.random.Generator) -> TrigSum:
    """1 to 3 terms, amplitude in [0.5, 2], frequency in [1, 4], phase in [0, 2pi]."""
    count = int(rng.integers(1, 4))
    terms = [
        (float(rng.uniform(0.5, 2.0)), float(rng.uniform(1.0, 4.0)), float(rng.uniform(0.0, 2 * np.pi)))
        for _ in range(count)
    ]
    return TrigSum(terms=terms)


def draw_case(l: int, case_index: int, seed: int) -> ProblemSpec:
    """The random admissible problem of case (l, case_index)."""
    rng = np.random.default_rng([seed, l, case_index])
    bc = random_admissible_canonical(l, rng, settings.MARGIN_FLOOR, settings.MARGIN_CEIL)
    lam = float(rng.uniform(0.5, 2.0))
    return ProblemSpec(l=l, lam=lam, length=1.0, bc=bc, forcing=random_trig_forcing(rng))


class EstimateSweep:
    """Runs and records a sweep of random admissible cases."""

    def __init__(
        self,
        orders: Sequence[int],
        cases: int,
        n: int,
        p: int,
        seed: int,
        tol_l2: Optional[float] = None,
        tol_trace: Optional[float] = None,
        session_factory: sessionmaker = SessionLocal,
        out_dir=None,
    ):
        self.orders = list(orders)
        self.cases = cases
        self.n = n
        self.p = p
        self.seed = seed
        self.tol_l2 = settings.TOL_L2 if tol_l2 is None else tol_l2
        self.tol_trace = settings.TOL_TRACE if tol_trace is None else tol_trace
        self.session_factory = session_factory
        self.contract_checker = ContractChecker(
            session_factory=session_factory,
            out_dir=out_dir,
            tol_l2=self.tol_l2,
            tol_trace=self.tol_trace,
        )

    @property
    def run_label(self) -> str:
        return f"seed{self.seed}-n{self.n}-p{self.p}"

    async def run_all(self) -> List[SweepCaseResult]:
        """
        Run every case of every order.

        Returns:
            Case results ordered by (l, case_index)
        """
        logger.info(
            f"Starting sweep {self.run_label}: orders={self.orders}, {self.cases} cases each"
        )
        keys = [(l, k) for l in self.orders for k in range(self.cases)]

        # Cases are independent; one failing case doesn't stop the others
        tasks = [asyncio.to_thread(self._run_case, l, k) for l, k in keys]
        outcomes = await asyncio.gather(*tasks, return_exceptions=True)

        pairs: List[Tuple[ProblemSpec, SweepCaseResult]] = []
        successful = 0
        failed = 0

        for (l, k), outcome in zip(keys, outcomes):
            if isinstance(outcome, Exception):
                logger.error(f"Case l={l} k={k} crashed: {outcome}")
                spec = draw_case(l, k, self.seed)
                outcome = (spec, SweepCaseResult(
                    l=l, case_index=k, lam=spec.lam, length=spec.length, error=str(outcome),
                ))
            spec, result = outcome
            pairs.append((spec, result))
            if result.passed:
                successful += 1
            else:
                failed += 1

        logger.info(f"Sweep complete: {successful} passed, {failed} failed")

        init_db(self.session_factory)
        for _, result in pairs:
            self._store_case(result)

        # Check contracts after recording
        self._run_contract_checks(pairs)

        return [result for _, result in pairs]

    def _run_case(self, l: int, k: int) -> Tuple[ProblemSpec, SweepCaseResult]:
        spec = draw_case(l, k, self.seed)
        grid = Grid(self.n, spec.length)
        try:
            report = estimate_check(spec, grid, self.p, self.tol_l2, self.tol_trace)
            uniqueness = uniqueness_check(spec, grid, self.p)
        except DispersiveError as e:
            logger.error(f"Error in case l={l} k={k}: {e}", exc_info=True)
            return spec, SweepCaseResult(
                l=l, case_index=k, lam=spec.lam, length=spec.length,
                error=f"{type(e).__name__}: {e}",
            )

        return spec, SweepCaseResult(
            l=l,
            case_index=k,
            lam=spec.lam,
            length=spec.length,
            M1=report.M1,
            l2_ratio=report.l2_ratio,
            trace_lhs=report.trace_lhs,
            trace_rhs=report.trace_rhs,
            hl_ratio=report.hl_ratio,
            h2l1_ratio=report.h2l1_ratio,
            homogeneous_max=uniqueness.homogeneous_max,
            singular_ratio=uniqueness.singular_ratio,
            l2_ok=report.l2_ok,
            trace_ok=report.trace_ok,
            unique_ok=uniqueness.unique,
        )

    def _store_case(self, result: SweepCaseResult) -> bool:
        """
        Store a case in the ledger.

        A duplicate (same run label, l and case index) is skipped for idempotency.
        """
        db = self.session_factory()
        try:
            row = SweepCase(
                run_label=self.run_label,
                l=result.l,
                case_index=result.case_index,
                lam=result.lam,
                length=result.length,
                M1=result.M1,
                l2_ratio=result.l2_ratio,
                trace_lhs=result.trace_lhs,
                trace_rhs=result.trace_rhs,
                hl_ratio=result.hl_ratio,
                h2l1_ratio=result.h2l1_ratio,
                homogeneous_max=result.homogeneous_max,
                singular_ratio=result.singular_ratio,
                passed=result.passed,
                error=result.error,
            )

            db.add(row)
            db.commit()
            logger.debug(f"Stored case l={result.l} k={result.case_index}")
            return True

        except IntegrityError:
            # Duplicate entry - this is expected for idempotency
            db.rollback()
            logger.info(f"Duplicate case {self.run_label}/l={result.l}/k={result.case_index} - skipped")
            return True

        except Exception as e:
            db.rollback()
            logger.error(f"Error storing case l={result.l} k={result.case_index}: {e}", exc_info=True)
            return False

        finally:
            db.close()

    def _run_contract_checks(self, pairs: Sequence[Tuple[ProblemSpec, SweepCaseResult]]):
        try:
            violations = self.contract_checker.check_all(self.run_label, pairs)
            if violations:
                logger.warning(f"Recorded {len(violations)} contract violations")
            else:
                logger.info("No contract violations")
        except Exception as e:
            logger.error(f"Error running contract checks: {e}", exc_info=True)
