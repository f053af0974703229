"""
Command-line front end for the dispersive BVP toolkit.

Commands:
- check          - admissibility report of a spec's boundary coefficients
- solve          - discrete solution written as CSV and JSON
- verify-lemmas  - integration-by-parts identities on random polynomials
- mms            - mesh-refinement convergence study
- estimates      - a priori estimate contracts on one spec
- sweep          - Monte-Carlo estimate sweep over random admissible cases

Reports go to standard output and --out; logs and errors go to standard error.
"""
import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.core.database import SessionLocal, session_factory_for
from app.core.exceptions import DispersiveError, SpecValidationError, UsageError
from app.models.schemas import ProblemSpec, RunConfig, Violation
from app.services.admissibility import margins
from app.services.discretize import Grid, minimum_nodes
from app.services.polycalc import lemma_suite
from app.services.problem import ensure_valid, load_spec, reduced_spec
from app.services.reporting import (
    solution_to_dict,
    summarize,
    to_json,
    write_json,
    write_metadata,
    write_solution_csv,
    write_sweep_csv,
)
from app.services.sweep import EstimateSweep
from app.services.verify import (
    convergence_study,
    estimate_check,
    manufactured_spec,
    polynomial_satisfying_bcs,
    solve,
)

logger = logging.getLogger(__name__)

COMMANDS = ["check", "solve", "verify-lemmas", "mms", "estimates", "sweep"]

# Exit code for a run that completed but whose contract did not hold
CONTRACT_FAILED = 2


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as exit code 1 instead of argparse's 2."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", type=Path, default=None, help="problem spec JSON file")
    common.add_argument("--n", type=int, default=None,
                        help="grid nodes; the coarsest grid for mms")
    common.add_argument("--p", type=int, choices=settings.SUPPORTED_P, default=settings.ACCURACY_P,
                        help="accuracy order of the quadratures")
    common.add_argument("--seed", type=int, default=settings.SEED)
    common.add_argument("--out", type=Path, default=Path(settings.OUT_DIR), help="output directory")
    common.add_argument("--tol-l2", type=float, default=settings.TOL_L2)
    common.add_argument("--tol-trace", type=float, default=settings.TOL_TRACE)
    common.add_argument("--max-l", type=int, default=settings.MAX_L, help="largest order accepted")
    common.add_argument("--cases", type=int, default=None,
                        help="sweep cases per order, or lemma samples per block")
    common.add_argument("--orders", type=int, nargs="+", default=None, help="orders l swept")
    common.add_argument("--manufactured", action="store_true",
                        help="replace the forcing by that of a polynomial meeting the boundary conditions")
    common.add_argument("--db", default=None, help="sweep ledger database URL")

    parser = _Parser(prog="dispersive", description="Stationary dispersive boundary value problems")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    try:
        return RunConfig(
            command=args.command,
            spec_path=args.spec,
            grid_n=args.n if args.n is not None else _default_grid_n(args.command),
            accuracy_p=args.p,
            seed=args.seed,
            out_dir=args.out,
            tol_l2=args.tol_l2,
            tol_trace=args.tol_trace,
            max_l=args.max_l,
            cases=args.cases,
            orders=args.orders if args.orders is not None else settings.SWEEP_ORDERS,
            manufactured=args.manufactured,
            database_url=args.db,
        )
    except ValidationError as e:
        raise UsageError(str(e))


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _default_grid_n(command: str) -> int:
    return settings.MMS_GRID_N if command == "mms" else settings.GRID_N


def _reference_n(finest: int) -> int:
    """Largest nested refinement of the finest grid, at most 8x, within MAX_N."""
    for factor in (8, 4, 2):
        n = factor * (finest - 1) + 1
        if n <= settings.MAX_N:
            return n
    return 2 * (finest - 1) + 1


def _check_grid(n: int, l: int, p: int):
    violations = []
    if n > settings.MAX_N:
        violations.append(Violation(field="n", message=f"grid size {n} exceeds the limit {settings.MAX_N}"))
    if n < minimum_nodes(l, p):
        violations.append(Violation(field="n", message=f"l={l}, p={p} needs at least {minimum_nodes(l, p)} nodes"))
    if violations:
        raise SpecValidationError(violations)


def _load(config: RunConfig, n: Optional[int] = None) -> ProblemSpec:
    """The spec of --spec, validated against --max-l and, for sampled forcing, n."""
    if config.spec_path is None:
        raise SpecValidationError([Violation(field="spec", message=f"--spec is required for {config.command}")])
    spec = load_spec(config.spec_path)
    if spec.l > config.max_l:
        raise SpecValidationError([Violation(field="l", message=f"l={spec.l} exceeds --max-l {config.max_l}")])
    return ensure_valid(spec, n)


def _metadata(config: RunConfig, **extra):
    payload = {"config": config.model_dump(mode="json")}
    payload.update(extra)
    write_metadata(config.out_dir, config.command, payload)


def _manufactured(spec: ProblemSpec, p: int, seed: int):
    reduced = reduced_spec(spec)
    degree = max(2 * spec.l + 2, 2 * spec.l + p)
    u = polynomial_satisfying_bcs(spec.l, reduced.bc, spec.length, degree, seed)
    return manufactured_spec(reduced, u), u


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def run_check(config: RunConfig) -> int:
    """Print the admissibility report; exit 2 when the coefficients are not admissible."""
    spec = _load(config)
    report = margins(spec.l, reduced_spec(spec).bc)
    print(to_json(report.model_dump(by_alias=True, mode="json")))
    return 0 if report.admissible else CONTRACT_FAILED


def run_solve(config: RunConfig) -> int:
    spec = _load(config, config.grid_n)
    _check_grid(config.grid_n, spec.l, config.accuracy_p)
    if config.manufactured:
        spec, _ = _manufactured(spec, config.accuracy_p, config.seed)

    solution = solve(spec, Grid(config.grid_n, spec.length), config.accuracy_p)
    csv_path = write_solution_csv(solution, config.out_dir / "solution.csv")
    json_path = write_json(config.out_dir / "solution.json", solution_to_dict(solution))
    _metadata(config)
    print(to_json({
        "files": [str(csv_path), str(json_path)],
        "condition_estimate": solution.condition_estimate,
        "residual_norm": solution.residual_norm,
    }))
    return 0


def run_verify_lemmas(config: RunConfig) -> int:
    """Identity suite for every order up to --max-l; exit 2 on any failing sample."""
    samples = config.cases if config.cases is not None else settings.LEMMA_SAMPLES
    rows = lemma_suite(
        max_order=config.max_l,
        samples=samples,
        max_degree=settings.LEMMA_MAX_DEGREE,
        lengths=settings.LEMMA_LENGTHS,
        seed=config.seed,
        tol=settings.LEMMA_TOL,
    )
    payload = [row.model_dump(mode="json") for row in rows]
    write_json(config.out_dir / "lemmas.json", payload)
    _metadata(config)

    failures = sum(row.failures for row in rows)
    print(to_json({
        "blocks": len(rows),
        "failures": failures,
        "worst_relative_residual": max(row.worst_relative_residual for row in rows),
    }))
    return 0 if failures == 0 else CONTRACT_FAILED


def run_mms(config: RunConfig) -> int:
    """
    Convergence on the grids n, 2n-1, 4n-3.

    With --manufactured the errors are taken against a polynomial meeting the
    boundary conditions; otherwise against a solve on a nested grid up to 8x
    finer than the finest one.
    """
    spec = _load(config)
    n = config.grid_n
    grids = [n, 2 * n - 1, 4 * n - 3]
    reference_n = _reference_n(grids[-1])
    _check_grid(grids[-1] if config.manufactured else reference_n, spec.l, config.accuracy_p)
    _check_grid(n, spec.l, config.accuracy_p)

    if config.manufactured:
        spec, exact = _manufactured(spec, config.accuracy_p, config.seed)
        report = convergence_study(spec, grids, config.accuracy_p, exact=exact)
    else:
        report = convergence_study(spec, grids, config.accuracy_p, reference_n=reference_n)

    write_json(config.out_dir / "convergence.json", report.model_dump(mode="json"))
    _metadata(config)
    print(to_json(report.model_dump(mode="json")))
    return 0 if report.passed else CONTRACT_FAILED


def run_estimates(config: RunConfig) -> int:
    spec = _load(config, config.grid_n)
    _check_grid(config.grid_n, spec.l, config.accuracy_p)
    report = estimate_check(
        spec, Grid(config.grid_n, spec.length), config.accuracy_p, config.tol_l2, config.tol_trace,
    )
    payload = report.model_dump(mode="json")
    payload["passed"] = report.passed
    write_json(config.out_dir / "estimates.json", payload)
    _metadata(config)
    print(to_json(payload))
    return 0 if report.passed else CONTRACT_FAILED


def run_sweep(config: RunConfig) -> int:
    """Random admissible cases per order; exit 2 if any case breaks a contract."""
    too_high = [l for l in config.orders if l > config.max_l or l < 1]
    if too_high:
        raise SpecValidationError([
            Violation(field="orders", message=f"orders {too_high} outside 1..{config.max_l}")
        ])
    for l in config.orders:
        _check_grid(config.grid_n, l, config.accuracy_p)

    session_factory = session_factory_for(config.database_url) if config.database_url else SessionLocal
    sweep = EstimateSweep(
        orders=config.orders,
        cases=config.cases if config.cases is not None else settings.SWEEP_CASES,
        n=config.grid_n,
        p=config.accuracy_p,
        seed=config.seed,
        tol_l2=config.tol_l2,
        tol_trace=config.tol_trace,
        session_factory=session_factory,
        out_dir=config.out_dir,
    )
    results = asyncio.run(sweep.run_all())

    write_sweep_csv(results, config.out_dir / "sweep.csv")
    summary = summarize(results)
    write_json(config.out_dir / "sweep.json", {
        "run_label": sweep.run_label,
        "summary": summary,
        "cases": [dict(r.model_dump(mode="json"), passed=r.passed) for r in results],
    })
    _metadata(config, run_label=sweep.run_label)
    print(to_json(summary))
    return 0 if summary["passed"] == summary["cases"] else CONTRACT_FAILED


HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "check": run_check,
    "solve": run_solve,
    "verify-lemmas": run_verify_lemmas,
    "mms": run_mms,
    "estimates": run_estimates,
    "sweep": run_sweep,
}


def _report_error(payload: dict):
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def run(config: RunConfig) -> int:
    """Run one command and map its outcome to an exit code."""
    logger.info(f"Running {config.command}")
    try:
        return HANDLERS[config.command](config)
    except DispersiveError as e:
        logger.error(f"{config.command} failed: {e}")
        _report_error(e.to_dict())
        return e.exit_code
    except OSError as e:
        logger.error(f"{config.command} failed: {e}", exc_info=True)
        _report_error({"error": type(e).__name__, "message": str(e), "exit_code": 1})
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = parse_config(argv)
    except DispersiveError as e:
        _report_error(e.to_dict())
        return e.exit_code
    return run(config)
