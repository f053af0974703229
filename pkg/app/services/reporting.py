"""
Report writers. Report files are deterministic: floats are written with 17
significant digits and '.' as decimal separator, keys are sorted, and the only
timestamp lives in metadata.json.
"""
import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

import numpy as np

from app.models.schemas import SweepCaseResult
from app.services.discretize import GridSolution

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "l", "case_index", "lam", "length", "M1", "l2_ratio", "trace_lhs", "trace_rhs",
    "hl_ratio", "h2l1_ratio", "homogeneous_max", "singular_ratio", "l2_ok", "trace_ok", "unique_ok", "passed", "error",
]


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def to_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True)


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(payload) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def solution_to_dict(solution: GridSolution) -> Dict[str, Any]:
    return {
        "l": solution.l,
        "n": solution.grid.n,
        "p": solution.p,
        "length": solution.grid.length,
        "values": [float(v) for v in solution.values],
        "traces_at0": [float(v) for v in solution.traces_at0],
        "traces_atL": [float(v) for v in solution.traces_atL],
        "condition_estimate": float(solution.condition_estimate),
        "residual_norm": float(solution.residual_norm),
    }


def write_solution_csv(solution: GridSolution, path: Path) -> Path:
    """Columns x, u."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["x", "u"])
        for x, u in zip(solution.grid.nodes, solution.values):
            writer.writerow([format_float(x), format_float(u)])
    logger.info(f"Wrote {path}")
    return path


def write_sweep_csv(results: Sequence[SweepCaseResult], path: Path) -> Path:
    """One row per case, ordered as given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for result in results:
            row = result.model_dump()
            row["passed"] = result.passed
            writer.writerow([_cell(row[c]) for c in SWEEP_COLUMNS])
    logger.info(f"Wrote {path} ({len(results)} cases)")
    return path


def write_metadata(out_dir: Path, command: str, extra: Dict[str, Any] = None) -> Path:
    """Run metadata, the one place a wall-clock timestamp is written."""
    payload = {"command": command, "finished_at": datetime.now(timezone.utc).isoformat()}
    payload.update(extra or {})
    return write_json(Path(out_dir) / "metadata.json", payload)


def summarize(results: Iterable[SweepCaseResult]) -> Dict[str, Any]:
    results = list(results)
    by_order: Dict[str, Dict[str, Any]] = {}
    for r in results:
        entry = by_order.setdefault(str(r.l), {"cases": 0, "passed": 0, "max_l2_ratio": None})
        entry["cases"] += 1
        entry["passed"] += int(r.passed)
        if r.l2_ratio is not None:
            current = entry["max_l2_ratio"]
            entry["max_l2_ratio"] = r.l2_ratio if current is None else max(current, r.l2_ratio)
    return {
        "cases": len(results),
        "passed": sum(1 for r in results if r.passed),
        "by_order": by_order,
    }
