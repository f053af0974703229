"""
Problem spec validation, boundary-condition representations and raw-form reduction.
"""
import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as P
from pydantic import ValidationError
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from app.core.config import settings
from app.core.exceptions import SingularReduction, SpecValidationError
from app.models.schemas import (
    CanonicalDiagonal,
    ExactPolynomial,
    GeneralFull,
    GridSamples,
    ProblemSpec,
    RawLinearForms,
    TrigSum,
    Violation,
)

logger = logging.getLogger(__name__)

Coefficients = Union[CanonicalDiagonal, GeneralFull, RawLinearForms]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _matrix_violations(name: str, rows: List[List[float]], n_rows: int, n_cols: int) -> List[Violation]:
    if n_cols == 0 and not rows:
        rows = [[] for _ in range(n_rows)]
    if len(rows) != n_rows or any(len(r) != n_cols for r in rows):
        shape = f"{len(rows)}x{'/'.join(str(len(r)) for r in rows) or 0}"
        return [Violation(field=name, message=f"shape must be {n_rows}x{n_cols}, got {shape}")]
    if not all(math.isfinite(v) for r in rows for v in r):
        return [Violation(field=name, message="entries must be finite reals")]
    return []


def _list_violations(name: str, values: List[float], size: int) -> List[Violation]:
    if len(values) != size:
        return [Violation(field=name, message=f"coefficient map size must be l-1={size}, got {len(values)}")]
    if not all(math.isfinite(v) for v in values):
        return [Violation(field=name, message="entries must be finite reals")]
    return []


def bc_violations(l: int, bc: Coefficients) -> List[Violation]:
    """Shape and finiteness checks of a boundary coefficient set against l."""
    if isinstance(bc, CanonicalDiagonal):
        return _list_violations("bc.a", bc.a, l - 1) + _list_violations("bc.b", bc.b, l - 1)
    if isinstance(bc, GeneralFull):
        return (
            _matrix_violations("bc.A", bc.A, l - 1, l)
            + _matrix_violations("bc.B", bc.B, l, l - 1)
        )
    return (
        _matrix_violations("bc.alpha", bc.alpha, l - 1, 2 * l - 1)
        + _matrix_violations("bc.beta", bc.beta, l, 2 * l - 1)
    )


def validate_spec(spec: ProblemSpec, n: Optional[int] = None) -> List[Violation]:
    """
    Check every ProblemSpec invariant.

    Returns one Violation per broken invariant; an empty list means the spec is valid.
    ``n`` is the grid size sampled forcing is going to be used with, if known.
    """
    violations: List[Violation] = []

    if spec.l < 1:
        violations.append(Violation(field="l", message="l must be >= 1"))
    if not (math.isfinite(spec.lam) and spec.lam > 0):
        violations.append(Violation(field="lambda", message="lambda must be > 0"))
    if not (math.isfinite(spec.length) and spec.length > 0):
        violations.append(Violation(field="length", message="length must be > 0"))

    if spec.l >= 1:
        violations.extend(bc_violations(spec.l, spec.bc))

    forcing = spec.forcing
    if isinstance(forcing, ExactPolynomial):
        values = forcing.coeffs
    elif isinstance(forcing, TrigSum):
        values = [v for term in forcing.terms for v in term]
    else:
        values = forcing.values
        if n is not None and len(values) != n:
            violations.append(Violation(
                field="forcing.values",
                message=f"sample count must equal grid size {n}, got {len(values)}",
            ))
    if not all(math.isfinite(v) for v in values):
        violations.append(Violation(field="forcing", message="forcing data must be finite reals"))

    return violations


def ensure_valid(spec: ProblemSpec, n: Optional[int] = None) -> ProblemSpec:
    violations = validate_spec(spec, n)
    if violations:
        raise SpecValidationError(violations)
    return spec


# ---------------------------------------------------------------------------
# Representations
# ---------------------------------------------------------------------------

def _check_pivots(block: np.ndarray, name: str):
    """LU-factor a square sub-block, rejecting it when the smallest pivot is negligible."""
    scale = float(np.max(np.abs(block))) if block.size else 0.0
    if scale == 0.0:
        raise SingularReduction(f"{name} high-derivative sub-block is zero")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(block)
    smallest = float(np.min(np.abs(np.diag(lu))))
    if smallest < settings.SINGULAR_REDUCTION_TOL * scale:
        raise SingularReduction(
            f"{name} high-derivative sub-block is singular "
            f"(smallest pivot {smallest:.3e}, max entry {scale:.3e})"
        )
    return lu, piv


def reduce_raw_forms(l: int, raw: RawLinearForms) -> GeneralFull:
    """
    Solve the raw linear forms for the high boundary derivatives.

    At x=0 the columns of D^{l+1}..D^{2l-1} are eliminated, at x=L those of
    D^l..D^{2l-1}. The result satisfies the raw forms identically for every jet.
    """
    violations = bc_violations(l, raw)
    if violations:
        raise SpecValidationError(violations)
    alpha = np.asarray(raw.alpha, dtype=float).reshape(l - 1, 2 * l - 1)
    beta = np.asarray(raw.beta, dtype=float).reshape(l, 2 * l - 1)

    if l > 1:
        factor = _check_pivots(alpha[:, l:2 * l - 1], "alpha")
        A = -lu_solve(factor, alpha[:, 0:l])
    else:
        A = np.zeros((0, l))

    factor = _check_pivots(beta[:, l - 1:2 * l - 1], "beta")
    B = -lu_solve(factor, beta[:, 0:l - 1]) if l > 1 else np.zeros((1, 0))

    logger.debug(f"Reduced raw forms for l={l}")
    return GeneralFull(A=A.tolist(), B=B.tolist())


def encode_raw_forms(l: int, general: GeneralFull) -> RawLinearForms:
    """Raw forms with an identity block on the high derivatives."""
    A = np.asarray(general.A, dtype=float).reshape(l - 1, l)
    B = np.asarray(general.B, dtype=float).reshape(l, l - 1)
    alpha = np.hstack([-A, np.eye(l - 1)])
    beta = np.hstack([-B, np.eye(l)])
    return RawLinearForms(alpha=alpha.tolist(), beta=beta.tolist())


def to_general(l: int, bc: Coefficients) -> GeneralFull:
    """Express any representation in full coefficient form."""
    if isinstance(bc, GeneralFull):
        return bc
    if isinstance(bc, RawLinearForms):
        return reduce_raw_forms(l, bc)

    A = np.zeros((l - 1, l))
    B = np.zeros((l, l - 1))
    for j in range(1, l):
        A[j - 1, l - j - 1] = bc.a[j - 1]
        B[j, l - j - 1] = bc.b[j - 1]
    return GeneralFull(A=A.tolist(), B=B.tolist())


def reduced_spec(spec: ProblemSpec) -> ProblemSpec:
    """Same problem with raw forms replaced by their coefficient form."""
    if isinstance(spec.bc, RawLinearForms):
        return spec.model_copy(update={"bc": reduce_raw_forms(spec.l, spec.bc)})
    return spec


@dataclass(frozen=True)
class BoundaryRelation:
    """
    One homogeneous boundary condition sum(coef * D^order u(end)) = 0.

    ``end`` is "0" or "L"; ``label`` is the row tag used in assembly.
    """
    end: str
    label: str
    terms: Tuple[Tuple[int, float], ...]


def boundary_relations(l: int, bc: Coefficients) -> List[BoundaryRelation]:
    """
    The 2l+1 boundary conditions: l at x=0 first, then l+1 at x=L.
    """
    general = to_general(l, bc)
    relations = [BoundaryRelation(end="0", label="bc-dirichlet-0", terms=((0, 1.0),))]

    for j in range(1, l):
        row = general.A[j - 1]
        terms = [(l + j, 1.0)] + [(k, -row[k - 1]) for k in range(1, l + 1) if row[k - 1] != 0.0]
        relations.append(BoundaryRelation(end="0", label=f"bc-relation(0, {j})", terms=tuple(terms)))

    relations.append(BoundaryRelation(end="L", label="bc-dirichlet-L", terms=((0, 1.0),)))
    for j in range(0, l):
        row = general.B[j] if j < len(general.B) else []
        terms = [(l + j, 1.0)] + [(k, -row[k - 1]) for k in range(1, l) if row[k - 1] != 0.0]
        label = "bc-Dl-L" if j == 0 else f"bc-relation(L, {j})"
        relations.append(BoundaryRelation(end="L", label=label, terms=tuple(terms)))

    return relations


# ---------------------------------------------------------------------------
# Forcing
# ---------------------------------------------------------------------------

def evaluate_forcing(spec: ProblemSpec, x: np.ndarray) -> np.ndarray:
    """Forcing values at the points x (the solver nodes for sampled forcing)."""
    forcing = spec.forcing
    x = np.asarray(x, dtype=float)

    if isinstance(forcing, ExactPolynomial):
        if not forcing.coeffs:
            return np.zeros_like(x)
        return P.polyval(x, np.asarray(forcing.coeffs, dtype=float))

    if isinstance(forcing, TrigSum):
        total = np.zeros_like(x)
        for amplitude, frequency, phase in forcing.terms:
            total += amplitude * np.sin(frequency * x + phase)
        return total

    if isinstance(forcing, GridSamples):
        if len(forcing.values) != x.size:
            raise SpecValidationError([Violation(
                field="forcing.values",
                message=f"sample count must equal grid size {x.size}, got {len(forcing.values)}",
            )])
        return np.asarray(forcing.values, dtype=float)

    raise TypeError(f"unsupported forcing {type(forcing).__name__}")


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------

def load_spec(path: Union[str, Path]) -> ProblemSpec:
    """Read a ProblemSpec JSON document; schema errors become SpecValidationError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return ProblemSpec.model_validate_json(text)
    except ValidationError as e:
        violations = [
            Violation(field=".".join(str(p) for p in err["loc"]) or "<root>", message=err["msg"])
            for err in e.errors()
        ]
        raise SpecValidationError(violations) from e


def dump_spec(spec: ProblemSpec) -> str:
    return json.dumps(spec.model_dump(by_alias=True, mode="json"), indent=2, sort_keys=True)
