"""
Pydantic schemas for problem specs, reports and run configuration.

The JSON field names here (``l``, ``lambda``, ``length``, ``bc.kind``,
``forcing.kind``, report keys ``A``/``B``/``family``) are part of the CLI contract.
"""
from enum import Enum
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------

class CanonicalDiagonal(BaseModel):
    """
    Reduced boundary set: u(0)=u(L)=D^l u(L)=0,
    D^{l+j}u(0) = a[j-1] D^{l-j}u(0) and D^{l+j}u(L) = b[j-1] D^{l-j}u(L), j=1..l-1.

    For l=1 both lists are empty and the conditions are u(0)=u(L)=Du(L)=0.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["canonical"] = "canonical"
    a: List[float] = Field(default_factory=list, description="a_{l+j,l-j}, j=1..l-1")
    b: List[float] = Field(default_factory=list, description="b_{l+j,l-j}, j=1..l-1")


class GeneralFull(BaseModel):
    """
    Full coefficient form together with u(0)=u(L)=0.

    A[i-(l+1)][j-1] = a_ij for i=l+1..2l-1, j=1..l
    B[i-l][j-1]     = b_ij for i=l..2l-1,   j=1..l-1
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["general"] = "general"
    A: List[List[float]] = Field(default_factory=list)
    B: List[List[float]] = Field(default_factory=list)


class RawLinearForms(BaseModel):
    """
    Homogeneous linear forms in the boundary jet, together with u(0)=u(L)=0.

    alpha[k][i-1] multiplies D^i u(0), k=1..l-1; beta[k][i-1] multiplies D^i u(L), k=1..l.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["raw"] = "raw"
    alpha: List[List[float]] = Field(default_factory=list)
    beta: List[List[float]] = Field(default_factory=list)


BoundaryCoefficients = Annotated[
    Union[CanonicalDiagonal, GeneralFull, RawLinearForms],
    Field(discriminator="kind"),
]


# ---------------------------------------------------------------------------
# Forcing
# ---------------------------------------------------------------------------

class ExactPolynomial(BaseModel):
    """Polynomial forcing; coeffs[k] multiplies x^k."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["polynomial"] = "polynomial"
    coeffs: List[float] = Field(default_factory=list)


class TrigSum(BaseModel):
    """Forcing sum_k amplitude_k * sin(frequency_k * x + phase_k)."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["trig"] = "trig"
    terms: List[Tuple[float, float, float]] = Field(default_factory=list)


class GridSamples(BaseModel):
    """Forcing values at the solver nodes."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["samples"] = "samples"
    values: List[float] = Field(default_factory=list)


ForcingSpec = Annotated[
    Union[ExactPolynomial, TrigSum, GridSamples],
    Field(discriminator="kind"),
]


# ---------------------------------------------------------------------------
# Problem
# ---------------------------------------------------------------------------

class ProblemSpec(BaseModel):
    """Full boundary value problem instance."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    l: int = Field(..., description="Dispersion order parameter; equation order is 2l+1")
    lam: float = Field(..., alias="lambda", description="Zeroth-order coefficient")
    length: float = Field(..., description="Interval length L")
    bc: BoundaryCoefficients
    forcing: ForcingSpec


class Violation(BaseModel):
    """One broken ProblemSpec invariant."""
    model_config = ConfigDict(frozen=True)

    field: str
    message: str


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class FormulaFamily(str, Enum):
    L1 = "L1"
    L2_GENERAL = "L2_general"
    L2_REDUCED = "L2_reduced"
    L3_GENERAL = "L3_general"
    L3_REDUCED = "L3_reduced"
    GENERAL_L_FULL = "GeneralL_full"
    GENERAL_L_REDUCED = "GeneralL_reduced"


class AdmissibilityReport(BaseModel):
    """Margins A_1..A_l, B_1..B_{l-1} and the verdict."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    l: int
    formula_family: FormulaFamily = Field(..., alias="family")
    margins_A: List[float] = Field(default_factory=list, alias="A")
    margins_B: List[float] = Field(default_factory=list, alias="B")
    admissible: bool

    @property
    def M1(self) -> Optional[float]:
        """Smallest margin, or None when the report carries no margins."""
        values = self.margins_A + self.margins_B
        return min(values) if values else None


class ConvergenceReport(BaseModel):
    """Mesh-refinement errors and the least-squares order fit."""
    model_config = ConfigDict(frozen=True)

    grid_sizes: List[int]
    max_errors: List[float]
    l2_errors: List[float]
    fitted_order: Optional[float] = None
    plateau_from: Optional[int] = None  # first grid whose error is at rounding level
    mode: Literal["exact", "self"] = "exact"
    reference_n: Optional[int] = None
    passed: bool = False


class EstimateReport(BaseModel):
    """Discrete check of the a priori estimates for one solve."""
    model_config = ConfigDict(frozen=True)

    l: int
    n: int
    p: int
    l2_ratio: float = Field(..., description="lambda*||u||/||f||")
    trace_lhs: float
    trace_rhs: float
    hl_ratio: float = Field(..., description="||u||_{H^l}/||f||")
    h2l1_ratio: float = Field(..., description="||u||_{H^{2l+1}}/||f||")
    M1: float
    weighted_lhs: float
    weighted_rhs: float
    condition_estimate: float
    l2_ok: bool
    trace_ok: bool
    weighted_ok: bool

    @property
    def passed(self) -> bool:
        return self.l2_ok and self.trace_ok


class SweepCaseResult(BaseModel):
    """One Monte-Carlo case of the estimate sweep (one CSV row)."""
    model_config = ConfigDict(frozen=True)

    l: int
    case_index: int
    lam: float
    length: float
    M1: Optional[float] = None
    l2_ratio: Optional[float] = None
    trace_lhs: Optional[float] = None
    trace_rhs: Optional[float] = None
    hl_ratio: Optional[float] = None
    h2l1_ratio: Optional[float] = None
    homogeneous_max: Optional[float] = None
    singular_ratio: Optional[float] = None
    l2_ok: bool = False
    trace_ok: bool = False
    unique_ok: bool = False
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and self.l2_ok and self.trace_ok and self.unique_ok


class LemmaSuiteRow(BaseModel):
    """Worst residual of one (lemma, order, length) block of the identity suite."""
    model_config = ConfigDict(frozen=True)

    lemma: str
    order: int
    length: float
    samples: int
    worst_relative_residual: float
    failures: int


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

class RunConfig(BaseModel):
    """Validated command-line configuration."""
    model_config = ConfigDict(frozen=True)

    command: Literal["check", "solve", "verify-lemmas", "mms", "estimates", "sweep"]
    spec_path: Optional[Path] = None
    grid_n: int
    accuracy_p: Literal[2, 4]
    seed: int
    out_dir: Path
    tol_l2: float
    tol_trace: float
    max_l: int
    cases: Optional[int] = None
    orders: List[int]
    manufactured: bool = False
    database_url: Optional[str] = None
