"""
Admissibility margins and the boundary quadratic form.

Margins are the coefficients of the lower bound

    I >= sum_i B_i (D^i u(L))^2 + sum_i A_i (D^i u(0))^2

obtained by Cauchy-type estimates on the boundary form I. Positive margins make
I nonnegative, which is what the existence and uniqueness argument needs.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from app.core.exceptions import UnreducedRawForms
from app.models.schemas import (
    AdmissibilityReport,
    CanonicalDiagonal,
    FormulaFamily,
    GeneralFull,
    RawLinearForms,
)
from app.services.problem import Coefficients, to_general

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundaryJet:
    """D^1u..D^{2l}u at x=0 (at0) and x=L (atL); u itself vanishes at both ends."""
    at0: Tuple[float, ...]
    atL: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "at0", tuple(float(v) for v in self.at0))
        object.__setattr__(self, "atL", tuple(float(v) for v in self.atL))
        if len(self.at0) != len(self.atL) or len(self.at0) % 2:
            raise ValueError(
                f"jet lists must have equal even length 2l, got {len(self.at0)} and {len(self.atL)}"
            )

    @property
    def l(self) -> int:
        return len(self.at0) // 2

    @classmethod
    def zeros(cls, l: int) -> "BoundaryJet":
        return cls((0.0,) * (2 * l), (0.0,) * (2 * l))

    def scaled(self, c: float) -> "BoundaryJet":
        return BoundaryJet(tuple(c * v for v in self.at0), tuple(c * v for v in self.atL))

    def norm_squared(self) -> float:
        return float(sum(v * v for v in self.at0) + sum(v * v for v in self.atL))


# ---------------------------------------------------------------------------
# Margins
# ---------------------------------------------------------------------------

class _Coefficients:
    """Index-safe view of a_ij (i=l+1..2l-1, j=1..l) and b_ij (i=l..2l-1, j=1..l-1)."""

    def __init__(self, l: int, general: GeneralFull):
        self.l = l
        self.A = np.asarray(general.A, dtype=float).reshape(l - 1, l)
        self.B = np.asarray(general.B, dtype=float).reshape(l, l - 1)

    def a(self, i: int, j: int) -> float:
        if self.l + 1 <= i <= 2 * self.l - 1 and 1 <= j <= self.l:
            return float(self.A[i - self.l - 1, j - 1])
        return 0.0

    def b(self, i: int, j: int) -> float:
        if self.l <= i <= 2 * self.l - 1 and 1 <= j <= self.l - 1:
            return float(self.B[i - self.l, j - 1])
        return 0.0


def _l2_reduced(a: Sequence[float], b: Sequence[float]) -> Tuple[List[float], List[float]]:
    a31, b31 = a[0], b[0]
    return [0.5 - a31, 0.25], [b31 - 0.5]


def _l3_reduced(a: Sequence[float], b: Sequence[float]) -> Tuple[List[float], List[float]]:
    a42, a51 = a
    b42, b51 = b
    return [a51 - 0.5, 0.5 - a42, 0.25], [-b51 - 0.5, b42 - 0.5]


def _general_l_reduced(l: int, a: Sequence[float], b: Sequence[float]) -> Tuple[List[float], List[float]]:
    """
    Diagonal sets for l >= 4. Coefficient j (coupling D^{l+j} to D^{l-j}) drives
    margin l-j; the odd and even chains each collect the earlier coefficients of
    the same parity.
    """
    B = [0.0] * (l - 1)
    A = [0.0] * l
    for j in range(1, l):
        if j == 1:
            B[l - j - 1] = b[0] + 2 - l
            A[l - j - 1] = -a[0] - 2 * l + 5
        elif j == 2:
            B[l - j - 1] = -b[1] + 2 - l
            A[l - j - 1] = a[1] - 2 * l + 5
        elif j % 2:
            chain_b = sum(abs(b[2 * m - 2]) for m in range(1, (j - 1) // 2 + 1))
            chain_a = sum(abs(a[2 * m - 2]) for m in range(1, (j - 1) // 2 + 1))
            B[l - j - 1] = b[j - 1] - 0.5 * chain_b ** 2 + 2 - l
            A[l - j - 1] = -a[j - 1] - 0.5 * chain_a ** 2 - 2 * l + 5
        else:
            chain_b = sum(abs(b[2 * m - 1]) for m in range(1, j // 2))
            chain_a = sum(abs(a[2 * m - 1]) for m in range(1, j // 2))
            B[l - j - 1] = -b[j - 1] - 0.5 * chain_b ** 2 + 2 - l
            A[l - j - 1] = a[j - 1] - 0.5 * chain_a ** 2 - 2 * l + 5
    A[l - 1] = 0.25
    return A, B


def _l2_general(c: _Coefficients) -> Tuple[List[float], List[float]]:
    B1 = c.b(3, 1) - 0.5 - c.b(2, 1) ** 2 / 2
    A1 = -c.a(3, 1) + 0.5 - c.a(3, 2) ** 2
    return [A1, 0.25], [B1]


def _l3_general(c: _Coefficients) -> Tuple[List[float], List[float]]:
    cross_L = abs(c.b(3, 2)) + abs(c.b(5, 2)) + abs(c.b(4, 1))
    B1 = c.b(3, 1) - c.b(5, 1) - 0.5 - c.b(3, 1) ** 2 - 0.5 * cross_L
    B2 = c.b(4, 2) - 0.5 - c.b(3, 2) ** 2 - 0.5 * cross_L
    A1 = c.a(5, 1) - 0.5 - 0.5 * (abs(c.a(5, 2)) + abs(c.a(4, 1)) + abs(c.a(5, 3)))
    A2 = -c.a(4, 2) + 0.5 - 0.5 * (abs(c.a(5, 2)) + abs(c.a(4, 1)) + abs(c.a(4, 3)))
    A3 = 0.25 - 0.5 * (abs(c.a(5, 3)) + abs(c.a(4, 3)))
    return [A1, A2, A3], [B1, B2]


def _general_l_full(c: _Coefficients) -> Tuple[List[float], List[float]]:
    l = c.l

    def ks_L(i: int) -> range:
        # k with 2k+i >= l and k <= l-i
        return range(max(1, (l - i + 1) // 2), l - i + 1)

    def ks_0(i: int) -> range:
        # k with 2k+i >= l+1 and k <= l-i
        return range(max(1, (l - i + 2) // 2), l - i + 1)

    B = []
    for i in range(1, l):
        diag = sum((-1) ** (k + 1) * c.b(2 * k + i, i) for k in ks_L(i))
        off = sum(
            sum(abs(c.b(2 * k + i, j)) for k in ks_L(i)) ** 2
            for j in range(1, l) if j != i
        )
        B.append(diag + (2 - l) + (1 - l) / 2 * c.b(l, i) ** 2 - 0.5 * off)

    A = []
    top = 0.0
    for i in range(1, l):
        diag = sum((-1) ** k * c.a(2 * k + i, i) for k in ks_0(i))
        off = sum(
            sum(abs(c.a(2 * k + i, j)) for k in ks_0(i)) ** 2
            for j in range(1, l) if j != i
        )
        coupling = sum(abs(c.a(2 * k + i, l)) for k in ks_0(i))
        top += coupling
        A.append(diag + (5 - 2 * l) - 0.5 * off - 0.5 * coupling)
    A.append(0.25 - 0.5 * top)
    return A, B


def margins(l: int, bc: Coefficients) -> AdmissibilityReport:
    """
    Evaluate the sufficient admissibility conditions for (l, bc).

    Diagonal sets use the sharper dedicated formulas for l=2 and l=3 and the
    general-l formulas from l=4 on. Negative margins are reported as they are.
    """
    if isinstance(bc, RawLinearForms):
        raise UnreducedRawForms("raw linear forms must be reduced before evaluating margins")

    if l == 1:
        family, A, B = FormulaFamily.L1, [], []
    elif isinstance(bc, CanonicalDiagonal):
        if l == 2:
            family, (A, B) = FormulaFamily.L2_REDUCED, _l2_reduced(bc.a, bc.b)
        elif l == 3:
            family, (A, B) = FormulaFamily.L3_REDUCED, _l3_reduced(bc.a, bc.b)
        else:
            family, (A, B) = FormulaFamily.GENERAL_L_REDUCED, _general_l_reduced(l, bc.a, bc.b)
    else:
        c = _Coefficients(l, bc)
        if l == 2:
            family, (A, B) = FormulaFamily.L2_GENERAL, _l2_general(c)
        elif l == 3:
            family, (A, B) = FormulaFamily.L3_GENERAL, _l3_general(c)
        else:
            family, (A, B) = FormulaFamily.GENERAL_L_FULL, _general_l_full(c)

    admissible = all(m > 0 for m in A + B)
    logger.debug(f"Margins l={l} family={family.value}: A={A} B={B} admissible={admissible}")
    return AdmissibilityReport(
        l=l,
        formula_family=family,
        margins_A=[float(v) for v in A],
        margins_B=[float(v) for v in B],
        admissible=admissible,
    )


def effective_margins(report: AdmissibilityReport) -> Tuple[List[float], List[float]]:
    """
    Margins entering the trace bounds. For l=1 the form reduces to (1/2)(Du(0))^2,
    so A=[1/2] and there is no B.
    """
    if report.l == 1:
        return [0.5], []
    return list(report.margins_A), list(report.margins_B)


def margin_weighted_traces(report: AdmissibilityReport, jet: BoundaryJet) -> float:
    """sum_i B_i (D^i u(L))^2 + sum_i A_i (D^i u(0))^2."""
    A, B = effective_margins(report)
    total = sum(B[i - 1] * jet.atL[i - 1] ** 2 for i in range(1, len(B) + 1))
    total += sum(A[i - 1] * jet.at0[i - 1] ** 2 for i in range(1, len(A) + 1))
    return float(total)


# ---------------------------------------------------------------------------
# Boundary form
# ---------------------------------------------------------------------------

def project_jet(l: int, bc: Coefficients, jet: BoundaryJet) -> BoundaryJet:
    """
    Overwrite the jet entries fixed by the boundary conditions:
    D^{l+j}u(0) for j=1..l-1 and D^{l+j}u(L) for j=0..l-1.
    """
    if isinstance(bc, RawLinearForms):
        raise UnreducedRawForms("raw linear forms must be reduced before projecting a jet")
    if jet.l != l:
        raise ValueError(f"jet has order {jet.l}, expected {l}")
    c = _Coefficients(l, to_general(l, bc))

    at0 = list(jet.at0)
    atL = list(jet.atL)
    for j in range(1, l):
        at0[l + j - 1] = sum(c.a(l + j, k) * jet.at0[k - 1] for k in range(1, l + 1))
    for j in range(0, l):
        atL[l + j - 1] = sum(c.b(l + j, k) * jet.atL[k - 1] for k in range(1, l))
    return BoundaryJet(tuple(at0), tuple(atL))


def _endpoint_form(l: int, d: Sequence[float]) -> float:
    """Boundary expression at one end; d[k] = D^k u there, d[0] = 0."""
    total = 0.0
    for i in range(l):
        inner = sum((-1) ** (k + 1) * d[2 * k + i] for k in range(1, l - i + 1))
        total += d[i] * inner
    total -= 0.5 * sum(d[j] ** 2 for j in range(1, l + 1))
    return total


def boundary_form_I(l: int, bc: Coefficients, jet: BoundaryJet) -> float:
    """
    I = sum_{j=1}^{l} (-1)^{j+1} (D^{2j+1}u, u) as an endpoint expression, evaluated
    on the jet after the boundary relations have been imposed.
    """
    projected = project_jet(l, bc, jet)
    at_L = (0.0,) + projected.atL
    at_0 = (0.0,) + projected.at0
    return float(_endpoint_form(l, at_L) - _endpoint_form(l, at_0))


def check_cross_term_inequality(l: int, jetL: Sequence[float]) -> Tuple[float, float]:
    """
    Both sides of the lower bound for the uncoupled cross terms at x=L:

        sum_{i=1}^{l-3} sum_{k: 2k+i<=l-1} (-1)^{k+1} D^iu D^{2k+i}u
            >= (3-l)/2 sum_{i=1}^{l-1} (D^iu)^2
    """
    if l < 4:
        raise ValueError(f"inequality requires l >= 4, got {l}")
    d = [0.0] + [float(v) for v in jetL] + [0.0] * max(0, l - len(jetL))
    lhs = 0.0
    for i in range(1, l - 2):
        for k in range(1, (l - 1 - i) // 2 + 1):
            lhs += (-1) ** (k + 1) * d[i] * d[2 * k + i]
    rhs = (3 - l) / 2 * sum(d[i] ** 2 for i in range(1, l))
    return float(lhs), float(rhs)


# ---------------------------------------------------------------------------
# Random admissible sets
# ---------------------------------------------------------------------------

def _fit_coefficient(
    margin_of: Callable[[List[float]], float],
    values: List[float],
    index: int,
    target: float,
) -> float:
    """Solve margin(values with values[index]=c) = target; the margin is affine in c."""
    values[index] = 0.0
    base = margin_of(values)
    values[index] = 1.0
    slope = margin_of(values) - base
    return (target - base) / slope


def random_admissible_canonical(
    l: int,
    rng: np.random.Generator,
    floor: float = 0.1,
    ceil: float = 2.0,
) -> CanonicalDiagonal:
    """
    Draw a diagonal set whose margins A_1..A_{l-1}, B_1..B_{l-1} fall uniformly in
    [floor, ceil]. Coefficient j controls margin l-j; coefficients are fitted in
    increasing j so every chain term is already fixed.
    """
    if l == 1:
        return CanonicalDiagonal(a=[], b=[])
    a = [0.0] * (l - 1)
    b = [0.0] * (l - 1)
    for j in range(1, l):
        target_b = float(rng.uniform(floor, ceil))
        target_a = float(rng.uniform(floor, ceil))
        b[j - 1] = _fit_coefficient(
            lambda vals: margins(l, CanonicalDiagonal(a=a, b=vals)).margins_B[l - j - 1],
            b, j - 1, target_b,
        )
        a[j - 1] = _fit_coefficient(
            lambda vals: margins(l, CanonicalDiagonal(a=vals, b=b)).margins_A[l - j - 1],
            a, j - 1, target_a,
        )
    return CanonicalDiagonal(a=a, b=b)
