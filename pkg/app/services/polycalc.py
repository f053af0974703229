"""
Exact univariate polynomial calculus.

Polynomials are the oracle substrate for the integration-by-parts identities and
for manufactured solutions: derivatives and antiderivatives are coefficient
shifts and every integral is an antiderivative difference, so there is no
quadrature error anywhere in this module.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from app.models.schemas import LemmaSuiteRow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Polynomial:
    """
    Real polynomial, coeffs[k] multiplies x^k.

    Trailing zeros are stripped, so the zero polynomial has no coefficients.
    """
    coeffs: Tuple[float, ...] = ()

    def __post_init__(self):
        c = [float(v) for v in self.coeffs]
        while c and c[-1] == 0.0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "Polynomial":
        return cls(tuple(values))

    @classmethod
    def monomial(cls, k: int, scale: float = 1.0) -> "Polynomial":
        return cls((0.0,) * k + (scale,))

    @property
    def degree(self) -> int:
        """Degree, -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coeffs if self.coeffs else (0.0,), dtype=float)

    def __call__(self, x):
        return P.polyval(x, self.as_array())

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(tuple(P.polyadd(self.as_array(), other.as_array())))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(tuple(P.polysub(self.as_array(), other.as_array())))

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(tuple(P.polymul(self.as_array(), other.as_array())))
        return Polynomial(tuple(float(other) * c for c in self.coeffs))

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return self * -1.0


def differentiate(p: Polynomial, k: int = 1) -> Polynomial:
    """Exact k-th derivative."""
    if k < 0:
        raise ValueError(f"derivative order must be >= 0, got {k}")
    if k == 0 or p.is_zero:
        return p
    if k > p.degree:
        return Polynomial()
    return Polynomial(tuple(P.polyder(p.as_array(), m=k)))


def integrate(p: Polynomial) -> Polynomial:
    """Antiderivative vanishing at x=0."""
    if p.is_zero:
        return p
    return Polynomial(tuple(P.polyint(p.as_array())))


def definite_integral(p: Polynomial, lower: float, upper: float) -> float:
    antiderivative = integrate(p)
    return float(antiderivative(upper) - antiderivative(lower))


class Weight(str, Enum):
    ONE = "one"
    X = "x"


def inner_product(p: Polynomial, q: Polynomial, weight: Weight, length: float) -> float:
    """Exact value of the integral of w(x) p(x) q(x) over (0, length)."""
    integrand = p * q
    if weight == Weight.X:
        integrand = integrand * Polynomial((0.0, 1.0))
    return definite_integral(integrand, 0.0, length)


def norm_squared(p: Polynomial, length: float) -> float:
    return inner_product(p, p, Weight.ONE, length)


# ---------------------------------------------------------------------------
# Integration-by-parts identities
# ---------------------------------------------------------------------------

class Lemma(str, Enum):
    """
    A1: (D^{2j+1}u, u) as boundary terms.
    A2: (D^{2j+1}u, xu) as boundary terms plus a norm term.
    A3: sum_{j<=l} (-1)^{j+1} (D^{2j+1}u, u) as the boundary form.
    A4: sum_{j<=l} (-1)^{j+1} (D^{2j+1}u, xu) as boundary terms plus norms.
    """
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"


class LemmaCheck(NamedTuple):
    lhs: float
    rhs: float
    residual: float
    norm_block: float


@lru_cache(maxsize=256)
def _moments(size: int, length: float, shift: int) -> np.ndarray:
    """M[i, k] = integral of x^(i+k+shift) over (0, length)."""
    powers = np.arange(size)[:, None] + np.arange(size)[None, :] + shift + 1
    return length ** powers / powers


class _Jet:
    """
    Derivative chain of one polynomial with its endpoint values.

    Row k of the chain holds the coefficients of D^k u, zero padded, so inner
    products of derivatives reduce to one moment-matrix contraction.
    """

    def __init__(self, u: Polynomial, length: float):
        self.u = u
        self.length = length
        size = max(u.degree + 1, 1)
        chain = np.zeros((size + 1, size))
        chain[0, :u.degree + 1] = u.coeffs
        for k in range(1, size):
            chain[k, :size - k] = chain[k - 1, 1:size - k + 1] * np.arange(1, size - k + 1)
        self._chain = chain
        self._at0 = chain[:, 0].copy()
        self._atL = chain @ (float(length) ** np.arange(size))

    def row(self, k: int) -> np.ndarray:
        return self._chain[min(k, self._chain.shape[0] - 1)]

    def D(self, k: int) -> Polynomial:
        return Polynomial(tuple(self.row(k)))

    def jump(self, fn) -> float:
        """fn(x) evaluated as F(L) - F(0)."""
        return fn(self.length) - fn(0.0)

    def at(self, k: int, x: float) -> float:
        k = min(k, self._chain.shape[0] - 1)
        if x == 0.0:
            return float(self._at0[k])
        if x == self.length:
            return float(self._atL[k])
        return float(P.polyval(x, self._chain[k]))

    def inner(self, k: int, m: int, weight: Weight) -> float:
        """Exact (D^k u, D^m u) with weight 1 or x."""
        shift = 1 if weight == Weight.X else 0
        moments = _moments(self._chain.shape[1], float(self.length), shift)
        return float(self.row(k) @ moments @ self.row(m))


def _lhs(jet: _Jet, odd_orders: Sequence[Tuple[int, float]], weight: Weight) -> float:
    return sum(sign * jet.inner(order, 0, weight) for order, sign in odd_orders)


def _boundary_a1(jet: _Jet, j: int, weighted: bool) -> float:
    def at(x: float) -> float:
        w = x if weighted else 1.0
        total = 0.0
        for k in range(1, j + 1):
            total += (-1) ** (k + 1) * w * jet.at(k - 1, x) * jet.at(2 * j + 1 - k, x)
        total += (-1) ** j * 0.5 * w * jet.at(j, x) ** 2
        return total
    return jet.jump(at)


def _boundary_a2_extra(jet: _Jet, j: int) -> float:
    def at(x: float) -> float:
        return sum(
            (-1) ** k * k * jet.at(k - 1, x) * jet.at(2 * j - k, x)
            for k in range(1, j + 1)
        )
    return jet.jump(at)


def _boundary_a3(jet: _Jet, l: int, weighted: bool) -> float:
    def at(x: float) -> float:
        w = x if weighted else 1.0
        total = 0.0
        for i in range(l):
            inner = sum((-1) ** (k + 1) * jet.at(2 * k + i, x) for k in range(1, l - i + 1))
            total += w * jet.at(i, x) * inner
        total -= 0.5 * w * sum(jet.at(j, x) ** 2 for j in range(1, l + 1))
        return total
    return jet.jump(at)


def _boundary_a4_extra(jet: _Jet, l: int) -> float:
    def at(x: float) -> float:
        total = 0.0
        for i in range(l):
            inner = sum((-1) ** k * jet.at(2 * k + i - 1, x) for k in range(1, l - i + 1))
            total += (1 + i) * jet.at(i, x) * inner
        return total
    return jet.jump(at)


def lemma_residual(u: Polynomial, lemma: Lemma, order: int, length: float) -> LemmaCheck:
    """
    Evaluate both sides of an integration-by-parts identity on u over (0, length).

    ``order`` is j for A1/A2 and l for A3/A4. The left side is computed by exact
    integration, the right side from endpoint evaluations and exact norms.
    """
    if order < 1:
        raise ValueError(f"identity order must be >= 1, got {order}")
    jet = _Jet(u, length)
    norm_block = 0.0

    if lemma == Lemma.A1:
        lhs = _lhs(jet, [(2 * order + 1, 1.0)], Weight.ONE)
        rhs = _boundary_a1(jet, order, weighted=False)
    elif lemma == Lemma.A2:
        lhs = _lhs(jet, [(2 * order + 1, 1.0)], Weight.X)
        norm_block = (-1) ** (order + 1) * (2 * order + 1) / 2 * jet.inner(order, order, Weight.ONE)
        rhs = _boundary_a1(jet, order, weighted=True) + _boundary_a2_extra(jet, order) + norm_block
    elif lemma == Lemma.A3:
        odd = [(2 * j + 1, (-1) ** (j + 1)) for j in range(1, order + 1)]
        lhs = _lhs(jet, odd, Weight.ONE)
        rhs = _boundary_a3(jet, order, weighted=False)
    elif lemma == Lemma.A4:
        odd = [(2 * j + 1, (-1) ** (j + 1)) for j in range(1, order + 1)]
        lhs = _lhs(jet, odd, Weight.X)
        norm_block = sum(
            (2 * j + 1) / 2 * jet.inner(j, j, Weight.ONE) for j in range(1, order + 1)
        )
        rhs = _boundary_a3(jet, order, weighted=True) + _boundary_a4_extra(jet, order) + norm_block
    else:
        raise ValueError(f"unknown lemma {lemma!r}")

    return LemmaCheck(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), norm_block=norm_block)


def random_polynomial(rng: np.random.Generator, degree: int) -> Polynomial:
    """Standard-normal coefficients with a nonzero leading term."""
    coeffs = rng.standard_normal(degree + 1)
    if coeffs[-1] == 0.0:
        coeffs[-1] = 1.0
    return Polynomial(tuple(coeffs))


def lemma_suite(
    max_order: int,
    samples: int,
    max_degree: int,
    lengths: Sequence[float],
    seed: int,
    tol: float,
) -> List[LemmaSuiteRow]:
    """
    Check every identity for orders 1..max_order on seeded random polynomials.

    Degrees are drawn from [2*order+1, max_degree] so the odd derivatives on the
    integral side are nonzero; a sample fails when residual > tol*(1+|lhs|).
    """
    rows: List[LemmaSuiteRow] = []
    for lemma in Lemma:
        for order in range(1, max_order + 1):
            for block, length in enumerate(lengths):
                rng = np.random.default_rng([seed, list(Lemma).index(lemma), order, block])
                low = min(2 * order + 1, max_degree)
                worst = 0.0
                failures = 0
                for _ in range(samples):
                    u = random_polynomial(rng, int(rng.integers(low, max_degree + 1)))
                    check = lemma_residual(u, lemma, order, length)
                    relative = check.residual / (1.0 + abs(check.lhs))
                    worst = max(worst, relative)
                    if relative > tol:
                        failures += 1
                rows.append(LemmaSuiteRow(
                    lemma=lemma.value,
                    order=order,
                    length=float(length),
                    samples=samples,
                    worst_relative_residual=worst,
                    failures=failures,
                ))
                if failures:
                    logger.warning(f"{lemma.value} order={order} L={length}: {failures} failures, worst {worst:.3e}")
    return rows
