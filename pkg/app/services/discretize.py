"""
Integral collocation for lambda*u + sum_j (-1)^{j+1} D^{2j+1}u = f.

The unknown is not the nodal vector of u but the pair (c, w): the Taylor
coefficients c_k = D^k u(0), k <= 2l, and the top derivative w = D^{2l+1}u at
the collocation nodes. Every lower derivative is recovered by repeated
integration, so the discrete operator is identity-plus-smoothing and its
condition number stays bounded as the grid is refined. Interior rows collocate
the equation at n-2l-1 nodes, the 2l+1 boundary rows are exact linear
combinations of the recovered traces. The scheme reproduces polynomials of
degree <= 2l+p to rounding.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.linalg import LinAlgWarning, get_lapack_funcs, lu_factor, lu_solve, svdvals

from app.core.config import settings
from app.core.exceptions import GridTooSmall, InsufficientStencil, NumericallySingular, UnreducedRawForms
from app.models.schemas import ProblemSpec, RawLinearForms
from app.services.problem import boundary_relations, evaluate_forcing

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform nodes x_i = i*h on [0, length], h = length/(n-1)."""
    n: int
    length: float

    def __post_init__(self):
        if self.n < 2:
            raise GridTooSmall(f"grid needs at least 2 nodes, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"grid length must be > 0, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n)


# ---------------------------------------------------------------------------
# Stencils
# ---------------------------------------------------------------------------

def _fornberg(x_nodes: np.ndarray, x0: float, der: int) -> np.ndarray:
    """Weights w with f^(der)(x0) ~ sum_j w[j] f(x_nodes[j]), exact to degree m-1."""
    x = np.asarray(x_nodes, dtype=float)
    m = x.size
    c = np.zeros((m, der + 1), dtype=float)
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, m):
        mn = min(i, der)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, der]


def fd_weights(offsets: Sequence[int], k: int, h: float) -> np.ndarray:
    """
    Weights for the k-th derivative on the stencil x + offsets*h.

    Computed on the integer offsets and rescaled by h^-k, which keeps the
    recursion well scaled for high derivative orders.
    """
    offsets = np.asarray(offsets, dtype=float)
    if offsets.size <= k:
        raise InsufficientStencil(
            f"derivative order {k} needs at least {k + 1} offsets, got {offsets.size}"
        )
    if np.unique(offsets).size != offsets.size:
        raise ValueError(f"stencil offsets must be distinct: {offsets.tolist()}")
    if k == 0 and 0.0 in offsets:
        w = np.zeros(offsets.size)
        w[int(np.flatnonzero(offsets == 0.0)[0])] = 1.0
        return w
    return _fornberg(offsets, 0.0, k) / h ** k


def _stencil_indices(n: int, k: int, m: int) -> np.ndarray:
    """Length-m window around node k, clipped to [0, n-1]."""
    start = k - m // 2
    if start < 0:
        start = 0
    if start + m > n:
        start = n - m
    return np.arange(start, start + m)


def derivative_matrix(grid: Grid, k: int, p: int) -> np.ndarray:
    """
    Dense D^k on the grid, stencil width k+p, centered where possible and
    one-sided near the ends. Exact on polynomials of degree <= k+p-1.
    """
    n = grid.n
    if k == 0:
        return np.eye(n)
    width = k + p
    if n < width:
        raise GridTooSmall(f"D^{k} with p={p} needs {width} nodes, grid has {n}")

    M = np.zeros((n, n))
    cache = {}
    for i in range(n):
        idx = _stencil_indices(n, i, width)
        key = int(idx[0] - i)
        if key not in cache:
            cache[key] = fd_weights(idx - i, k, grid.h)
        M[i, idx] = cache[key]
    return M




# ---------------------------------------------------------------------------
# Integral representation
# ---------------------------------------------------------------------------

def stencil_width(l: int, p: int) -> int:
    """Width of the cell quadratures that integrate the lower derivative levels."""
    return 2 * l + p


def minimum_nodes(l: int, p: int) -> int:
    return max(4 * l + 2, stencil_width(l, p) + 1)


def collocation_nodes(n: int, l: int) -> np.ndarray:
    """
    Grid indices that carry w and an equation row.

    l odd-indexed nodes next to x=0 and l+1 next to x=L are left out to make
    room for the boundary rows; the ends themselves are kept, so no gap is
    wider than 2h.
    """
    dropped = set(range(1, 2 * l, 2)) | {n - 2 * k for k in range(1, l + 2)}
    return np.array([i for i in range(n) if i not in dropped], dtype=int)


def _lagrange_cell_integrals(offsets: np.ndarray) -> np.ndarray:
    """Integrals over t in [0, 1] of the Lagrange basis on the integer offsets."""
    s = offsets.size
    xi, omega = leggauss(s // 2 + 1)
    t = 0.5 * (xi + 1.0)
    diffs = t[:, None] - offsets[None, :]
    out = np.empty(s)
    for r in range(s):
        others = np.delete(np.arange(s), r)
        basis = np.prod(diffs[:, others], axis=1) / np.prod(offsets[r] - offsets[others])
        out[r] = 0.5 * float(omega @ basis)
    return out


def _cell_quadrature(support: np.ndarray, n: int, width: int, h: float) -> sparse.csr_array:
    """
    Row c-1 integrates over the cell [x_{c-1}, x_c] the interpolant through
    the ``width`` support nodes nearest to it.
    """
    m = support.size
    if m < width:
        raise GridTooSmall(f"quadrature of width {width} needs {width} nodes, support has {m}")
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    cache: Dict[Tuple[int, ...], np.ndarray] = {}
    for c in range(1, n):
        pos = int(np.searchsorted(support, c))
        start = min(max(pos - width // 2, 0), m - width)
        window = np.arange(start, start + width)
        offsets = support[window] - (c - 1)
        key = tuple(int(o) for o in offsets)
        if key not in cache:
            cache[key] = h * _lagrange_cell_integrals(offsets.astype(float))
        rows.extend([c - 1] * width)
        cols.extend(window.tolist())
        vals.extend(cache[key].tolist())
    return sparse.csr_array((vals, (rows, cols)), shape=(n - 1, m))


def _spread(support: np.ndarray, n: int, width: int) -> sparse.csr_array:
    """Interpolation from the support nodes to every grid node."""
    m = support.size
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    position = {int(s): k for k, s in enumerate(support)}
    for i in range(n):
        if i in position:
            rows.append(i)
            cols.append(position[i])
            vals.append(1.0)
            continue
        pos = int(np.searchsorted(support, i))
        start = min(max(pos - width // 2, 0), m - width)
        window = np.arange(start, start + width)
        rows.extend([i] * width)
        cols.extend(window.tolist())
        vals.extend(fd_weights(support[window] - i, 0, 1.0).tolist())
    return sparse.csr_array((vals, (rows, cols)), shape=(n, m))


def _running_sum(cells: np.ndarray) -> np.ndarray:
    """Integrals from x_0 to every node, given the per-cell integrals."""
    out = np.zeros((cells.shape[0] + 1,) + cells.shape[1:])
    out[1:] = np.cumsum(cells, axis=0)
    return out


def _cumulative(quadrature: sparse.csr_array, values: np.ndarray) -> np.ndarray:
    return _running_sum(quadrature @ values)


def _taylor_columns(x: np.ndarray, d: int, top: int) -> np.ndarray:
    """Column k is D^d of x^k/k!, for k = 0..top."""
    cols = np.zeros((x.size, top + 1))
    for k in range(d, top + 1):
        cols[:, k] = x ** (k - d) / math.factorial(k - d)
    return cols


@dataclass(frozen=True)
class IntegralBasis:
    """
    u = sum_k c_k x^k/k! + J^{2l+1} w, with J the running integral from 0.

    ``support`` are the collocation node indices, ``q_support`` integrates w
    cell by cell from its support values, ``q_grid`` integrates any lower
    level from all nodes and ``spread`` interpolates w to the whole grid.
    """
    grid: Grid
    l: int
    p: int
    support: np.ndarray = field(repr=False)
    q_support: sparse.csr_array = field(repr=False)
    q_grid: sparse.csr_array = field(repr=False)
    spread: sparse.csr_array = field(repr=False)

    @property
    def size(self) -> int:
        return 2 * self.l + 1 + self.support.size

    def levels(self) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
        """
        (d, taylor, level) for d = 2l+1 down to 0, with D^d u = taylor @ c +
        level @ w at every grid node.
        """
        x = self.grid.nodes
        top = 2 * self.l
        yield top + 1, np.zeros((x.size, top + 1)), self.spread.toarray()
        level = _running_sum(self.q_support.toarray())
        for d in range(top, -1, -1):
            if d < top:
                level = _cumulative(self.q_grid, level)
            yield d, _taylor_columns(x, d, top), level

    def derivatives(self, z: np.ndarray) -> np.ndarray:
        """Rows D^0 u .. D^{2l+1} u at the grid nodes for unknowns z = (c, w)."""
        x = self.grid.nodes
        top = 2 * self.l
        c, w = z[: top + 1], z[top + 1:]
        out = np.zeros((top + 2, x.size))
        out[top + 1] = self.spread @ w
        level = _cumulative(self.q_support, w)
        for d in range(top, -1, -1):
            if d < top:
                level = _cumulative(self.q_grid, level)
            out[d] = _taylor_columns(x, d, top) @ c + level
        return out


def integral_basis(grid: Grid, l: int, p: int) -> IntegralBasis:
    if grid.n < minimum_nodes(l, p):
        raise GridTooSmall(
            f"l={l}, p={p} needs at least {minimum_nodes(l, p)} nodes, grid has {grid.n}"
        )
    support = collocation_nodes(grid.n, l)
    return IntegralBasis(
        grid=grid,
        l=l,
        p=p,
        support=support,
        q_support=_cell_quadrature(support, grid.n, p, grid.h),
        q_grid=_cell_quadrature(np.arange(grid.n), grid.n, stencil_width(l, p), grid.h),
        spread=_spread(support, grid.n, p),
    )


# ---------------------------------------------------------------------------
# Assembly and solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearSystem:
    """
    Dense collocation system in the unknowns (c, w), with per-row tags.

    The stored matrix is R @ M @ C with C = diag(column_scale) equilibrating the
    columns and R = diag(row_scale) bringing every row to unit max-abs; the
    rhs was multiplied by row_scale.
    """
    matrix: np.ndarray
    rhs: np.ndarray
    row_labels: Tuple[str, ...]
    grid: Grid
    l: int
    p: int
    row_scale: np.ndarray
    column_scale: np.ndarray
    basis: IntegralBasis = field(repr=False)
    condition_estimate: Optional[float] = None


@dataclass(frozen=True)
class GridSolution:
    """Nodal values plus D^1..D^{2l} traces at both ends."""
    grid: Grid
    values: np.ndarray
    traces_at0: np.ndarray
    traces_atL: np.ndarray
    l: int
    p: int
    condition_estimate: float = float("nan")
    residual_norm: float = float("nan")
    row_labels: Tuple[str, ...] = field(default=(), repr=False)
    derivatives: Optional[np.ndarray] = field(default=None, repr=False)


def _inverse_max_abs(block: np.ndarray, axis: int) -> np.ndarray:
    peak = np.max(np.abs(block), axis=axis)
    return np.where(peak > 0.0, 1.0 / np.where(peak > 0.0, peak, 1.0), 1.0)


def assemble(spec: ProblemSpec, grid: Grid, p: int) -> LinearSystem:
    """
    Collocation system for spec on grid.

    Rows 0..l-1 hold the conditions at x=0, rows l..n-l-2 the operator at the
    collocation nodes and the last l+1 rows the conditions at x=L.
    """
    if isinstance(spec.bc, RawLinearForms):
        raise UnreducedRawForms("raw linear forms must be reduced before assembly")
    l, n = spec.l, grid.n
    basis = integral_basis(grid, l, p)
    support = basis.support
    top = 2 * l

    coefficient = {0: spec.lam}
    coefficient.update({2 * j + 1: float((-1) ** (j + 1)) for j in range(1, l + 1)})

    collocation = np.zeros((support.size, basis.size))
    ends: Dict[int, np.ndarray] = {}
    for d, taylor, level in basis.levels():
        if d in coefficient:
            collocation[:, : top + 1] += coefficient[d] * taylor[support]
            collocation[:, top + 1:] += coefficient[d] * level[support]
        if d < top:
            ends[d] = np.hstack([taylor[[0, n - 1]], level[[0, n - 1]]])

    M = np.zeros((n, n))
    rhs = np.zeros(n)
    labels: List[str] = [""] * n

    f = evaluate_forcing(spec, grid.nodes)
    M[l:n - l - 1] = collocation
    rhs[l:n - l - 1] = f[support]
    labels[l:n - l - 1] = ["interior"] * support.size

    rows_at0 = list(range(0, l))
    rows_atL = list(range(n - l - 1, n))
    for relation in boundary_relations(l, spec.bc):
        r = rows_at0.pop(0) if relation.end == "0" else rows_atL.pop(0)
        side = 0 if relation.end == "0" else 1
        for order, coef in relation.terms:
            M[r] += coef * ends[order][side]
        labels[r] = relation.label

    column_scale = _inverse_max_abs(M, axis=0)
    M *= column_scale[None, :]
    row_scale = _inverse_max_abs(M, axis=1)
    M *= row_scale[:, None]
    rhs *= row_scale

    logger.debug(f"Assembled l={l} n={n} p={p} system")
    return LinearSystem(
        matrix=M,
        rhs=rhs,
        row_labels=tuple(labels),
        grid=grid,
        l=l,
        p=p,
        row_scale=row_scale,
        column_scale=column_scale,
        basis=basis,
    )


def condition_estimate(lu: np.ndarray, matrix: np.ndarray) -> float:
    """1-norm condition number estimate from an LU factorization (LAPACK gecon)."""
    gecon, = get_lapack_funcs(("gecon",), (lu,))
    anorm = float(np.linalg.norm(matrix, 1))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0.0:
        return float("inf")
    return float(1.0 / rcond)


def singular_ratio(system: LinearSystem) -> float:
    """sigma_min/sigma_max of the equilibrated matrix; 0 when it is rank deficient."""
    sigma = svdvals(system.matrix)
    if sigma[0] == 0.0:
        return 0.0
    return float(sigma[-1] / sigma[0])


def solve_linear(system: LinearSystem) -> GridSolution:
    """
    LU with partial pivoting and one step of iterative refinement, the residual
    accumulated in extended precision.
    """
    A, b = system.matrix, system.rhs
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A)

    pivots = np.abs(np.diag(lu))
    largest = float(pivots.max())
    ratio = float(pivots.min()) / largest if largest > 0 else 0.0
    if ratio < settings.PIVOT_RATIO_TOL:
        raise NumericallySingular(f"pivot ratio {ratio:.3e} below {settings.PIVOT_RATIO_TOL:.0e}")

    y = lu_solve((lu, piv), b)
    residual = (b.astype(np.longdouble) - A.astype(np.longdouble) @ y.astype(np.longdouble)).astype(float)
    y = y + lu_solve((lu, piv), residual)

    if not np.all(np.isfinite(y)):
        raise NumericallySingular("solution contains non-finite values")

    cond = condition_estimate(lu, A)
    residual_norm = float(np.max(np.abs(A @ y - b)))
    derivatives = system.basis.derivatives(y * system.column_scale)
    top = 2 * system.l
    logger.info(
        f"Solved l={system.l} n={system.grid.n} p={system.p}: "
        f"cond~{cond:.3e}, residual={residual_norm:.3e}"
    )
    return GridSolution(
        grid=system.grid,
        values=derivatives[0],
        traces_at0=derivatives[1:top + 1, 0].copy(),
        traces_atL=derivatives[1:top + 1, -1].copy(),
        l=system.l,
        p=system.p,
        condition_estimate=cond,
        residual_norm=residual_norm,
        row_labels=system.row_labels,
        derivatives=derivatives,
    )


def discrete_norms(solution: GridSolution, m: int) -> List[float]:
    """
    ||D^0 u||, ..., ||D^m u|| in discrete L^2 (composite trapezoid).

    Derivatives come from the solver's representation when available and from
    finite differences on the nodal values otherwise.
    """
    if m < 0 or m > 2 * solution.l + 1:
        raise ValueError(f"norm order must be in [0, {2 * solution.l + 1}], got {m}")
    x = solution.grid.nodes
    norms = []
    for k in range(m + 1):
        if solution.derivatives is not None:
            dk = solution.derivatives[k]
        elif k == 0:
            dk = solution.values
        else:
            dk = derivative_matrix(solution.grid, k, solution.p) @ solution.values
        norms.append(float(np.sqrt(trapezoid(dk * dk, x))))
    return norms


def sobolev_norm(norms: Sequence[float], m: int) -> float:
    """H^m norm from the per-derivative norms."""
    return float(np.sqrt(sum(v * v for v in norms[: m + 1])))
