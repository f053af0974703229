from dataclasses import replace

import numpy as np
import pytest

from app.core.exceptions import EmptyNullspace, InadmissibleCoefficients, ZeroForcing
from app.models.schemas import CanonicalDiagonal, ExactPolynomial, ProblemSpec, TrigSum
from app.services.admissibility import random_admissible_canonical
from app.services.discretize import Grid, assemble, singular_ratio
from app.services.polycalc import Polynomial, differentiate
from app.services.problem import boundary_relations, encode_raw_forms, to_general
from app.services.verify import (
    UniquenessCheck,
    _fit_order,
    convergence_study,
    estimate_check,
    forcing_for,
    manufactured_spec,
    polynomial_satisfying_bcs,
    solve,
    solution_jet,
    uniqueness_check,
)


def _relative_relation_residuals(u: Polynomial, l: int, bc, length: float):
    """Each relation residual over the size its terms can reach on [0, length]."""
    out = []
    for relation in boundary_relations(l, bc):
        x = 0.0 if relation.end == "0" else length
        value = sum(coef * differentiate(u, order)(x) for order, coef in relation.terms)
        bound = sum(
            abs(coef) * sum(abs(c) * length ** k for k, c in enumerate(differentiate(u, order).coeffs))
            for order, coef in relation.terms
        )
        out.append(abs(value) / max(bound, 1e-300))
    return np.asarray(out)


class TestManufactured:

    def test_forcing_for_cubic(self):
        f = forcing_for(Polynomial.monomial(3), 2.0, 1)
        assert f.coeffs == (6.0, 0.0, 0.0, 2.0)

    def test_forcing_for_includes_every_odd_derivative(self):
        # D^3 x^5 - D^5 x^5 = 60x^2 - 120
        f = forcing_for(Polynomial.monomial(5), 1.0, 2)
        assert f.coeffs == (-120.0, 0.0, 60.0, 0.0, 0.0, 1.0)

    @pytest.mark.parametrize("l,bc", [
        (1, CanonicalDiagonal(a=[], b=[])),
        (2, CanonicalDiagonal(a=[0.0], b=[1.0])),
        (3, CanonicalDiagonal(a=[0.0, 1.0], b=[1.0, -1.0])),
    ])
    @pytest.mark.parametrize("length", [1.0, 2.5])
    def test_polynomial_meets_boundary_conditions(self, l, bc, length):
        u = polynomial_satisfying_bcs(l, bc, length, 2 * l + 4, seed=3)
        assert not u.is_zero
        assert np.all(_relative_relation_residuals(u, l, bc, length) <= 1e-9)

    def test_degree_too_low(self):
        with pytest.raises(EmptyNullspace):
            polynomial_satisfying_bcs(2, CanonicalDiagonal(a=[0.0], b=[1.0]), 1.0, 2)

    def test_seed_is_deterministic(self):
        bc = CanonicalDiagonal(a=[0.0], b=[1.0])
        assert polynomial_satisfying_bcs(2, bc, 1.0, 8, seed=5) == polynomial_satisfying_bcs(2, bc, 1.0, 8, seed=5)


class TestExactRegime:

    def test_l1_cubic(self, cubic_l1_spec):
        grid = Grid(41, 1.0)
        sol = solve(cubic_l1_spec, grid, 4)
        x = grid.nodes
        assert np.max(np.abs(sol.values - x * (1 - x) ** 2)) <= 1e-8

    @pytest.mark.parametrize("l,bc,n", [
        (2, CanonicalDiagonal(a=[0.0], b=[1.0]), 41),
        (3, CanonicalDiagonal(a=[0.0, 1.0], b=[1.0, -1.0]), 31),
    ])
    def test_bc_satisfying_polynomials_are_recovered(self, l, bc, n):
        spec = ProblemSpec(l=l, lam=1.0, length=1.0, bc=bc, forcing=ExactPolynomial(coeffs=[1.0]))
        u = polynomial_satisfying_bcs(l, bc, 1.0, 2 * l + 4, seed=1)
        grid = Grid(n, 1.0)
        sol = solve(manufactured_spec(spec, u), grid, 4)
        scale = max(1.0, float(np.max(np.abs(u(grid.nodes)))))
        assert np.max(np.abs(sol.values - u(grid.nodes))) <= 1e-6 * scale

    def test_raw_forms_are_reduced_before_solving(self):
        bc = CanonicalDiagonal(a=[0.0], b=[1.0])
        spec = ProblemSpec(l=2, lam=1.0, length=1.0, bc=bc, forcing=ExactPolynomial(coeffs=[1.0]))
        raw = spec.model_copy(update={"bc": encode_raw_forms(2, to_general(2, bc))})
        grid = Grid(31, 1.0)
        assert np.max(np.abs(solve(raw, grid, 4).values - solve(spec, grid, 4).values)) <= 1e-10

    def test_solution_jet(self, cubic_l1_spec):
        jet = solution_jet(solve(cubic_l1_spec, Grid(41, 1.0), 4))
        assert jet.l == 1
        assert jet.at0[0] == pytest.approx(1.0, abs=1e-4)


class TestConvergence:

    def test_exact_mode_in_exact_regime(self, cubic_l1_spec):
        u = Polynomial((0.0, 1.0, -2.0, 1.0))
        report = convergence_study(cubic_l1_spec, [21, 31, 41], 4, exact=u)
        assert report.mode == "exact"
        assert report.passed
        assert max(report.max_errors) <= 1e-8

    @pytest.mark.parametrize("l,bc", [
        (1, CanonicalDiagonal(a=[], b=[])),
        (2, CanonicalDiagonal(a=[0.0], b=[1.0])),
        (3, CanonicalDiagonal(a=[0.0, 1.0], b=[1.0, -1.0])),
    ])
    def test_self_convergence_order(self, l, bc):
        spec = ProblemSpec(l=l, lam=1.0, length=1.0, bc=bc, forcing=TrigSum(terms=[(1.0, 2.0, 0.3)]))
        report = convergence_study(spec, [41, 81, 161], 4)
        assert report.mode == "self"
        assert report.reference_n == 1281
        assert report.fitted_order >= 3.5
        assert report.passed

    def test_rounding_plateau_from_coarsest_grid(self, cubic_l1_spec):
        report = convergence_study(cubic_l1_spec, [21, 41, 81], 4)
        assert report.plateau_from == 21
        assert report.fitted_order is None
        assert report.passed

    def test_fit_stops_at_plateau(self):
        order, plateau = _fit_order([21, 41, 81], [1e-4, 6.25e-6, 1e-14], 1.0, floor=1e-12)
        assert plateau == 2
        assert order == pytest.approx(4.0)

    def test_single_point_before_plateau_gives_lower_bound(self):
        order, plateau = _fit_order([21, 41, 81], [1e-4, 1e-14, 1e-14], 1.0, floor=1e-12)
        assert plateau == 1
        assert order == pytest.approx(8 * np.log2(10.0))

    def test_fit_without_plateau(self):
        order, plateau = _fit_order([21, 41, 81], [4e-2, 1e-2, 2.5e-3], 1.0, floor=1e-12)
        assert plateau is None
        assert order == pytest.approx(2.0)

    def test_needs_three_grids(self, cubic_l1_spec):
        with pytest.raises(ValueError):
            convergence_study(cubic_l1_spec, [21, 41], 4)

    def test_reference_must_contain_grid_nodes(self, cubic_l1_spec):
        with pytest.raises(ValueError):
            convergence_study(cubic_l1_spec, [21, 31, 41], 4, reference_n=81)


class TestEstimates:

    def test_l2_example_satisfies_both_bounds(self, l2_spec):
        report = estimate_check(l2_spec, Grid(81, 1.0), 4)
        assert report.l2_ratio <= 1.001
        assert report.trace_lhs <= report.trace_rhs * 1.01
        assert report.passed
        assert report.M1 == 0.25
        assert np.isfinite(report.weighted_lhs) and np.isfinite(report.weighted_rhs)
        assert report.hl_ratio <= report.h2l1_ratio

    def test_l1_uses_half_as_margin(self, cubic_l1_spec):
        report = estimate_check(cubic_l1_spec, Grid(41, 1.0), 4)
        assert report.M1 == 0.5
        assert report.passed

    def test_inadmissible_coefficients(self):
        spec = ProblemSpec(
            l=4, lam=1.0, length=1.0,
            bc=CanonicalDiagonal(a=[0.0] * 3, b=[0.0] * 3),
            forcing=TrigSum(terms=[(1.0, 1.0, 0.0)]),
        )
        with pytest.raises(InadmissibleCoefficients) as info:
            estimate_check(spec, Grid(41, 1.0), 4)
        assert info.value.exit_code == 2

    def test_zero_forcing(self, l2_spec):
        spec = l2_spec.model_copy(update={"forcing": ExactPolynomial(coeffs=[])})
        with pytest.raises(ZeroForcing):
            estimate_check(spec, Grid(41, 1.0), 4)

    def test_tolerance_override(self, l2_spec):
        report = estimate_check(l2_spec, Grid(41, 1.0), 4, tol_l2=-1.0)
        assert not report.l2_ok
        assert not report.passed


class TestUniqueness:

    @pytest.mark.parametrize("l", [2, 3])
    def test_admissible_systems_are_unique(self, l, rng):
        for _ in range(3):
            spec = ProblemSpec(
                l=l, lam=float(rng.uniform(0.5, 2.0)), length=1.0,
                bc=random_admissible_canonical(l, rng),
                forcing=TrigSum(terms=[(1.0, 1.0, 0.0)]),
            )
            check = uniqueness_check(spec, Grid(41, 1.0), 4)
            assert check.homogeneous_max <= 1e-9
            assert check.singular_ratio > 1e-10
            assert check.unique

    def test_near_singular_system_is_flagged(self, l2_spec):
        system = assemble(l2_spec, Grid(41, 1.0), 4)
        matrix = system.matrix.copy()
        matrix[1] = matrix[0] + 1e-15 * np.arange(matrix.shape[1])
        ratio = singular_ratio(replace(system, matrix=matrix))
        assert ratio < 1e-12
        assert not UniquenessCheck(homogeneous_max=0.0, singular_ratio=ratio).unique
