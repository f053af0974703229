import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.core.exceptions import SingularReduction, SpecValidationError
from app.models.schemas import (
    CanonicalDiagonal,
    ExactPolynomial,
    GeneralFull,
    GridSamples,
    ProblemSpec,
    RawLinearForms,
    TrigSum,
)
from app.services.problem import (
    boundary_relations,
    dump_spec,
    encode_raw_forms,
    ensure_valid,
    evaluate_forcing,
    load_spec,
    reduce_raw_forms,
    reduced_spec,
    to_general,
    validate_spec,
)


def _spec(**overrides):
    values = dict(
        l=2, lam=1.0, length=1.0,
        bc=CanonicalDiagonal(a=[0.0], b=[1.0]),
        forcing=ExactPolynomial(coeffs=[1.0]),
    )
    values.update(overrides)
    return ProblemSpec(**values)


class TestValidateSpec:

    def test_valid_spec_has_no_violations(self):
        assert validate_spec(_spec()) == []

    def test_one_violation_per_broken_invariant(self):
        spec = _spec(lam=-1.0, bc=CanonicalDiagonal(a=[0.0, 1.0], b=[1.0]))
        fields = {v.field for v in validate_spec(spec)}
        assert fields == {"lambda", "bc.a"}

    def test_wrong_map_size_message(self):
        spec = _spec(l=3, bc=CanonicalDiagonal(a=[0.0], b=[0.0, 0.0]))
        [violation] = validate_spec(spec)
        assert violation.field == "bc.a"
        assert violation.message == "coefficient map size must be l-1=2, got 1"

    def test_non_positive_order_and_length(self):
        fields = {v.field for v in validate_spec(_spec(l=0, length=0.0))}
        assert fields == {"l", "length"}

    def test_matrix_shapes(self):
        bc = GeneralFull(A=[[0.0, 0.0]], B=[[0.0], [0.0], [0.0]])
        [violation] = validate_spec(_spec(bc=bc))
        assert violation.field == "bc.B"

    def test_l1_accepts_empty_matrices(self):
        assert validate_spec(_spec(l=1, bc=GeneralFull(A=[], B=[]))) == []
        assert validate_spec(_spec(l=1, bc=GeneralFull(A=[], B=[[]]))) == []

    def test_non_finite_forcing(self):
        [violation] = validate_spec(_spec(forcing=ExactPolynomial(coeffs=[float("nan")])))
        assert violation.field == "forcing"

    def test_sample_count_must_match_grid(self):
        spec = _spec(forcing=GridSamples(values=[0.0] * 5))
        assert validate_spec(spec) == []
        assert validate_spec(spec, n=5) == []
        [violation] = validate_spec(spec, n=6)
        assert violation.field == "forcing.values"

    def test_ensure_valid_raises_with_violations(self):
        with pytest.raises(SpecValidationError) as info:
            ensure_valid(_spec(lam=0.0))
        assert info.value.exit_code == 1
        assert info.value.to_dict()["violations"][0]["field"] == "lambda"


class TestRepresentations:

    @pytest.mark.parametrize("l", [2, 3, 4])
    def test_encoded_forms_reduce_back(self, l, rng):
        for _ in range(20):
            general = GeneralFull(
                A=rng.standard_normal((l - 1, l)).tolist(),
                B=rng.standard_normal((l, l - 1)).tolist(),
            )
            reduced = reduce_raw_forms(l, encode_raw_forms(l, general))
            assert_allclose(reduced.A, general.A, atol=1e-10)
            assert_allclose(reduced.B, general.B, atol=1e-10)

    @pytest.mark.parametrize("l", [2, 3, 4])
    def test_reduction_satisfies_raw_forms(self, l, rng):
        for _ in range(100):
            alpha = rng.standard_normal((l - 1, 2 * l - 1))
            beta = rng.standard_normal((l, 2 * l - 1))
            general = reduce_raw_forms(l, RawLinearForms(alpha=alpha.tolist(), beta=beta.tolist()))
            # Jets built from the reduced form annihilate every raw form
            at0 = np.vstack([np.eye(l), np.asarray(general.A)])
            atL = np.vstack([np.eye(l - 1), np.asarray(general.B)])
            assert np.max(np.abs(alpha @ at0)) <= 1e-10 * max(1.0, np.max(np.abs(general.A)))
            assert np.max(np.abs(beta @ atL)) <= 1e-10 * max(1.0, np.max(np.abs(general.B)))

    @pytest.mark.parametrize("l", [2, 3, 4])
    def test_reduction_ignores_row_scaling(self, l, rng):
        alpha = rng.standard_normal((l - 1, 2 * l - 1))
        beta = rng.standard_normal((l, 2 * l - 1))
        scaled_alpha = alpha * rng.uniform(0.1, 10.0, size=(l - 1, 1)) * rng.choice([-1.0, 1.0], size=(l - 1, 1))
        scaled_beta = beta * rng.uniform(0.1, 10.0, size=(l, 1)) * rng.choice([-1.0, 1.0], size=(l, 1))
        plain = reduce_raw_forms(l, RawLinearForms(alpha=alpha.tolist(), beta=beta.tolist()))
        scaled = reduce_raw_forms(l, RawLinearForms(alpha=scaled_alpha.tolist(), beta=scaled_beta.tolist()))
        assert_allclose(scaled.A, plain.A, rtol=1e-9, atol=1e-12)
        assert_allclose(scaled.B, plain.B, rtol=1e-9, atol=1e-12)

    def test_wrong_shape_is_a_validation_error(self):
        raw = RawLinearForms(alpha=[[0.0, 0.0, 1.0]], beta=[[0.0, 1.0, 0.0]])
        with pytest.raises(SpecValidationError) as info:
            reduce_raw_forms(2, raw)
        assert [v.field for v in info.value.violations] == ["bc.beta"]
        assert info.value.exit_code == 1

    def test_singular_block_is_rejected(self):
        alpha = [[1.0, 1.0, 0.0]]
        beta = [[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        with pytest.raises(SingularReduction):
            reduce_raw_forms(2, RawLinearForms(alpha=alpha, beta=beta))

    def test_l1_reduction(self):
        general = reduce_raw_forms(1, RawLinearForms(alpha=[], beta=[[2.0]]))
        assert general.A == []
        assert general.B == [[]]

    def test_canonical_entries_land_on_the_anti_diagonal(self):
        general = to_general(3, CanonicalDiagonal(a=[0.3, 0.7], b=[0.2, -0.4]))
        assert general.A == [[0.0, 0.3, 0.0], [0.7, 0.0, 0.0]]
        assert general.B == [[0.0, 0.0], [0.0, 0.2], [-0.4, 0.0]]

    def test_reduced_spec_replaces_raw_forms(self):
        general = GeneralFull(A=[[0.5, 0.0]], B=[[0.0], [1.0]])
        spec = _spec(bc=encode_raw_forms(2, general))
        assert isinstance(reduced_spec(spec).bc, GeneralFull)
        assert reduced_spec(_spec()).bc == _spec().bc


class TestBoundaryRelations:

    @pytest.mark.parametrize("l", [1, 2, 3, 5])
    def test_counts_per_end(self, l):
        relations = boundary_relations(l, CanonicalDiagonal(a=[0.0] * (l - 1), b=[0.0] * (l - 1)))
        assert len(relations) == 2 * l + 1
        assert [r.end for r in relations].count("0") == l
        assert relations[0].label == "bc-dirichlet-0"
        assert relations[l].label == "bc-dirichlet-L"
        assert relations[l + 1].label == "bc-Dl-L"

    def test_l2_relations(self):
        relations = boundary_relations(2, CanonicalDiagonal(a=[0.25], b=[1.5]))
        by_label = {r.label: r.terms for r in relations}
        assert by_label["bc-relation(0, 1)"] == ((3, 1.0), (1, -0.25))
        assert by_label["bc-relation(L, 1)"] == ((3, 1.0), (1, -1.5))
        assert by_label["bc-Dl-L"] == ((2, 1.0),)


class TestForcing:

    def test_trig_sum(self):
        spec = _spec(forcing=TrigSum(terms=[(2.0, 3.0, 0.5)]))
        x = np.linspace(0.0, 1.0, 7)
        assert_allclose(evaluate_forcing(spec, x), 2.0 * np.sin(3.0 * x + 0.5))

    def test_empty_polynomial_is_zero(self):
        spec = _spec(forcing=ExactPolynomial(coeffs=[]))
        assert_allclose(evaluate_forcing(spec, np.linspace(0, 1, 4)), 0.0)

    def test_samples_must_match_nodes(self):
        spec = _spec(forcing=GridSamples(values=[1.0, 2.0]))
        with pytest.raises(SpecValidationError):
            evaluate_forcing(spec, np.linspace(0, 1, 3))


class TestJsonIO:

    def test_load_dump(self, tmp_path):
        spec = _spec()
        path = tmp_path / "spec.json"
        path.write_text(dump_spec(spec), encoding="utf-8")
        assert json.loads(path.read_text())["lambda"] == 1.0
        assert load_spec(path) == spec

    def test_schema_errors_become_violations(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"l": 2, "lambda": 1.0, "length": 1.0}), encoding="utf-8")
        with pytest.raises(SpecValidationError) as info:
            load_spec(path)
        assert {v.field for v in info.value.violations} == {"bc", "forcing"}
