import csv
import json

import numpy as np

from app.main import _reference_n, build_parser, main, parse_config
from app.models.schemas import CanonicalDiagonal, ProblemSpec, TrigSum


def _stderr_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestParsing:

    def test_defaults(self):
        config = parse_config(["estimates", "--spec", "s.json"])
        assert config.command == "estimates"
        assert config.grid_n == 201
        assert config.accuracy_p == 4
        assert config.max_l == 5
        assert config.orders == [2, 3, 4]
        assert config.cases is None

    def test_mms_defaults_to_coarse_grid(self):
        assert parse_config(["mms", "--spec", "s.json"]).grid_n == 41

    def test_overrides(self):
        config = parse_config([
            "sweep", "--n", "61", "--p", "2", "--seed", "9", "--orders", "2", "3",
            "--cases", "4", "--tol-l2", "0.01", "--max-l", "3",
        ])
        assert (config.grid_n, config.accuracy_p, config.seed) == (61, 2, 9)
        assert config.orders == [2, 3]
        assert config.cases == 4
        assert config.tol_l2 == 0.01

    def test_every_command_is_registered(self):
        parser = build_parser()
        for command in ["check", "solve", "verify-lemmas", "mms", "estimates", "sweep"]:
            assert parser.parse_args([command]).command == command

    def test_bad_accuracy_order_exits_1(self, capsys):
        assert main(["solve", "--p", "3"]) == 1
        assert _stderr_error(capsys)["error"] == "UsageError"

    def test_missing_command_exits_1(self, capsys):
        assert main([]) == 1
        assert _stderr_error(capsys)["exit_code"] == 1


class TestCheck:

    def test_admissible_l2(self, capsys, write_spec, l2_spec):
        assert main(["check", "--spec", str(write_spec(l2_spec))]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["admissible"] is True
        assert payload["A"] == [0.5, 0.25]
        assert payload["B"] == [0.5]
        assert payload["family"] == "L2_reduced"

    def test_inadmissible_l4(self, capsys, write_spec):
        spec = ProblemSpec(
            l=4, lam=1.0, length=1.0,
            bc=CanonicalDiagonal(a=[0.0] * 3, b=[0.0] * 3),
            forcing=TrigSum(terms=[(1.0, 1.0, 0.0)]),
        )
        assert main(["check", "--spec", str(write_spec(spec))]) == 2
        assert json.loads(capsys.readouterr().out)["admissible"] is False

    def test_missing_spec_flag(self, capsys):
        assert main(["check"]) == 1
        error = _stderr_error(capsys)
        assert error["error"] == "SpecValidationError"
        assert error["violations"][0]["field"] == "spec"

    def test_missing_spec_file(self, capsys, tmp_path):
        assert main(["check", "--spec", str(tmp_path / "nope.json")]) == 1
        assert _stderr_error(capsys)["error"] == "FileNotFoundError"

    def test_order_above_max_l(self, capsys, write_spec, l2_spec):
        assert main(["check", "--spec", str(write_spec(l2_spec)), "--max-l", "1"]) == 1
        assert _stderr_error(capsys)["violations"][0]["field"] == "l"

    def test_invalid_spec(self, capsys, write_spec, l2_spec):
        bad = l2_spec.model_copy(update={"lam": -2.0})
        assert main(["check", "--spec", str(write_spec(bad))]) == 1
        assert _stderr_error(capsys)["violations"][0]["field"] == "lambda"


class TestSolve:

    def test_l1_manufactured_csv(self, tmp_path, write_spec, cubic_l1_spec):
        out = tmp_path / "out"
        code = main(["solve", "--spec", str(write_spec(cubic_l1_spec)), "--n", "41", "--out", str(out)])
        assert code == 0
        with (out / "solution.csv").open() as handle:
            rows = list(csv.DictReader(handle))
        x = np.array([float(r["x"]) for r in rows])
        u = np.array([float(r["u"]) for r in rows])
        assert len(rows) == 41
        assert np.max(np.abs(u - x * (1 - x) ** 2)) <= 1e-8
        assert (out / "solution.json").exists()
        assert (out / "metadata.json").exists()

    def test_grid_above_limit(self, capsys, tmp_path, write_spec, cubic_l1_spec):
        code = main(["solve", "--spec", str(write_spec(cubic_l1_spec)), "--n", "5000", "--out", str(tmp_path)])
        assert code == 1
        assert _stderr_error(capsys)["violations"][0]["field"] == "n"

    def test_grid_below_stencil(self, capsys, tmp_path, write_spec, l2_spec):
        code = main(["solve", "--spec", str(write_spec(l2_spec)), "--n", "8", "--out", str(tmp_path)])
        assert code == 1


class TestEstimates:

    def test_passes_and_is_reproducible(self, tmp_path, write_spec, l2_spec):
        spec_path = str(write_spec(l2_spec))
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["estimates", "--spec", spec_path, "--n", "61", "--out", str(first)]) == 0
        assert main(["estimates", "--spec", spec_path, "--n", "61", "--out", str(second)]) == 0
        report = json.loads((first / "estimates.json").read_text())
        assert report["passed"] is True
        assert report["l2_ratio"] <= 1.001
        assert (first / "estimates.json").read_bytes() == (second / "estimates.json").read_bytes()

    def test_contract_failure_exits_2(self, tmp_path, write_spec, l2_spec):
        code = main([
            "estimates", "--spec", str(write_spec(l2_spec)), "--n", "61",
            "--tol-l2", "-1", "--out", str(tmp_path),
        ])
        assert code == 2

    def test_inadmissible_exits_2(self, capsys, tmp_path, write_spec):
        spec = ProblemSpec(
            l=4, lam=1.0, length=1.0,
            bc=CanonicalDiagonal(a=[0.0] * 3, b=[0.0] * 3),
            forcing=TrigSum(terms=[(1.0, 1.0, 0.0)]),
        )
        assert main(["estimates", "--spec", str(write_spec(spec)), "--n", "41", "--out", str(tmp_path)]) == 2
        assert _stderr_error(capsys)["error"] == "InadmissibleCoefficients"


class TestVerifyLemmas:

    def test_small_suite(self, tmp_path, capsys):
        assert main(["verify-lemmas", "--max-l", "2", "--cases", "2", "--out", str(tmp_path)]) == 0
        rows = json.loads((tmp_path / "lemmas.json").read_text())
        assert len(rows) == 4 * 2 * 4
        assert json.loads(capsys.readouterr().out)["failures"] == 0


class TestMms:

    def test_manufactured_exact_regime(self, tmp_path, write_spec, cubic_l1_spec):
        code = main([
            "mms", "--spec", str(write_spec(cubic_l1_spec)), "--n", "21", "--manufactured", "--out", str(tmp_path),
        ])
        assert code == 0
        report = json.loads((tmp_path / "convergence.json").read_text())
        assert report["mode"] == "exact"
        assert report["grid_sizes"] == [21, 41, 81]

    def test_self_convergence_on_default_grids(self, tmp_path, write_spec, l2_spec):
        assert main(["mms", "--spec", str(write_spec(l2_spec)), "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "convergence.json").read_text())
        assert report["mode"] == "self"
        assert report["grid_sizes"] == [41, 81, 161]
        assert report["reference_n"] == 1281
        assert report["fitted_order"] >= 3.5

    def test_reference_grid_is_capped(self):
        assert _reference_n(161) == 1281
        assert _reference_n(801) == 3201
        assert _reference_n(2001) == 4001


class TestSweep:

    def test_sweep_writes_deterministic_reports(self, tmp_path, capsys):
        def run(name):
            out = tmp_path / name
            code = main([
                "sweep", "--orders", "2", "--cases", "2", "--n", "41",
                "--out", str(out), "--db", f"sqlite:///{tmp_path / (name + '.db')}",
            ])
            return code, out

        code, first = run("a")
        assert code == 0
        with (first / "sweep.csv").open() as handle:
            rows = list(csv.DictReader(handle))
        assert [r["passed"] for r in rows] == ["true", "true"]
        assert json.loads((first / "sweep.json").read_text())["summary"]["passed"] == 2

        _, second = run("b")
        assert (first / "sweep.csv").read_bytes() == (second / "sweep.csv").read_bytes()
        assert (first / "sweep.json").read_bytes() == (second / "sweep.json").read_bytes()

    def test_orders_above_max_l(self, capsys, tmp_path):
        assert main(["sweep", "--orders", "6", "--out", str(tmp_path)]) == 1
        assert _stderr_error(capsys)["violations"][0]["field"] == "orders"
