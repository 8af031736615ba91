"""End-to-end command-line behavior: exit codes, output, artifacts.

Exit codes are load-bearing (0 property holds, 1 property fails,
2 input error); scripts branch on them, so every path is pinned.
"""

from __future__ import annotations

import json

import pytest

from opaquemdp.cli import main
from opaquemdp.fileio import read_gmdp, read_verdict

from conftest import fixture_path


def run_cli(capsys, *args: str):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def broken_model(tmp_path):
    path = tmp_path / "broken.gmdp"
    path.write_text("{ not json ]")
    return str(path)


@pytest.fixture()
def rowsum_model(tmp_path):
    with open(fixture_path("five_state.gmdp")) as fh:
        doc = json.load(fh)
    doc["kernel"][0]["p"] = 0.05
    path = tmp_path / "rowsum.gmdp"
    path.write_text(json.dumps(doc))
    return str(path)


class TestValidate:
    def test_valid_model(self, capsys):
        code, out, _ = run_cli(capsys, "validate", fixture_path("five_state.gmdp"))
        assert code == 0
        assert "5 states" in out
        assert "valid: yes" in out

    def test_malformed_document(self, capsys, broken_model):
        code, _, err = run_cli(capsys, "validate", broken_model)
        assert code == 2
        assert "error:" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "validate", str(tmp_path / "no.gmdp"))
        assert code == 2
        assert "error:" in err

    def test_rowsum_violation_names_the_row(self, capsys, rowsum_model):
        code, out, _ = run_cli(capsys, "validate", rowsum_model)
        assert code == 1
        assert "valid: no" in out
        assert "'A'" in out and "'u'" in out

    def test_report_written(self, capsys, tmp_path):
        out_path = tmp_path / "report.json"
        code, _, _ = run_cli(capsys, "validate", fixture_path("five_state.gmdp"),
                             "--out", str(out_path))
        assert code == 0
        doc = json.loads(out_path.read_text())
        assert doc["valid"] is True
        assert doc["tool"]["name"] == "opaquemdp"
        assert doc["tool"]["version"]


class TestEstimator:
    def test_initial_estimator_summary(self, capsys, tmp_path):
        out_path = tmp_path / "est.json"
        code, out, _ = run_cli(capsys, "estimator", fixture_path("five_state.gmdp"),
                               "--kind", "initial", "--eps", "0",
                               "--out", str(out_path))
        assert code == 0
        assert "9 states, 3 revealing" in out
        doc = json.loads(out_path.read_text())
        assert doc["kind"] == "initial"
        assert len(doc["states"]) == 9

    def test_current_estimator_summary(self, capsys):
        code, out, _ = run_cli(capsys, "estimator", fixture_path("five_state.gmdp"),
                               "--kind", "current", "--eps", "0")
        assert code == 0
        assert "8 states, 4 revealing" in out

    def test_invalid_model_exits_one(self, capsys, rowsum_model):
        code, _, err = run_cli(capsys, "estimator", rowsum_model)
        assert code == 1
        assert "invalid model" in err


class TestVerify:
    def test_initial_opaque(self, capsys):
        code, out, _ = run_cli(capsys, "verify", fixture_path("five_state.gmdp"),
                               "--kind", "initial", "--eps", "0",
                               "--lambda", "0.9", "--horizon", "5")
        assert code == 0
        assert "verdict: opaque" in out
        assert "A: 0.1" in out

    def test_current_opaque(self, capsys):
        code, out, _ = run_cli(capsys, "verify", fixture_path("five_state.gmdp"),
                               "--kind", "current", "--eps", "0",
                               "--lambda", "0.8", "--horizon", "5")
        assert code == 0
        assert "verdict: opaque" in out

    def test_not_opaque_exits_one_with_witness(self, capsys):
        code, out, _ = run_cli(capsys, "verify", fixture_path("five_state.gmdp"),
                               "--kind", "initial", "--eps", "0",
                               "--lambda", "0.95", "--horizon", "1")
        assert code == 1
        assert "NOT opaque" in out
        assert "witness A" in out

    def test_verdict_report_round_trips(self, capsys, tmp_path):
        out_path = tmp_path / "verdict.json"
        code, _, _ = run_cli(capsys, "verify", fixture_path("five_state.gmdp"),
                             "--kind", "initial", "--eps", "0",
                             "--lambda", "0.9", "--horizon", "5",
                             "--out", str(out_path))
        assert code == 0
        verdict = read_verdict(str(out_path))
        assert verdict.opaque
        assert verdict.kind == "initial-state"
        assert verdict.per_initial["A"] == pytest.approx(0.1, abs=1e-12)

    def test_bad_parameters_exit_two(self, capsys):
        code, _, err = run_cli(capsys, "verify", fixture_path("five_state.gmdp"),
                               "--lambda", "1.5", "--horizon", "5")
        assert code == 2
        assert "error:" in err


class TestRelate:
    def test_initsop_holds(self, capsys):
        code, out, _ = run_cli(
            capsys, "relate",
            fixture_path("pair_concrete.gmdp"),
            fixture_path("pair_abstract.gmdp"),
            fixture_path("pair_relation.json"),
            "--kind", "initial", "--eps", "0.1", "--delta", "0.1")
        assert code == 0
        assert "relation holds" in out

    def test_initsop_fails_at_tight_eps(self, capsys):
        code, out, _ = run_cli(
            capsys, "relate",
            fixture_path("pair_concrete.gmdp"),
            fixture_path("pair_abstract.gmdp"),
            fixture_path("pair_relation.json"),
            "--kind", "initial", "--eps", "0.01", "--delta", "0.1")
        assert code == 1
        assert "FAILS (5 failures)" in out

    def test_cursop_reports_interpreted_conditions(self, capsys, tmp_path):
        out_path = tmp_path / "relate.json"
        code, out, _ = run_cli(
            capsys, "relate",
            fixture_path("pair_concrete.gmdp"),
            fixture_path("pair_abstract.gmdp"),
            fixture_path("pair_relation.json"),
            "--kind", "current", "--eps", "0.1", "--delta", "0.1",
            "--out", str(out_path))
        assert code == 1
        assert "FAILS (1 failures)" in out
        assert "interpreted reading" in out
        doc = json.loads(out_path.read_text())
        assert doc["holds"] is False
        assert doc["interpreted"] == ["3b", "3d"]
        assert doc["failures"][0]["condition"] == "3b"
        assert doc["failures"][0]["state_a"] == "A"

    def test_missing_relation_file_exits_two(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "relate",
            fixture_path("pair_concrete.gmdp"),
            fixture_path("pair_abstract.gmdp"),
            str(tmp_path / "no.json"),
            "--kind", "initial", "--eps", "0.1", "--delta", "0.1")
        assert code == 2
        assert "error:" in err


@pytest.mark.filterwarnings("ignore::UserWarning")
class TestAbstract:
    ROAD_ARGS = ("--eta", "0.5", "--theta", "0", "--mu", "0",
                 "--eps", "1.0", "--delta", "0.15")

    def test_road_build_passes_initial_check(self, capsys, tmp_path):
        out_path = tmp_path / "abs.gmdp"
        code, out, _ = run_cli(capsys, "abstract",
                               fixture_path("road_traffic.json"),
                               *self.ROAD_ARGS, "--out", str(out_path))
        assert code == 0
        assert "6 states" in out
        assert "eta_max 0.5" in out
        assert "passes" in out
        built = read_gmdp(str(out_path))
        assert built == read_gmdp(fixture_path("road_abstraction.gmdp"))
        doc = json.loads(out_path.read_text())
        assert doc["meta"]["relation_radius"] == 10.0

    def test_current_gate_fails_without_inflation(self, capsys):
        code, out, _ = run_cli(capsys, "abstract",
                               fixture_path("road_traffic.json"),
                               *self.ROAD_ARGS, "--kind", "current")
        assert code == 1
        assert "theta_min 10.0" in out
        assert "FAILS" in out

    def test_oversized_cells_fail_the_gate(self, capsys):
        code, out, _ = run_cli(capsys, "abstract",
                               fixture_path("road_traffic.json"),
                               "--eta", "0.6", "--theta", "0", "--mu", "0",
                               "--eps", "1.0", "--delta", "0.15")
        assert code == 1
        assert "FAILS" in out

    def test_invalid_parameters_exit_two(self, capsys):
        code, _, err = run_cli(capsys, "abstract",
                               fixture_path("road_traffic.json"),
                               "--eta", "-1", "--theta", "0", "--mu", "0",
                               "--eps", "1.0", "--delta", "0.15")
        assert code == 2
        assert "error:" in err


@pytest.mark.filterwarnings("ignore::UserWarning")
class TestTransfer:
    def make_verdict(self, capsys, tmp_path) -> str:
        out_path = tmp_path / "verdict.json"
        code, _, _ = run_cli(capsys, "verify",
                             fixture_path("road_abstraction.gmdp"),
                             "--kind", "initial", "--eps", "0.05",
                             "--lambda", "1.0", "--horizon", "5",
                             "--out", str(out_path))
        assert code == 0
        return str(out_path)

    def test_road_guarantee(self, capsys, tmp_path):
        verdict_path = self.make_verdict(capsys, tmp_path)
        report_path = tmp_path / "transfer.json"
        code, out, _ = run_cli(capsys, "transfer", verdict_path,
                               "--eps-rel", "1.0", "--delta", "0.15",
                               "--out", str(report_path))
        assert code == 0
        assert "(2.05, 0.1968744043" in out
        doc = json.loads(report_path.read_text())
        assert doc["eps_concrete"] == 2.05
        assert doc["lambda_concrete"] == pytest.approx(0.7225 ** 5,
                                                       rel=1e-12)

    def test_inapplicable_hypothesis_exits_one(self, capsys, tmp_path):
        verdict = {
            "kind": "initial-state", "eps": 0.0, "lambda": 0.5,
            "horizon": 2, "opaque": True, "witness": None, "margin": 0.0,
        }
        path = tmp_path / "verdict.json"
        path.write_text(json.dumps(verdict))
        code, _, err = run_cli(capsys, "transfer", str(path),
                               "--eps-rel", "0", "--delta", "0.5")
        assert code == 1
        assert "transfer inapplicable" in err

    def test_not_opaque_verdict_exits_one(self, capsys, tmp_path):
        verdict = {
            "kind": "initial-state", "eps": 0.0, "lambda": 0.9,
            "horizon": 2, "opaque": False, "witness": "A", "margin": -0.1,
        }
        path = tmp_path / "verdict.json"
        path.write_text(json.dumps(verdict))
        code, _, err = run_cli(capsys, "transfer", str(path),
                               "--eps-rel", "0", "--delta", "0.1")
        assert code == 1

    def test_missing_verdict_exits_two(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "transfer",
                               str(tmp_path / "no.json"),
                               "--eps-rel", "0", "--delta", "0.1")
        assert code == 2


class TestSimulate:
    def test_report_csv_and_figure(self, capsys, tmp_path):
        out_path = tmp_path / "estimate.json"
        csv_path = tmp_path / "hits.csv"
        png_path = tmp_path / "hits.png"
        code, out, _ = run_cli(capsys, "simulate", fixture_path("five_state.gmdp"),
                               "--kind", "initial", "--eps", "0",
                               "--x0", "A", "--horizon", "3",
                               "--samples", "20000", "--seed", "7",
                               "--out", str(out_path),
                               "--csv", str(csv_path),
                               "--plot", str(png_path))
        assert code == 0
        assert "p_hat:" in out
        doc = json.loads(out_path.read_text())
        assert doc["N"] == 20000
        assert doc["seed"] == 7
        assert abs(doc["p_hat"] - 0.1) < 0.02
        # the stamp records the process argv, which here is pytest's
        assert isinstance(doc["tool"]["invocation"], list)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "step,first_hits"
        assert len(lines) == 5
        assert png_path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_same_seed_same_output(self, capsys):
        outputs = []
        for _ in range(2):
            code, out, _ = run_cli(capsys, "simulate",
                                   fixture_path("five_state.gmdp"),
                                   "--x0", "A", "--horizon", "3",
                                   "--samples", "5000", "--seed", "11")
            assert code == 0
            outputs.append(out)
        assert outputs[0] == outputs[1]

    def test_fixed_input_sequence_mode(self, capsys):
        code, out, _ = run_cli(capsys, "simulate", fixture_path("five_state.gmdp"),
                               "--x0", "B", "--kind", "current",
                               "--horizon", "2", "--samples", "2000",
                               "--seed", "3", "--inputs", "u,u")
        assert code == 0
        assert "fixed input sequence" in out

    def test_unknown_start_state_exits_two(self, capsys):
        code, _, err = run_cli(capsys, "simulate", fixture_path("five_state.gmdp"),
                               "--x0", "Z", "--horizon", "2")
        assert code == 2
        assert "error:" in err


class TestParser:
    def test_help_screens(self, capsys):
        for args in (["--help"], ["verify", "--help"],
                     ["simulate", "--help"]):
            with pytest.raises(SystemExit) as exc:
                main(args)
            assert exc.value.code == 0
            out = capsys.readouterr().out
            assert "usage:" in out

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "opaquemdp" in capsys.readouterr().out

    def test_missing_subcommand_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
