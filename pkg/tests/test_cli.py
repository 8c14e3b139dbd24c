import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

SCHEMA = json.loads(
    (Path(__file__).resolve().parents[1]
     / "src/stabcert/schema/report.schema.json").read_text()
)


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "stabcert.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def run_json(*args, expect_code=0, cwd=None):
    out = run_cli(*args, cwd=cwd)
    assert out.returncode == expect_code, out.stderr or out.stdout
    report = json.loads(out.stdout)
    jsonschema.validate(report, SCHEMA)
    return report


FAST_ANALYZE = ("--samples", "10000", "--basin-n", "40", "--grid", "256")


class TestAnalyze:
    def test_decdec_high_b(self):
        report = run_json("analyze", "--map", "decdec", "--param", "b=1.5",
                          *FAST_ANALYZE)
        assert report["verdict"] == "GAS-certified"
        assert report["enveloping"]["route"] == "region-curve"
        assert report["embedding"]["failing_clause"] == "pseudo-fixed points exist"
        assert report["basin"]["fraction"] == 1.0

    def test_unstable_exits_zero(self):
        report = run_json("analyze", "--map", "ricker-delay", "--param", "b=2",
                          *FAST_ANALYZE)
        assert report["verdict"] == "Unstable"

    def test_unknown_map_exits_one(self):
        out = run_cli("analyze", "--map", "nonexistent")
        assert out.returncode == 1
        envelope = json.loads(out.stderr)
        assert "error" in envelope and "hint" in envelope
        assert out.stdout == ""

    def test_missing_source_exits_one(self):
        out = run_cli("analyze")
        assert out.returncode == 1
        assert "error" in json.loads(out.stderr)

    def test_both_sources_rejected(self, tmp_path):
        spec = tmp_path / "m.json"
        spec.write_text(json.dumps({"name": "m", "k": 1, "expr": "u1"}))
        out = run_cli("analyze", "--map", "decdec", "--spec-file", str(spec))
        assert out.returncode == 1

    def test_bad_param_exits_one(self):
        out = run_cli("analyze", "--map", "decdec", "--param", "b=oops")
        assert out.returncode == 1

    def test_deterministic_bytes(self):
        args = ("analyze", "--map", "decdec", "--param", "b=0.5",
                "--seed", "3", "--samples", "5000", "--basin-n", "20")
        first = run_cli(*args)
        second = run_cli(*args)
        assert first.stdout == second.stdout

    def test_spec_file_source(self, tmp_path):
        spec = tmp_path / "map.json"
        spec.write_text(json.dumps({
            "name": "user-decdec", "k": 2,
            "expr": "(b+1)^2/((b*u1+1)*(b*u2+1))",
            "params": {"b": 0.5}, "domain": [0, None], "fixed_point": 1.0,
        }))
        report = run_json("analyze", "--spec-file", str(spec), *FAST_ANALYZE)
        assert report["map"] == "user-decdec"
        assert report["verdict"] == "GAS-certified"


class TestRegions:
    def test_csv_outputs(self, tmp_path):
        report = run_json("regions", "--map", "down-up-a", "--param", "a=3",
                          "--grid", "256", "--out-dir", str(tmp_path))
        for key, path in report["files"].items():
            assert Path(path).exists(), key
        assert report["curve_points"]["y_eq_f"] >= 200
        assert report["curve_points"]["x_eq_f"] >= 200
        header = Path(report["files"]["regions"]).read_bytes().decode() \
            .split("\r\n")[0]
        assert header == "x,y,value,label"

    def test_expansion_regions(self, tmp_path):
        report = run_json("regions", "--map", "ricker-delay", "--param",
                          "b=0.5", "--expansion", "2", "--grid", "64",
                          "--out-dir", str(tmp_path))
        assert report["expansion"] == 2
        assert report["counts"]["R"] > 0

    def test_k1_rejected(self, tmp_path):
        spec = tmp_path / "m.json"
        spec.write_text(json.dumps({"name": "m", "k": 1, "expr": "u1*u1",
                                    "domain": [0, 4], "fixed_point": 1.0}))
        out = run_cli("regions", "--spec-file", str(spec))
        assert out.returncode == 1
        assert "k = 2" in json.loads(out.stderr)["error"]


class TestOtherCommands:
    def test_catalogue(self):
        report = run_json("catalogue")
        names = [m["name"] for m in report["maps"]]
        assert "decdec" in names and "ricker-stocking" in names

    def test_expand_prints_coefficients(self):
        report = run_json("expand", "--map", "linear-neg", "--expansion", "1")
        assert report["coefficients"] == pytest.approx([-6 / 25, 9 / 25],
                                                       abs=1e-14)
        assert report["one_norm"] == pytest.approx(0.6, abs=1e-14)

    def test_envelope_pass(self):
        report = run_json("envelope", "--map", "decdec-exp1", "--param",
                          "b=1.5", "--g", "(b+1)/(b*u1+1)",
                          "--samples", "20000")
        assert report["passed"]
        assert report["definition_check"]["n_witnesses"] == 0
        assert report["region_check"]["passed"]

    def test_envelope_failing_candidate(self):
        report = run_json("envelope", "--map", "decdec-exp1", "--param",
                          "b=0.5", "--g", "1.1-0.1*u1", "--samples", "20000")
        assert not report["passed"]
        assert report["definition_check"]["n_witnesses"] > 0

    def test_embed_exit_codes(self):
        report = run_json("embed", "--map", "bh-product", "--param", "a=2")
        assert report["verdict"] == "GAS-embedding-certified"
        report = run_json("embed", "--map", "bx-over-1py", "--param", "b=2",
                          expect_code=2)
        assert report["detail"]["omega_empty"]

    def test_simulate(self, tmp_path):
        traj = tmp_path / "traj.csv"
        report = run_json("simulate", "--map", "ricker-stocking",
                          "--param", "h=1", "--param", "xbar=1.5",
                          "--init", "0.2,0.4", "--traj", str(traj))
        assert report["result"]["outcome"] == "converged"
        assert traj.exists()
        lines = traj.read_bytes().decode().split("\r\n")
        assert lines[0] == "n,y"

    def test_out_writes_identical_report(self, tmp_path):
        out_file = tmp_path / "report.json"
        result = run_cli("expand", "--map", "decdec", "--param", "b=0.5",
                         "--expansion", "1", "--out", str(out_file))
        assert result.returncode == 0
        assert out_file.read_text() == result.stdout


class TestConfigValidation:
    def test_unknown_flag_rejected(self):
        out = run_cli("analyze", "--map", "decdec", "--bogus-flag", "1")
        assert out.returncode == 1
        assert "error" in json.loads(out.stderr)

    def test_spec_file_unknown_keys_rejected(self, tmp_path):
        spec = tmp_path / "m.json"
        spec.write_text(json.dumps({"name": "m", "k": 1, "expr": "u1",
                                    "strange": True}))
        out = run_cli("simulate", "--spec-file", str(spec), "--init", "1.0")
        assert out.returncode == 1
        assert "unknown map-spec keys" in json.loads(out.stderr)["error"]

    def test_embed_omega_csv(self, tmp_path):
        csv = tmp_path / "omega.csv"
        report = run_json("embed", "--map", "bh-product", "--param", "a=2",
                          "--grid", "64", "--omega-csv", str(csv))
        assert report["omega_file"] == str(csv)
        assert csv.read_bytes().decode().split("\r\n")[0] == "x,y,in_omega"


class TestAnalyzeSweep:
    def test_every_catalogue_map_analyzes(self):
        from stabcert import mapdef

        for name in mapdef.catalogue_names():
            out = run_cli("analyze", "--map", name, "--samples", "3000",
                          "--basin-n", "10", "--grid", "128")
            assert out.returncode in (0, 2), (name, out.stderr)
            report = json.loads(out.stdout)
            jsonschema.validate(report, SCHEMA)
            assert report["verdict"] in {"GAS-certified", "LAS-only",
                                         "Unstable", "Inconclusive"}


class TestEdgeExitCodes:
    def test_bad_init_length_is_an_error_envelope(self):
        out = run_cli("simulate", "--map", "decdec", "--init", "0.5")
        assert out.returncode == 1
        assert "error" in json.loads(out.stderr)

    def test_nonhyperbolic_analyze_is_inconclusive(self, tmp_path):
        spec = tmp_path / "swap.json"
        spec.write_text(json.dumps({"name": "swap", "k": 2, "expr": "u2",
                                    "domain": [0, 10], "fixed_point": 1.0}))
        out = run_cli("analyze", "--spec-file", str(spec), "--samples",
                      "2000", "--basin-n", "5")
        assert out.returncode == 2
        report = json.loads(out.stdout)
        jsonschema.validate(report, SCHEMA)
        assert report["verdict"] == "Inconclusive"


class TestExpansionFlag:
    def test_simulate_expansion_matches_base(self):
        base = run_json("simulate", "--map", "ricker-delay", "--param",
                        "b=0.5", "--init", "0.3,1.7")
        exp = run_json("simulate", "--map", "ricker-delay", "--param",
                       "b=0.5", "--init", "0.3,1.7", "--expansion", "1")
        assert exp["expansion"] == 1
        assert exp["result"]["outcome"] == base["result"]["outcome"]
        # matching prefix of the two trajectories (expansion reproduces the
        # base orbit index-for-index)
        a = dict(base["result"]["trajectory_preview"])
        b = dict(exp["result"]["trajectory_preview"])
        shared = sorted(set(a) & set(b))[:20]
        assert shared
        for n in shared:
            assert b[n] == pytest.approx(a[n], abs=1e-10)

    def test_envelope_on_expansion(self):
        report = run_json("envelope", "--map", "decdec", "--param", "b=1.5",
                          "--expansion", "1", "--g", "(b+1)/(b*u1+1)",
                          "--samples", "20000")
        assert report["passed"] and report["expansion"] == 1
