import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pbvlab import cli, csvio

import scenarios


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    return scenarios.prepare(str(tmp_path_factory.mktemp("fixtures")))


def run_json(argv, tmp_path, name="out.json"):
    out = str(tmp_path / name)
    code = cli.run(argv + ["--out", out])
    with open(out, encoding="utf-8") as fh:
        return code, json.load(fh)


@pytest.mark.parametrize("case", sorted(scenarios.GOLDEN_CASES))
def test_golden_report(case, fixtures, tmp_path):
    code, text = scenarios.run_case(case, fixtures, str(tmp_path))
    assert code == 0
    with open(os.path.join(scenarios.GOLDEN, case + ".json"), encoding="utf-8") as fh:
        assert text == fh.read()


@pytest.mark.parametrize("case", ["fit_g2", "fit_spectrum", "phonon_table"])
def test_rerun_is_byte_identical(case, fixtures, tmp_path):
    outs = []
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        outs.append(scenarios.run_case(case, fixtures, str(tmp_path / sub))[1])
    assert outs[0] == outs[1]


def test_report_schema(fixtures, tmp_path):
    code, rep = run_json(scenarios.expand(scenarios.GOLDEN_CASES["fit_g2"], fixtures), tmp_path)
    assert code == 0
    assert set(rep) == {"schema_version", "tool", "version", "command", "options", "inputs",
                        "params", "derived", "models", "curve", "fit", "warnings", "converged",
                        "generated_at"}
    assert rep["schema_version"] == 1
    assert rep["inputs"][0]["name"] == "g2.csv" and len(rep["inputs"][0]["sha256"]) == 64
    assert set(rep["params"]["tau1"]) == {"value", "stderr"}


@pytest.mark.parametrize("case", ["fit_spectrum", "fit_linewidth", "fit_shift", "fit_g2",
                                  "fit_saturation", "polarization_fit", "polarization_predict",
                                  "phonon_table"])
def test_plot_data_round_trip(case, fixtures, tmp_path):
    pd, svg = str(tmp_path / "curve.csv"), str(tmp_path / "plot.svg")
    argv = scenarios.expand(scenarios.GOLDEN_CASES[case], fixtures) + ["--plot-data", pd, "--plot", svg]
    code, rep = run_json(argv, tmp_path)
    assert code == 0
    with open(pd, encoding="utf-8") as fh:
        text = fh.read()
    # the report alone regenerates the written samples exactly
    assert text == cli.plot_data_csv(rep)
    rows = list(csv.reader(io.StringIO(text)))
    x, ys = cli.evaluate_report(rep)
    assert rows[0] == [rep["curve"]["x_name"], *ys]
    got = np.array([[float(v) for v in r] for r in rows[1:]])
    np.testing.assert_array_equal(got[:, 0], x)
    for k, y in enumerate(ys.values(), start=1):
        np.testing.assert_array_equal(got[:, k], y)
    with open(svg, encoding="utf-8") as fh:
        assert fh.read().startswith("<svg")


def test_fit_spectrum_example(fixtures, tmp_path):
    code, rep = run_json(["fit-spectrum", fixtures["lowdose.csv"], "--excitation-nm", "515"], tmp_path)
    assert code == 0
    assert rep["derived"]["doublets"][0]["splitting_ghz"] == pytest.approx(3937, rel=0.01)
    assert rep["derived"]["raman_excluded"]["center_nm"] == pytest.approx(552.945, abs=0.01)
    assert any("Raman" in w for w in rep["warnings"])


def test_equiv_temp_example(tmp_path):
    code, rep = run_json(["phonon", "equiv-temp", "--delta-ghz", "3878"], tmp_path)
    assert code == 0
    assert rep["derived"]["equivalent_temperature_k"] == pytest.approx(8.8, abs=0.1)
    assert rep["derived"]["residual"] < 1e-9
    code, rep = run_json(["phonon", "equiv-temp", "--delta-ghz", "850", "--ref", "siv2@0.4"], tmp_path)
    assert rep["derived"]["equivalent_temperature_k"] == pytest.approx(2.4444781, rel=1e-7)


def test_fit_g2_simulator_example(fixtures, tmp_path):
    code, rep = run_json(["fit-g2", fixtures["g2.csv"], "--rho", "0.76"], tmp_path)
    assert code == 0
    assert abs(rep["derived"]["g2_zero"]) < 0.1
    assert rep["derived"]["emitter_count"]["n_int"] == 1
    assert rep["params"]["tau1"]["value"] == pytest.approx(3.7, rel=0.05)
    code, same = run_json(["fit-g2", fixtures["g2.csv"], "--signal", "76", "--background", "24"], tmp_path)
    assert same["params"] == rep["params"]


def test_saturation_with_background(fixtures, tmp_path):
    code, rep = run_json(scenarios.expand(scenarios.GOLDEN_CASES["fit_saturation"], fixtures), tmp_path)
    assert rep["params"]["i_inf"]["value"] == pytest.approx(222, rel=1e-6)
    assert rep["params"]["p_sat"]["value"] == pytest.approx(1.8, rel=1e-6)
    assert rep["derived"]["background_slope"] == pytest.approx(9.0)


def test_polarization_reports(fixtures, tmp_path):
    code, rep = run_json(["polarization", "fit", fixtures["pol_s1.csv"], fixtures["pol_s2.csv"]], tmp_path)
    assert rep["derived"]["orthogonality_deg"] == pytest.approx(90.0, abs=0.1)
    code, rep = run_json(["polarization", "predict", "--dipole", "xy"], tmp_path)
    assert code == 0
    assert rep["derived"]["visibility"] == pytest.approx(0.5, abs=1e-12)
    assert any("0.268" in w for w in rep["warnings"])


def test_batch_mode_matches_single_runs(fixtures, tmp_path):
    files = [fixtures["linewidth.csv"], fixtures["linewidth.csv"]]
    code, batch = run_json(["fit-temperature", *files, "--mode", "linewidth", "--jobs", "2"], tmp_path)
    assert code == 0
    assert batch["command"] == "fit-temperature" and len(batch["reports"]) == 2
    code, single = run_json(["fit-temperature", files[0], "--mode", "linewidth"], tmp_path, "one.json")
    for rep in batch["reports"]:
        rep.pop("generated_at")
    single.pop("generated_at")
    assert batch["reports"] == [single, single]


def test_batch_mixed_failure_code(fixtures, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("temperature_k,value\n1,2\n")
    code, batch = run_json(["fit-temperature", fixtures["shift.csv"], str(bad), "--mode", "shift"], tmp_path)
    assert code == 3
    assert batch["reports"][0]["converged"] is True
    assert batch["reports"][1]["exit_code"] == 3 and "at least 4" in batch["reports"][1]["error"]


def test_simulate_is_deterministic(fixtures, tmp_path, capsys):
    for what in ("stream", "g2"):
        assert cli.run(["simulate", what, "--config", fixtures["emitter.json"], "--seed", "3"]) == 0
        a = capsys.readouterr().out
        assert cli.run(["simulate", what, "--config", fixtures["emitter.json"], "--seed", "3"]) == 0
        assert capsys.readouterr().out == a
    assert cli.run(["simulate", "stream", "--config", fixtures["emitter.json"], "--seed", "4"]) == 0
    assert capsys.readouterr().out != a


def test_simulate_saturation(tmp_path, capsys):
    cfg = tmp_path / "sat.json"
    cfg.write_text(json.dumps({"rates": {"k_exc": 0, "k_rad": 0.25}, "duration_ns": 2e6,
                               "powers_mw": [0.5, 1, 2, 4], "k_exc_per_mw": 0.1}))
    assert cli.run(["simulate", "saturation", "--config", str(cfg), "--seed", "1"]) == 0
    P, I = csvio.read_table(capsys.readouterr().out, ("power_mw", "intensity_kcps"), min_rows=4)
    # I_inf = 0.25 counts/ns = 250000 kcps, P_sat = 2.5 mW
    np.testing.assert_allclose(I, 2.5e5 * P / (P + 2.5), rtol=0.03)


# ------------------------------------------------------------ exit codes

@pytest.mark.parametrize("argv", [
    [], ["fit-g2"], ["fit-temperature", "x.csv"], ["bogus"],
    ["fit-g2", "x.csv", "--rho", "0.7", "--signal", "1", "--background", "1"],
    ["fit-g2", "x.csv", "--signal", "1"],
    ["fit-temperature", "x.csv", "--mode", "shift", "--jobs", "0"],
    ["fit-saturation", "x.csv", "--max-iter", "0"],
])
def test_usage_errors_exit_2(argv):
    assert cli.run(argv) == 2


def test_input_errors_exit_3(tmp_path, fixtures):
    missing = str(tmp_path / "nope.csv")
    assert cli.run(["fit-g2", missing]) == 3
    bad = tmp_path / "neg.csv"
    bad.write_text("power_mw,intensity_kcps\n0.1,1\n0.2,-1\n0.3,2\n0.4,3\n")
    assert cli.run(["fit-saturation", str(bad)]) == 3
    huge = tmp_path / "huge.csv"
    huge.write_text("temperature_k,value\n1,550\n2,550.1\n3,550.2\n1e90,551\n")
    assert cli.run(["fit-temperature", str(huge), "--mode", "shift"]) == 3
    assert cli.run(["phonon", "equiv-temp", "--delta-ghz", "-5"]) == 3
    assert cli.run(["phonon", "equiv-temp", "--delta-ghz", "5", "--ref", "nv@1"]) == 3
    assert cli.run(["phonon", "table", "--tmin", "5", "--tmax", "1"]) == 3
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"rates": {"k_exc": 0.1}}')
    assert cli.run(["simulate", "g2", "--config", str(cfg)]) == 3


def test_non_convergence_exit_4_still_writes_report(fixtures, tmp_path):
    code, rep = run_json(["fit-saturation", fixtures["saturation.csv"], "--max-iter", "1"], tmp_path)
    assert code == 4
    assert rep["converged"] is False
    assert "not_converged" in rep["fit"][0]["flags"]


def test_module_entry_point(tmp_path):
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    p = subprocess.run([sys.executable, "-m", "pbvlab", "phonon", "equiv-temp", "--delta-ghz", "850"],
                       capture_output=True, text=True, env=env)
    assert p.returncode == 0
    assert json.loads(p.stdout)["derived"]["equivalent_temperature_k"] == pytest.approx(2.444, abs=1e-3)
    p = subprocess.run([sys.executable, "-m", "pbvlab", "fit-g2"], capture_output=True, text=True, env=env)
    assert p.returncode == 2


def test_defaults_override_reaches_cli(tmp_path, monkeypatch):
    p = tmp_path / "d.json"
    p.write_text(json.dumps({"reference": {"species": "GeV", "temperature_k": 1.0}}))
    monkeypatch.setenv("PBVLAB_DEFAULTS", str(p))
    code, rep = run_json(["phonon", "equiv-temp", "--delta-ghz", "169"], tmp_path)
    assert rep["options"]["reference"] == "GeV@1K"
    assert rep["derived"]["equivalent_temperature_k"] == pytest.approx(1.0, rel=1e-9)
