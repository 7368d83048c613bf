import csv
import math

import pytest

from gravab.cli import main
from gravab.scenario import resolve_config


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config_hash=")
    return list(csv.DictReader(lines[1:]))


def test_fig2_quantum_constant_phase(tmp_path):
    assert main(["run", "--config", "fig2_quantum", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "phases.csv")
    assert [float(r["P1"]) for r in rows] == [0.25, 0.5, 0.75]
    assert len({r["delta_phi_rad"] for r in rows}) == 1
    assert -0.30 <= float(rows[0]["delta_phi_rad"]) <= -0.18
    report = (tmp_path / "report.txt").read_text(encoding="utf-8")
    assert "fringe_recovered_rad" in report and "detection_literal_rad" in report
    assert "wall" not in report


def test_semiclassical_bundled_rows(tmp_path):
    assert main(["run", "--config", "appendix2_semiclassical", "--out-dir", str(tmp_path)]) == 0
    rows = [r for r in read_csv(tmp_path / "phases.csv") if r["method"] == "Semiclassical"]
    got = [float(r["delta_phi_rad"]) for r in rows]
    for g, want in zip(got, (-0.198, -0.374, -0.394)):
        assert abs(g - want) <= 0.15 * abs(want)
    assert (tmp_path / "trajectories.csv").exists()
    by_ifo = read_csv(tmp_path / "phases_by_interferometer.csv")
    assert {r["interferometer"] for r in by_ifo} == {"upper", "lower", "gradiometer"}


def test_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--config", "fig2_quantum", "--out-dir", str(d)]) == 0
    for name in ("phases.csv", "phases_by_interferometer.csv", "fringe.csv", "report.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_hash_in_every_file(tmp_path):
    assert main(["run", "--config", "fig2_quantum", "--out-dir", str(tmp_path)]) == 0
    heads = {p.read_text(encoding="utf-8").splitlines()[0] for p in tmp_path.iterdir()}
    assert len(heads) == 1 and next(iter(heads)).startswith("# config_hash=")


def test_missing_unit_suffix_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nid = bad\nmethods = potential\nP1_values = 0.5\n\n"
                   "[interferometer]\nsplitter_order = 52\nT = 1\n\n[source]\ntype = point\nmass_kg = 1\n",
                   encoding="utf-8")
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "'T'" in err and "unit suffix" in err and "bad.ini:8" in err


def test_unknown_config_name_is_validation_exit(tmp_path):
    assert main(["run", "--config", "no_such_scenario", "--out-dir", str(tmp_path)]) == 2


def test_sweep_p1_quantum_constant(tmp_path):
    assert main(["sweep", "--config", "fig2_quantum", "--key", "P1", "--values", "0.25,0.5,0.75",
                 "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 3 and len({r["delta_phi_rad"] for r in rows}) == 1


def test_sweep_p1_semiclassical_monotone(tmp_path):
    assert main(["sweep", "--config", "appendix2_semiclassical", "--key", "P1", "--values", "0.25,0.5,0.75",
                 "--out-dir", str(tmp_path)]) == 0
    rows = [r for r in read_csv(tmp_path / "sweep.csv") if r["method"] == "Semiclassical"]
    mags = [abs(float(r["delta_phi_rad"])) for r in rows]
    assert mags[0] < mags[1] < mags[2]


def test_sweep_standoff_quantum_monotone(tmp_path):
    assert main(["sweep", "--config", "fig2_quantum", "--key", "source_trajectory.apex_below_upper_arm_m",
                 "--values", "0.04,0.06,0.09,0.14", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    per_value = {}
    for r in rows:
        per_value.setdefault(float(r["apex_below_upper_arm_m"]), abs(float(r["delta_phi_rad"])))
    mags = [per_value[v] for v in sorted(per_value)]
    assert all(a > b for a, b in zip(mags, mags[1:]))


def test_sweep_rejects_non_numeric_key(tmp_path):
    assert main(["sweep", "--config", "fig2_quantum", "--key", "source.type", "--values", "1",
                 "--out-dir", str(tmp_path)]) == 2


def test_frames_default_passes(tmp_path, capsys):
    assert main(["frames", "--out-dir", str(tmp_path)]) == 0
    assert "verdict: PASS (1/1)" in capsys.readouterr().out


def test_frames_zero_mass(tmp_path):
    cfg = tmp_path / "zero.ini"
    cfg.write_text("[scenario]\nid = zero\nmethods = potential\nP1_values = 0.5\n\n"
                   "[interferometer]\nsplitter_order = 52\nseparation_m = 0.25\ntime_samples = 401\n\n"
                   "[source]\ntype = point\nmass_kg = 0\n\n"
                   "[source_trajectory]\napex_below_upper_arm_m = 0.07\naccel_m_per_s2 = 0, 0, 9.80665\n",
                   encoding="utf-8")
    assert main(["frames", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "frames.csv")[0]
    assert float(row["delta_phi_frame_D_rad"]) == 0.0 and float(row["delta_phi_frame_A_rad"]) == 0.0


def test_frames_random_seeds(tmp_path, capsys):
    assert main(["frames", "--seed", "7", "--count", "100", "--out-dir", str(tmp_path)]) == 0
    assert "verdict: PASS (100/100)" in capsys.readouterr().out
    assert len(read_csv(tmp_path / "frames.csv")) == 100


def test_fit_reports_note(tmp_path, capsys):
    data = tmp_path / "data.csv"
    data.write_text("p_upper,phase_rad,sigma_rad\n0.25,-0.23,0.02\n0.5,-0.24,0.02\n0.75,-0.27,0.02\n",
                    encoding="utf-8")
    assert main(["fit", "--data", str(data), "--model-rad", "-0.26", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "not acceptance targets" in out and "model_chi2_red" in out
    slope = float(next(ln for ln in out.splitlines() if ln.startswith("slope_rad")).split("=")[1])
    assert slope == pytest.approx(-0.08, rel=1e-12)
    assert (tmp_path / "fit_report.txt").exists()


def test_fit_bad_header(tmp_path):
    data = tmp_path / "data.csv"
    data.write_text("x,y\n1,2\n", encoding="utf-8")
    assert main(["fit", "--data", str(data)]) == 2


def test_energy_matches_pair_energy(capsys):
    assert main(["energy", "--mass-a-kg", "2", "--mass-b-kg", "3", "--distance-m", "0.5"]) == 0
    out = dict(ln.split(" = ") for ln in capsys.readouterr().out.splitlines())
    assert float(out["relative_difference"]) < 1e-3
    assert float(out["pair_energy_J"]) == pytest.approx(-6.6743e-11 * 6 / 0.5, rel=1e-12)


def test_backaction_command(capsys):
    assert main(["backaction"]) == 0
    out = dict(ln.split(" = ") for ln in capsys.readouterr().out.splitlines())
    sigma = float(out["position_uncertainty_m"])
    assert sigma == pytest.approx(4.2e-32, rel=0.01)
    assert float(out["max_source_deflection_m"]) < sigma


def test_convergence_exit_code(tmp_path):
    cfg = tmp_path / "tight.ini"
    base = resolve_config("appendix2_semiclassical").read_text(encoding="utf-8")
    cfg.write_text(base.replace("halving_tol_m = 1e-9", "halving_tol_m = 1e-30"), encoding="utf-8")
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 3
