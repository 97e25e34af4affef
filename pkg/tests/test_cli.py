import subprocess
import sys

import numpy as np
import pytest

from calibdesign.cli import main
from calibdesign.io import format_measurements, read_plan
from calibdesign.kinematics import forward_position
from calibdesign.models import load_shipped_model
from calibdesign.plan import MeasurementSet

POSE_2R = "--test-pose=-45deg,20deg"
POSE_6R = "--test-pose=10deg,35deg,20deg,30deg,45deg,0deg"


def parse_report(text):
    out = {}
    for line in text.splitlines():
        if ": " in line:
            key, value = line.split(": ", 1)
            out[key] = value
    return out


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_analytic_2r_rows(capsys):
    code, out, _ = run(capsys, "analytic-2r", "--q20", "0deg")
    assert code == 0
    rep = parse_report(out)
    assert float(rep["rho0_squared"]) == pytest.approx(0.5)
    assert float(rep["gain_pct"]) == pytest.approx(41.42, abs=0.01)
    _, out, _ = run(capsys, "analytic-2r", "--q20", "150deg")
    rep = parse_report(out)
    assert float(rep["rho0_squared"]) == pytest.approx(0.75)
    assert float(rep["gain_pct"]) == pytest.approx(15.47, abs=0.01)
    _, out, _ = run(capsys, "analytic-2r", "--table")
    assert out.count("reference_discrepancy: yes") == 2


def test_design_two_link(capsys, tmp_path):
    plan_file = tmp_path / "plan.csv"
    code, out, _ = run(capsys, "design", "--model", "shipped:two_link", POSE_2R, "--m", "2",
                       "--starts", "32", "--baseline-plans", "100", "--out", str(plan_file))
    assert code == 0
    rep = parse_report(out)
    assert float(rep["rho0_squared"]) == pytest.approx((1 + np.sin(np.radians(20))) / 2, rel=1e-8)
    plan = read_plan(plan_file)
    assert np.sum(np.cos(plan.configs[:, 1])) == pytest.approx(2 * np.cos(np.radians(45.55)), abs=1e-3)
    # round trip: the written plan scores as reported
    code, out, _ = run(capsys, "evaluate", "--model", "shipped:two_link", "--plan", str(plan_file), POSE_2R)
    assert float(parse_report(out)["rho0_squared"]) == pytest.approx(float(rep["rho0_squared"]), rel=1e-10)


def test_design_refuses_too_few_measurements(capsys):
    code, _, err = run(capsys, "design", "--model", "shipped:six_r", POSE_6R, "--m", "2")
    assert code == 2
    assert "need m >= 3" in err


def test_design_infeasible_exit_code(capsys, tmp_path):
    from calibdesign.models import shipped_model_text

    path = tmp_path / "bad.model"
    path.write_text(shipped_model_text("six_r").replace("dq6 0.0 rad no", "dq6 0.0 rad yes"))
    code, _, err = run(capsys, "design", "--model", str(path), POSE_6R, "--m", "4", "--starts", "4")
    assert code == 3
    assert "screen" in err


def test_simulate_fig2_ordering(capsys):
    rms = {}
    for name in ("lengths_pm10", "lengths_d_optimal", "lengths_optimal"):
        code, out, _ = run(capsys, "simulate", "--model", "shipped:two_link", "--plan", f"shipped:{name}",
                           POSE_2R, "--sigma", "1e-3", "--trials", "2000")
        assert code == 0
        rms[name] = float(parse_report(out)["rms_error"])
    assert rms["lengths_pm10"] > rms["lengths_d_optimal"] > rms["lengths_optimal"]


def test_simulate_edge_cases(capsys):
    base = ["simulate", "--model", "shipped:two_link", "--plan", "shipped:lengths_optimal", POSE_2R]
    code, _, _ = run(capsys, *base, "--trials", "0")
    assert code == 2
    code, out, _ = run(capsys, *base, "--sigma", "0", "--trials", "10")
    assert code == 0
    rep = parse_report(out)
    assert float(rep["rms_error"]) < 1e-12
    code, _, err = run(capsys, "simulate", "--model", "shipped:six_r", "--plan", "shipped:lengths_optimal", POSE_6R)
    assert code == 2 and "joints" in err


def test_simulate_writes_campaign_csv(capsys, tmp_path):
    out_csv = tmp_path / "campaign.csv"
    code, _, _ = run(capsys, "simulate", "--model", "shipped:two_link", "--plan", "shipped:lengths_d_optimal", POSE_2R,
                     "--sigma", "1e-3", "--trials", "25", "--out", str(out_csv))
    assert code == 0
    lines = out_csv.read_text().splitlines()
    assert lines[2] == "trial,error,dp_x,dp_y,dp_z,converged"
    assert len(lines) == 3 + 25


def test_input_errors(capsys, tmp_path):
    code, _, err = run(capsys, "evaluate", "--model", str(tmp_path / "none.model"), "--plan", "x", POSE_2R)
    assert code == 2
    bad = tmp_path / "bad.model"
    bad.write_text("name = x\njoints = 1\n[parameters]\na one m yes\n")
    code, _, err = run(capsys, "evaluate", "--model", str(bad), "--plan", "x", "--test-pose=0")
    assert code == 2 and "line 4" in err
    code, _, err = run(capsys, "evaluate", "--model", "shipped:two_link", "--plan", "shipped:nope", POSE_2R)
    assert code == 2
    code, _, err = run(capsys, "evaluate", "--model", "shipped:two_link", "--plan", "shipped:lengths_pm10",
                       "--test-pose=1,2,3")
    assert code == 2


def test_identify_and_screen(capsys, tmp_path):
    model = load_shipped_model("two_link_full")
    true = model.nominal + [0.01, -0.005, 0.002, -0.003]
    q = np.radians([[0, 0], [0, 57], [0, -57], [30, 100]])
    path = tmp_path / "meas.csv"
    path.write_text(format_measurements(MeasurementSet(q, forward_position(model, true, q))))
    code, out, _ = run(capsys, "identify", "--model", "shipped:two_link_full", "--measurements", str(path))
    assert code == 0
    assert float(parse_report(out)["param_l1"]) == pytest.approx(true[0], abs=1e-9)
    code, out, _ = run(capsys, "screen", "--model", "shipped:six_r", "--probes", "30")
    assert code == 0 and "non-influential: dq6" in out


def test_compare(capsys):
    code, out, _ = run(capsys, "compare", "--model", "shipped:two_link_full", POSE_2R,
                       "--plan", "a=shipped:full_pm10", "--plan", "b=shipped:full_d_optimal", "--plan", "c=shipped:full_optimal")
    assert code == 0
    assert "reduction %" in out


COMMANDS = {
    "design": ["design", "--model", "shipped:six_r", POSE_6R, "--m", "3", "--starts", "8",
               "--baseline-plans", "50", "--seed", "3", "--out", "{d}/plan.csv"],
    "evaluate": ["evaluate", "--model", "shipped:two_link", "--plan", "shipped:lengths_optimal", POSE_2R],
    "simulate": ["simulate", "--model", "shipped:two_link_full", "--plan", "shipped:full_optimal", POSE_2R,
                 "--sigma", "1e-3", "--trials", "300", "--seed", "7", "--out", "{d}/campaign.csv"],
    "baseline": ["baseline", "--model", "shipped:six_r", POSE_6R, "--m", "4", "--plans", "200", "--seed", "2"],
    "compare": ["compare", "--model", "shipped:two_link", POSE_2R, "--plan", "a=shipped:lengths_pm10",
                "--plan", "c=shipped:lengths_optimal"],
    "analytic-2r": ["analytic-2r", "--table"],
    "screen": ["screen", "--model", "shipped:six_r", "--probes", "20", "--seed", "1"],
}


def run_to_files(argv, directory):
    argv = [a.replace("{d}", str(directory)) for a in argv] + ["--report", str(directory / "report.txt")]
    assert main(argv) == 0
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_byte_determinism(name, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    first = run_to_files(COMMANDS[name], out)
    second = run_to_files(COMMANDS[name], out)
    assert first == second
    assert first["report.txt"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "calibdesign", "analytic-2r", "--q20", "90deg"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "gain_pct: 0" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "calibdesign", "design"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_simulate_plot(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    image = tmp_path / "campaign.png"
    code, out, _ = run(capsys, "simulate", "--model", "shipped:two_link", "--plan", "shipped:lengths_optimal",
                       POSE_2R, "--sigma", "1e-3", "--trials", "200", "--plot", str(image))
    assert code == 0
    assert image.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    first = image.read_bytes()
    run(capsys, "simulate", "--model", "shipped:two_link", "--plan", "shipped:lengths_optimal",
        POSE_2R, "--sigma", "1e-3", "--trials", "200", "--plot", str(image))
    assert image.read_bytes() == first
