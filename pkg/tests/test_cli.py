import json
import math

import numpy as np
import pytest

from ellipse_calib import datasets as ds
from ellipse_calib.cli import main
from ellipse_calib.signal_extract import SampledSignal, delayed_pulse, normalize_pulse

from test_config_datasets import MINIMAL


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "mini.yaml"
    p.write_text(MINIMAL)
    return p


def simulate(scenario, out, *extra):
    assert main(["simulate", "--scenario", str(scenario), "--out", str(out), *extra]) == 0


def test_simulate_writes_two_files_deterministically(scenario, tmp_path):
    simulate(scenario, tmp_path / "a")
    simulate(scenario, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["ground_truth.csv", "link0_mpc0.csv"]
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    simulate(scenario, tmp_path / "c", "--seed", "6")
    assert (tmp_path / "c" / names[1]).read_bytes() != (tmp_path / "a" / names[1]).read_bytes()


def test_simulate_ambiguous_wall_fails(tmp_path):
    p = tmp_path / "amb.yaml"
    p.write_text(MINIMAL.replace("[[-10.0, 4.0], [10.0, 4.0]]", "[[0.0, -10.0], [0.0, 10.0]]"))
    assert main(["simulate", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 3


def test_calibrate_and_eval(scenario, tmp_path, capsys):
    simulate(scenario, tmp_path / "m")
    rc = main(["calibrate", "--scenario", str(scenario), "--measurements", str(tmp_path / "m"),
               "--out", str(tmp_path / "r"), "--dx", "0.05", "--weights", "--weights-stride", "10"])
    assert rc == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    (entry,) = report["mpcs"]
    L = entry["circumference_m"]
    assert 0 <= entry["final_error_m"] <= L / 2
    assert entry["final_error_m"] < 0.2
    assert math.hypot(entry["estimate_x_m"], entry["estimate_y_m"]) > 0
    assert len(entry["error_trace_m"]) == entry["steps"]
    assert "timing" not in json.dumps(report)
    assert (tmp_path / "r" / "weights_link0_mpc0.csv").exists()
    capsys.readouterr()
    gt = str(tmp_path / "m" / "ground_truth.csv")
    assert main(["eval", "--report", str(tmp_path / "r" / "report.json"), "--ground-truth", gt,
                 "--out", str(tmp_path / "summary.csv")]) == 0
    assert "mean" in capsys.readouterr().out
    assert main(["eval", "--report", str(tmp_path / "r" / "report.json"), "--ground-truth", gt,
                 "--bound", "1e-9"]) == 1


def _report(tmp_path, arcs, L=20.0):
    rep = {"mpcs": [dict(link=0, mpc=i, estimate_arc_m=a, circumference_m=L)
                    for i, a in enumerate(arcs)]}
    p = tmp_path / "rep.json"
    p.write_text(json.dumps(rep))
    return p


def _gt(tmp_path, arcs):
    from ellipse_calib.scenario import GroundTruth, RpTruth
    gt = GroundTruth({(0, i): RpTruth(0, i, a, (0.0, 0.0)) for i, a in enumerate(arcs)})
    p = tmp_path / "gt.csv"
    p.write_text(ds.ground_truth_text(gt))
    return p


def test_eval_arithmetic(tmp_path, capsys):
    out = tmp_path / "s.csv"
    args = ["eval", "--report", str(_report(tmp_path, [1.0, 2.0, 15.0])),
            "--ground-truth", str(_gt(tmp_path, [1.0, 12.0, 16.0])), "--out", str(out)]
    assert main(args) == 0
    errs = [float(l.split(",")[2]) for l in out.read_text().splitlines()[1:]]
    assert errs == [0.0, 10.0, 1.0]
    assert "mean 3.666667 m, max 10.000000 m" in capsys.readouterr().out
    assert main(["eval", "--report", str(_report(tmp_path, [1.0])),
                 "--ground-truth", str(_gt(tmp_path, [1.0, 2.0]))]) == 3


def test_calibrate_mismatched_measurements(scenario, tmp_path):
    simulate(scenario, tmp_path / "m")
    (tmp_path / "m" / "link0_mpc0.csv").rename(tmp_path / "m" / "link0_mpc3.csv")
    assert main(["calibrate", "--scenario", str(scenario), "--measurements", str(tmp_path / "m"),
                 "--out", str(tmp_path / "r")]) == 3


def test_calibrate_empty_file_is_low_information(scenario, tmp_path):
    simulate(scenario, tmp_path / "m")
    (tmp_path / "m" / "link0_mpc0.csv").write_text(",".join(ds.MEASUREMENT_HEADER) + "\n")
    with pytest.warns(Warning, match="(?i)measurement|information"):
        rc = main(["calibrate", "--scenario", str(scenario), "--measurements",
                   str(tmp_path / "m"), "--out", str(tmp_path / "r")])
    assert rc == 0
    (entry,) = json.loads((tmp_path / "r" / "report.json").read_text())["mpcs"]
    assert entry["low_information"] is True


def test_usage_errors(scenario, tmp_path):
    assert main([]) == 2
    assert main(["calibrate", "--scenario", str(scenario)]) == 2
    assert main(["simulate", "--scenario", str(tmp_path / "missing.yaml"),
                 "--out", str(tmp_path)]) == 3


def _cir_files(tmp_path, scale_last):
    dt = 0.5e-9
    t = np.arange(48) * dt
    pulse = SampledSignal(np.exp(-0.5 * ((t - 12e-9) / 2e-9) ** 2), dt)
    unit = normalize_pulse(pulse)
    paths = []
    for i, gain in enumerate([1.0, 1.0, 1.0, scale_last]):
        y = gain * delayed_pulse(unit, 40e-9, 512) + 0.3 * delayed_pulse(unit, 200e-9, 512)
        p = tmp_path / f"cir{i}.csv"
        p.write_text(ds.cir_text(SampledSignal(y, dt)))
        paths.append(str(p))
    pp = tmp_path / "pulse.csv"
    pp.write_text(ds.cir_text(pulse))
    return paths, str(pp)


def test_extract(tmp_path):
    cirs, pulse = _cir_files(tmp_path, 0.5)
    out = tmp_path / "z.csv"
    assert main(["extract", "--cir", *cirs, "--pulse", pulse, "--delays-ns", "40,200",
                 "--idle", "0:3", "--out", str(out)]) == 0
    rows = [l.split(",") for l in out.read_text().splitlines()[1:]]
    z = {(int(s), int(n)): float(v) for s, n, v in rows}
    assert all(abs(z[(s, n)]) < 1e-9 for s in range(3) for n in range(2))
    assert abs(z[(3, 1)]) < 1e-9
    assert z[(3, 0)] == pytest.approx(20 * math.log10(0.5), abs=1e-9)
    assert main(["extract", "--cir", *cirs, "--pulse", pulse, "--delays-ns", "40,200",
                 "--out", str(out)]) == 3


def test_fit(tmp_path):
    rng = np.random.default_rng(0)
    n = 20_000
    xt = rng.exponential(0.06, n)
    xr = rng.exponential(0.06, n) + rng.choice([0.0, 1.0], n)
    xi_min = np.minimum(xt, xr)
    sigma = np.where(xi_min <= 0.0865, 0.8, 0.3)
    z = -2.5 * (np.exp(-xt / 0.015) + np.exp(-xr / 0.015)) + sigma * rng.standard_normal(n)
    data = tmp_path / "fit.csv"
    data.write_text(ds.csv_text(ds.FIT_HEADER, zip(xt, xr, z)))
    out = tmp_path / "fit.json"
    assert main(["fit", "--data", str(data), "--out", str(out), "--user-type", "pedestrian"]) == 0
    res = json.loads(out.read_text())
    assert res["fading"]["phi_db"] == pytest.approx(-2.5, rel=0.05)
    assert res["fading"]["kappa_m"] == pytest.approx(0.015, rel=0.1)
    assert res["noise"]["sigma1_db"] < res["noise"]["sigma2_db"]
    assert res["noise"]["sigma1_db"] == pytest.approx(0.3, rel=0.05)
    # the near-path regime is noisier by construction; invert it and the fit must refuse
    z_bad = -2.5 * (np.exp(-xt / 0.015) + np.exp(-xr / 0.015)) + \
        np.where(xi_min <= 0.0865, 0.1, 0.9) * rng.standard_normal(n)
    data.write_text(ds.csv_text(ds.FIT_HEADER, zip(xt, xr, z_bad)))
    assert main(["fit", "--data", str(data), "--out", str(out)]) == 4
