import csv
import json

import pytest

from pmelab.cli import ConfigValidationError, main, parse_config, run
from pmelab.measures import ModelParams
from pmelab.spectrum import eigenvalue


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_minimal():
    cfg = parse_config("N = 1\nsigma = 1  # comment\nkind = spectrum\n")
    assert (cfg.N, cfg.sigma, cfg.kind) == (1, 1.0, "spectrum")
    assert cfg.resolved_sector == "full_1d"


def test_parse_collects_all_violations():
    with pytest.raises(ConfigValidationError) as exc:
        parse_config("sigma = -1.5\neps = 0.5\ndelta = 0.3\nbogus = 1\nN = x\n")
    v = exc.value.violations
    assert any("unknown key 'bogus'" in s for s in v)
    assert any("sigma > -1" in s for s in v)
    assert any("sqrt(2)*(eps+delta) = 1.13 >= 1" in s for s in v)
    assert any(s.startswith("N:") for s in v)


def test_spectrum_csv(tmp_path):
    cfg = parse_config(f"kind = spectrum\nN = 2\nsigma = 1\nmax_degree = 4\nout = {tmp_path}\n")
    rep = run(cfg)
    assert rep.status == 0
    rows = _rows(tmp_path / "spectrum.csv")
    assert rows[0] == ["l", "n", "k", "multiplicity", "lambda"]
    assert len(rows) == 16
    p = ModelParams(2, 1.0)
    for l, n, k, mult, lam in rows[1:]:
        assert float(lam) == eigenvalue(p, int(l), int(k))


def test_verify_stability_row(tmp_path):
    text = "N = 1\nsigma = 1\nmax_degree = 16\nt_end = 6\neps = 0.3\ndelta = 0.3\nseed = 1\ncheck = stability\n"
    assert main(["verify", "--out", str(tmp_path)] + [a for kv in text.split("\n") if kv for a in ("--set", kv)]) == 0
    rows = _rows(tmp_path / "verify_stability.csv")
    rate = rows[1]
    assert rate[0] == "rate" and rate[1] == "2.0" and rate[3] == "5%" and rate[4] == "pass"
    assert float(rate[2]) == pytest.approx(2.0, rel=0.05)


def test_simulate_zero(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "init=zero", "--t-end", "0.2", "--dt", "0.01"]) == 0
    rows = _rows(tmp_path / "trajectory.csv")
    assert rows[0][:2] == ["t", "c_0"] and rows[0][-1] == "energy_residual"
    assert all(float(x) == 0.0 for r in rows[1:] for x in r[1:])


def test_determinism_and_flag_override(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("kind = simulate\nmax_degree = 6\nseed = 99\ndt = 0.5\nt_end = 0.3\nsample_dt = 0.05\nplot = true\n")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--config", str(conf), "--out", str(out), "--seed", "7", "--dt", "0.01"]) == 0
        outs.append((out / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1]
    assert (tmp_path / "a" / "plot_trajectory.py").exists()
    other = tmp_path / "c"
    main(["simulate", "--config", str(conf), "--out", str(other), "--seed", "8", "--dt", "0.01"])
    assert (other / "trajectory.csv").read_bytes() != outs[0]


def test_failure_record(tmp_path):
    code = main(["simulate", "--out", str(tmp_path), "--set", "init=mode", "--set", "mode=1,1,0",
                 "--set", "amplitude=3", "--t-end", "0.1", "--dt", "0.01"])
    assert code == 2
    rec = json.loads((tmp_path / "failure.json").read_text())
    assert rec["kind"] == "simulate" and rec["error"] == "PmeLabError"


def test_bad_config_exit(tmp_path, capsys):
    assert main(["spectrum", "--out", str(tmp_path), "--set", "sigma=-2"]) == 2
    assert "sigma > -1" in capsys.readouterr().err


def test_geodesic_row(tmp_path):
    assert main(["geodesic", "--out", str(tmp_path), "--set", "z1=0.5,0", "--set", "z2=1,0", "--set", "h=0.08"]) == 0
    row = _rows(tmp_path / "geodesic.csv")[1]
    assert float(row[-1]) == pytest.approx(1.0471975511965979)
    assert float(row[-2]) == pytest.approx(float(row[-1]), rel=0.02)


def test_verify_single_criterion(tmp_path):
    assert main(["verify", "--out", str(tmp_path), "--set", "check=criterion", "--set", "criterion=2"]) == 0
    assert _rows(tmp_path / "summary.csv")[1] == ["criterion 2", "pass"]
