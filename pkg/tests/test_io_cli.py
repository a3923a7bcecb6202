import numpy as np
import pytest

from teleport.cli import main
from teleport.io import (Config, FormatError, emit_csv, read_csv, read_measure, read_signed_measure,
                         write_measure, write_signed_measure)
from teleport.measures import DiscreteMeasure, SignedMeasure
from teleport.ot_exact import wasserstein_p

from conftest import random_measure


def write(path, text):
    path.write_text(text)
    return str(path)


def test_measure_roundtrip(tmp_path, rng):
    m = random_measure(rng, 20, 3)
    write_measure(m, tmp_path / "m.msr")
    back = read_measure(tmp_path / "m.msr")
    assert np.array_equal(back.points, m.points) and np.array_equal(back.weights, m.weights)


def test_signed_roundtrip(tmp_path, rng):
    nu = SignedMeasure(random_measure(rng, 3, 2), random_measure(rng, 4, 2) .scale(1.0))
    nu = SignedMeasure(nu.plus, DiscreteMeasure(nu.minus.points + 5, nu.minus.weights))
    write_signed_measure(nu, tmp_path / "n.smsr")
    back = read_signed_measure(tmp_path / "n.smsr")
    assert back.plus.same_as(nu.plus, 0) and back.minus.same_as(nu.minus, 0)


def test_comments_and_parse_errors(tmp_path):
    m = read_measure(write(tmp_path / "a.msr", "# header\n0 0.5  # left\n\n1 0.5\n"))
    assert len(m) == 2
    with pytest.raises(FormatError, match=r":3: not a number"):
        read_measure(write(tmp_path / "b.msr", "0 0.5\n# c\n1 x\n"))
    with pytest.raises(FormatError, match=r":2: expected 1 coordinates"):
        read_measure(write(tmp_path / "c.msr", "0 0.5\n1 2 0.5\n"))
    with pytest.raises(FormatError, match=r":1: atom line before"):
        read_signed_measure(write(tmp_path / "d.smsr", "0 1\n+\n"))


def test_plan_csv_roundtrip(tmp_path, rng):
    res = wasserstein_p(random_measure(rng, 15, 2), random_measure(rng, 12, 2), 2.0)
    emit_csv(res.plan, tmp_path / "plan.csv")
    header, data = read_csv(tmp_path / "plan.csv")
    assert header == ["i", "j", "mass", "cost"]
    assert np.array_equal(data[:, 2], res.plan.mass)
    assert np.array_equal(data[:, 0].astype(int), res.plan.rows)


def test_config_line_errors(tmp_path):
    cfg = Config(write(tmp_path / "c.ini", "[scaling]\n# note\np = two\n"))
    with pytest.raises(FormatError, match=r"c.ini:3: p must be a real"):
        cfg.section("scaling").get_float("p")
    with pytest.raises(FormatError, match="missing section"):
        cfg.section("curve")
    with pytest.raises(FormatError, match=":1:"):
        Config(write(tmp_path / "bad.ini", "p = 2\n"))


@pytest.fixture
def files(tmp_path):
    write(tmp_path / "a.msr", "0 0.5\n2 0.5\n")
    write(tmp_path / "b.msr", "1 1\n")
    write(tmp_path / "mu.msr", "0 1\n1 1\n2 1\n")
    write(tmp_path / "nu.smsr", "+\n0 1\n-\n2 1\n")
    write(tmp_path / "bad.msr", "0 0.5\n1 abc\n")
    write(tmp_path / "run.ini", """[scaling]
family = beta-profile
family.d = 3
resolution = 200000
p = 2
nu = endpoints

[tele-limit]
family = two-component
resolution = 20000
p = 2
threshold = 0.1
nu_plus = 0.5
nu_minus = 2.5

[curve]
p = 2
expect = 0.5
""")
    return tmp_path


def test_cli_wp(files, capsys):
    assert main(["wp", "--p", "2", str(files / "a.msr"), str(files / "b.msr"), "--plan", str(files / "p.csv")]) == 0
    out = capsys.readouterr().out
    assert "value: 1\n" in out and "plan_size: 2" in out and "duality_gap" in out
    assert read_csv(files / "p.csv")[0] == ["i", "j", "mass", "cost"]
    assert main(["wp", "--p", "2", str(files / "a.msr"), str(files / "a.msr")]) == 0
    assert "value: 0\n" in capsys.readouterr().out


def test_cli_bad_file(files, capsys):
    assert main(["wp", "--p", "2", str(files / "a.msr"), str(files / "bad.msr")]) != 0
    assert "bad.msr:2" in capsys.readouterr().err


def test_cli_tele(files, capsys):
    out_dir = files / "out"
    code = main(["tele", "--p", "2", "--threshold", "0.5", str(files / "mu.msr"), str(files / "nu.smsr"),
                 "--out", str(out_dir), "--plan-eps", "0.01"])
    out = capsys.readouterr().out
    assert code == 0 and "norm: 2\n" in out and "m: 3" in out
    header, data = read_csv(out_dir / "tele_fluxes.csv")
    assert header == ["from", "to", "flux"] and data.tolist() == [[0, 1, 1], [1, 2, 1]]
    assert read_csv(out_dir / "tele_potentials.csv")[0] == ["vertex", "nu_bar", "z"]
    assert (out_dir / "tele_plan.csv").exists()


@pytest.mark.parametrize("cmd, csv_name", [("scaling", "scaling.csv"), ("tele-limit", "tele_limit.csv"),
                                           ("curve", "curve.csv")])
def test_cli_experiments_deterministic(files, capsys, cmd, csv_name):
    outs = []
    for k in range(2):
        d = files / f"run{k}"
        assert main([cmd, "--config", str(files / "run.ini"), "--out", str(d)]) == 0
        outs.append((d / csv_name).read_bytes())
    assert outs[0] == outs[1]
    header, data = read_csv(files / "run0" / csv_name)
    if cmd == "scaling":
        assert header == ["eps", "w", "scaled", "critical_ratio"]
        assert np.allclose(data[:, 2], data[:, 0] ** (-5 / 6) * data[:, 1], rtol=1e-15)


def test_cli_config_required(files, capsys):
    assert main(["scaling"]) == 2
    assert "--config" in capsys.readouterr().err


def test_cli_unknown_key(files, capsys):
    write(files / "x.ini", "[curve]\np = 2\nbogus = 1\n")
    assert main(["curve", "--config", str(files / "x.ini")]) == 2
    assert "x.ini:3" in capsys.readouterr().err


def test_cli_failing_verdict_exit(files, capsys):
    write(files / "y.ini", "[curve]\np = 2\nexpect = 1.0\n")
    assert main(["curve", "--config", str(files / "y.ini"), "--out", str(files / "y")]) == 1


def test_cli_verify_subset(capsys):
    assert main(["verify", "--only", "4,8", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] criterion  4" in out and "[PASS] criterion  8" in out
