import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpsolid.cli import main
from gpsolid.config import RunConfig, build_potential, emit_csv, parse_config, read_csv
from gpsolid.errors import ConfigError
from gpsolid.thermo import ThermoSample

MINIMAL_SOLVE = """\
# fluid state of the gaussian
command = solve
potential.family = gaussian
solve.mu = 2.0
solve.extent = 10
solve.h = 0.05
"""


def test_minimal_solve_config():
    cfg = parse_config(MINIMAL_SOLVE)
    assert cfg.command == "solve"
    assert cfg.params == {"mu": 2.0, "extent": [10.0], "h": 0.05}
    assert cfg.seed == 0


def test_family_defaults_applied():
    cfg = parse_config("command = criticality\npotential.family = vdw\n")
    assert build_potential(cfg.potential).params == {"c": 1.0}


def test_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError, match=r"line 4.*line 2"):
        parse_config("command = criticality\npotential.family = vdw\n\npotential.family = step\n")


@pytest.mark.parametrize(
    "text,pattern",
    [
        ("command = solve\npotential.family = vdw\nsolve.bogus = 1\n", "line 3: unknown key"),
        ("command = solve\npotential.family = vdw\nsolve.mu = abc\n", "line 3: solve.mu expects float"),
        ("command = criticality\npotential.family = vdw\ncriticality.n = 1.5\n", "line 3"),
        ("potential.family = vdw\n", "missing required key 'command'"),
        ("command = solve\npotential.family = vdw\nsolve.mu = 1\nsolve.h = 0.1\n", "solve.extent"),
        ("command = criticality\n", "potential.family"),
        ("command = fly\n", "line 1: unknown command"),
        ("command = solve\njunk\n", "line 2"),
        ("command = criticality\npotential.family = vdw\nsweep.h = 0.1\n", "line 3: section 'sweep'"),
        (MINIMAL_SOLVE + "solve.lam = 3\n", "exactly one"),
    ],
)
def test_config_errors(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(text)


_finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(
    mu=_finite,
    ext=st.lists(_finite, min_size=1, max_size=2),
    seed=st.integers(0, 2**31),
    multistart=st.integers(0, 9),
    flag=st.booleans(),
)
@settings(max_examples=50, deadline=None)
def test_serialize_round_trip(mu, ext, seed, multistart, flag):
    cfg = RunConfig(
        "solve",
        {"family": "vdw", "c": 1.5},
        {"mu": mu, "extent": ext, "h": 0.02, "multistart": multistart, "allow_indeterminate": flag},
        output="out dir",
        seed=seed,
    )
    back = parse_config(cfg.serialize())
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_emit_csv_empty_is_header_only(tmp_path):
    path = emit_csv(tmp_path / "e.csv", [], ("a", "b"))
    assert path.read_bytes() == b"a,b\n"


def test_emit_csv_one_sample(tmp_path):
    s = ThermoSample(90.0, 40.0, "dirichlet", "solid-seed", -1962.5740054180364, 44.116, 1.0 / 3)
    cols = ("mu", "L", "bc", "branch", "f", "rho", "e", "converged", "residual")
    path = emit_csv(tmp_path / "t.csv", [s.__dict__], cols)
    raw = path.read_bytes()
    assert raw.count(b"\n") == 2 and b"\r" not in raw
    row = read_csv(path)[0]
    assert float(row["e"]) == 1.0 / 3 and row["converged"] == "true"


@given(st.lists(_finite, max_size=20))
@settings(max_examples=50, deadline=None)
def test_csv_floats_round_trip_bit_exact(tmp_path_factory, values):
    path = emit_csv(tmp_path_factory.mktemp("c") / "v.csv", [(v,) for v in values], ("v",))
    with open(path, newline="") as fh:
        back = [float(r["v"]) for r in csv.DictReader(fh)]
    assert back == values


def test_emit_csv_rejects_ragged(tmp_path):
    with pytest.raises(ValueError):
        emit_csv(tmp_path / "x.csv", [(1, 2)], ("a",))


def test_emit_csv_unwritable():
    with pytest.raises(OSError):
        emit_csv("/nonexistent-dir/x.csv", [], ("a",))


# --- command line -------------------------------------------------------------------


def _manifest(path):
    return dict(
        line.split("=", 1) if not line.startswith("file=") else ("file:" + line[5:], "")
        for line in (path / "manifest.txt").read_text().splitlines()
    )


def test_criticality_cli(tmp_path, monkeypatch):
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path))
    assert main(["criticality", "--family", "vdw", "--scan"]) == 0
    rows = read_csv(tmp_path / "criticality.csv")
    assert rows[0]["name"] == "mu_star" and abs(float(rows[0]["value"]) - 86.48) < 0.05
    m = _manifest(tmp_path)
    assert "file:criticality.csv" in m and "file:scan.csv" in m
    assert m["version"] and m["command"] == "criticality"


def test_cli_determinism_and_hash(tmp_path, monkeypatch):
    outs = []
    for name in ("a", "b"):
        monkeypatch.setenv("GPSOLID_OUT", str(tmp_path / name))
        args = ["solve", "--family", "vdw", "--mu", "95", "--extent", "8", "--h", "0.02", "--jobs", "1"]
        assert main(args) == 0
        outs.append(tmp_path / name)
    for f in ("result.csv", "candidates.csv", "history.csv", "field.gpsf"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    ma, mb = _manifest(outs[0]), _manifest(outs[1])
    assert ma["config_hash"] == mb["config_hash"]
    listed = {k[5:] for k in ma if k.startswith("file:")}
    on_disk = {p.name for p in outs[0].iterdir()} - {"manifest.txt"}
    assert listed == on_disk


def test_nonconverged_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path))
    args = ["solve", "--family", "vdw", "--mu", "120", "--extent", "8", "--h", "0.02", "--max-iters", "2"]
    assert main(args) == 2
    assert "cell.solve=not-converged" in (tmp_path / "manifest.txt").read_text()
    assert main(args + ["--allow-nonconverged"]) == 0


def test_error_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path))
    bad = tmp_path / "bad.cfg"
    bad.write_text("command = solve\nsolve.nope = 1\n")
    assert main(["run", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["solve", "--family", "truncated-lennard-jones", "--mu", "1", "--extent", "4", "--h", "0.05"]) == 1


def test_run_config_file(tmp_path, monkeypatch):
    out = tmp_path / "o"
    monkeypatch.delenv("GPSOLID_OUT", raising=False)
    cfg = tmp_path / "s.cfg"
    cfg.write_text(MINIMAL_SOLVE + f"output = {out}\n")
    assert main(["run", str(cfg), "--jobs", "1"]) == 0
    row = read_csv(out / "result.csv")[0]
    assert row["converged"] == "true" and row["kind"] == "grand-canonical"


def test_vortex_and_diagnose_cli(tmp_path, monkeypatch):
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path / "v"))
    assert main(["vortex", "--family", "gaussian", "--dim", "2", "--mu", "4", "--L", "6"]) == 0
    assert read_csv(tmp_path / "v" / "vortex.csv")[0]["degree"] == "1"
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path / "d"))
    assert main(["diagnose", str(tmp_path / "v" / "vortex.gpsf"), "--radius", "3"]) == 0
    assert read_csv(tmp_path / "d" / "summary.csv")[0]["degree"] == "1"


def test_fig1_cli_subset(tmp_path, monkeypatch):
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path))
    assert main(["fig1", "--mu", "1", "--extent", "10"]) == 0
    rows = read_csv(tmp_path / "fig1.csv")
    assert len(rows) == 1 and rows[0]["oscillation_flag"] == "false"
    assert (tmp_path / "fig1_mu1.gpsf").exists()


def test_classical_cli(tmp_path, monkeypatch):
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path))
    assert main(["classical", "--family", "pure-contact", "--L", "4,8,16", "--h", "0.1"]) == 0
    assert abs(float(read_csv(tmp_path / "ecl.csv")[0]["e_cl"]) - 0.5) < 1e-6
    from gpsolid.lattice import read_snapshot

    _, tag = read_snapshot(tmp_path / "measure_L4.gpsf")
    assert tag == "measure"


def test_sweep_cli(tmp_path, monkeypatch):
    monkeypatch.setenv("GPSOLID_OUT", str(tmp_path))
    assert main(["sweep", "--family", "gaussian", "--mu", "1,2", "--L", "5,10,20", "--jobs", "1"]) == 0
    for f in ("thermo.csv", "curve.csv", "legendre.csv", "phase.csv"):
        assert (tmp_path / f).exists()
    assert len(read_csv(tmp_path / "curve.csv")) == 2
