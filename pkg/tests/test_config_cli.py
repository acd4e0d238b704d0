import csv
import json
import os
import subprocess
import sys

import pytest

from regtree.cli import main
from regtree.config import RunConfig, parse_config, serialize
from regtree.errors import ParseError, ValidationError

GEO = '[tree]\nkind = "geometric"\nq = 0.25\nb = 2\n'


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_parse_geometric():
    cfg = parse_config(GEO)
    tree = cfg.tree_spec()
    assert tree.kind == "geometric"
    assert tree.radius == 1.0
    assert cfg.solver.tolerance == 1e-10
    assert cfg.solver.max_generation == 64


def test_parse_from_path(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(GEO)
    assert parse_config(path) == parse_config(GEO)
    assert parse_config(str(path)) == parse_config(GEO)


def test_bad_q_names_field():
    with pytest.raises(ValidationError, match="tree.q"):
        parse_config('[tree]\nkind = "geometric"\nq = 1.5\nb = 2\n')


def test_missing_tree_section():
    with pytest.raises(ValidationError, match="tree"):
        parse_config('[solver]\ntolerance = 1e-8\n')


def test_malformed_toml_has_location():
    with pytest.raises(ParseError, match="line"):
        parse_config('[tree]\nkind = \n')


@pytest.mark.parametrize("text,field", [
    (GEO + '[solver]\ntolerance = -1.0\n', "solver.tolerance"),
    (GEO + '[solver]\nbogus = 1\n', "solver.bogus"),
    (GEO + '[grid]\nlambdas = [10.0, 1.0]\n', "grid.lambdas"),
    (GEO + '[potential]\nform = "power"\nc = 1.0\n', "potential.gamma"),
    ('[tree]\nkind = "homogeneous"\nb = 1\n', "tree.b"),
    ('[tree]\nkind = "explicit"\nt_prefix = [0, 2, 1]\nb_prefix = [1, 2]\n', "tree.t_prefix"),
])
def test_validation_errors_name_field(text, field):
    with pytest.raises(ValidationError, match=field.replace(".", r"\.")):
        parse_config(text)


def test_grid_from_bounds():
    cfg = parse_config(GEO + '[grid]\nlambda_min = 1.0\nlambda_max = 100.0\nlambda_steps = 3\n')
    assert cfg.grid.lambdas == pytest.approx([1.0, 10.0, 100.0])


def test_round_trip():
    text = (GEO + '[potential]\nform = "power"\nc = 2.0\ngamma = 1.5\n'
            '[solver]\ntolerance = 1e-9\nbc = "neumann"\n[grid]\nlambdas = [0.1, 3.0, 1e6]\n'
            '[oracle]\ngenerations = 4\nmesh = 0.0005\n[params]\nmode = "tilde"\n')
    cfg = parse_config(text)
    assert isinstance(cfg, RunConfig)
    assert parse_config(serialize(cfg)) == cfg


def test_cli_count(tmp_path):
    code = main(["count", "kind=\"geometric\"", "q=0.5", "b=2", "--out", str(tmp_path),
                 "--lambda-min", "1", "--lambda-max", "100", "--lambda-steps", "3"])
    assert code == 0
    rows = _rows(tmp_path / "count.csv")
    assert rows[0] == ["lambda", "N", "N_tilde", "bracket_width"]
    N = [int(r[1]) for r in rows[1:]]
    assert len(N) == 3 and N == sorted(N)


def test_cli_count_per_generation(tmp_path):
    code = main(["count", "kind=\"geometric\"", "q=0.5", "b=2", "grid.lambdas=[50.0, 500.0]",
                 "--per-generation", "--out", str(tmp_path)])
    assert code == 0
    rows = _rows(tmp_path / "count.csv")
    ks = [c for c in rows[0] if c.startswith("k")]
    for r in rows[1:]:
        assert int(r[1]) == sum(int(r[rows[0].index(c)]) for c in ks)


def test_cli_bands(tmp_path):
    assert main(["bands", "b=2", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "bands.csv")
    assert rows[0] == ["l", "lower", "upper"]
    assert float(rows[1][1]) == pytest.approx(0.115489, abs=1e-6)
    assert float(rows[1][2]) == pytest.approx(7.849836, abs=1e-6)
    info = json.loads((tmp_path / "bands.json").read_text())
    assert info["theta"] == pytest.approx(0.3398369, abs=1e-7)


def test_cli_not_discrete(tmp_path, capsys):
    assert main(["count", "kind=\"homogeneous\"", "b=2", "--out", str(tmp_path)]) == 2
    assert "NotDiscrete" in capsys.readouterr().err


def test_cli_not_applicable(tmp_path, capsys):
    assert main(["weyl", "kind=\"geometric\"", "q=0.5", "b=2", "--out", str(tmp_path)]) == 2
    assert "NotApplicable" in capsys.readouterr().err


def test_cli_validation_error(tmp_path, capsys):
    assert main(["info", "kind=\"geometric\"", "q=1.5", "b=2", "--out", str(tmp_path)]) == 1
    assert "ValidationError" in capsys.readouterr().err


def test_cli_config_file_and_flags(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[tree]\nkind = "homogeneous"\nb = 2\n')
    out = tmp_path / "out"
    assert main(["oracle-check", "--config", str(cfg), "--generations", "3", "--mesh", "0.001",
                 "--out", str(out)]) == 0
    report = json.loads((out / "assembly_check.json").read_text())
    assert report["passed"] is True
    assert report["K"] == 3


@pytest.mark.parametrize("command,args,artifacts", [
    ("info", ['kind="geometric"', "q=0.25", "b=2"], ["info.json"]),
    ("spectrum", ['kind="geometric"', "q=0.5", "b=2", "grid.lambdas=[200.0]"], ["spectrum.csv"]),
    ("hardy", ['kind="homogeneous"', "b=2"], ["hardy.json"]),
    ("renewal", ['kind="geometric"', "q=0.5", "b=3", "grid.lambdas=[1e3, 1e4]"], ["renewal.csv", "renewal.json"]),
    ("logweyl", ['kind="geometric"', "q=0.5", "b=2", "grid.lambdas=[1e3, 1e4]"], ["logweyl.csv"]),
    ("weyl", ['kind="geometric"', "q=0.25", "b=2", "grid.lambdas=[1e3]"], ["weyl.csv"]),
    ("growing", ["kind=\"explicit\"", "t_prefix=[0, 1, 4]", "b_prefix=[1, 2, 2]", 'tail="power"', "r=2",
                 'potential.form="power"', "potential.c=1.0", "potential.gamma=1.0", "grid.lambdas=[100.0]"],
     ["growing.csv", "growing_diagnostics.json"]),
    ("boundaryless", ['kind="geometric"', "q=0.5", "b=2", "grid.lambdas=[100.0]"], ["boundaryless.csv"]),
])
def test_cli_commands_write_artifacts(tmp_path, command, args, artifacts):
    assert main([command, *args, "--out", str(tmp_path)]) == 0
    for name in artifacts:
        assert (tmp_path / name).stat().st_size > 0


def test_cli_rejects_renewal_on_homogeneous(tmp_path):
    assert main(["renewal", 'kind="homogeneous"', "b=2", "--out", str(tmp_path)]) == 2


def _run_module(args, threads):
    env = dict(os.environ, REGTREE_THREADS=str(threads))
    return subprocess.run([sys.executable, "-m", "regtree", *args], env=env, capture_output=True, text=True)


def test_subprocess_outputs_are_byte_identical(tmp_path):
    args = ["count", 'kind="geometric"', "q=0.5", "b=2", "--lambda-min", "1", "--lambda-max", "1e4",
            "--lambda-steps", "25", "--per-generation"]
    outs = []
    for i, threads in enumerate((1, 4)):
        out = tmp_path / f"run{i}"
        proc = _run_module(args + ["--out", str(out)], threads)
        assert proc.returncode == 0, proc.stderr
        outs.append((out / "count.csv").read_bytes())
    assert outs[0] == outs[1]


def test_subprocess_exit_codes(tmp_path):
    proc = _run_module(["count", 'kind="homogeneous"', "b=2", "--out", str(tmp_path)], 1)
    assert proc.returncode == 2
    assert "NotDiscrete" in proc.stderr
    proc = _run_module(["count", "tree.kind=", "--out", str(tmp_path)], 1)
    assert proc.returncode == 1
