import csv
import hashlib
import json
import math
from pathlib import Path

import pytest

from ergolab import cli

GOLDEN = Path(__file__).parent / "golden" / "quickstart.sha256"


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_quickstart_passes_and_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _run(["run", "--json", str(a)], capsys)[0] == 0
    assert _run(["run", "--json", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["pass"] is True and rep["schema_version"] == cli.SCHEMA_VERSION
    stages = [r["stage"] for r in rep["stages"]]
    assert stages == sorted(stages, key=cli.STAGES.index)


def test_quickstart_golden(tmp_path, capsys):
    out = tmp_path / "q.json"
    cli.main(["--threads", "2", "run", "--json", str(out)])
    capsys.readouterr()
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    assert digest == GOLDEN.read_text().strip()


def _cfg(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_large_c_fails(tmp_path, capsys):
    cfg = cli.quickstart_config()
    cfg["constants"] = {"c": math.log(2) * 1.01}
    cfg["experiments"] = [{"stage": "conditions"}]
    assert _run(["run", "--config", _cfg(tmp_path, cfg)], capsys)[0] == 1


def test_empty_experiments(tmp_path, capsys):
    cfg = {"seed": 1, "family": {"builder": "doubling"}, "experiments": []}
    code, out, _ = _run(["run", "--config", _cfg(tmp_path, cfg)], capsys)
    assert code == 0 and json.loads(out)["stages"] == []


@pytest.mark.parametrize("cfg,path", [
    ({"family": {"builder": "doubling"}, "experiments": []}, "config.seed"),
    ({"seed": 1, "family": {"builder": "doubling"}, "experiments": [{"stage": "nope"}]},
     "config.experiments[0].stage"),
    ({"seed": 1, "family": {"builder": "doubling"}, "constants": {"K9": 1}, "experiments": []},
     "config.constants.K9"),
    ({"seed": "x", "family": {"builder": "doubling"}, "experiments": []}, "config.seed"),
])
def test_schema_errors(tmp_path, capsys, cfg, path):
    code, _, err = _run(["run", "--config", _cfg(tmp_path, cfg)], capsys)
    assert code == 2 and path in err


def test_missing_config_file(capsys):
    assert _run(["run", "--config", "/nonexistent/x.json"], capsys)[0] == 2


def test_argparse_errors_exit_2(capsys):
    assert _run(["orbit", "--builder", "doubling"], capsys)[0] == 2
    assert _run(["frobnicate"], capsys)[0] == 2


def test_build_and_check(tmp_path, capsys):
    fam = tmp_path / "fam.json"
    assert _run(["build", "--builder", "triangle", "--out", str(fam)], capsys)[0] == 0
    code, out, _ = _run(["check", "--family", str(fam)], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["pass"] and rep["command"] == "check"
    code, _, _ = _run(["check", "--family", str(fam), "--c", "5"], capsys)
    assert code == 1


def test_build_depth(tmp_path, capsys):
    fam = tmp_path / "d2.json"
    assert _run(["build", "--builder", "doubling", "--depth", "2", "--out", str(fam)], capsys)[0] == 0
    assert _run(["check", "--family", str(fam)], capsys)[0] == 0


def test_orbit_csv(tmp_path, capsys):
    path = tmp_path / "o.csv"
    code, out, _ = _run(["orbit", "--builder", "doubling", "--x", "0.3", "--steps", "20", "--csv", str(path)],
                        capsys)
    assert code == 0
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["step", "symbol", "x0", "a", "S", "hyperbolic"]
    assert len(rows) == 21
    assert float(rows[20]["S"]) == pytest.approx(-20 * math.log(2))
    assert json.loads(out)["hyperbolic_frequency"] == 1.0


def test_orbit_boundary_start_fails(capsys):
    assert _run(["orbit", "--builder", "doubling", "--x", "0.5", "--steps", "5"], capsys)[0] == 1


def test_cylinder_command(capsys):
    code, out, _ = _run(["cylinder", "--builder", "doubling", "--word", "0,1",
                         "--check", "diameter,distortion", "--pairs", "100"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["volume"] == 0.25 and rep["hyperbolic"] == "yes"
    assert _run(["cylinder", "--builder", "doubling", "--word", "0", "--check", "bogus"], capsys)[0] == 2
    assert _run(["cylinder", "--builder", "doubling", "--word", ""], capsys)[0] == 2


def test_transitivity_command(capsys):
    code, out, _ = _run(["transitivity", "--builder", "doubling", "--depth", "6"], capsys)
    assert code == 0 and json.loads(out)["transitive"]
    assert _run(["transitivity", "--builder", "two_arc_control", "--depth", "4"], capsys)[0] == 1


def test_ergodicity_command(tmp_path, capsys):
    path = tmp_path / "e.csv"
    code, out, _ = _run(["ergodicity", "--builder", "doubling", "--starts", "4", "--steps", "100000",
                         "--csv", str(path)], capsys)
    assert code == 0 and json.loads(out)["result"]["caveat"]
    assert len(list(csv.reader(path.open()))) == 5
    assert _run(["ergodicity", "--builder", "two_arc_control", "--starts", "6", "--steps", "100000"],
                capsys)[0] == 1
