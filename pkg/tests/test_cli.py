import csv
import subprocess
import sys

import pytest
import yaml

from masecure.cli import EXIT_OK, EXIT_USAGE, main

SCN = {"system": {"N_a": 6, "max_iter": 3},
       "geometry": {"grid_dims": [4, 6], "ris_dims": [4, 4], "min_ris_aperture": 0.0}}


@pytest.fixture
def scn_file(tmp_path):
    p = tmp_path / "scn.yaml"
    p.write_text(yaml.safe_dump(SCN))
    return p


def _spec(tmp_path, scn_file, **kw):
    spec = dict(scenario=str(scn_file), sweep="antennas", values=[4, 6],
                methods=["fpa", "alg2"], seeds=[0, 1], output="out")
    spec.update(kw)
    p = tmp_path / "spec.yaml"
    p.write_text(yaml.safe_dump(spec))
    return p


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_usage_errors(tmp_path, scn_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["run", "--method", "magic"])
    assert exc.value.code == EXIT_USAGE
    assert main(["sweep", "--spec", str(_spec(tmp_path, scn_file, seeds=[]))]) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == EXIT_USAGE
    bad = tmp_path / "bad.yaml"
    bad.write_text("system: {bogus: 1}\n")
    assert main(["run", "--config", str(bad)]) == EXIT_USAGE
    assert "system.bogus" in capsys.readouterr().err


def test_run_writes_row(tmp_path, scn_file, capsys):
    out = tmp_path / "run.csv"
    assert main(["run", "--config", str(scn_file), "--method", "fpa", "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 1 and rows[0]["status"] == "ok" and float(rows[0]["R_s"]) >= 0
    assert "R_s=" in capsys.readouterr().out


def test_sweep_outputs_and_reproducibility(tmp_path, scn_file):
    spec = _spec(tmp_path, scn_file)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--spec", str(spec), "--out", str(a), "--quiet"]) == EXIT_OK
    assert main(["sweep", "--spec", str(spec), "--out", str(b), "--quiet"]) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == ["aggregate.csv", "alg2.csv", "fpa.csv"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    rows = _rows(a / "fpa.csv")
    assert list(rows[0]) == ["sweep_value", "seed", "R_U", "R_E", "R_s", "alpha", "iterations",
                             "wall_ms", "status"]
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
    agg = _rows(a / "aggregate.csv")
    assert len(agg) == 4 and all(r["n"] == "2" for r in agg)


def test_sweep_records_failed_points(tmp_path, scn_file):
    # N_a = 2 < K + 1 fails per point; the sweep keeps going
    spec = _spec(tmp_path, scn_file, values=[2, 6], methods=["fpa"], seeds=[0])
    out = tmp_path / "o"
    assert main(["sweep", "--spec", str(spec), "--out", str(out), "--quiet"]) == EXIT_OK
    rows = _rows(out / "fpa.csv")
    assert rows[0]["status"].startswith("error:") and rows[0]["R_s"] == ""
    assert rows[1]["status"] == "ok"


def test_groups_map_full_default_grid(tmp_path):
    cfg = tmp_path / "big.yaml"
    cfg.write_text(yaml.safe_dump({"system": {"N_a": 20, "max_iter": 2},
                                   "geometry": {"ris_dims": [4, 4], "min_ris_aperture": 0.0}}))
    out = tmp_path / "groups.csv"
    assert main(["groups", "--config", str(cfg), "--method", "alg2", "--out", str(out),
                 "--quiet"]) == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 600
    assert list(rows[0]) == ["n_h", "n_v", "group_id", "ssr", "selected"]
    assert sum(int(r["selected"]) for r in rows) == 20
    assert {(int(r["n_h"]), int(r["n_v"])) for r in rows} == {(h, v) for h in range(20)
                                                              for v in range(30)}


def test_oracle_command(tmp_path):
    cfg = tmp_path / "toy.yaml"
    cfg.write_text(yaml.safe_dump({"system": {"N_a": 3, "max_iter": 3},
                                   "geometry": {"grid_dims": [2, 3], "ris_dims": [4, 4],
                                                "min_ris_aperture": 0.0}}))
    out = tmp_path / "oracle.csv"
    assert main(["oracle", "--config", str(cfg), "--samples", "20000", "--out", str(out),
                 "--quiet"]) == EXIT_OK
    assert out.read_text().startswith("quantity,analytic,oracle,tolerance,passed,samples")


def test_console_entry_point(tmp_path, scn_file):
    r = subprocess.run([sys.executable, "-m", "masecure.cli", "run", "--config", str(scn_file),
                        "--method", "fpa"], capture_output=True, text=True)
    assert r.returncode == 0 and "R_s=" in r.stdout
    r = subprocess.run([sys.executable, "-m", "masecure.cli", "bogus"], capture_output=True)
    assert r.returncode == EXIT_USAGE
