import os

import numpy as np
import pytest

from c0mass_lab import cli
from c0mass_lab import geometry as G


def run(argv):
    return cli.main(argv)


def test_mass_flat_all_zero_rows(tmp_path):
    out = tmp_path / "mass.csv"
    assert run(["mass", "--metric", "flat", "--dim", "3",
                "--r", "10,20", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("r [")
    for line in lines[1:]:
        vals = [float(v) for v in line.split(",")]
        assert vals[1:] == [0.0, 0.0, 0.0, 0.0]
    # companion artifacts: manifest and rendered figure
    assert (tmp_path / "mass.manifest.txt").exists()
    assert (tmp_path / "mass.png").exists()


def test_mass_schwarzschild_normalizations(tmp_path):
    out = tmp_path / "m.csv"
    run(["mass", "--metric", "schwarzschild{1.0}", "--dim", "3",
         "--r", "20", "--normalization", "unit", "--out", str(out)])
    row = [float(v) for v in out.read_text().splitlines()[1].split(",")]
    assert abs(row[3] - 16 * np.pi) <= 1e-6
    assert row[4] == row[3]


def test_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    spec = ["glue", "--map", "synthetic-transition{tau=1.0;c=0.2}",
            "--r", "2.0", "--samples", "30", "--seed", "5"]
    run(spec + ["--out", str(a)])
    run(spec + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_missing_dim_cites_key(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run(["mass", "--metric", "flat", "--r", "10",
             "--out", str(tmp_path / "x.csv")])
    assert "dim" in str(exc.value)


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("r = 30\nphi = 0.92,1.08  # tweak\n")
    out = tmp_path / "m.csv"
    run(["mass", "--metric", "flat", "--dim", "3", "--r", "10",
         "--config", str(cfg), "--out", str(out)])
    row = out.read_text().splitlines()[1]
    assert row.split(",")[0] == "30"


def test_config_parse_error_cites_line(tmp_path):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("# fine\nbroken line without equals\n")
    with pytest.raises(SystemExit) as exc:
        run(["mass", "--metric", "flat", "--dim", "3", "--r", "10",
             "--config", str(cfg), "--out", str(tmp_path / "x.csv")])
    assert ":2:" in str(exc.value)


def test_config_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("frobnicate = 7\n")
    with pytest.raises(SystemExit) as exc:
        run(["mass", "--metric", "flat", "--dim", "3", "--r", "10",
             "--config", str(cfg), "--out", str(tmp_path / "x.csv")])
    assert "frobnicate" in str(exc.value)


def test_slow_decay_rejected_by_condition_name(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["monotonicity", "--metric", "schwarzschild{1.0}", "--dim", "3",
             "--r", "40", "--r2", "80", "--tau", "0.4",
             "--out", str(tmp_path / "m.csv")])
    assert "tau > (n-2)/2" in str(exc.value)


def test_unknown_metric_keyword(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["mass", "--metric", "wormhole{1}", "--dim", "3", "--r", "10",
             "--out", str(tmp_path / "x.csv")])
    assert "wormhole" in str(exc.value)


def test_profile_spec_grammar():
    prof = cli.parse_profile_spec("1+2.0/ell^2")
    assert abs(prof(2.0) - 1.5) <= 1e-15
    prof = cli.parse_profile_spec("1-0.5/ell")
    assert abs(prof(2.0) - 0.75) <= 1e-15
    assert cli.parse_profile_spec("1")(7.0) == 1.0
    with pytest.raises(SystemExit):
        cli.parse_profile_spec("ell^2")


def test_grid_metric_spec_round_trip(tmp_path):
    path = tmp_path / "field.bin"
    vals = np.broadcast_to(np.eye(3), (4, 4, 4, 3, 3)).copy()
    G.write_grid_file(path, vals, origin=[-0.5] * 3, spacing=1.0 / 3)
    fld = cli.parse_metric_spec(f"grid{{{path}}}", 3)
    assert fld.kind == "grid"
    assert np.array_equal(fld.grid_values, vals)


def test_testfn_csv_columns(tmp_path):
    out = tmp_path / "tf.csv"
    run(["testfn", "--phi", "0.95,1.05", "--theta", "4e-4", "--dim", "3",
         "--nodes", "256", "--snapshots", "3", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0].split(",")[0].startswith("t ")
    assert len(lines) == 1 + 3 * 256


def test_flow_trajectory_csv_and_snapshot(tmp_path):
    out = tmp_path / "flow.csv"
    snap = tmp_path / "snap.bin"
    run(["flow", "--metric", "flat", "--dim", "3", "--solver", "grid",
         "--grid", "12", "--half-width", "1.0", "--T", "0.005",
         "--snapshot-out", str(snap), "--out", str(out)])
    names = {line.split(",")[1] for line in out.read_text().splitlines()[1:]}
    assert {"sup_h", "sup_grad_h", "grad_ratio"} <= names
    g = G.read_grid_file(snap)
    assert np.max(np.abs(g.grid_values - np.eye(3))) == 0.0


def test_glue_csv_and_delta_report(tmp_path, capsys):
    out = tmp_path / "glue.csv"
    run(["glue", "--map", "perturbed-isometry{eps=0.001;bump=sin}",
         "--r", "1.0", "--samples", "25", "--delta-report",
         "--out", str(out)])
    printed = capsys.readouterr().out
    assert "loss_ratio" in printed
    header = out.read_text().splitlines()[0].split(",")
    assert len(header) == 10
    manifest = (tmp_path / "glue.manifest.txt").read_text()
    assert "measured.delta_input" in manifest
    assert "measured.pullback_sup" in manifest


def test_accept_filter_no_match_is_an_error():
    with pytest.raises(SystemExit) as exc:
        run(["accept", "--filter", "nothing-here"])
    assert "matches no criterion" in str(exc.value)


def test_manifest_records_all_parameters(tmp_path):
    out = tmp_path / "m.csv"
    run(["mass", "--metric", "flat", "--dim", "3", "--r", "10",
         "--quad-radial", "64", "--out", str(out)])
    manifest = (tmp_path / "m.manifest.txt").read_text()
    for key in ("metric = flat", "dim = 3", "quad_radial = 64",
                "seed = 0", "measured.normalization"):
        assert key in manifest


def test_thread_cap_env_validation(monkeypatch):
    monkeypatch.setenv("C0MASS_THREADS", "not-a-number")
    with pytest.raises(SystemExit):
        cli._cap_threads()
    monkeypatch.setenv("C0MASS_THREADS", "2")
    assert cli._cap_threads() == 2
    assert os.environ["OMP_NUM_THREADS"] == "2"
