"""Command-line interface: exit codes, determinism, file handling."""

import json
import subprocess
import sys

import numpy as np
import pytest

from kerrnet import cli
from kerrnet.cli import format_csv, main, read_csv, sha256, write_atomic

AND_DRIVES = "a constant level=50\nb square low=0 high=50 period=1\n"
FEEDBACK = """netlist fb
comp r resonator delta=0 chi=0 kappa=50,1 in=p.0
comp p phaseshifter phi=3.14159 in=r.0
output q from r.1
"""


@pytest.fixture
def and_files(tmp_path):
    net = tmp_path / "and.net"
    assert main(["cell", "and_gate", "--ehigh", "50", "-o", str(net)]) == 0
    drives = tmp_path / "d.txt"
    drives.write_text(AND_DRIVES)
    return net, drives


def _simulate(net, drives, out, *extra):
    return main(["simulate", str(net), "--drives", str(drives), "--tmax", "0.5",
                 "--seed", "3", "-o", str(out), *extra])


def test_check_counter_counts(tmp_path, capsys):
    net = tmp_path / "counter.net"
    assert main(["cell", "counter4", "-o", str(net)]) == 0
    capsys.readouterr()
    assert main(["check", str(net)]) == 0
    lines = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    assert lines["resonators"] == "88"
    assert lines["beamsplitters"] == "240"
    assert lines["phaseshifters"] == "176"
    assert lines["vacuum_inputs"] == "233"
    assert lines["coherent_inputs"] == "72"
    assert lines["violations"] == "none"


def test_missing_drive_is_validation_error(tmp_path, and_files, capsys):
    net, drives = and_files
    drives.write_text("a constant level=50\n")
    assert _simulate(net, drives, tmp_path / "out") == cli.EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "error: validation:" in err
    assert "'b'" in err


def test_bad_flag_is_usage_error(and_files):
    net, drives = and_files
    with pytest.raises(SystemExit) as exc:
        main(["simulate", str(net), "--tmax", "1", "--bogus", "-o", "x"])
    assert exc.value.code == cli.EXIT_USAGE


def test_missing_tmax_is_usage_error(tmp_path, and_files):
    net, drives = and_files
    rc = main(["simulate", str(net), "--drives", str(drives), "-o", str(tmp_path / "o")])
    assert rc == cli.EXIT_USAGE


def test_unknown_scheme_is_usage_error(and_files):
    net, drives = and_files
    with pytest.raises(SystemExit) as exc:
        _simulate(net, drives, "o", "--scheme", "rk4")
    assert exc.value.code == cli.EXIT_USAGE


def test_divergence_exit_code(tmp_path, capsys):
    net = tmp_path / "fb.net"
    net.write_text(FEEDBACK)
    rc = main(["simulate", str(net), "--tmax", "5", "--dt", "0.1", "-o", str(tmp_path / "o")])
    assert rc == cli.EXIT_DIVERGENCE
    assert "error: divergence:" in capsys.readouterr().err
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_missing_file_is_io_error(tmp_path):
    assert main(["check", str(tmp_path / "absent.net")]) == cli.EXIT_IO


def test_simulate_is_deterministic(tmp_path, and_files):
    net, drives = and_files
    assert _simulate(net, drives, tmp_path / "a") == 0
    assert _simulate(net, drives, tmp_path / "b") == 0
    a = (tmp_path / "a" / "traj_0000.csv").read_text()
    b = (tmp_path / "b" / "traj_0000.csv").read_text()
    assert sha256(a) == sha256(b)
    assert _simulate(net, drives, tmp_path / "c", "--seed", "4") == 0
    assert sha256((tmp_path / "c" / "traj_0000.csv").read_text()) != sha256(a)


def test_manifest_rerun_reproduces(tmp_path, and_files):
    net, drives = and_files
    assert _simulate(net, drives, tmp_path / "a", "--ntraj", "2", "--workers", "1") == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["n_traj"] == 2
    assert manifest["netlist_sha256"] == sha256(net.read_text())
    assert manifest["outputs"] == ["traj_0000.csv", "traj_0001.csv"]
    rc = main(["simulate", "--from-manifest", str(tmp_path / "a" / "manifest.json"),
               "-o", str(tmp_path / "b")])
    assert rc == 0
    for name in manifest["outputs"]:
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()


def test_manifest_rejects_changed_inputs(tmp_path, and_files):
    net, drives = and_files
    assert _simulate(net, drives, tmp_path / "a") == 0
    drives.write_text(AND_DRIVES.replace("period=1", "period=2"))
    rc = main(["simulate", "--from-manifest", str(tmp_path / "a" / "manifest.json"),
               "-o", str(tmp_path / "b")])
    assert rc == cli.EXIT_VALIDATION


def test_flags_override_config(tmp_path, and_files):
    net, drives = and_files
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"t_max": 0.2, "seed": 9, "scheme": "etd"}))
    rc = main(["simulate", str(net), "--drives", str(drives), "--config", str(cfg),
               "--seed", "1", "-o", str(tmp_path / "o")])
    assert rc == 0
    config = json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]
    assert config["seed"] == 1
    assert config["t_max"] == 0.2
    assert config["scheme"] == "etd"


def test_bad_config_value(tmp_path, and_files):
    net, drives = and_files
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"t_max": 0.2, "scheme": "rk4"}))
    rc = main(["simulate", str(net), "--drives", str(drives), "--config", str(cfg),
               "-o", str(tmp_path / "o")])
    assert rc == cli.EXIT_VALIDATION


def test_reduce_matches_oracle(tmp_path, and_files):
    net, _ = and_files
    assert main(["reduce", str(net), "-o", str(tmp_path / "a.txt")]) == 0
    assert main(["reduce", str(net), "--oracle", "-o", str(tmp_path / "b.txt")]) == 0
    from kerrnet.reduction import parse_reduced
    a = parse_reduced((tmp_path / "a.txt").read_text())
    b = parse_reduced((tmp_path / "b.txt").read_text())
    assert a["resonators"] == b["resonators"] and a["inputs"] == b["inputs"]
    matrices = [k for k in a if isinstance(a[k], np.ndarray)]
    assert matrices
    for name in matrices:
        np.testing.assert_allclose(a[name], b[name], atol=1e-10)


def test_reduce_oracle_refuses_feedback(tmp_path):
    net = tmp_path / "fb.net"
    net.write_text(FEEDBACK)
    assert main(["reduce", str(net), "--oracle"]) == cli.EXIT_VALIDATION
    assert main(["reduce", str(net), "-o", str(tmp_path / "r.txt")]) == 0


def test_cell_rejects_bad_parameters():
    assert main(["cell", "amplifier_stage", "--stage", "9"]) == cli.EXIT_VALIDATION


def test_analyze_reports_strict_json(tmp_path, and_files, capsys):
    net, drives = and_files
    assert _simulate(net, drives, tmp_path / "o") == 0
    capsys.readouterr()
    traj = tmp_path / "o" / "traj_0000.csv"
    rc = main(["analyze", str(traj), "--jumps", "q", "--photons", "--low", "0",
               "--high", "1e-3", "--hist", "q", "--range", "100", "--bins", "20",
               "--hist-out", str(tmp_path / "h.txt")])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["samples"] == 1000
    assert report["jumps"]["n_up"] == 0
    assert report["jumps"]["r_up"] is None
    assert report["hist"]["samples"] == 1000
    assert (tmp_path / "h.txt").exists()


def test_analyze_delay(tmp_path, and_files, capsys):
    net, drives = and_files
    assert _simulate(net, drives, tmp_path / "o", "--no-noise") == 0
    capsys.readouterr()
    rc = main(["analyze", str(tmp_path / "o" / "traj_0000.csv"), "--delay", "q",
               "--stimulus", "q", "--low", "0", "--high", "59"])
    assert rc == 0
    delays = json.loads(capsys.readouterr().out)["delay"]
    assert delays
    for d in delays:
        assert set(d) == {"edge", "tau", "rising", "measurable"}
        assert isinstance(d["rising"], bool) and isinstance(d["measurable"], bool)


def test_analyze_unknown_column(tmp_path, and_files):
    net, drives = and_files
    assert _simulate(net, drives, tmp_path / "o") == 0
    traj = tmp_path / "o" / "traj_0000.csv"
    assert main(["analyze", str(traj), "--autocorr", "nope"]) == cli.EXIT_VALIDATION


def test_sweep_writes_table(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = main(["sweep", "--ehigh-list", "20,22", "--tmax", "20", "--dt", "2e-3",
               "--workers", "1", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("e_high,n_up")
    assert [float(line.split(",")[0]) for line in lines[1:3]] == [20.0, 22.0]


def test_sweep_rejects_other_cells():
    assert main(["sweep", "--cell", "counter4", "--ehigh-list", "20",
                 "--tmax", "1"]) == cli.EXIT_USAGE


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 7)
    cols = {"q": rng.normal(size=7) + 1j * rng.normal(size=7),
            "cell.r1.out1": rng.normal(size=7) * 1e-17 + 0j}
    write_atomic(tmp_path / "x.csv", format_csv(t, cols))
    t2, cols2 = read_csv(tmp_path / "x.csv")
    np.testing.assert_array_equal(t, t2)
    assert list(cols2) == list(cols)
    for k in cols:
        np.testing.assert_array_equal(cols[k], cols2[k])


def test_write_atomic_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "f.txt"
    target.write_text("old")

    def failing_replace(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", failing_replace)
    with pytest.raises(OSError):
        write_atomic(target, "new")
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


def test_module_entry_point(tmp_path):
    net = tmp_path / "latch.net"
    done = subprocess.run([sys.executable, "-m", "kerrnet", "cell", "latch", "-o", str(net)],
                          capture_output=True, text=True)
    assert done.returncode == 0, done.stderr
    done = subprocess.run([sys.executable, "-m", "kerrnet", "check", str(net)],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert "resonators: 2" in done.stdout
    done = subprocess.run([sys.executable, "-m", "kerrnet", "--version"],
                          capture_output=True, text=True)
    assert done.returncode == 0
