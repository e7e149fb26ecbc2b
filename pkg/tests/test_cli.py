import subprocess
import sys
from pathlib import Path

import pytest

from headerbid.cli import main
from headerbid.data import read_impressions
from headerbid.harness import read_metrics_csv

DATA = Path(__file__).parent / "data"
STATIONARY = DATA / "synthetic_stationary.csv"


def cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as e:
        return e.code


def test_compare_writes_one_series_per_policy(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code = cli("compare", "--dataset", STATIONARY, "--policies", "ts,ucb,exp3", "--contexts", 5,
               "--checkpoint-every", 500, "--out", out)
    assert code == 0
    series = read_metrics_csv(out)
    assert list(series) == ["ts", "ucb", "exp3"]
    assert all(len(v) == 6 for v in series.values())
    assert "winner:" in capsys.readouterr().out


def test_stats(capsys):
    assert cli("stats", "--dataset", STATIONARY) == 0
    text = capsys.readouterr().out
    log = read_impressions(STATIONARY)
    share = (log.competitor <= log.prices).mean()
    assert f"n = {len(log)}" in text
    assert f"share(x <= p) = {share:.1%}" in text


def test_missing_dataset_is_a_usage_error(capsys):
    assert cli("run") == 1
    err = capsys.readouterr().err
    assert "--dataset is required" in err
    assert "usage: headerbid run" in err


def test_unknown_flag_is_a_usage_error(capsys):
    assert cli("run", "--dataset", STATIONARY, "--bogus") == 1
    assert cli("frobnicate") == 1
    assert cli("compare", "--dataset", STATIONARY, "--policies", "greedy") == 1


def test_data_errors_exit_two(tmp_path, capsys):
    assert cli("run", "--dataset", tmp_path / "nope.csv") == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("id,timestamp_ms,p,x\n0,0,1.0,0.5\n1,1,-2,0.5\n")
    assert cli("run", "--dataset", bad) == 2
    nox = tmp_path / "nox.csv"
    nox.write_text("id,timestamp_ms,p,x\n0,0,1.0,\n")
    assert cli("run", "--dataset", nox) == 2
    assert "cannot adjudicate" in capsys.readouterr().err


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert cli("compare", "--dataset", STATIONARY, "--policies", "ts,exp3", "--contexts", 5,
                   "--particles", 30, "--seed", 4, "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_synthetic_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert cli("gen-synthetic", "--out", out, "--n", 500, "--seed", 9, "--drift", "sinusoidal") == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(read_impressions(a)) == 500


def test_build_ab(tmp_path, capsys):
    out = tmp_path / "ab.csv"
    assert cli("build-ab", "--raw", DATA / "ab_raw.csv", "--out", out, "--seed", 3) == 0
    assert out.read_text() == (DATA / "ab_split.csv").read_text()


def test_ini_config(tmp_path):
    ini = tmp_path / "run.ini"
    out = tmp_path / "m.csv"
    ini.write_text(f"""
[run]
dataset = {STATIONARY}
order = chronological
num_contexts = 5
checkpoint_every = 1000
out = {out}

[policy:careful]
kind = ts
num_particles = 20
epsilon = 0.01

[policy:shade]
kind = fixed
alpha = 0.8
""")
    assert cli("compare", "--config", ini) == 0
    series = read_metrics_csv(out)
    assert list(series) == ["careful", "shade"]
    assert len(series["careful"]) == 3

    ini.write_text("[run]\nspeed = 3\n")
    assert cli("compare", "--config", ini, "--dataset", STATIONARY) == 1


def test_run_resume_and_snapshot_tools(tmp_path, capsys):
    snap = tmp_path / "s.jsonl"
    full, resumed = tmp_path / "full.csv", tmp_path / "resumed.csv"
    common = ["--dataset", STATIONARY, "--policy", "ts", "--contexts", 5, "--particles", 30,
              "--checkpoint-every", 500]
    assert cli("run", *common, "--out", full) == 0
    assert cli("run", *common, "--stop-at", 1500, "--snapshot-out", snap) == 0
    assert cli("snapshot-tools", "inspect", "--snapshot", snap) == 0
    assert "position=1500" in capsys.readouterr().out
    assert cli("snapshot-tools", "verify", "--snapshot", snap, "--dataset", STATIONARY) == 0
    assert cli("run", "--dataset", STATIONARY, "--resume", snap, "--out", resumed) == 0
    assert full.read_bytes() == resumed.read_bytes()

    assert cli("snapshot-tools", "verify", "--snapshot", snap, "--dataset", DATA / "ties.csv") == 2
    snap.write_text("garbage")
    assert cli("snapshot-tools", "inspect", "--snapshot", snap) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "headerbid", "stats", "--dataset", str(DATA / "ties.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "n = 8" in proc.stdout
