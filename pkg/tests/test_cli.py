"""Command-line behavior: flags, exit codes, trace files, summary lines."""

import gzip
import subprocess
import sys

import pytest

from asyncdca import dumps_libsvm, read_trace
from asyncdca.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, EXIT_PARSE, cli_main
from conftest import make_gaussian_dataset


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    ds = make_gaussian_dataset(80, 10, seed=11)
    p = tmp_path_factory.mktemp("data") / "train.txt"
    p.write_text(dumps_libsvm(ds))
    return str(p)


def test_sequential_run_writes_trace(data_file, tmp_path, capsys):
    trace = tmp_path / "t.csv"
    code = cli_main(
        [
            "--data", data_file, "--mode", "sequential", "--rounds", "6",
            "--local-iters", "100", "--lambda", "1e-2", "--trace", str(trace),
        ]
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "mode=sequential merges=6" in out
    recs = read_trace(str(trace))
    assert len(recs) == 6
    header = trace.read_text().splitlines()[0]
    assert header == "round,wall_ms,sim_ticks,primal,dual,gap,contributors,msgs"


def test_bad_topology_exits_config(data_file, capsys):
    code = cli_main(["--data", data_file, "--nodes", "4", "--barrier", "5", "--sim-time"])
    assert code == EXIT_CONFIG
    assert "barrier" in capsys.readouterr().err


def test_oversubscribed_partition_exits_config(data_file, capsys):
    code = cli_main(
        ["--data", data_file, "--nodes", "41", "--cores", "2", "--sim-time",
         "--rounds", "1", "--local-iters", "5"]
    )
    assert code == EXIT_CONFIG
    assert "exceeds" in capsys.readouterr().err


def test_missing_data_exits_parse(tmp_path, capsys):
    code = cli_main(["--data", str(tmp_path / "nope.txt"), "--mode", "sequential"])
    assert code == EXIT_PARSE
    assert "cannot read data" in capsys.readouterr().err


def test_malformed_data_exits_parse(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("1 3:1.0 2:0.5\n")
    code = cli_main(["--data", str(p), "--mode", "sequential"])
    assert code == EXIT_PARSE
    assert "line 1" in capsys.readouterr().err


def test_non_finite_data_exits_diverged(tmp_path, capsys):
    p = tmp_path / "nan.txt"
    rows = [
        "1 1:1.0 2:0.5",
        "-1 1:0.5 2:nan",
        "1 1:1.0 2:-1.0",
        "-1 1:0.25 2:1.0",
    ]
    p.write_text("\n".join(rows) + "\n")
    code = cli_main(
        ["--data", str(p), "--mode", "sequential", "--rounds", "2",
         "--local-iters", "200", "--lambda", "1e-2"]
    )
    assert code == EXIT_DIVERGED
    assert "diverged" in capsys.readouterr().err


def test_bogus_sigma_exits_config(data_file, capsys):
    code = cli_main(["--data", data_file, "--sigma", "fast"])
    assert code == EXIT_CONFIG
    assert "--sigma" in capsys.readouterr().err


def test_small_sigma_needs_override(data_file, capsys):
    argv = [
        "--data", data_file, "--nodes", "2", "--sim-time", "--lambda", "1e-2",
        "--rounds", "2", "--local-iters", "40", "--sigma", "1.0",
    ]
    assert cli_main(argv) == EXIT_CONFIG
    assert "unsafe-sigma" in capsys.readouterr().err
    assert cli_main(argv + ["--unsafe-sigma"]) == EXIT_OK


def test_delay_schedule_shapes_contributors(data_file, tmp_path):
    sched = tmp_path / "sched.toml"
    sched.write_text("# first worker slowed by two ticks\n0 = 2.0\n")
    trace = tmp_path / "t.csv"
    code = cli_main(
        [
            "--data", data_file, "--nodes", "3", "--cores", "2", "--barrier", "2",
            "--delay-bound", "2", "--sim-time", "--rounds", "3",
            "--local-iters", "30", "--lambda", "1e-2",
            "--delay-schedule", str(sched), "--trace", str(trace),
        ]
    )
    assert code == EXIT_OK
    masks = [r.contributors for r in read_trace(str(trace))]
    assert masks[:2] == [0b110, 0b110]
    assert masks[2] & 0b001


def test_schedule_unknown_worker_exits_config(data_file, tmp_path, capsys):
    sched = tmp_path / "sched.toml"
    sched.write_text("7 = 1.0\n")
    code = cli_main(
        ["--data", data_file, "--nodes", "2", "--sim-time", "--delay-schedule", str(sched)]
    )
    assert code == EXIT_CONFIG
    assert "unknown worker" in capsys.readouterr().err


def test_broken_schedules_exit_config(data_file, tmp_path):
    sched = tmp_path / "sched.toml"
    sched.write_text("[table]\nnope\n")
    assert cli_main(["--data", data_file, "--delay-schedule", str(sched)]) == EXIT_CONFIG
    missing = tmp_path / "none.toml"
    assert cli_main(["--data", data_file, "--delay-schedule", str(missing)]) == EXIT_CONFIG


def test_help_exits_zero(capsys):
    assert cli_main(["--help"]) == EXIT_OK
    assert "--delay-bound" in capsys.readouterr().out


def test_argparse_rejections_exit_config(capsys):
    assert cli_main([]) == EXIT_CONFIG
    assert cli_main(["--data", "x", "--frobnicate"]) == EXIT_CONFIG
    assert cli_main(["--data", "x", "--mode", "blurry"]) == EXIT_CONFIG
    capsys.readouterr()


def test_mode_topology_conflicts_exit_config(data_file):
    args = ["--data", data_file, "--mode", "cocoa", "--nodes", "3", "--barrier", "2"]
    assert cli_main(args) == EXIT_CONFIG
    assert cli_main(["--data", data_file, "--mode", "passcode", "--nodes", "2"]) == EXIT_CONFIG


def test_gap_target_summary(data_file, capsys):
    code = cli_main(
        [
            "--data", data_file, "--mode", "sequential", "--lambda", "1e-2",
            "--local-iters", "400", "--rounds", "50", "--gap-target", "1e-2",
        ]
    )
    assert code == EXIT_OK
    assert "(gap target reached)" in capsys.readouterr().out


def test_gzip_data(tmp_path):
    ds = make_gaussian_dataset(30, 6, seed=12)
    p = tmp_path / "train.txt.gz"
    with gzip.open(p, "wt") as fh:
        fh.write(dumps_libsvm(ds))
    code = cli_main(
        ["--data", str(p), "--mode", "sequential", "--rounds", "2",
         "--local-iters", "30", "--lambda", "1e-2"]
    )
    assert code == EXIT_OK


def test_unwritable_trace_exits_config(data_file, tmp_path, capsys):
    code = cli_main(
        ["--data", data_file, "--mode", "sequential", "--rounds", "2",
         "--local-iters", "30", "--lambda", "1e-2", "--trace", str(tmp_path)]
    )
    assert code == EXIT_CONFIG
    assert "cannot write trace" in capsys.readouterr().err


def test_module_entry_point(data_file):
    cmd = [
        sys.executable, "-m", "asyncdca.cli", "--data", data_file,
        "--mode", "sequential", "--rounds", "2", "--local-iters", "30",
        "--lambda", "1e-2",
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0
    assert "mode=sequential" in proc.stdout
