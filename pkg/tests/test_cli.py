import json
import subprocess
import sys

import pytest

from wzlri.cli import RunManifest, main, parse_time, parse_time_list, read_config, snap_dyadic


def run(tmp_path, *argv):
    return main([str(a) for a in argv])


def test_parse_time():
    assert parse_time("2^-12") == 2.0 ** -12
    assert parse_time("2**-3") == 0.125
    assert parse_time("0.25", 2.0 ** -10) == 0.25
    assert parse_time("0.3", 2.0 ** -4) == 0.3125
    assert parse_time_list("2^-2:2^-4") == [0.25, 0.125, 0.0625]
    assert parse_time_list("2^-1,2^-3") == [0.5, 0.125]
    assert snap_dyadic(0.1) == 0.125 and snap_dyadic(0.01) == 2.0 ** -7
    assert snap_dyadic(0.001) == 2.0 ** -10


def test_simulate_is_reproducible(tmp_path):
    flags = ["simulate", "--scheme", "sdlri", "--tau", "2^-5", "--delta", "2^-7", "--N", "8",
             "--seed", "4", "--fine-exp", "12"]
    assert run(tmp_path, *flags, "--out", tmp_path / "a.csv") == 0
    assert run(tmp_path, *flags, "--out", tmp_path / "b.csv") == 0
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    ma = json.loads((tmp_path / "a.json").read_text())
    mb = json.loads((tmp_path / "b.json").read_text())
    ma.pop("timestamp"), mb.pop("timestamp"), ma.pop("outputs"), mb.pop("outputs")
    assert ma == mb
    assert ma["parameters"]["R"] == "inf"


def test_replay_reproduces_output(tmp_path):
    assert run(tmp_path, "simulate", "--scheme", "relaxed_cn", "--tau", "2^-4", "--N", "8",
               "--fine-exp", "10", "--out", tmp_path / "a.csv") == 0
    assert run(tmp_path, "replay", tmp_path / "a.json", "--out", tmp_path / "c.csv") == 0
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "c.csv").read_text()


def test_manifest_round_trip(tmp_path):
    assert run(tmp_path, "paths", "--seed", "2", "--fine-exp", "6", "--out", tmp_path / "p.csv") == 0
    text = (tmp_path / "p.json").read_text()
    man = RunManifest.from_json(text)
    assert man.to_json() == text
    assert man.seed == 2 and str(tmp_path / "p.csv") in man.outputs


def test_linear_simulation_passes_free_flow_check(tmp_path):
    out = tmp_path / "f.csv"
    assert run(tmp_path, "simulate", "--scheme", "sdlri", "--lambda", "0", "--tau", "2^-4",
               "--delta", "2^-6", "--N", "16", "--fine-exp", "12", "--out", out) == 0
    assert run(tmp_path, "check", "--field", out, "--manifest", tmp_path / "f.json") == 0
    # a nonlinear run must fail the same check
    assert run(tmp_path, "simulate", "--scheme", "sdlri", "--lambda", "1", "--data-seed", "1",
               "--target-norm", "1", "--tau", "2^-4", "--delta", "2^-6", "--N", "16",
               "--fine-exp", "12", "--out", out) == 0
    assert run(tmp_path, "check", "--field", out, "--manifest", tmp_path / "f.json") == 1


def test_incommensurate_times_are_rejected(tmp_path):
    code = run(tmp_path, "simulate", "--tau", "0.3", "--delta", "0.2", "--N", "8",
               "--out", tmp_path / "x.csv")
    assert code == 2
    assert not (tmp_path / "x.csv").exists()


def test_bad_flags_exit_2(tmp_path):
    assert run(tmp_path, "simulate", "--bogus", "1", "--out", tmp_path / "x.csv") == 2
    assert run(tmp_path, "study", "strong", "--schemes", "nope", "--out", tmp_path / "x.csv") == 2


def test_numerical_failure_exits_1(tmp_path):
    code = run(tmp_path, "simulate", "--scheme", "expeuler", "--lambda", "1e150", "--target-norm", "1",
               "--tau", "2^-2", "--N", "8", "--fine-exp", "8", "--out", tmp_path / "x.csv")
    assert code == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nN = 8\ntau = 2^-3\nscheme = expeuler\nfine-exp = 10\n")
    assert read_config(cfg)["fine_exp"] == "10"
    out = tmp_path / "g.csv"
    assert run(tmp_path, "simulate", "--config", cfg, "--N", "6", "--out", out) == 0
    params = json.loads((tmp_path / "g.json").read_text())["parameters"]
    assert params["N"] == 6 and params["scheme"] == "expeuler" and params["tau"] == "2^-3"
    assert params["fine_exp"] == 10
    cfg.write_text("unknown_key = 3\n")
    assert run(tmp_path, "simulate", "--config", cfg, "--out", out) == 2


def test_paths_dump(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    assert run(tmp_path, "paths", "--seed", "3", "--fine-exp", "8", "--out", a) == 0
    assert run(tmp_path, "paths", "--seed", "3", "--fine-exp", "8", "--out", b) == 0
    assert run(tmp_path, "paths", "--seed", "3", "--fine-exp", "8", "--delta", "2^-8", "--out", c) == 0
    assert a.read_text() == b.read_text() == c.read_text()
    assert a.read_text().splitlines()[1] == "0.0,0.0"


def test_study_command_writes_table(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert run(tmp_path, "study", "deterministic", "--N", "16", "--tau", "2^-3:2^-6",
               "--tau-ref", "2^-9", "--fine-exp", "12", "--out", out) == 0
    printed = capsys.readouterr().out
    assert "relaxed_cn" in printed and "slope" in printed
    assert out.read_text().splitlines()[0] == "scheme,tau,delta,N,s,M,error,seed,valid"
    man = json.loads((tmp_path / "d.json").read_text())
    assert man["command"] == "study deterministic"
    assert set(man["extra"]["slopes"]) >= {"sdlri@delta=1.0", "relaxed_cn@delta=1.0"}


def test_delta_sweep_command(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run(tmp_path, "study", "delta-sweep", "--N", "8", "--samples", "2", "--tau", "0.1,0.01",
               "--delta", "2^-3:2^-7", "--tau-ref", "2^-10", "--fine-exp", "12", "--out", out) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("tau=")]
    assert len(lines) == 2


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wzlri.cli", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"
    proc = subprocess.run([sys.executable, "-m", "wzlri.cli", "simulate", "--tau", "0.3",
                           "--delta", "0.2", "--out", str(tmp_path / "x.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "snapped" in proc.stderr
