import json

import numpy as np
import pytest

from rabistark import cli, io
from rabistark.config import parse_config

C1_TRACE = """
task = "entropy-trace"
[model]
omega = 1.0
omega0 = 1.0
g = 0.4
U = 0.0
[section]
E = 1.3
[quantum]
N = 18
point = [0.0, -0.9]
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_entropy_trace(tmp_path, capsys):
    out = tmp_path / "tr"
    assert cli.main(["entropy-trace", "--config", write(tmp_path, C1_TRACE), "--out", str(out)]) == 0
    t, S = io.read_trace_csv(out / "trace.csv")
    assert t[0] == 0.0 and t[-1] == 500.0 and len(t) == 5001
    assert S.max() <= 0.5 and S.std() > 1e-3
    meta = json.loads((out / "meta.json").read_text())
    assert meta["wall_time_s"] >= 0 and meta["versions"]["numpy"] and meta["config"]["quantum"]["N"] == 18
    psi, N = io.read_state(out / "state_final.bin")
    assert N == 18 and abs(np.linalg.norm(psi) - 1) < 1e-10
    assert "S_m" in capsys.readouterr().out


def test_converge_reports_table(tmp_path):
    out = tmp_path / "cv"
    code = cli.main(["converge", "--preset", "fig4", "--out", str(out)])
    assert code == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["N_crit"] > 0 and len(meta["table"]) >= 3
    rows = (out / "converge.csv").read_text().splitlines()
    assert rows[0] == "N,max_deviation" and len(rows) == len(meta["table"]) + 1


def test_fresh_runs_identical(tmp_path):
    cfg = write(tmp_path, C1_TRACE.replace("N = 18", "N = 14"))
    assert cli.main(["entropy-trace", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["entropy-trace", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_meta_reruns_identically(tmp_path):
    import tomli_w
    cfg = write(tmp_path, 'preset = "fig5"\n[grid]\nn_q1 = 3\nn_p1 = 3\n[quantum]\nwindow = [0.0, 20.0]\n')
    assert cli.main(["scan", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    # the recorded config alone is enough to repeat the run
    again = write(tmp_path, tomli_w.dumps(meta["config"]), "again.toml")
    assert cli.main(["scan", "--config", again, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "map.csv").read_bytes() == (tmp_path / "b" / "map.csv").read_bytes()


def test_workers_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("RSL_WORKERS", "2")
    cfg = write(tmp_path, 'preset = "fig5"\n[grid]\nn_q1 = 3\nn_p1 = 3\n[quantum]\nwindow = [0.0, 10.0]\n')
    assert cli.main(["scan", "--config", cfg, "--out", str(tmp_path / "w")]) == 0
    assert json.loads((tmp_path / "w" / "meta.json").read_text())["workers"] == 2
    monkeypatch.setenv("RSL_WORKERS", "zero")
    assert cli.main(["scan", "--config", cfg, "--out", str(tmp_path / "w2")]) == cli.EXIT_CONFIG


def test_config_error_exit(tmp_path, capsys):
    bad = write(tmp_path, C1_TRACE + "typo = 1\n")
    assert cli.main(["entropy-trace", "--config", bad]) == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 1 and "typo" in err["error"]


def test_task_mismatch(tmp_path):
    assert cli.main(["scan", "--config", write(tmp_path, C1_TRACE)]) == cli.EXIT_CONFIG


def test_numeric_error_exit(tmp_path, capsys):
    out = tmp_path / "n"
    cfg = write(tmp_path, C1_TRACE.replace("N = 18", "N = 3"))
    assert cli.main(["entropy-trace", "--config", cfg, "--out", str(out)]) == cli.EXIT_NUMERIC
    assert json.loads((out / "error.json").read_text())["kind"] == "numeric"


def test_io_error_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write(tmp_path, C1_TRACE)
    assert cli.main(["entropy-trace", "--config", cfg, "--out", str(blocker / "sub")]) == cli.EXIT_IO


def test_missing_inputs():
    assert cli.main(["scan"]) == cli.EXIT_CONFIG


def test_poincare(tmp_path):
    cfg = write(tmp_path, 'preset = "fig1c"\n[classical]\nseeds = [[0.0, -0.3], [0.9, 0.0]]\nt_end = 50.0\n')
    out = tmp_path / "p"
    assert cli.main(["poincare", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "crossings.csv").read_text().startswith("seed,t,q1,p1,p2\n")
    assert (out / "portrait.svg").exists()


@pytest.mark.slow
def test_negative_stark_scan_shows_contrast(tmp_path):
    # the large-ratio U = -0.3 set at its reference cutoff on a coarse grid
    cfg = write(tmp_path, 'preset = "fig2a"\n[grid]\nn_q1 = 11\nn_p1 = 11\n[classical]\nseeds_per_axis = 3\n')
    out = tmp_path / "ov"
    assert cli.main(["overlay", "--config", cfg, "--out", str(out)]) == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config"]["quantum"]["N"] == 180
    assert meta["overlay"]["contrast"] > 0
