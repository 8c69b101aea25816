import json

import pytest

from upinn import cli

TINY = {
    "problem": "flame",
    "seed": 1,
    "train": {"lr": 1e-3, "decay": 0.05, "every": 100, "epochs": 12},
    "transfer": {"lr": 5e-3, "decay": 0.025, "every": 100, "epochs": 6},
    "transfer_value": 0.018,
    "ur_lambda": 5e-7,
    "ur_every": 4,
    "body_hidden": [6],
    "body_output": 4,
    "head_hidden": [3],
    "n_points": 10,
    "log_every": 4,
}


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_dry_run_prints_config(cfg_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert run("train-body", "--config", cfg_path, "--dry-run", "--out", out) == 0
    assert json.loads(capsys.readouterr().out)["ur_lambda"] == 5e-7
    assert not out.exists()


def test_malformed_and_unknown_configs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("train-body", "--config", bad, "--out", tmp_path / "o") == 2
    bad.write_text(json.dumps({**TINY, "extra": 1}))
    assert run("train-body", "--config", bad, "--out", tmp_path / "o") == 2
    assert not (tmp_path / "o" / "run.csv").exists()
    assert run("train-body", "--config", tmp_path / "missing.json") == 2


def test_unknown_subcommand():
    assert run("fly") == 2


def test_full_pipeline(cfg_path, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("UPINN_OUT_DIR", str(tmp_path / "env"))
    assert run("train-body", "--config", cfg_path, "--quiet") == 0
    out = tmp_path / "env"
    ckpt = out / "flame_body_ur.ckpt"
    assert ckpt.is_file() and (out / "run.csv").is_file() and (out / "metric_stats.csv").is_file()
    first = (out / "run.csv").read_bytes()
    assert run("train-body", "--config", cfg_path, "--quiet") == 0
    assert (out / "run.csv").read_bytes() == first

    capsys.readouterr()
    assert run("transfer", "--body", ckpt, "--param", 0.018, "--quiet") == 0
    lines = capsys.readouterr().out.splitlines()
    hashes = [line.split()[-1] for line in lines if line.startswith("body sha256")]
    assert len(hashes) == 2 and hashes[0] == hashes[1]
    head = out / "flame_head_0.018.ckpt"
    assert head.is_file() and (out / "flame_head_0.018_eval.csv").is_file()

    assert run("eval", "--model", head, "--oracle", "rk45") == 0
    report = json.loads((out / "report.json").read_text())
    assert {"rms_percent", "max_re_percent"} <= set(report) and report["family_value"] == 0.018
    header = (out / "plot.csv").read_text().splitlines()[0]
    assert header == "t,y_nn,y_oracle,re_percent"
    assert run("eval", "--model", head, "--oracle", "implicit") == 0


def test_transfer_missing_checkpoint(tmp_path):
    assert run("transfer", "--body", tmp_path / "nope.ckpt", "--param", 0.018, "--out", tmp_path) == 2


def test_implicit_oracle_on_vdp_is_usage_error(tmp_path):
    cfg = tmp_path / "vdp.json"
    cfg.write_text(json.dumps({**TINY, "problem": "vdp", "heads": [0.5], "transfer_value": 1.6}))
    assert run("train-body", "--config", cfg, "--out", tmp_path, "--quiet") == 0
    assert run("eval", "--model", tmp_path / "vdp_body_ur.ckpt", "--oracle", "implicit", "--out", tmp_path) == 2


def test_ablate(cfg_path, tmp_path):
    assert run("ablate", "--problem", "flame", "--seeds", 0, "--config", cfg_path, "--out", tmp_path) == 2
    assert run("ablate", "--problem", "vdp", "--seeds", 1, "--config", cfg_path, "--out", tmp_path) == 2
    assert run("ablate", "--problem", "flame", "--seeds", 2, "--config", cfg_path, "--out", tmp_path) == 0
    rows = (tmp_path / "ablate_flame.csv").read_text().splitlines()
    assert rows[0].startswith("seed,rms_ur,rms_plain,ur_better")
    assert len(rows) == 4 and rows[-1].startswith("median")


def test_numerical_abort_exit_code(tmp_path):
    cfg = tmp_path / "boom.json"
    cfg.write_text(json.dumps({**TINY, "problem_options": {"rho": 1e200}}))
    assert run("train-body", "--config", cfg, "--out", tmp_path, "--quiet") == 3


def test_shipped_configs_validate():
    for name in ("flame-ur.json", "flame-plain.json"):
        assert run("train-body", "--config", cli.shipped_config(name), "--dry-run") == 0
