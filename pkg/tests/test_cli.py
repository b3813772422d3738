import hashlib
import json
import subprocess
import sys
import time

import pytest

from helpers import two_way
from streamcost.cli import main
from streamcost.pipeline import PipelineConfig, SEED_ENV


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_help_exits_zero(capsys):
    assert run("--help") == 0
    out = capsys.readouterr().out
    for cmd in ("generate", "simulate", "train", "predict", "evaluate", "report", "pipeline"):
        assert cmd in out


def test_subcommand_help_lists_flags(capsys):
    assert run("train", "--help") == 0
    out = capsys.readouterr().out
    for flag in ("--data", "--specs", "--out", "--seed", "--epochs", "--batch-size",
                 "--patience", "--lr", "--history"):
        assert flag in out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "streamcost.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "pipeline" in proc.stdout


def test_usage_errors_exit_one(capsys):
    assert run() == 1
    assert run("generate") == 1
    assert run("generate", "--out", "x", "--bogus") == 1
    assert "error" in capsys.readouterr().err


def test_missing_specs_path_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    assert run("simulate", "--specs", missing, "--out", tmp_path / "o.jsonl") == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_seed_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV, "abc")
    assert run("generate", "--out", tmp_path / "s.jsonl", "--per-structure", "1") == 2
    assert SEED_ENV in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"workdir": str(tmp_path), "colour": "red"}))
    assert run("pipeline", "--config", cfg) == 2
    assert "colour" in capsys.readouterr().err


def test_generate_simulate_train_predict(tmp_path, capsys):
    specs, obs, ckpt = tmp_path / "s.jsonl", tmp_path / "o.jsonl", tmp_path / "m.ckpt"
    assert run("generate", "--out", specs, "--per-structure", 12, "--seed", 1) == 0
    assert len(specs.read_text().splitlines()) == 36
    assert run("simulate", "--specs", specs, "--out", obs, "--duration", 8,
               "--warmup", 2) == 0
    assert run("train", "--data", obs, "--specs", specs, "--out", ckpt, "--epochs", 3,
               "--history", tmp_path / "h.csv") == 0
    assert ckpt.exists() and not (tmp_path / "m.ckpt.partial").exists()
    assert (tmp_path / "h.csv").read_text().startswith("epoch,train_loss,val_loss")
    spec = tmp_path / "q.json"
    spec.write_text(json.dumps(two_way().to_dict()))
    capsys.readouterr()
    assert run("predict", "--model", ckpt, "--spec", spec) == 0
    est = json.loads(capsys.readouterr().out)
    assert est["latency_ms"] > 0 and est["throughput_eps"] > 0


def test_predict_rejects_malformed_spec(tmp_path, small_model):
    from streamcost.model import save_checkpoint
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(small_model[0], ckpt)
    spec = tmp_path / "q.json"
    spec.write_text("{\"nodes\": 3}")
    assert run("predict", "--model", ckpt, "--spec", spec) == 2


@pytest.fixture(scope="module")
def smoke_config(tmp_path_factory):
    """Small config: 60 queries, 10 epochs, short simulations and suites."""
    d = PipelineConfig().to_dict()
    d["generation"]["counts"] = {"linear": 20, "two-way-join": 20, "three-way-join": 20}
    d["simulation"].update(duration=12.0, warmup=2.0)
    d["training"]["epochs"] = 10
    d.update(extrapolation_n=3, unseen_n=2)
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(d))
    return path


def test_pipeline_smoke_and_rerun(tmp_path, smoke_config, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    start = time.monotonic()
    assert run("pipeline", "--config", smoke_config, "--workdir", a) == 0
    elapsed = time.monotonic() - start
    assert elapsed < 120, elapsed
    report = a / "report"
    for name in ("test.csv", "hardware.csv", "extrapolation.csv", "structures.csv",
                 "benchmarks.csv", "manifest.json", "history.csv", "test.svg"):
        assert (report / name).exists(), name
    manifest = json.loads((report / "manifest.json").read_text())
    assert manifest["artifacts"]["observations.jsonl"] == sha(a / "observations.jsonl")
    assert run("pipeline", "--config", smoke_config, "--workdir", b) == 0
    assert sha(a / "observations.jsonl") == sha(b / "observations.jsonl")
    assert sha(a / "model.ckpt") == sha(b / "model.ckpt")
    assert (report / "manifest.json").read_bytes() == (b / "report" / "manifest.json").read_bytes()


def test_report_command(tmp_path, capsys):
    report = tmp_path / "r"
    report.mkdir()
    assert run("report", "--report-dir", report) == 2
    (report / "test.csv").write_text(
        "suite,group,metric,median,p95,count\n"
        "test,linear,latency,1.2,2.0,10\ntest,linear,throughput,1.3,2.5,10\n")
    assert run("report", "--report-dir", report) == 0
    assert (report / "test.svg").read_text().startswith("<svg")
