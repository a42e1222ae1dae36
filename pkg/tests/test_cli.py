import json
import shutil

import numpy as np
import pytest

import softproprio.adaptation.trainer as trainer_mod
from softproprio.adaptation.bundle import TrainedBundle
from softproprio.adaptation.losses import DALoss
from softproprio.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_EVAL, main
from softproprio.config import ConfigError, load_config, parse_config
from softproprio.dataset import DatasetManifest
from softproprio.robot import read_npz

from conftest import MINI, run_cli


def variant_config(tmp_path, name, **schedule):
    text = MINI.read_text()
    for k, v in schedule.items():
        text = text.replace(f"{k} = ", f"# {k} = ")
        text = text.replace("[training.schedule]\n", f"[training.schedule]\n{k} = {v}\n")
    path = tmp_path / name
    path.write_text(text)
    return path


def test_generate_writes_the_planned_episodes(mini_data):
    m = DatasetManifest.load_file(mini_data / "data" / "manifest.json")
    assert len(m.episodes) == 12
    assert m.meta["config_hash"] == load_config(MINI).config_hash()


def test_generate_refuses_existing_output_and_regenerates_identically(tmp_path, mini_data):
    shutil.copytree(mini_data / "data", tmp_path / "data")
    assert run_cli("generate", "--config", MINI, "--out", tmp_path) == EXIT_DATA
    assert run_cli("generate", "--config", MINI, "--out", tmp_path, "--force") == 0
    for f in sorted((mini_data / "data").rglob("*.npz")):
        a, b = read_npz(f), read_npz(tmp_path / "data" / f.relative_to(mini_data / "data"))
        assert np.array_equal(a.sensor, b.sensor) and np.array_equal(a.nodes, b.nodes)
    assert (tmp_path / "data" / "manifest.json").read_text() == (mini_data / "data" / "manifest.json").read_text()


def test_unreachable_wall_is_a_config_error(tmp_path):
    cfg = tmp_path / "wall.toml"
    cfg.write_text("[dataset]\nwall_x = 95.0\n")
    assert run_cli("generate", "--config", cfg, "--out", tmp_path / "o") == EXIT_CONFIG
    assert not (tmp_path / "o").exists()
    with pytest.raises(ConfigError, match="reach"):
        parse_config({"dataset": {"wall_x": 60.0}})


def test_config_rejects_unknown_keys_and_variants(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"training": {"hiden": 3}})
    with pytest.raises(ConfigError):
        parse_config({"training": {"variants": ["dual-vae"]}})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_config_hash_ignores_worker_count():
    a = parse_config({"evaluation": {"workers": 1}})
    b = parse_config({"evaluation": {"workers": 4}})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != parse_config({"training": {"hidden": 16}}).config_hash()


def test_unknown_variant(fresh_mini):
    assert run_cli("train", "dual-vae", "--config", MINI, "--out", fresh_mini) == EXIT_CONFIG


def test_seed_outside_config(fresh_mini):
    assert run_cli("train", "dual-ae", "--config", MINI, "--out", fresh_mini, "--seed", "7") == EXIT_CONFIG


def test_eval_before_generate(tmp_path):
    assert run_cli("eval", "--config", MINI, "--out", tmp_path) == EXIT_DATA


def test_report_before_eval(tmp_path):
    assert run_cli("report", "--config", MINI, "--out", tmp_path) == EXIT_EVAL


def test_training_resumes_from_checkpoint(tmp_path, mini_data):
    two = variant_config(tmp_path, "two.toml", max_epochs=2)
    for d in ("resumed", "straight"):
        shutil.copytree(mini_data / "data", tmp_path / d / "data")
    assert run_cli("train", "dual-ae", "--config", two, "--out", tmp_path / "resumed", "--seed", 0) == 0
    assert run_cli("train", "dual-ae", "--config", MINI, "--out", tmp_path / "resumed", "--seed", 0) == 0
    assert run_cli("train", "dual-ae", "--config", MINI, "--out", tmp_path / "straight", "--seed", 0) == 0
    a, ra = TrainedBundle.load(tmp_path / "resumed" / "checkpoints" / "dual-ae" / "seed0.npz")
    b, rb = TrainedBundle.load(tmp_path / "straight" / "checkpoints" / "dual-ae" / "seed0.npz")
    assert ra["counters"] == rb["counters"] and ra["epoch"] == 3
    for k in a.nets:
        assert np.array_equal(a.nets[k].params.flat(), b.nets[k].params.flat())


def test_divergence_exits_with_last_good_checkpoint(fresh_mini, monkeypatch):
    real = trainer_mod.loss_da
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        out = real(*args, **kw)
        return out._replace(total=float("nan")) if calls["n"] > 6 else out

    monkeypatch.setattr(trainer_mod, "loss_da", flaky)
    code = run_cli("train", "dual-ae", "--config", MINI, "--out", fresh_mini, "--seed", 0)
    assert code == EXIT_DIVERGED
    bundle, resume = TrainedBundle.load(fresh_mini / "checkpoints" / "dual-ae" / "seed0.npz")
    assert resume is None and bundle.info["stopped"] == "diverged" and bundle.info["epochs"] == 1
    assert all(np.all(np.isfinite(n.params.flat())) for n in bundle.nets.values())


def test_eval_outputs(mini_run):
    rep = mini_run / "report"
    for name in ("summary.json", "results.json", "tables/shape_mae.csv", "tables/detection.csv",
                 "tables/alignment.csv", "tables/shape_mae_pm.csv", "figures/shape_error_trace.svg",
                 "figures/latent_dual-ae.svg", "figures/training_curve_dual-ae.svg"):
        assert (rep / name).exists(), name
    s = json.loads((rep / "summary.json").read_text())
    assert s["seeds"] == [0, 1]
    assert s["shape"]["dual-ae"]["real"]["random_action"]["mae_norm"]["n"] == 2


def test_report_command_reproduces_summary(tmp_path, mini_run):
    shutil.copytree(mini_run / "report", tmp_path / "report")
    before = (tmp_path / "report" / "summary.json").read_bytes()
    (tmp_path / "report" / "summary.json").unlink()
    assert run_cli("report", "--config", MINI, "--out", tmp_path) == 0
    assert (tmp_path / "report" / "summary.json").read_bytes() == before


def test_single_seed_eval_has_zero_std(tmp_path, mini_run):
    for d in ("data", "checkpoints"):
        shutil.copytree(mini_run / d, tmp_path / d)
    assert run_cli("eval", "--config", MINI, "--out", tmp_path, "--seed", 1) == 0
    s = json.loads((tmp_path / "report" / "summary.json").read_text())
    cell = s["shape"]["sim-only-lstm"]["sim"]["random_action"]["mae_norm"]
    assert cell["n"] == 1 and cell["std"] == 0.0


def test_detect_command(tmp_path, mini_run, capsys):
    for d in ("data", "checkpoints"):
        shutil.copytree(mini_run / d, tmp_path / d)
    ep = next((tmp_path / "data" / "test").glob("real__crawl_obstructed__*.npz"))
    assert main(["detect", str(ep), "--config", str(MINI), "--out", str(tmp_path), "-q"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["domain"] == "real" and out["required"] == 2
    assert (tmp_path / "report" / "detection").glob("*.csv")
    assert run_cli("detect", ep, "--config", MINI, "--out", tmp_path, "--variant", "sim-only-lstm") == EXIT_CONFIG
    assert run_cli("detect", tmp_path / "nope.npz", "--config", MINI, "--out", tmp_path) == EXIT_DATA
