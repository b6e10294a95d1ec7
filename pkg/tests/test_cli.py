import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hhrgnn import cli
from hhrgnn.explain import parse_node_spec
from hhrgnn.model import load_checkpoint, save_checkpoint

CONFIG = {
    "relations": [{"name": "self", "hops": 0}, {"name": "hop1", "hops": 1},
                  {"name": "hop2", "hops": 2}],
    "layer_dims": [8, 4],
    "dropout": 0.5,
    "max_epochs": 25,
    "patience": 50,
    "train_per_class": 5,
    "val_count": 10,
}


def run(*argv):
    return cli.run([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, out = root / "data", root / "out"
    assert run("gen", "--kind", "planted", "--out", data, "--seed", 1,
               "--nodes-per-class", 15, "--classes", 2, "--p-in", 0.3, "--p-out", 0.02,
               "--feature-dim", 6) == 0
    cfg = root / "config.json"
    cfg.write_text(json.dumps(CONFIG))
    assert run("train", "--data", data, "--config", cfg, "--out", out) == 0
    return root, data, cfg, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_train_writes_artifacts(workspace):
    _, _, _, out = workspace
    for name in ("checkpoint.json", "splits.json", "history.csv", "relation_scores.csv",
                 "metrics.json"):
        assert (out / name).is_file()
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics) == {"seed", "best_epoch", "test", "val"}
    assert len(read_rows(out / "history.csv")) == 25


def test_eval_matches_train_metrics(workspace, capsys):
    _, data, _, out = workspace
    capsys.readouterr()
    assert run("eval", "--data", data, "--model", out / "checkpoint.json") == 0
    printed = json.loads(capsys.readouterr().out)
    stored = json.loads((out / "metrics.json").read_text())["test"]
    assert printed["accuracy"] == stored["accuracy"]
    assert printed["macro_f1"] == stored["macro_f1"]


def test_explain_rows(workspace, tmp_path):
    _, data, _, out = workspace
    path = tmp_path / "scores.csv"
    assert run("explain", "--data", data, "--model", out / "checkpoint.json",
               "--nodes", "first:20", "--out", path) == 0
    rows = read_rows(path)
    assert path.read_text().splitlines()[0] == "node_id,layer,relation_name,alpha_raw,alpha_normalized"
    # 20 nodes, 2 layers, self plus 2 relations
    assert len(rows) == 20 * 2 * 3
    groups = {}
    for r in rows:
        groups.setdefault((r["node_id"], r["layer"]), []).append(float(r["alpha_normalized"]))
    assert all(abs(sum(v) - 1) < 1e-12 for v in groups.values())
    assert {r["layer"] for r in rows} == {"1", "2"}


def test_explain_zero_slices(workspace, tmp_path):
    _, data, _, out = workspace
    config, params = load_checkpoint(out / "checkpoint.json")
    for layer in params.layers:
        layer.ntn = [np.zeros_like(s) for s in layer.ntn]
    ck = tmp_path / "zero.json"
    save_checkpoint(config, params, ck)
    path = tmp_path / "scores.csv"
    assert run("explain", "--data", data, "--model", ck, "--nodes", "0-4", "--out", path) == 0
    for r in read_rows(path):
        if r["relation_name"] == "self":
            assert float(r["alpha_normalized"]) == pytest.approx(1 / (1 + 0.5 * 2), abs=1e-15)
        else:
            assert float(r["alpha_raw"]) == 0.5


def test_rerun_is_byte_identical(workspace, tmp_path):
    _, data, cfg, out = workspace
    again = tmp_path / "again"
    assert run("train", "--data", data, "--config", cfg, "--out", again) == 0
    for name in ("metrics.json", "relation_scores.csv", "checkpoint.json"):
        assert (again / name).read_bytes() == (out / name).read_bytes()


def test_multi_seed_summary(workspace, tmp_path):
    root, data, _, _ = workspace
    cfg = root / "multi.json"
    cfg.write_text(json.dumps(dict(CONFIG, seeds=[0, 1], max_epochs=5)))
    assert run("train", "--data", data, "--config", cfg, "--out", tmp_path / "m") == 0
    summary = json.loads((tmp_path / "m" / "metrics.json").read_text())
    assert summary["seeds"] == [0, 1]
    assert (tmp_path / "m" / "seed_1" / "checkpoint.json").is_file()


def test_gradcheck_command(capsys):
    assert run("gradcheck", "--seed", 7) == 0
    assert float(capsys.readouterr().out) < 1e-4


def test_unknown_flag(capsys, tmp_path):
    assert run("gen", "--kind", "planted", "--out", tmp_path, "--bogus", 1) == 1
    assert "--bogus" in capsys.readouterr().err


def test_flag_for_wrong_kind(capsys, tmp_path):
    assert run("gen", "--kind", "planted", "--out", tmp_path, "--papers", 5) == 1
    assert "--papers" in capsys.readouterr().err


def test_unknown_config_key(workspace, capsys, tmp_path):
    _, data, _, _ = workspace
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(dict(CONFIG, learning_rate=0.1)))
    assert run("train", "--data", data, "--config", cfg, "--out", tmp_path / "o") == 1
    err = capsys.readouterr().err
    assert "learning_rate" in err and len(err.strip().splitlines()) == 1


def test_missing_data_dir(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(CONFIG))
    assert run("train", "--data", tmp_path / "nope", "--config", cfg, "--out", tmp_path / "o") == 1


def test_atomic_write_leaves_nothing(workspace, tmp_path, monkeypatch, capsys):
    _, data, cfg, _ = workspace

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    out = tmp_path / "o"
    assert run("train", "--data", data, "--config", cfg, "--out", out) == 2
    assert not out.exists() or not any(out.iterdir())


def test_gen_apc(tmp_path, capsys):
    assert run("gen", "--kind", "apc", "--out", tmp_path / "g", "--authors-per-class", 4,
               "--papers", 6, "--conferences", 2) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["num_nodes"] == 3 * 4 + 6 + 2
    assert info["num_labeled"] == 12


def test_node_spec_parsing():
    assert parse_node_spec("first:3", 10) == [0, 1, 2]
    assert parse_node_spec("3,5,8-10", 11) == [3, 5, 8, 9, 10]
    assert parse_node_spec("all", 2) == [0, 1]
    with pytest.raises(ValueError):
        parse_node_spec("4-2", 10)
    with pytest.raises(ValueError):
        parse_node_spec("12", 10)


def test_console_module_entry():
    proc = subprocess.run([sys.executable, "-m", "hhrgnn", "gradcheck", "--nodes", "12"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert float(proc.stdout) < 1e-4
