import csv
import json

import numpy as np
import pytest

from moodveil.cli import main
from moodveil.config import ConfigError, load_config, parse_kv
from moodveil.data_model import filter_participants
from moodveil.evaluation import accuracy, chrono_partition
from moodveil.models.majority import train_majority
from moodveil.synthgen import generate_samples

TINY = """\
# four users, short history, tiny networks
synth.num_users = 4
synth.days_per_user = 30
synth.events_per_day = 3
min_reports = 20
folds = 5
top_k = 50
grid.mlp_h1 = 8
grid.mlp_h2 = 4
grid.mlp_dropout = 0.0
grid.mlp_epochs = 5
grid.nimlp_lambda = 1
grid.nimlp_sigma = 0, 10
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config parsing -------------------------------------------------------------

def test_parse_kv_nesting_lists_and_comments():
    d = parse_kv("seed = 3\nsynth.num_users = 5  # comment\ngrid.svm_C = 0.5, 1\nnorm = l2\n")
    assert d == {"seed": 3, "synth": {"num_users": 5}, "grid": {"svm_C": [0.5, 1]}, "norm": "l2"}
    with pytest.raises(ConfigError):
        parse_kv("just words")


def test_overrides_beat_file(cfg_file):
    cfg = load_config(cfg_file, {"seed": 9, "modality": "text"})
    assert cfg.seed == 9 and cfg.modalities == ["text"] and cfg.grid.nimlp_sigma == (0, 10)
    assert cfg.synth_config.seed == 9 and cfg.synth_config.num_users == 4


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        load_config(None)
    with pytest.raises(ConfigError, match="unknown"):
        load_config(None, {"seed": 1, "colour": "red"})
    bad = tmp_path / "c.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad, {"seed": 1})


# -- generate -------------------------------------------------------------------

def test_generate_without_seed_is_usage_error(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path / "g")]) == 2
    assert "seed" in capsys.readouterr().err


def test_generate_refuses_non_empty_dir(tmp_path, cfg_file, capsys):
    out = tmp_path / "g"
    args = ["generate", "--config", str(cfg_file), "--seed", "1", "--out", str(out)]
    assert main(args + ["--describe"]) == 0
    assert "class distribution" in capsys.readouterr().out
    first = (out / "events.jsonl").read_bytes()
    assert main(args) == 2
    assert main(args + ["--force"]) == 0
    assert (out / "events.jsonl").read_bytes() == first


def test_default_out_uses_env(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("MOODVEIL_OUT", str(tmp_path / "root"))
    assert main(["generate", "--config", str(cfg_file), "--seed", "4"]) == 0
    assert (tmp_path / "root" / "generate-seed4" / "labels.csv").exists()


# -- run / report -------------------------------------------------------------------

def test_majority_run_matches_label_counts(tmp_path, cfg_file, capsys):
    out = tmp_path / "r"
    assert main(["run", "--config", str(cfg_file), "--seed", "2", "--model", "majority",
                 "--modality", "text", "--out", str(out)]) == 0
    for name in ("config.json", "seeds.json", "metrics.csv", "table.csv", "provenance.csv",
                 "models/majority_text_fold0.mvml", "vocab/text_fold0.tsv"):
        assert (out / name).exists(), name
    assert json.loads((out / "config.json").read_text())["seed"] == 2

    cfg = load_config(cfg_file, {"seed": 2})
    samples = filter_participants(generate_samples(cfg.synth_config), cfg.min_reports)
    y = np.array([int(s.label) for s in samples])
    plan = chrono_partition(samples, 5)
    rows = [r for r in read_csv(out / "metrics.csv") if r["fold"] != "mean"]
    for r in rows:
        k = int(r["fold"])
        tr, te = plan.train_indices(k), plan.test_indices(k)
        expected = accuracy(np.full(len(te), train_majority(y[tr]).label), y[te])
        assert float(r["accuracy"]) == pytest.approx(expected, abs=1e-6)
    assert all(r["passed"] == "1" for r in read_csv(out / "provenance.csv"))

    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip() == (out / "table.csv").read_text().strip()


def test_missing_events_file_is_stage_failure(tmp_path, cfg_file, capsys):
    rc = main(["run", "--config", str(cfg_file), "--seed", "1", "--model", "majority",
               "--events", str(tmp_path / "nope.jsonl"), "--labels", str(tmp_path / "nope.csv"),
               "--out", str(tmp_path / "r")])
    assert rc == 1 and "stage 'load' failed" in capsys.readouterr().err


def test_report_without_metrics_fails(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 1


# -- sweep / audit ------------------------------------------------------------------

def test_sweep_writes_one_row_per_setting(tmp_path, cfg_file):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(cfg_file), "--seed", "3", "--modality", "text",
                 "--out", str(out)]) == 0
    rows = read_csv(out / "sweep_text.csv")
    assert [(r["sigma"], r["lambda"]) for r in rows] == [("0", "1"), ("10", "1")]
    assert (out / "pareto_text.csv").exists() and (out / "nimlp_text.mvml").exists()


def test_audit_with_pca(tmp_path, cfg_file, capsys):
    out = tmp_path / "a"
    assert main(["audit", "--config", str(cfg_file), "--seed", "3", "--modality", "apps",
                 "--method", "pca", "--out", str(out)]) == 0
    rows = read_csv(out / "audit.csv")
    assert [r["representation"] for r in rows] == ["raw", "mlp", "nimlp"]
    assert all(0.0 <= float(r["probe_acc"]) <= 1.0 for r in rows)
    assert (out / "projection_mlp_apps.csv").exists()
    assert capsys.readouterr().out.startswith("representation,apps")
