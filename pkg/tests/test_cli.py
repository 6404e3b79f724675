import csv
import datetime as dt
import json

import numpy as np
import pytest

from xrisk.cli import main
from xrisk.config import parse_config
from xrisk.corpus import RawFiling, write_corpus
from xrisk.errors import ConfigurationError

SMALL = """
[encoder]
d_model = 8
n_layers = 1
n_heads = 2
d_ff = 16
T = 12

[model]
L = 6
a = 4

[training]
lr_encoder = 1e-3
max_epochs = 2

[experiment]
repetitions = 2
test_year = 2008

[synth]
n_docs = 180
vocab_size = 40
"""


@pytest.fixture
def small_ini(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_empty_config_gives_defaults(tmp_path):
    empty = tmp_path / "empty.ini"
    empty.write_text("")
    cfg = parse_config(empty)
    assert cfg.model.L == 50 and cfg.model.a == 100 and cfg.model.encoder.T == 64
    assert cfg.model.encoder.d_model == 768 and cfg.model.encoder.n_layers == 12
    assert (cfg.training.lr_encoder, cfg.training.lr_head) == (1e-6, 1e-3)
    assert (cfg.explain.word_cutoff, cfg.explain.sentence_cutoff) == (1.1, 0.025)
    assert cfg.repetitions == 10 and cfg.labeling == "quintile"


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[explain]\nword_cutoff = 1.5\n")
    assert parse_config(path).explain.word_cutoff == 1.5
    assert parse_config(path, {"word_cutoff": 1.3}).explain.word_cutoff == 1.3


@pytest.mark.parametrize("text,key", [("[model]\na = -5\n", "a"),
                                      ("[model]\nbogus = 1\n", "bogus"),
                                      ("[nowhere]\nx = 1\n", "nowhere"),
                                      ("[encoder]\nd_model = ten\n", "d_model"),
                                      ("[explain]\nsentence_cutoff = 2\n", "sentence_cutoff")])
def test_bad_config_names_key(tmp_path, text, key):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigurationError) as exc:
        parse_config(path)
    assert exc.value.key == key


def test_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\na = -5\n")
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "a" in capsys.readouterr().err


def test_cloud_without_checkpoint_exits_2(tmp_path, small_ini, capsys):
    out = str(tmp_path / "o")
    assert main(["synth", "--config", str(small_ini), "--out", out]) == 0
    assert main(["cloud", "--config", str(small_ini), "--out", out]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_missing_test_year_exits_2(tmp_path):
    assert main(["split", "--out", str(tmp_path)]) == 2


def test_out_falls_back_to_environment(tmp_path, monkeypatch, small_ini):
    monkeypatch.setenv("XRISK_OUT", str(tmp_path / "env_out"))
    assert main(["synth", "--config", str(small_ini)]) == 0
    assert (tmp_path / "env_out" / "corpus.jsonl").exists()
    assert (tmp_path / "env_out" / "run_manifest.json").exists()


def test_malformed_corpus_exits_1(tmp_path, small_ini):
    out = tmp_path / "o"
    out.mkdir()
    (out / "corpus.jsonl").write_text("{not json\n")
    assert main(["ingest", "--config", str(small_ini), "--out", str(out)]) == 1


def _pipeline(out, ini):
    for cmd in ("synth", "split", "train", "eval", "explain", "cloud"):
        assert main([cmd, "--config", str(ini), "--out", str(out)]) == 0, cmd


def test_full_pipeline_and_reproducibility(tmp_path, small_ini, capsys):
    a, b = tmp_path / "first" / "out", tmp_path / "second" / "out"
    _pipeline(a, small_ini)
    first = capsys.readouterr().out
    _pipeline(b, small_ini)
    second = capsys.readouterr().out
    hashes = [line for line in first.splitlines() if line.startswith("run_manifest.json sha256")]
    assert len(hashes) == 6
    assert hashes == [line for line in second.splitlines()
                      if line.startswith("run_manifest.json sha256")]

    with open(a / "metrics_2008.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["seed"] for r in rows] == ["0", "1", "mean"]
    assert (a / "metrics_2008.csv").read_bytes() == (b / "metrics_2008.csv").read_bytes()
    assert (a / "baseline_2008.csv").exists() and (a / "metrics_2008.png").exists()
    for seed in (0, 1):
        ck = a / "checkpoints" / f"seed{seed}"
        assert (ck / "tensors.bin").read_bytes() == \
            (b / "checkpoints" / f"seed{seed}" / "tensors.bin").read_bytes()
        assert (ck / "vocab.txt").exists()
    explain = json.loads((a / "explain_2008" / "explain.json").read_text())
    assert explain and "sentences" in explain[0]
    assert (a / "explain_2008" / "report.html").exists()
    assert (a / "cloud_2008_Risky.json").exists() and (a / "cloud_2008_NonRisky.png").exists()
    manifest = json.loads((a / "run_manifest.json").read_text())
    assert manifest["command"] == "cloud" and manifest["seeds"] == [0]
    assert "checkpoint_seed0" in manifest["inputs"]


def test_label_subcommand(tmp_path, small_ini):
    rng = np.random.default_rng(0)
    days = [dt.date(2004, 1, 1) + dt.timedelta(days=i) for i in range(900)]
    days = [d for d in days if d.weekday() < 5]
    (tmp_path / "cal.txt").write_text("".join(f"{d.isoformat()}\n" for d in days))
    with open(tmp_path / "factors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "mkt_excess", "smb", "hml", "rf"])
        for d in days:
            w.writerow([d.isoformat(), *rng.normal(0, 0.01, 3), 0.0001])
    filings, vols = [], {}
    with open(tmp_path / "returns.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["company_id", "date", "return"])
        for i in range(10):
            vols[f"c{i}"] = 0.005 * (i + 1)
            for d in days:
                w.writerow([f"c{i}", d.isoformat(), rng.normal(0, vols[f"c{i}"])])
            filings.append(RawFiling(f"d{i}", f"c{i}", dt.date(2004, 3, 1), 2004, "risk."))
    filings.append(RawFiling("orphan", "none", dt.date(2004, 3, 1), 2004, "risk."))
    write_corpus(filings, tmp_path / "corpus.jsonl")
    ini = tmp_path / "label.ini"
    ini.write_text(f"[paths]\ncorpus = {tmp_path / 'corpus.jsonl'}\nreturns = {tmp_path / 'returns.csv'}\n"
                   f"factors = {tmp_path / 'factors.csv'}\ncalendar = {tmp_path / 'cal.txt'}\n")
    out = tmp_path / "out"
    assert main(["label", "--config", str(ini), "--out", str(out)]) == 0
    with open(out / "labels.csv", newline="") as fh:
        rows = {r["doc_id"]: r for r in csv.DictReader(fh)}
    assert "orphan" not in rows and len(rows) == 10
    assert [rows[f"d{i}"]["label"] for i in (0, 1, 8, 9)] == ["NonRisky", "NonRisky", "Risky", "Risky"]
    assert main(["label", "--config", str(ini), "--out", str(out), "--labeling", "median"]) == 0
    with open(out / "labels.csv", newline="") as fh:
        labels = [r["label"] for r in csv.DictReader(fh)]
    assert labels.count("Risky") == 5
