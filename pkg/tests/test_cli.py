import json
import subprocess
import sys

import pytest

from dispute_tactics.cli import run
from dispute_tactics.corpus import write_corpus
from dispute_tactics.synthetic import keyed_corpus


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_corpus(keyed_corpus(30, seed=0, escalation_keyed=True), path)
    return path


def test_stats_to_stdout(corpus_file, capsys):
    assert run(["stats", str(corpus_file)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n_conversations"] == 30
    assert doc["manifest"]["command"] == "stats"
    assert len(doc["manifest"]["corpus_checksum"][str(corpus_file)]) == 64


def test_usage_errors(capsys):
    assert run(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert run([]) == 2
    assert run(["train", "--out", "x"]) == 2


def test_validate_exit_codes(tmp_path, corpus_file, capsys):
    assert run(["validate", str(corpus_file)]) == 0
    rec = {"conv_id": "a", "title": None, "escalated": False,
           "utterances": [{"speaker": "s", "text": "t",
                           "tactics": ["counterargument", "refutation", "policing", "derailing"]}]}
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps(rec) + "\n")
    capsys.readouterr()
    assert run(["validate", str(bad)]) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["violations"] == [{"conv_id": "a", "index": 0, "rule": "max 3 rebuttal labels"}]
    assert run(["stats", str(bad)]) == 1


def test_data_errors_exit_one(tmp_path, capsys):
    assert run(["stats", str(tmp_path / "missing.jsonl")]) == 1
    assert "missing.jsonl" in capsys.readouterr().err
    bad = tmp_path / "x.ckpt"
    bad.write_text("{}")
    assert run(["predict", "--model", str(bad), "--data", str(bad), "--out", str(tmp_path / "p")]) == 1


def test_seed_sources(tmp_path, corpus_file, monkeypatch):
    run(["--seed", "7", "split", str(corpus_file), "--out-dir", str(tmp_path / "a")])
    run(["split", str(corpus_file), "--seed", "7", "--out-dir", str(tmp_path / "b")])
    monkeypatch.setenv("DISPUTE_SEED", "7")
    run(["split", str(corpus_file), "--out-dir", str(tmp_path / "c")])
    texts = {(tmp_path / d / "test.jsonl").read_text() for d in "abc"}
    assert len(texts) == 1
    monkeypatch.setenv("DISPUTE_SEED", "oops")
    assert run(["split", str(corpus_file), "--out-dir", str(tmp_path / "d")]) == 2


def test_pipeline_byte_identical(tmp_path, corpus_file, monkeypatch):
    monkeypatch.chdir(tmp_path)
    outputs = []
    for name in ("one", "two"):
        d = tmp_path / name
        d.mkdir()
        monkeypatch.chdir(d)
        cfg = d / "train.json"
        cfg.write_text(json.dumps({"max_epochs": 3, "hidden": [8, 4], "patience": 2}))
        assert run(["train", "--task", "tactics", "--mode", "br", "--context", "on", "--multitask", "on",
                    "--config", "train.json", "--data", str(corpus_file), "--out", "m.ckpt",
                    "--epochs", "4"]) == 0
        assert run(["evaluate", "--model", "m.ckpt", "--data", str(corpus_file), "--out", "met.json"]) == 0
        assert run(["predict", "--model", "m.ckpt", "--data", str(corpus_file), "--out", "p.jsonl"]) == 0
        assert run(["analyze", str(corpus_file), "--out", "rep.json", "--resamples", "200"]) == 0
        assert run(["report", "rep.json", "--out-dir", "rep"]) == 0
        outputs.append({f: (d / f).read_bytes() for f in
                        ("m.ckpt", "met.json", "p.jsonl", "rep.json", "rep/report.md", "rep/pmi.csv")})
        assert (d / "m.ckpt.manifest.json").exists() and (d / "met.json.manifest.json").exists()
    assert outputs[0] == outputs[1]
    ck = json.loads(outputs[0]["m.ckpt"])
    # flags win over the config file; untouched config keys survive
    assert ck["config"]["max_epochs"] == 4 and ck["config"]["patience"] == 2
    assert len(ck["history"]) <= 4
    assert set(ck["manifest"]["config"]["split"]) == {"train", "dev", "test"}
    met = json.loads(outputs[0]["met.json"])
    assert {"jaccard", "hamming", "emr", "at_least_one", "per_label_counts"} <= set(met)
    assert met["n"] == sum(len(json.loads(line)["utterances"]) for line in corpus_file.read_text().splitlines()
                           if json.loads(line)["conv_id"] in ck["manifest"]["config"]["split"]["test"])


def test_compare(tmp_path, corpus_file, capsys):
    for mode in ("br", "lp"):
        assert run(["train", "--mode", mode, "--data", str(corpus_file), "--epochs", "2",
                    "--out", str(tmp_path / f"{mode}.ckpt")]) == 0
        assert run(["evaluate", "--model", str(tmp_path / f"{mode}.ckpt"), "--data", str(corpus_file),
                    "--split", "all", "--out", str(tmp_path / f"{mode}.json")]) == 0
    capsys.readouterr()
    assert run(["compare", "--metrics", str(tmp_path / "br.json"), str(tmp_path / "lp.json"),
                "--per-sample", "--resamples", "500"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0 < doc["test"]["p_value"] <= 1 and doc["test"]["n"] > 0


def test_escalation_train_evaluate(tmp_path, corpus_file, capsys):
    out = tmp_path / "e.ckpt"
    assert run(["train", "--task", "escalation", "--data", str(corpus_file), "--epochs", "2", "--out", str(out)]) == 0
    capsys.readouterr()
    assert run(["evaluate", "--model", str(out), "--data", str(corpus_file), "--split", "all"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0 <= doc["pr_auc"] <= 1


def test_report_markdown_to_stdout(tmp_path, capsys):
    rep = tmp_path / "r.json"
    rep.write_text(json.dumps({"jaccard": 0.5}))
    assert run(["report", str(rep)]) == 0
    assert "| jaccard | 0.5000 |" in capsys.readouterr().out
    rep.write_text("[")
    assert run(["report", str(rep)]) == 1


def test_console_script_entry_point(corpus_file):
    proc = subprocess.run([sys.executable, "-m", "dispute_tactics.cli", "stats", str(corpus_file)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n_utterances"] > 0
