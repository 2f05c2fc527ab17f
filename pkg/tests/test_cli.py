"""End-to-end command-line runs on a tiny corpus."""

import json
import subprocess
import sys

import pytest

from lcrfullsum.cli import parse_scale_range, run
from lcrfullsum.corpus_io import read_corpus_dir, read_manifest

TINY = ["--synth.num_phonemes", "4", "--synth.vocab_size", "5", "--synth.noise_std", "0.3",
        "--corpus.n_train", "40", "--corpus.n_test", "6"]
FAST_TRAIN = ["--train.hidden", "[16]", "--train.peak_lr", "0.003", "--train.batch_size", "8"]
SMALL_VERIFY = ["--verify.oracle_instances", "20", "--verify.grad_instances", "3",
                "--verify.reduction_instances", "3", "--verify.decoder_streams", "3"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    corpus, model = d / "corpus", d / "model"
    assert run(["synth", "--out", str(corpus), *TINY]) == 0
    assert run(["train", "--corpus", str(corpus), "--out-dir", str(model), "--loss", "factored_lcr",
                "--epochs", "3", *FAST_TRAIN]) == 0
    return d, corpus, model


def test_synth_manifest_round_trip(workdir):
    d, corpus, _ = workdir
    m = read_manifest(corpus)
    assert m["splits"] == {"train": 40, "test": 6}
    assert m["seeds"] == {"task": 0, "train": 1, "test": 2}
    assert len(m["spec_hash"]) >= 8 and m["spec"]["num_phonemes"] == 4
    splits = read_corpus_dir(corpus)
    assert len(splits["train"]) == 40 and splits["test"].frame_labels
    report = json.loads((corpus / "synth_report.json").read_text())
    assert report["exit_code"] == 0 and report["command"] == "synth"


def test_synth_same_seed_is_reproducible(workdir, tmp_path):
    _, corpus, _ = workdir
    assert run(["synth", "--out", str(tmp_path / "again"), *TINY]) == 0
    for name in ("manifest.json", "lexicon.txt", "lm.arpa", "train/features.bin", "test/transcripts.txt"):
        assert (corpus / name).read_bytes() == (tmp_path / "again" / name).read_bytes(), name


def test_train_outputs(workdir):
    _, _, model = workdir
    rep = json.loads((model / "train_report.json").read_text())
    assert rep["loss"] == "hmm_factored_lcr" and len(rep["metrics"]) == 3
    assert (model / "final.ckpt").exists() and (model / "metrics.jsonl").exists()
    cfg = json.loads((model / "config.json").read_text())
    assert cfg["train"]["hidden"] == [16]


def test_decode_writes_ctm_and_sweep(workdir, capsys):
    d, corpus, model = workdir
    ctm = d / "hyp.ctm"
    assert run(["decode", "--corpus", str(corpus), "--out-dir", str(model), "--out", str(ctm),
                "--lm-scales", "0.5:1.0:0.25"]) == 0
    out = capsys.readouterr().out
    assert out.count("lm-scale") == 3
    rep = json.loads((model / "decode_report.json").read_text())
    assert [r["lm_scale"] for r in rep["sweep"]] == [0.5, 0.75, 1.0]
    assert rep["rtf"] > 0 and rep["mode"] == "center"
    for line in ctm.read_text().splitlines():
        utt, ch, start, dur, word = line.split()
        assert ch == "1" and float(start) >= 0 and float(dur) > 0
    assert run(["score", "--ref", str(corpus / "test" / "transcripts.txt"), "--hyp", str(ctm)]) == 0
    score = json.loads(ctm.with_suffix(".score.json").read_text())
    hyps = {u["id"]: u["hyp"] for u in rep["utterances"]}
    assert score["utterances"] == 6
    assert score["wer"] == pytest.approx(rep["wer"]) or any(h == "" for h in hyps.values())


def test_decode_requires_matching_head(workdir):
    _, corpus, model = workdir
    assert run(["decode", "--corpus", str(corpus), "--out-dir", str(model), "--mode", "diphone"]) == 2


def test_align_reports_accuracy(workdir):
    d, corpus, model = workdir
    assert run(["align", "--corpus", str(corpus), "--out-dir", str(model), "--out", str(d / "a.ctm")]) == 0
    rep = json.loads((model / "align_report.json").read_text())
    assert 0.0 <= rep["frame_accuracy"] <= 1.0 and rep["utterances"] == 6
    assert (d / "a.ctm").read_text().count("\n") > 6


def test_two_stage_init(workdir, tmp_path):
    _, corpus, model = workdir
    assert run(["train", "--corpus", str(corpus), "--out-dir", str(tmp_path), "--loss", "diphone_joint",
                "--init", str(model / "final.ckpt"), "--epochs", "1", "--train.schedule", "constant",
                *FAST_TRAIN]) == 0
    rep = json.loads((tmp_path / "train_report.json").read_text())
    assert "init_probe_loss" in rep["metrics"][0]


def test_verify_green_and_fault_red(tmp_path, capsys):
    assert run(["verify", "--report", str(tmp_path / "v.json"), *SMALL_VERIFY]) == 0
    rep = json.loads((tmp_path / "v.json").read_text())
    assert rep["passed"] and rep["digest"]
    assert all("max_error" in r for r in rep["results"])
    assert run(["verify", "--fault", "gamma", "--report", str(tmp_path / "f.json"), *SMALL_VERIFY]) == 3
    assert "FAIL" in capsys.readouterr().out


def test_exit_codes(tmp_path):
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["train", "--corpus", str(tmp_path / "nothing"), "--out-dir", str(tmp_path)]) == 2
    rep = json.loads((tmp_path / "train_report.json").read_text())
    assert rep["exit_code"] == 2 and "manifest" in rep["error"]
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "train": {"epochz": 1}}')
    assert run(["--config", str(bad), "verify"]) == 1
    assert run(["verify", "--train.nope", "1"]) == 1
    assert run(["verify", "--train.epochs", "x"]) == 1
    assert run(["decode", "--lm-scales", "2:1:0.5", "--report", str(tmp_path / "d.json")]) == 1


def test_print_config(capsys):
    assert run(["--print-config", "train", "--train.epochs", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["train"]["epochs"] == 4


def test_scale_range():
    assert parse_scale_range("0.5:2.0:0.25") == [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "lcrfullsum", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout
