import json
from pathlib import Path

import pytest

from scenewise.cli import main

CORPUS_FLAGS = ["--min-count", "2", "--descriptor-min-movies", "2",
                "--descriptor-top-exclude", "30", "--validation-fraction", "0.15"]


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    synth = root / "synth"
    assert run(["synth", "--out", str(synth), "--scripts", "8", "--tags", "2",
                "--signal", "1.0", "--seed", "13",
                "--scenes-min", "3", "--scenes-max", "4",
                "--statements-min", "2", "--statements-max", "4"]) == 0
    return root, synth


def corpus_args(synth):
    return ["--scripts", str(synth / "scripts"), "--tags", str(synth / "tags.json"),
            "--embeddings", str(synth / "embeddings.txt")] + CORPUS_FLAGS


def test_parse_command(workspace):
    root, synth = workspace
    out = root / "parsed"
    assert run(["parse", "--scripts", str(synth / "scripts"),
                "--out", str(out)]) == 0
    tsvs = sorted(out.glob("*.tsv"))
    assert len(tsvs) == 8
    quality = json.loads((out / "synth000.quality.json").read_text())
    assert quality["counts"]["OTHER"] == 0
    assert "config_hash" in quality


def test_ingest_command(workspace):
    root, synth = workspace
    out = root / "corpus_manifest.json"
    assert run(["ingest"] + corpus_args(synth)
               + ["--loglines", str(synth / "loglines.json"),
                  "--out", str(out), "--seed", "3"]) == 0
    manifest = json.loads(out.read_text())
    assert manifest["excluded"] == []
    assert manifest["vocabulary_size"] > 0
    assert manifest["descriptor_vocabulary_size"] > 0


@pytest.fixture(scope="module")
def trained(workspace):
    root, synth = workspace
    out = root / "run_boe"
    args = (["train"] + corpus_args(synth)
            + ["--attribute", "genre", "--variant", "full", "--encoder", "boe",
               "--include-chars", "no", "--epochs", "3", "--seed", "7",
               "--out", str(out)])
    assert run(args) == 0
    return out, args


def test_train_writes_artifacts(trained):
    out, _ = trained
    assert (out / "checkpoint.swck").exists()
    log = (out / "train_log.csv").read_text()
    lines = log.strip().split("\n")
    assert lines[0].startswith("# config_hash ")
    assert lines[1] == "epoch,train_loss,val_ap,lr,wallclock"
    assert len(lines) == 2 + 3  # hash comment + header + 3 epochs
    # wallclock column stays empty unless --timing is passed
    assert all(line.endswith(",") for line in lines[2:])


def test_train_rerun_byte_identical(trained, tmp_path):
    out, args = trained
    other = tmp_path / "rerun"
    rerun_args = args[:-1] + [str(other)]
    assert run(rerun_args) == 0
    assert (other / "checkpoint.swck").read_bytes() == \
        (out / "checkpoint.swck").read_bytes()
    assert (other / "train_log.csv").read_bytes() == \
        (out / "train_log.csv").read_bytes()


def test_evaluate_command(workspace, trained):
    root, synth = workspace
    out_ckpt, _ = trained
    report_path = root / "eval.json"
    assert run(["evaluate"] + corpus_args(synth)
               + ["--checkpoint", str(out_ckpt / "checkpoint.swck"),
                  "--split", "heldout", "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["attribute"] == "genre"
    assert 0.0 <= report["micro_f1"] <= 1.0
    assert report["n_scripts"] > 0


def test_evaluate_refuses_vocabulary_mismatch(workspace, trained, capsys):
    root, synth = workspace
    out_ckpt, _ = trained
    # different min-count changes the vocabulary hash
    args = (["evaluate", "--scripts", str(synth / "scripts"),
             "--tags", str(synth / "tags.json"),
             "--embeddings", str(synth / "embeddings.txt"),
             "--min-count", "4", "--descriptor-min-movies", "2",
             "--descriptor-top-exclude", "30", "--validation-fraction", "0.15",
             "--checkpoint", str(out_ckpt / "checkpoint.swck"),
             "--out", str(root / "bad.json")])
    assert run(args) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert payload["error"] == "VocabularyMismatch"


def test_eval_sim_cutoff_100_matches_evaluate(workspace, trained):
    root, synth = workspace
    out_ckpt, _ = trained
    eval_path = root / "eval2.json"
    assert run(["evaluate"] + corpus_args(synth)
               + ["--checkpoint", str(out_ckpt / "checkpoint.swck"),
                  "--out", str(eval_path)]) == 0
    sim_path = root / "sim.json"
    assert run(["eval-sim"] + corpus_args(synth)
               + ["--checkpoint", str(out_ckpt / "checkpoint.swck"),
                  "--tag-embeddings", str(synth / "tag_embeddings.tsv"),
                  "--cutoffs", "100,90,80,70", "--out", str(sim_path)]) == 0
    sim = json.loads(sim_path.read_text())
    exact = json.loads(eval_path.read_text())["micro_f1"]
    assert sim["cutoffs"]["100"]["f1"] == exact
    values = [sim["cutoffs"][c]["f1"] for c in ("100", "90", "80", "70")]
    assert values == sorted(values)


@pytest.fixture(scope="module")
def descriptor_run(workspace):
    root, synth = workspace
    out = root / "desc"
    args = (["descriptors"] + corpus_args(synth)
            + ["--attribute", "genre", "--k", "3", "--hidden", "8",
               "--epochs", "2", "--pretrain-epochs", "1", "--negatives", "2",
               "--top-words", "4", "--seed", "2", "--out", str(out)])
    assert run(args) == 0
    return out, args


def test_descriptors_artifacts(descriptor_run):
    out, _ = descriptor_run
    report = json.loads((out / "descriptor_report.json").read_text())
    assert len(report["descriptors"]) == 3
    assert all(len(d["top_words"]) == 4 for d in report["descriptors"])
    assert (out / "descriptors.swck").exists()


def test_descriptors_rerun_byte_identical(descriptor_run, tmp_path):
    out, args = descriptor_run
    other = tmp_path / "desc2"
    assert run(args[:-1] + [str(other)]) == 0
    assert (other / "descriptors.swck").read_bytes() == \
        (out / "descriptors.swck").read_bytes()
    assert (other / "descriptor_report.json").read_bytes() == \
        (out / "descriptor_report.json").read_bytes()


@pytest.mark.parametrize("fmt", ["csv", "svg"])
def test_trajectories_command(workspace, descriptor_run, tmp_path, fmt):
    root, synth = workspace
    out_desc, _ = descriptor_run
    out_file = tmp_path / f"traj.{fmt}"
    args = ["trajectories", "--checkpoint", str(out_desc / "descriptors.swck"),
            "--scripts", str(synth / "scripts"),
            "--embeddings", str(synth / "embeddings.txt"),
            "--title", "synth000", "--descriptors", "top:2",
            "--window", "3", "--annotate", "2:A",
            "--format", fmt, "--out", str(out_file)]
    assert run(args) == 0
    text = out_file.read_text()
    if fmt == "csv":
        assert text.startswith("scene,descriptor_")
    else:
        assert text.startswith("<svg")
        assert ">A</text>" in text
    rerun = tmp_path / f"traj2.{fmt}"
    assert run(args[:-1] + [str(rerun)]) == 0
    assert rerun.read_bytes() == out_file.read_bytes()


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["train"])  # missing required flags
    assert exc.value.code == 2


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_scripts_dir_is_data_error(tmp_path, capsys):
    assert main(["parse", "--scripts", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "out")]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "DataError"


def test_variant_accepts_encoder_kind_shorthand(workspace, tmp_path):
    root, synth = workspace
    out = tmp_path / "run_kind"
    assert run(["train"] + corpus_args(synth)
               + ["--attribute", "genre", "--variant", "boe",
                  "--include-chars", "no", "--epochs", "1", "--seed", "7",
                  "--out", str(out)]) == 0
    from scenewise.checkpoint import load_checkpoint
    _, manifest = load_checkpoint(out / "checkpoint.swck")
    assert manifest["variant"] == "full"
    assert manifest["model"]["kind"] == "boe"


def test_default_out_uses_env_dir(workspace, tmp_path, monkeypatch):
    root, synth = workspace
    monkeypatch.setenv("SCENEWISE_OUT", str(tmp_path))
    assert run(["parse", "--scripts", str(synth / "scripts")]) == 0
    assert (tmp_path / "parsed" / "synth000.tsv").exists()
