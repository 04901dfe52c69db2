import json
from pathlib import Path

import pytest

from mgvae.cli import main

from conftest import tiny_gen_config


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Corpus + stage-1+2+baselines checkpoint built through the CLI itself."""
    root = tmp_path_factory.mktemp("cli_ws")
    corpus_dir = root / "corpus"
    cfg = tiny_gen_config(seed=61)
    (root / "gen.json").write_text(cfg.to_json(), encoding="utf-8")
    assert main(["gen-corpus", "--out", str(corpus_dir),
                 "--config", str(root / "gen.json")]) == 0
    ck = root / "model.mgck"
    assert main(["train", "--corpus", str(corpus_dir / "manifest.json"),
                 "--out", str(ck), "--stage", "all", "--epochs1", "3",
                 "--epochs2", "2", "--hidden", "8", "--seed", "5",
                 "--log", str(root / "train.jsonl")]) == 0
    return root


def manifest_path(workspace) -> str:
    return str(workspace / "corpus" / "manifest.json")


def first_test_id(workspace) -> str:
    payload = json.loads((workspace / "corpus" / "manifest.json").read_text())
    for item in payload["items"]:
        if item["split"] == "test":
            return item["id"]
    raise AssertionError("no test items")


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "gen-corpus", "--nope")
    assert code == 1
    assert "usage error" in err


def test_missing_subcommand_is_usage_error(capsys):
    code, _, _ = run(capsys, )
    assert code == 1


def test_gen_corpus_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        code, out, _ = run(capsys, "gen-corpus", "--out", str(tmp_path / sub),
                           "--seed", "7", "--utterances-per-style", "3")
        assert code == 0
        assert "resolved config" in out
    a_files = sorted(p.relative_to(tmp_path / "a")
                     for p in (tmp_path / "a").rglob("*") if p.is_file())
    for rel in a_files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_train_echoes_config_and_writes_log(workspace):
    log_lines = (workspace / "train.jsonl").read_text().splitlines()
    records = [json.loads(line) for line in log_lines]
    assert any(r["step"] == 1 for r in records)
    assert any(r["step"] == 2 for r in records)


def test_train_missing_corpus_is_data_error(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--corpus", str(tmp_path / "nope.json"),
                       "--out", str(tmp_path / "ck.mgck"))
    assert code == 2
    assert "error" in err


def test_train_stage2_requires_init(tmp_path, capsys, workspace):
    code, _, err = run(capsys, "train", "--corpus", manifest_path(workspace),
                       "--out", str(tmp_path / "x.mgck"), "--stage", "2")
    assert code == 1
    assert "init-from" in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_code(tmp_path, capsys, workspace):
    code, _, err = run(capsys, "train", "--corpus", manifest_path(workspace),
                       "--out", str(tmp_path / "d.mgck"), "--stage", "1",
                       "--epochs1", "30", "--lr", "1000000", "--hidden", "6")
    assert code == 3
    assert "diverged" in err
    assert (tmp_path / "d.mgck").exists()  # last good checkpoint saved


def test_synth_deterministic_at_temperature_zero(workspace, tmp_path, capsys):
    uid = first_test_id(workspace)
    outs = []
    for name in ("s1.json", "s2.json"):
        code, out, _ = run(capsys, "synth", "--checkpoint",
                           str(workspace / "model.mgck"),
                           "--corpus", manifest_path(workspace),
                           "--utterance", uid, "--mode", "MG+CP+AR",
                           "--z-u", "0.5,-0.3", "--temperature", "0",
                           "--out", str(tmp_path / name))
        assert code == 0
        assert "resolved config" in out
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    payload = json.loads(outs[0])
    assert payload["mode"] == "MG+CP+AR"
    assert payload["z_utterance"] == [0.5, -0.3]
    assert len(payload["z_word"]) >= 2


def test_synth_unknown_utterance_is_data_error(workspace, tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--checkpoint", str(workspace / "model.mgck"),
                       "--corpus", manifest_path(workspace),
                       "--utterance", "missing_0000", "--mode", "FG",
                       "--out", str(tmp_path / "x.json"))
    assert code == 2


def test_eval_all_modes_table(workspace, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code, out, _ = run(capsys, "eval", "--checkpoint", str(workspace / "model.mgck"),
                       "--corpus", manifest_path(workspace), "--modes", "all",
                       "--seed", "3", "--out", str(report_path))
    assert code == 0
    for mode in ("FG", "FG+AR", "FG+CP", "FG+CP+AR", "MG+CP", "MG+CP+AR"):
        assert mode in out
    for col in ("MCD", "GVD", "F0ER"):
        assert col in out
    payload = json.loads(report_path.read_text())
    assert len(payload["rows"]) == 6
    for row in payload["rows"]:
        assert row["mcd"]["mean"] is not None


def test_eval_table1_rows_and_determinism(workspace, tmp_path, capsys):
    reports = []
    for name in ("r1.json", "r2.json"):
        code, _, _ = run(capsys, "eval", "--checkpoint", str(workspace / "model.mgck"),
                         "--corpus", manifest_path(workspace), "--modes", "table1",
                         "--seed", "3", "--out", str(tmp_path / name))
        assert code == 0
        reports.append((tmp_path / name).read_bytes())
    assert reports[0] == reports[1]
    payload = json.loads(reports[0])
    assert [r["system"] for r in payload["rows"]] == ["oracle-zu", "oracle-zw",
                                                      "pred-zw"]


def test_eval_rejects_unknown_mode(workspace, capsys):
    code, _, err = run(capsys, "eval", "--checkpoint", str(workspace / "model.mgck"),
                       "--corpus", manifest_path(workspace), "--modes", "bogus")
    assert code == 2


def test_export_latents(workspace, tmp_path, capsys):
    out = tmp_path / "latents.json"
    code, _, _ = run(capsys, "export-latents", "--checkpoint",
                     str(workspace / "model.mgck"), "--corpus",
                     manifest_path(workspace), "--split", "all",
                     "--include-fine", "--out", str(out))
    assert code == 0
    payload = json.loads(out.read_text())
    manifest = json.loads((workspace / "corpus" / "manifest.json").read_text())
    assert len(payload["items"]) == len(manifest["items"])
    entry = payload["items"][0]
    assert len(entry["z_utterance"]) == 2
    assert "z_word" in entry and "z_phrase" in entry
    assert entry["style"] in ("normal", "happy", "sad", "mixed")
    # reruns are byte-identical
    out2 = tmp_path / "latents2.json"
    run(capsys, "export-latents", "--checkpoint", str(workspace / "model.mgck"),
        "--corpus", manifest_path(workspace), "--split", "all", "--include-fine",
        "--out", str(out2))
    assert out.read_bytes() == out2.read_bytes()


def test_synth_mode_requires_trained_components(tmp_path, capsys, workspace):
    # a stage-1-only checkpoint cannot serve MG modes
    ck = tmp_path / "s1only.mgck"
    code, _, _ = run(capsys, "train", "--corpus", manifest_path(workspace),
                     "--out", str(ck), "--stage", "1", "--epochs1", "1",
                     "--hidden", "6")
    assert code == 0
    uid = first_test_id(workspace)
    code, _, err = run(capsys, "synth", "--checkpoint", str(ck),
                       "--corpus", manifest_path(workspace),
                       "--utterance", uid, "--mode", "MG+CP",
                       "--out", str(tmp_path / "x.json"))
    assert code == 2
    assert "requires trained stages" in err
