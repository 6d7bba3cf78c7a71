import json

import pytest

from mvmn.cli import main

SMALL = {"communities": 3, "users_per_community": 12, "locations_per_community": 8, "global_locations": 20}


def _chain(tmp_path, tag):
    d = tmp_path / tag
    d.mkdir()
    cfg = d / "synth.json"
    cfg.write_text(json.dumps(SMALL))
    run = lambda *args: main([str(a) for a in args])
    assert run("synth", "--config", cfg, "--out-checkins", d / "c.tsv", "--out-edges", d / "e.tsv", "--seed", 3) == 0
    assert run("preprocess", "--checkins", d / "c.tsv", "--edges", d / "e.tsv", "--min-friends", 1,
               "--min-checkins", 5, "--per-user", 15, "--seed", 3, "--out", d / "data.jsonl") == 0
    assert run("train", "--data", d / "data.jsonl", "--out", d / "m.ckpt", "--epochs", 1, "--seed", 3) == 0
    assert run("evaluate", "--checkpoint", d / "m.ckpt", "--candidates", d / "data.candidates.json",
               "--out", d / "metrics.json") == 0
    return d


def test_chained_pipeline_is_deterministic(tmp_path, capsys):
    a = _chain(tmp_path, "a")
    b = _chain(tmp_path, "b")
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()
    metrics = json.loads((a / "metrics.json").read_text())
    assert 0.0 <= metrics["auc"] <= 1.0
    manifest = json.loads((a / "metrics.json.manifest.json").read_text())
    assert manifest["command"] == "evaluate"

    capsys.readouterr()
    assert main(["predict", "--checkpoint", str(a / "m.ckpt"), "--pair", "0,1"]) == 0
    value = float(capsys.readouterr().out.strip())
    assert 0.0 < value < 1.0
    assert main(["predict", "--checkpoint", str(a / "m.ckpt"), "--pair", "0,nobody"]) == 1

    assert main(["analyze", "--data", str(a / "data.jsonl"), "--out", str(a / "an.json")]) == 0
    assert "cooccurrence" in json.loads((a / "an.json").read_text())


def test_help_and_unknown_command(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_input_reports_error(tmp_path, capsys):
    code = main(["preprocess", "--checkins", str(tmp_path / "nope.tsv"), "--edges", str(tmp_path / "e"),
                 "--out", str(tmp_path / "d.jsonl")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seeds", "1"]) == 0
