"""Command-line interface: pipeline integration, config precedence, exit codes."""

import json
import subprocess
import sys

import pytest

from chansum.cli import build_parser, main

GEN_FLAGS = [
    "--n-videos", "4",
    "--shots-per-video", "24",
    "--n-concepts", "6",
    "--n-queries", "4",
    "--feature-dim", "12",
    "--concept-embed-dim", "6",
    "--scene-min-len", "2",
    "--scene-max-len", "4",
    "--reference-budget", "10",
    "--min-relevant-shots", "2",
    "--seed", "5",
]

TRAIN_FLAGS = [
    "--conv-channels", "4,8",
    "--kernel-sizes", "3,5",
    "--dilations", "1,2",
    "--attention-dim", "4",
    "--fusion-space-dim", "8",
    "--mlp-hidden", "4",
    "--epochs", "2",
    "--batch-size", "4",
    "--learning-rate", "1e-3",
    "--patience", "2",
    "--max-segments", "8",
    "--max-segment-len", "10",
    "--seed", "0",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated dataset and one trained checkpoint for the module."""
    root = tmp_path_factory.mktemp("cli")
    ds = root / "ds"
    ck = root / "ck"
    assert main(["gen-data", "--out", str(ds)] + GEN_FLAGS) == 0
    assert main(["train", "--dataset", str(ds), "--out", str(ck)] + TRAIN_FLAGS) == 0
    return root


def first_query(workspace):
    manifest = json.loads((workspace / "ds" / "manifest.json").read_text())
    a, b = manifest["queries"][0]
    return f"{a}|{b}"


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name in ["gen-data", "segment", "train", "summarize", "evaluate", "gradcheck"]:
        assert name in out


def test_gen_data_writes_a_loadable_dataset(workspace, capsys):
    ds = workspace / "ds"
    assert (ds / "manifest.json").exists()
    assert (ds / "features" / "video_0.chf").exists()
    assert (ds / "annotations" / "video_0.json").exists()


def test_gen_data_is_idempotent(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["gen-data", "--out", str(a)] + GEN_FLAGS)
    main(["gen-data", "--out", str(b)] + GEN_FLAGS)
    capsys.readouterr()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert (a / "features" / "video_2.chf").read_bytes() == (b / "features" / "video_2.chf").read_bytes()


def test_segment_emits_valid_boundaries(workspace, tmp_path, capsys):
    out = tmp_path / "seg.json"
    code = main(
        [
            "segment",
            "--features", str(workspace / "ds" / "features" / "video_0.chf"),
            "--out", str(out),
            "--max-segments", "8",
            "--max-segment-len", "10",
        ]
    )
    capsys.readouterr()
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["n_shots"] == 24
    assert doc["n_segments"] == len(doc["segments"])
    assert doc["segments"][0][0] == 0
    assert doc["segments"][-1][1] == 24
    assert all(b - a <= 10 for a, b in doc["segments"])


def test_train_writes_checkpoint_and_logs(workspace, capsys):
    ck = workspace / "ck"
    assert (ck / "manifest.json").exists()
    assert (ck / "params.bin").exists()
    assert (ck / "run_config.json").exists()
    lines = (ck / "train_log.jsonl").read_text().strip().splitlines()
    assert all(isinstance(json.loads(line), dict) for line in lines)
    run_cfg = json.loads((ck / "run_config.json").read_text())
    # architecture dims follow the dataset unless given explicitly
    assert run_cfg["chan"]["input_dim"] == 12
    assert run_cfg["chan"]["concept_embed_dim"] == 6
    assert run_cfg["train"]["epochs"] == 2


def test_summarize_selects_within_budget(workspace, tmp_path, capsys):
    out = tmp_path / "summ.json"
    code = main(
        [
            "summarize",
            "--checkpoint", str(workspace / "ck"),
            "--dataset", str(workspace / "ds"),
            "--video", "video_0",
            "--query", first_query(workspace),
            "--selection-policy", "budget",
            "--budget", "5",
            "--max-segments", "8",
            "--max-segment-len", "10",
            "--out", str(out),
        ]
    )
    capsys.readouterr()
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["selected"]) == 5
    assert all(0 <= i < 24 for i in doc["selected"])
    assert doc["selected"] == sorted(doc["selected"])
    assert len(doc["scores"]) == 24


def test_summarize_accepts_comma_query(workspace, tmp_path, capsys):
    q = first_query(workspace).replace("|", ",")
    code = main(
        [
            "summarize",
            "--checkpoint", str(workspace / "ck"),
            "--dataset", str(workspace / "ds"),
            "--video", "video_1",
            "--query", q,
            "--max-segments", "8",
            "--max-segment-len", "10",
            "--out", str(tmp_path / "s.json"),
        ]
    )
    capsys.readouterr()
    assert code == 0


def test_evaluate_round_trip(workspace, tmp_path, capsys):
    summ = tmp_path / "summ.json"
    main(
        [
            "summarize",
            "--checkpoint", str(workspace / "ck"),
            "--dataset", str(workspace / "ds"),
            "--video", "video_0",
            "--query", first_query(workspace),
            "--selection-policy", "budget",
            "--budget", "5",
            "--max-segments", "8",
            "--max-segment-len", "10",
            "--out", str(summ),
        ]
    )
    doc = json.loads(summ.read_text())
    candidates = tmp_path / "cands.json"
    candidates.write_text(
        json.dumps({"summaries": {doc["video"]: {doc["query"]: doc["selected"]}}})
    )
    out = tmp_path / "metrics.json"
    code = main(
        [
            "evaluate",
            "--candidates", str(candidates),
            "--dataset", str(workspace / "ds"),
            "--out", str(out),
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    metrics = json.loads(out.read_text())
    assert 0.0 <= metrics["average"]["f1"] <= 1.0
    assert "video_0" in metrics["videos"]
    # with --out the table goes to stdout
    assert "Avg." in captured.out


def test_evaluate_perfect_candidate(workspace, tmp_path, capsys):
    manifest = json.loads((workspace / "ds" / "manifest.json").read_text())
    refs = manifest["references"]
    vid = "video_0"
    key = next(iter(refs[vid]))
    candidates = tmp_path / "cands.json"
    candidates.write_text(json.dumps({"summaries": {vid: {key: refs[vid][key]}}}))
    out = tmp_path / "metrics.json"
    assert (
        main(["evaluate", "--candidates", str(candidates), "--dataset", str(workspace / "ds"), "--out", str(out)])
        == 0
    )
    capsys.readouterr()
    assert json.loads(out.read_text())["average"]["f1"] == 1.0


def test_evaluate_rejects_dangling_video(workspace, tmp_path, capsys):
    candidates = tmp_path / "cands.json"
    candidates.write_text(json.dumps({"summaries": {"ghost": {"a|b": [0]}}}))
    code = main(["evaluate", "--candidates", str(candidates), "--dataset", str(workspace / "ds")])
    captured = capsys.readouterr()
    assert code == 2
    assert "ghost" in json.loads(captured.err.strip().splitlines()[-1])["message"]


def test_gradcheck_passes(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["gradcheck", "--max-coords", "3", "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["passed"] is True
    assert doc["max_rel_error"] < doc["tolerance"]


def test_config_file_and_flag_precedence(workspace, tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(
        json.dumps(
            {
                "chan": {
                    "input_dim": 12,
                    "conv_channels": [4, 8],
                    "kernel_sizes": [3, 5],
                    "dilations": [1, 2],
                    "attention_dim": 6,
                    "fusion_space_dim": 8,
                    "mlp_hidden": 4,
                    "concept_embed_dim": 6,
                },
                "train": {
                    "epochs": 1,
                    "batch_size": 4,
                    "learning_rate": 0.5,
                    "patience": 1,
                    "max_segments": 8,
                    "max_segment_len": 10,
                },
            }
        )
    )
    ck = tmp_path / "ck"
    code = main(
        [
            "train",
            "--dataset", str(workspace / "ds"),
            "--out", str(ck),
            "--config", str(cfg),
            "--learning-rate", "0.25",
            "--seed", "7",
        ]
    )
    capsys.readouterr()
    assert code == 0
    run_cfg = json.loads((ck / "run_config.json").read_text())
    assert run_cfg["train"]["learning_rate"] == 0.25  # flag beats config file
    assert run_cfg["chan"]["attention_dim"] == 6  # config file beats default
    assert run_cfg["train"]["epochs"] == 1
    assert run_cfg["chan"]["seed"] == 7  # --seed reaches both sections
    assert run_cfg["train"]["seed"] == 7


def test_summarize_unknown_video_exits_2(workspace, capsys):
    code = main(
        [
            "summarize",
            "--checkpoint", str(workspace / "ck"),
            "--dataset", str(workspace / "ds"),
            "--video", "nope",
            "--query", first_query(workspace),
        ]
    )
    captured = capsys.readouterr()
    assert code == 2
    assert "error" in json.loads(captured.err.strip().splitlines()[-1])


def test_one_word_query_exits_2(workspace, capsys):
    code = main(
        [
            "summarize",
            "--checkpoint", str(workspace / "ck"),
            "--dataset", str(workspace / "ds"),
            "--video", "video_0",
            "--query", "onlyone",
        ]
    )
    capsys.readouterr()
    assert code == 2


def test_missing_dataset_exits_2(tmp_path, capsys):
    code = main(["train", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "ck")])
    capsys.readouterr()
    assert code == 2


def test_bad_log_level_exits_2(monkeypatch, capsys):
    monkeypatch.setenv("CHAN_LOG_LEVEL", "loud")
    code = main(["gradcheck", "--max-coords", "1"])
    captured = capsys.readouterr()
    assert code == 2
    assert "CHAN_LOG_LEVEL" in json.loads(captured.err.strip().splitlines()[-1])["message"]


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "chansum.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "gen-data" in proc.stdout
