import json
import subprocess
import sys

import numpy as np
import pytest

from hlsdelta.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cliset")
    code = run_cli(
        "synth-gen", "--out", str(out), "--n-kernels", "3",
        "--designs-per-kernel", "4", "--seed", "5",
    )
    assert code == 0
    return out


TRAIN_FLAGS = ["--backbone", "SAGE", "--hidden-dim", "16", "--max-epochs", "2",
               "--lr", "1e-3", "--seed", "7"]


def test_synth_gen_writes_expected_files(dataset_dir):
    assert (dataset_dir / "manifest.json").exists()
    assert (dataset_dir / "embeddings.bin").exists()
    assert (dataset_dir / "embeddings.bin.json").exists()
    assert (dataset_dir / "oracle.json").exists()
    assert len(list((dataset_dir / "graphs").glob("*.json"))) == 3 + 12


def test_validate_data_zero_warnings(dataset_dir, capsys):
    assert run_cli("validate-data", "--manifest", str(dataset_dir / "manifest.json")) == 0
    out = capsys.readouterr().out
    assert "0 warnings" in out


def test_validate_data_warns_and_exits_zero(tmp_path, dataset_dir, capsys):
    manifest = json.loads((dataset_dir / "manifest.json").read_text())
    manifest["samples"][0]["y_d"] = 1e9
    import shutil

    shutil.copytree(dataset_dir, tmp_path / "broken", dirs_exist_ok=True)
    (tmp_path / "broken" / "manifest.json").write_text(json.dumps(manifest))
    assert run_cli("validate-data", "--manifest", str(tmp_path / "broken/manifest.json")) == 0
    out = capsys.readouterr().out
    assert "outside" in out and "0 warnings" not in out


def test_train_writes_artifacts(dataset_dir, tmp_path, capsys):
    out = tmp_path / "run"
    code = run_cli("train", "--manifest", str(dataset_dir / "manifest.json"),
                   "--out", str(out), *TRAIN_FLAGS)
    assert code == 0
    for name in ("checkpoint.npz", "history.json", "metrics.json"):
        assert (out / name).exists(), name
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["format_version"] == 1
    assert metrics["config"]["model"]["backbone"] == "SAGE"
    assert "design" in metrics["metrics"]


def test_train_deterministic_across_runs(dataset_dir, tmp_path):
    out = tmp_path / "same"
    blobs = []
    for _ in range(2):
        assert run_cli("train", "--manifest", str(dataset_dir / "manifest.json"),
                       "--out", str(out), *TRAIN_FLAGS) == 0
        blobs.append((out / "metrics.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_train_missing_embeddings_exit_and_message(dataset_dir, tmp_path, capsys):
    code = run_cli("train", "--manifest", str(dataset_dir / "manifest.json"),
                   "--out", str(tmp_path / "x"),
                   "--embeddings", str(tmp_path / "nope.bin"), *TRAIN_FLAGS)
    assert code == 1
    err = capsys.readouterr().err
    assert "nope.bin" in err


def test_train_no_code_emb_skips_embeddings(dataset_dir, tmp_path):
    out = tmp_path / "nocode"
    code = run_cli("train", "--manifest", str(dataset_dir / "manifest.json"),
                   "--out", str(out), "--no-use-code-emb", *TRAIN_FLAGS)
    assert code == 0
    archive = np.load(out / "checkpoint.npz")
    assert not any(k.startswith("adapter") for k in archive.files)


def test_config_file_with_flag_override(dataset_dir, tmp_path):
    cfg = {
        "manifest": str(dataset_dir / "manifest.json"),
        "out": str(tmp_path / "cfgrun"),
        "model": {"backbone": "GCN", "hidden_dim": 16},
        "train": {"max_epochs": 1, "seed": 3},
    }
    p = tmp_path / "run.json"
    p.write_text(json.dumps(cfg))
    assert run_cli("train", "--config", str(p), "--backbone", "SAGE") == 0
    meta = json.loads((tmp_path / "cfgrun" / "metrics.json").read_text())
    assert meta["config"]["model"]["backbone"] == "SAGE"  # flag wins
    assert meta["config"]["train"]["max_epochs"] == 1


def test_unknown_config_key_rejected(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"manifest": "x", "out": "y", "bogus": 1}))
    assert run_cli("train", "--config", str(p)) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_eval_checkpoint(dataset_dir, tmp_path, capsys):
    out = tmp_path / "trainrun"
    assert run_cli("train", "--manifest", str(dataset_dir / "manifest.json"),
                   "--out", str(out), *TRAIN_FLAGS) == 0
    capsys.readouterr()
    code = run_cli("eval", "--checkpoint", str(out / "checkpoint.npz"),
                   "--manifest", str(dataset_dir / "manifest.json"),
                   "--split", "test", "--seed", "7",
                   "--out", str(tmp_path / "metrics_eval.json"))
    assert code == 0
    payload = json.loads((tmp_path / "metrics_eval.json").read_text())
    for section in ("design", "kernel", "delta"):
        assert section in payload["metrics"]


def test_ablate_three_variants(dataset_dir, tmp_path, capsys):
    out = tmp_path / "abl"
    code = run_cli("ablate", "--manifest", str(dataset_dir / "manifest.json"),
                   "--out", str(out), *TRAIN_FLAGS)
    assert code == 0
    payload = json.loads((out / "ablation.json").read_text())
    assert [r["variant"] for r in payload["results"]] == ["full", "no_diff", "no_code_emb"]
    table = (out / "ablation.txt").read_text()
    assert "design MAPE%" in table and "no_code_emb" in table
    # the no_code_emb checkpoint carries no adapter parameters
    archive = np.load(out / "checkpoint_no_code_emb.npz")
    assert not any(k.startswith("adapter") for k in archive.files)
    full = np.load(out / "checkpoint_full.npz")
    assert any(k.startswith("adapter") for k in full.files)
    # no_diff row reports no kernel/delta head metrics
    no_diff = payload["results"][1]
    assert no_diff["metrics"]["kernel"] is None


def test_ablate_empty_variant_list(dataset_dir, tmp_path, capsys):
    code = run_cli("ablate", "--manifest", str(dataset_dir / "manifest.json"),
                   "--out", str(tmp_path / "e"), "--variants", "", *TRAIN_FLAGS)
    assert code == 1
    assert "empty" in capsys.readouterr().err


def test_usage_error_on_bad_flag(capsys):
    assert run_cli("train", "--nonsense") == 1
    assert "usage error" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, capsys):
    (tmp_path / "garbage.json").write_text("{not json")
    assert run_cli("validate-data", "--manifest", str(tmp_path / "garbage.json")) == 2
    assert "error" in capsys.readouterr().err


def test_console_script_help():
    proc = subprocess.run(
        [sys.executable, "-m", "hlsdelta.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    for cmd in ("train", "eval", "ablate", "validate-data", "synth-gen"):
        assert cmd in proc.stdout
