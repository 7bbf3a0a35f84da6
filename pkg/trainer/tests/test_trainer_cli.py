"""Trainer CLI: one command from dataset to exported model."""

import json

from click.testing import CliRunner

from dtsnn_train.cli import main


def test_run_trains_and_exports(tmp_path):
    model = tmp_path / "digits.lsnn"
    result = CliRunner().invoke(
        main,
        [
            "run", "--digits", "--arch", "36,32,10", "--patch-side", "3",
            "--epochs", "1", "--batch-size", "32", "--lr", "0.02",
            "--limit", "400", "--out", str(model),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "epoch 0:" in result.output
    assert "quantized test accuracy" in result.output
    assert model.exists()
    log = json.loads((tmp_path / "digits.lsnn.json").read_text())
    assert log["config"]["architecture"] == [36, 32, 10]
    assert len(log["epochs"]) == 1


def test_run_requires_exactly_one_dataset_choice(tmp_path):
    result = CliRunner().invoke(main, ["run", "--out", str(tmp_path / "m.lsnn")])
    assert result.exit_code != 0
    assert "--data or --digits" in result.output


def test_run_reports_config_errors_cleanly(tmp_path):
    result = CliRunner().invoke(
        main,
        ["run", "--digits", "--arch", "9,10", "--patch-side", "3",
         "--epochs", "1", "--out", str(tmp_path / "m.lsnn")],
    )
    assert result.exit_code == 1
    assert "patch grid" in result.output
