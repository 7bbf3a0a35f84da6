"""Training-loop contracts: config validation, learning, determinism, abort."""

import numpy as np
import pytest
import torch
import torch.nn.functional

from dtsnn_train import (
    ConfigError,
    TrainConfig,
    TrainingDivergedError,
    load_digits_dataset,
    train,
)

DIGITS_CONFIG = dict(
    architecture=(36, 32, 10),
    patch_side=3,
    image_shape=(8, 8),
    batch_size=32,
    learning_rate=2e-2,
    seed=0,
)


@pytest.fixture(scope="module")
def digits():
    return load_digits_dataset()


def test_config_rejects_fan_grid_mismatch():
    with pytest.raises(ConfigError, match="patch grid"):
        TrainConfig(architecture=(35, 16, 10), patch_side=3, image_shape=(8, 8))


def test_config_rejects_oversized_patch():
    with pytest.raises(ConfigError, match="patch"):
        TrainConfig(architecture=(1, 10), patch_side=9, image_shape=(8, 8))


def test_config_rejects_bad_knobs():
    with pytest.raises(ConfigError):
        TrainConfig(**{**DIGITS_CONFIG, "learning_rate": 0.0}, epochs=1)
    with pytest.raises(ConfigError):
        TrainConfig(**{**DIGITS_CONFIG, "ternary_temperature": 1.5}, epochs=1)
    with pytest.raises(ConfigError):
        TrainConfig(architecture=(36,), patch_side=3, image_shape=(8, 8))


def test_default_config_is_the_desk_scale_mnist_stack():
    cfg = TrainConfig()
    assert cfg.architecture == (400, 128, 10)
    assert cfg.patch_grid == (20, 20)
    assert cfg.ticks == 81


def test_one_epoch_smoke_beats_sixty_percent(digits):
    cfg = TrainConfig(**DIGITS_CONFIG, epochs=1)
    _, metrics = train(cfg, digits)
    accuracy = metrics["float_test_accuracy"]
    assert accuracy > 0.60, f"one epoch reached only {accuracy:.3f}"


def test_seeded_runs_produce_identical_metrics(digits):
    small = digits.limited(400, 200)
    cfg = TrainConfig(**DIGITS_CONFIG, epochs=2)
    _, first = train(cfg, small)
    _, second = train(cfg, small)
    assert first == second


def test_different_seeds_change_the_run(digits):
    small = digits.limited(400, 200)
    _, a = train(TrainConfig(**DIGITS_CONFIG, epochs=1), small)
    _, b = train(TrainConfig(**{**DIGITS_CONFIG, "seed": 1}, epochs=1), small)
    assert a["epochs"] != b["epochs"]


def test_non_finite_loss_aborts_with_seed_and_config(digits, monkeypatch):
    def poisoned(counts, target):
        return counts.sum() * torch.tensor(float("nan"))

    monkeypatch.setattr(torch.nn.functional, "cross_entropy", poisoned)
    cfg = TrainConfig(**DIGITS_CONFIG, epochs=1)
    with pytest.raises(TrainingDivergedError, match=r"seed=0.*architecture"):
        train(cfg, digits.limited(64, 32))


def test_train_rejects_mismatched_image_shape(digits):
    cfg = TrainConfig()  # expects 28x28
    with pytest.raises(ValueError, match="28"):
        train(cfg, digits)


def test_metrics_carry_one_entry_per_epoch(digits):
    cfg = TrainConfig(**DIGITS_CONFIG, epochs=2)
    _, metrics = train(cfg, digits.limited(200, 100))
    assert [e["epoch"] for e in metrics["epochs"]] == [0, 1]
    for entry in metrics["epochs"]:
        assert 0.0 <= entry["train_accuracy"] <= 1.0
        assert 0.0 <= entry["test_accuracy"] <= 1.0
        assert np.isfinite(entry["train_loss"])
    assert metrics["config"]["architecture"] == [36, 32, 10] or metrics["config"][
        "architecture"
    ] == (36, 32, 10)
