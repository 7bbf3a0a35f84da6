"""Training loop: surrogate-gradient descent over the spiking pipeline."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
import torch
import torch.nn.functional as F

from .data import Dataset
from .network import SpikingNet, TrainConfig, TrainedParams, evaluate, extract_patches


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message echoes the seed and config."""


def train(config: TrainConfig, dataset: Dataset) -> tuple[TrainedParams, dict]:
    """Fit encoder kernel and layer weights; returns params and metrics.

    Metrics hold one entry per epoch (train loss, train accuracy, test
    accuracy) plus the final float test accuracy.  Runs are
    deterministic for a fixed config on a fixed dataset.
    """
    if dataset.image_shape != config.image_shape:
        raise ValueError(
            f"dataset images are {dataset.image_shape}, config expects {config.image_shape}"
        )
    torch.manual_seed(config.seed)
    net = SpikingNet(config)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    images = torch.from_numpy(np.ascontiguousarray(dataset.train_images))
    labels = torch.from_numpy(np.ascontiguousarray(dataset.train_labels)).to(torch.int64)
    n = len(images)
    shuffler = torch.Generator().manual_seed(config.seed)

    epochs = []
    for epoch in range(config.epochs):
        net.train()
        order = torch.randperm(n, generator=shuffler)
        total_loss, hits = 0.0, 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            patches = extract_patches(images[idx], config.patch_side, config.stride)
            target = labels[idx]
            counts = net(patches)
            loss = F.cross_entropy(counts, target)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} sample {lo}; "
                    f"seed={config.seed} config={asdict(config)}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            net.clamp_()
            total_loss += float(loss.detach()) * len(idx)
            hits += int((counts.argmax(dim=1) == target).sum())
        _, test_accuracy = evaluate(net, dataset.test_images, dataset.test_labels)
        epochs.append(
            {
                "epoch": epoch,
                "train_loss": total_loss / n,
                "train_accuracy": hits / n,
                "test_accuracy": test_accuracy,
            }
        )

    metrics = {
        "config": asdict(config),
        "epochs": epochs,
        "float_test_accuracy": epochs[-1]["test_accuracy"],
    }
    return TrainedParams.from_net(net), metrics
