"""Command line front end: train, quantize, export."""

from __future__ import annotations

import sys

import click

from . import __version__
from .data import DatasetError, load_digits_dataset, load_idx_dataset
from .export import ExportOverflowError, quantize_and_export
from .network import ConfigError, TrainConfig
from .train import TrainingDivergedError, train


def parse_architecture(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise click.BadParameter(f"architecture {text!r} is not a comma list of sizes")


@click.group()
@click.version_option(__version__)
def main():
    """Train spiking models and export them for the dtsnn engine."""


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False),
              help="Directory with the four MNIST-layout IDX files.")
@click.option("--digits", is_flag=True, help="Use the bundled 8x8 digits surrogate.")
@click.option("--arch", default="400,128,10", show_default=True,
              help="Comma-separated layer sizes; the first must match the patch grid.")
@click.option("--patch-side", default=9, show_default=True, type=click.IntRange(min=1))
@click.option("--epochs", default=5, show_default=True, type=click.IntRange(min=1))
@click.option("--batch-size", default=128, show_default=True, type=click.IntRange(min=1))
@click.option("--lr", default=1e-3, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--limit", default=None, type=click.IntRange(min=1),
              help="Cap the train/test sample counts for quick runs.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Path of the exported .lsnn model.")
@click.option("--metrics", "metrics_path", default=None, type=click.Path(dir_okay=False),
              help="Metrics JSON path (defaults to OUT.json).")
def run(data_dir, digits, arch, patch_side, epochs, batch_size, lr, seed, limit,
        out_path, metrics_path):
    """Train on a dataset and export the quantized model."""
    try:
        if digits == (data_dir is not None):
            raise click.UsageError("pick exactly one of --data or --digits")
        dataset = load_digits_dataset() if digits else load_idx_dataset(data_dir)
        if limit is not None:
            dataset = dataset.limited(limit, limit)
        config = TrainConfig(
            architecture=parse_architecture(arch),
            patch_side=patch_side,
            image_shape=dataset.image_shape,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=lr,
            seed=seed,
        )
        params, metrics = train(config, dataset)
        for entry in metrics["epochs"]:
            click.echo(
                f"epoch {entry['epoch']}: loss {entry['train_loss']:.4f} "
                f"train {entry['train_accuracy']:.4f} test {entry['test_accuracy']:.4f}"
            )
        report = quantize_and_export(
            params, out_path, dataset=dataset, metrics=metrics, metrics_path=metrics_path
        )
        click.echo(
            f"quantized test accuracy {report.quantized_test_accuracy:.4f} "
            f"(drop {report.accuracy_drop:+.4f})"
        )
        click.echo(f"wrote {report.model_path} and {report.metrics_path}")
    except (ConfigError, DatasetError, TrainingDivergedError, ExportOverflowError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
