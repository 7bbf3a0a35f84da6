"""Command-line front end for encoding, inference, reports and benchmarks.

Report commands write their delimited output atomically and render a
matching PNG figure next to the CSV unless --no-plot is given.  Dataset
arguments accept IDX image files (grayscale) or CIFAR-10 binary batches
(by .bin extension, labels included).  `DTSNN_THREADS` sets the default
worker count for commands that take --jobs.
"""

from __future__ import annotations

import functools
import json
import os
from collections import Counter
from importlib import resources

import click
import numpy as np

from . import __version__
from .codec import (
    decode_symbols,
    encode_differences,
    exact_total_bits_from_histogram,
    formula_total_bits_from_histogram,
    optimal_bitwidth,
)
from .encoder import EncoderConfig, encode_dataset
from .lif import classify
from .merger import merge_multiway
from .model_io import (
    FileFormatError,
    atomic_write_bytes,
    load_model,
    model_from_bytes,
    model_to_bytes,
    read_cifar10_bin,
    read_idx_images,
    read_idx_labels,
    read_spike_stream,
    stream_from_bytes,
    write_spike_stream,
)
from .pipeline import bench_model, default_jobs, infer_dataset, merge_fast

_IN_PATH = click.Path(exists=True, dir_okay=False)
_OUT_PATH = click.Path(dir_okay=False, writable=False)


def friendly_errors(func):
    """Turn domain errors into diagnostics with a nonzero exit."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def load_dataset(path: str, limit: int | None, labels_path: str | None = None):
    """Images plus labels (None when unavailable) from an IDX or CIFAR file."""
    if path.endswith(".bin"):
        images, labels = read_cifar10_bin(path)
    else:
        images = read_idx_images(path)
        labels = None
        if labels_path is None:
            guess = path.replace("images", "labels").replace("idx3", "idx1")
            labels_path = guess if guess != path and os.path.exists(guess) else None
        if labels_path is not None:
            labels = read_idx_labels(labels_path)
    if labels is not None and len(labels) != len(images):
        raise click.ClickException(
            f"{len(images)} images but {len(labels)} labels"
        )
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit] if labels is not None else None
    return images, labels


def check_images_fit_model(model, images) -> None:
    if len(images) == 0:
        return
    shape = images.shape[1:3]
    channels = images.shape[3] if images.ndim == 4 else 1
    if tuple(shape) != model.image_shape or channels != model.kernel.channels:
        raise click.ClickException(
            f"dataset images are {shape[0]}x{shape[1]}x{channels}, model wants "
            f"{model.image_shape[0]}x{model.image_shape[1]}x{model.kernel.channels}"
        )


def stream_histogram(trains) -> Counter:
    histogram: Counter = Counter()
    for train in trains:
        histogram.update(decode_symbols(train).tolist())
    return histogram


def sibling_png(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + ".png"


def write_csv(path: str, header: str, rows) -> None:
    text = header + "\n" + "".join(f"{','.join(str(v) for v in row)}\n" for row in rows)
    atomic_write_bytes(path, text.encode("ascii"))


@click.group()
@click.version_option(version=__version__, prog_name="dtsnn")
def main():
    """Differential-time spiking network tools."""


@main.command()
@click.option("--model", "model_path", required=True, type=_IN_PATH)
@click.option("--dataset", "dataset_path", required=True, type=_IN_PATH)
@click.option("--out", "out_path", required=True, type=_OUT_PATH)
@click.option("--bitwidth", type=click.IntRange(1, 16), default=None,
              help="Override the model's codec bitwidth.")
@click.option("--limit", type=click.IntRange(0), default=None,
              help="Encode only the first N images.")
@friendly_errors
def encode(model_path, dataset_path, out_path, bitwidth, limit):
    """Encode a dataset into one .dts spike stream (trains sample-major)."""
    model = load_model(model_path)
    images, _ = load_dataset(dataset_path, limit)
    check_images_fit_model(model, images)
    cfg = model.encoder_config()
    if bitwidth is not None:
        cfg = EncoderConfig(
            bitwidth=bitwidth, normalize=cfg.normalize, theta=cfg.theta, fmt=cfg.fmt
        )
    encoded = encode_dataset(list(images), model.kernel, cfg)
    flat = [train for sample in encoded.samples for train in sample]
    write_spike_stream(flat, out_path, bitwidth=cfg.bitwidth)
    spikes = sum(encoded.histogram.values())
    click.echo(
        f"encoded {encoded.n_samples} samples -> {len(flat)} trains, "
        f"{spikes} spikes, b={cfg.bitwidth}, {out_path}"
    )


@main.command()
@click.option("--model", "model_path", required=True, type=_IN_PATH)
@click.option("--dataset", "dataset_path", required=True, type=_IN_PATH)
@click.option("--labels", "labels_path", type=_IN_PATH, default=None,
              help="IDX label file (guessed from the dataset name when omitted).")
@click.option("--limit", type=click.IntRange(0), default=None)
@click.option("--jobs", type=click.IntRange(1), default=None,
              help="Worker threads (default: DTSNN_THREADS or 1).")
@friendly_errors
def infer(model_path, dataset_path, labels_path, limit, jobs):
    """Classify a dataset; prints per-class prediction counts and accuracy."""
    model = load_model(model_path)
    images, labels = load_dataset(dataset_path, limit, labels_path)
    check_images_fit_model(model, images)
    counts = infer_dataset(model, list(images), jobs=jobs or default_jobs())
    results = [classify(row) for row in counts]
    if len(images) <= 16:
        for i, (row, res) in enumerate(zip(counts, results)):
            click.echo(f"sample {i}: counts={row.tolist()} -> {res.index}")
    per_class = Counter(res.index for res in results)
    for c in range(model.n_classes):
        click.echo(f"class {c}: {per_class.get(c, 0)} predicted")
    silent = sum(1 for res in results if res.no_spikes)
    click.echo(f"no-spike samples: {silent}")
    if len(images) == 0:
        click.echo("warning: evaluated 0 samples, accuracy is undefined")
        click.echo("accuracy n/a (0/0)")
        return
    if labels is None:
        click.echo("accuracy unavailable (no label file)")
        return
    hits = sum(1 for res, label in zip(results, labels) if res.index == int(label))
    click.echo(f"accuracy {hits / len(images):.2f} ({hits}/{len(images)})")


@main.group()
def stats():
    """Spike-stream reports (CSV plus a rendered figure)."""


@stats.command("hist")
@click.option("--stream", "stream_path", required=True, type=_IN_PATH)
@click.option("--out", "out_path", required=True, type=_OUT_PATH)
@click.option("--plot/--no-plot", default=True, show_default=True)
@friendly_errors
def stats_hist(stream_path, out_path, plot):
    """Histogram of spike-time differences as `difference,count`."""
    histogram = stream_histogram(read_spike_stream(stream_path))
    rows = sorted(histogram.items())
    write_csv(out_path, "difference,count", rows)
    click.echo(f"wrote {out_path} ({len(rows)} distinct differences)")
    if plot:
        from .plotting import render_histogram

        png = sibling_png(out_path)
        render_histogram(histogram, png)
        click.echo(f"wrote {png}")


@stats.command("bitwidth")
@click.option("--stream", "stream_path", required=True, type=_IN_PATH)
@click.option("--bmax", type=click.IntRange(1, 16), default=16, show_default=True)
@click.option("--out", "out_path", required=True, type=_OUT_PATH)
@click.option("--plot/--no-plot", default=True, show_default=True)
@friendly_errors
def stats_bitwidth(stream_path, bmax, out_path, plot):
    """Total encoded bits per symbol bitwidth; prints the optimum b*."""
    histogram = stream_histogram(read_spike_stream(stream_path))
    b_star, _report = optimal_bitwidth(histogram, range(1, bmax + 1))
    rows = [
        (
            b,
            formula_total_bits_from_histogram(histogram, b),
            exact_total_bits_from_histogram(histogram, b),
        )
        for b in range(1, bmax + 1)
    ]
    write_csv(out_path, "bitwidth,paper_bits,exact_bits", rows)
    click.echo(f"wrote {out_path}")
    if plot:
        from .plotting import render_bitwidth_curve

        png = sibling_png(out_path)
        render_bitwidth_curve(rows, b_star, png)
        click.echo(f"wrote {png}")
    click.echo(f"b*={b_star}")


@main.command()
@click.option("--stream", "stream_path", required=True, type=_IN_PATH)
@click.option("--out", "out_path", required=True, type=_OUT_PATH)
@friendly_errors
def merge(stream_path, out_path):
    """Merge all trains of a stream into one chronological event trace."""
    trains = read_spike_stream(stream_path)
    deltas, origins = merge_fast(trains)
    lines = ["# delta origin"]
    lines.extend(f"{d} {o}" for d, o in zip(deltas.tolist(), origins.tolist()))
    atomic_write_bytes(out_path, ("\n".join(lines) + "\n").encode("ascii"))
    click.echo(f"merged {len(trains)} trains -> {deltas.size} events, {out_path}")


@main.command()
@click.option("--model", "model_path", required=True, type=_IN_PATH)
@click.option("--dataset", "dataset_path", required=True, type=_IN_PATH)
@click.option("--limit", type=click.IntRange(0), default=None)
@click.option("--jobs", type=click.IntRange(1), default=None)
@friendly_errors
def bench(model_path, dataset_path, limit, jobs):
    """Throughput: merged first-layer events/s and inferences/s."""
    model = load_model(model_path)
    images, _ = load_dataset(dataset_path, limit)
    check_images_fit_model(model, images)
    result = bench_model(model, list(images), jobs=jobs or default_jobs())
    click.echo(f"samples:        {result.samples}")
    click.echo(f"merged events:  {result.merged_events}")
    click.echo(f"encode seconds: {result.encode_seconds:.3f}")
    click.echo(f"infer seconds:  {result.infer_seconds:.3f}")
    click.echo(f"events/s:       {result.events_per_second:,.0f}")
    click.echo(f"inferences/s:   {result.inferences_per_second:,.1f}")


def _selftest_checks():
    fixtures = resources.files("dtsnn") / "fixtures"
    golden = json.loads((fixtures / "golden.json").read_text())
    model = model_from_bytes((fixtures / "tiny.lsnn").read_bytes())

    yield "model file loads and re-saves byte-identically", lambda: (
        model_to_bytes(model) == (fixtures / "tiny.lsnn").read_bytes()
    )

    def stream_counts_match():
        trains = stream_from_bytes((fixtures / "tiny_stream.dts").read_bytes())
        deltas, origins = merge_fast(trains)
        counts = model.network().infer(zip(deltas.tolist(), origins.tolist()))
        return counts.tolist() == golden["stream_counts"]

    yield "golden stream reproduces stored spike counts", stream_counts_match

    def images_classify_perfectly():
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            img_path = os.path.join(tmp, "imgs.idx")
            lab_path = os.path.join(tmp, "labels.idx")
            with open(img_path, "wb") as f:
                f.write((fixtures / "tiny_images.idx").read_bytes())
            with open(lab_path, "wb") as f:
                f.write((fixtures / "tiny_labels.idx").read_bytes())
            images = read_idx_images(img_path)
            labels = read_idx_labels(lab_path)
        counts = infer_dataset(model, list(images), jobs=1)
        if counts.tolist() != golden["image_counts"]:
            return False
        preds = [classify(row).index for row in counts]
        return preds == [int(v) for v in labels]

    yield "golden images classify at 100% accuracy", images_classify_perfectly

    def codec_round_trips():
        rng = np.random.default_rng(12345)
        for _ in range(200):
            b = int(rng.integers(1, 13))
            diffs = rng.integers(0, 50, size=int(rng.integers(0, 30)))
            if decode_symbols(encode_differences(diffs, b)).tolist() != diffs.tolist():
                return False
        return True

    yield "codec round trips on seeded random gaps", codec_round_trips

    def merge_paths_agree():
        rng = np.random.default_rng(54321)
        for _ in range(50):
            trains = [
                encode_differences(rng.integers(0, 9, size=int(rng.integers(0, 9))), 3)
                for _ in range(int(rng.integers(1, 7)))
            ]
            deltas, origins = merge_fast(trains)
            want = merge_multiway(trains)
            if list(zip(deltas.tolist(), origins.tolist())) != [tuple(e) for e in want]:
                return False
        return True

    yield "compiled merge agrees with the reference merge", merge_paths_agree


@main.command()
def selftest():
    """Run the packaged golden-fixture checks."""
    failures = 0
    for name, check in _selftest_checks():
        try:
            passed = check()
        except Exception as exc:  # a broken fixture should not abort the rest
            passed = False
            click.echo(f"FAIL - {name}: {exc}")
            failures += 1
            continue
        if passed:
            click.echo(f"ok - {name}")
        else:
            click.echo(f"FAIL - {name}")
            failures += 1
    if failures:
        raise SystemExit(1)
    click.echo("selftest passed")


if __name__ == "__main__":
    main()
