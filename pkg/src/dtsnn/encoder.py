"""Learned ternary encoding: image patches to differential-time spike trains.

Each image is cut into square patches on a regular grid.  A patch is
serialized pixel by pixel (row-major, channel blocks one after another)
and the sequence drives one LIF neuron for one tick per pixel: the
potential halves, then the pixel value is added, subtracted or skipped
according to a ternary weight, then the threshold fires at most one
spike.  The spike times of that neuron, on the shared 0..T-1 tick
timeline, become the patch's differential-time train.

Because the weights are limited to {-1, 0, +1}, the entire front end
needs no multiplier: a weight only selects between add, subtract and
skip.  All patches can share one kernel (the default, one parameter set
like a convolution) or carry a kernel each.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .codec import DiffSpikeTrain, decode_symbols, encode_differences
from .lif import POTENTIAL_FORMAT, FanMismatchError, FixedPointFormat

DEFAULT_ENCODER_BITWIDTH = 2


@dataclass(frozen=True)
class TernaryKernel:
    """Per-tick weights in {-1, 0, +1} for the patch-serializing neurons.

    ``weights`` has shape [n_kernels, channels * patch_side**2]; one row
    means every patch shares that row, otherwise one row per patch.
    """

    patch_side: int
    weights: np.ndarray
    stride: int = 1
    channels: int = 1

    def __post_init__(self):
        if self.patch_side < 1 or self.stride < 1 or self.channels < 1:
            raise ValueError("patch side, stride and channels must be positive")
        w = np.ascontiguousarray(self.weights, dtype=np.int8)
        if w.ndim != 2 or w.shape[1] != self.ticks:
            raise ValueError(
                f"kernel needs shape [n, {self.ticks}] for side {self.patch_side}"
            )
        if w.size and np.abs(w).max() > 1:
            raise ValueError("kernel weights are limited to -1, 0, +1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def ticks(self) -> int:
        """Serialized patch length: one tick per pixel per channel."""
        return self.channels * self.patch_side * self.patch_side

    @property
    def shared(self) -> bool:
        return self.weights.shape[0] == 1

    def rows_for(self, n_patches: int) -> np.ndarray:
        """Weight rows aligned with the patch grid, [n_patches, ticks]."""
        if self.shared:
            return np.broadcast_to(self.weights, (n_patches, self.ticks))
        if self.weights.shape[0] != n_patches:
            raise FanMismatchError(
                f"kernel has {self.weights.shape[0]} rows for {n_patches} patches"
            )
        return self.weights


@dataclass(frozen=True)
class EncoderConfig:
    """Front-end neuron parameters; decay is fixed at one halving per tick."""

    bitwidth: int = DEFAULT_ENCODER_BITWIDTH
    normalize: bool = True  # map raw bytes [0,255] to [0,1]; off: value = byte
    theta: float = 1.0
    fmt: FixedPointFormat = POTENTIAL_FORMAT

    @property
    def theta_raw(self) -> int:
        return self.fmt.to_raw(self.theta)


def patch_grid(height: int, width: int, patch_side: int, stride: int = 1) -> tuple[int, int]:
    """Patch grid dimensions (rows, cols) for one image plane."""
    if patch_side > height or patch_side > width:
        raise ValueError(f"patch side {patch_side} exceeds image {height}x{width}")
    return ((height - patch_side) // stride + 1, (width - patch_side) // stride + 1)


def extract_patches(image: np.ndarray, patch_side: int, stride: int = 1) -> np.ndarray:
    """Serialize all patches of an image, [n_patches, channels * side**2].

    Patches run row-major over the grid.  Within a patch the channels come
    one after another, each channel's pixels row-major, matching the tick
    order of the encoding neurons.
    """
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, np.newaxis]
    if img.ndim != 3:
        raise ValueError("image must be HxW or HxWxC")
    h, w, c = img.shape
    rows, cols = patch_grid(h, w, patch_side, stride)
    windows = np.lib.stride_tricks.sliding_window_view(img, (patch_side, patch_side), axis=(0, 1))
    windows = windows[::stride, ::stride]  # [rows, cols, C, p, p]
    serialized = windows.reshape(rows * cols, c * patch_side * patch_side)
    return np.ascontiguousarray(serialized)


def pixel_values(patches: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """Fixed-point pixel magnitudes in the configured potential format."""
    px = np.asarray(patches, dtype=np.int64)
    if cfg.normalize:
        # 0..255 -> 0.0..1.0: scale in exact int64, divide once, round to raw.
        return np.rint(px * cfg.fmt.one / 255.0).astype(np.int64)
    return px << cfg.fmt.fraction_bits


def encode_image(
    image: np.ndarray, kernel: TernaryKernel, cfg: EncoderConfig | None = None
) -> list[DiffSpikeTrain]:
    """Run every patch neuron over the serialized pixels; one train per patch."""
    cfg = cfg or EncoderConfig()
    img = np.asarray(image)
    img_channels = 1 if img.ndim == 2 else img.shape[2]
    if img_channels != kernel.channels:
        raise FanMismatchError(
            f"kernel expects {kernel.channels} channels, image has {img_channels}"
        )
    patches = extract_patches(img, kernel.patch_side, kernel.stride)
    values = pixel_values(patches, cfg)
    weights = kernel.rows_for(patches.shape[0])
    fired = _run_patch_neurons(values, weights, cfg.theta_raw)
    return [
        encode_differences(np.diff(times, prepend=0), cfg.bitwidth)
        if times.size
        else DiffSpikeTrain(cfg.bitwidth, np.array([], dtype=np.int64))
        for times in fired
    ]


def _run_patch_neurons(values, weights, theta_raw) -> list[np.ndarray]:
    """Tick loop shared by every patch neuron; returns spike times per patch.

    Pixel magnitudes stay at or below their byte range, so with a decaying
    potential |P| never approaches the format bounds and no saturation step
    is needed.  The arithmetic is selects, adds, shifts and compares only.
    """
    n_patches, ticks = values.shape
    potentials = np.zeros(n_patches, dtype=values.dtype)
    spike_ticks: list[list[int]] = [[] for _ in range(n_patches)]
    for j in range(ticks):
        potentials = potentials >> 1
        col = values[:, j]
        contribution = np.where(
            weights[:, j] > 0, col, np.where(weights[:, j] < 0, -col, np.zeros_like(col))
        )
        potentials = potentials + contribution
        fired = np.asarray(potentials >= theta_raw, dtype=bool)
        potentials = np.where(fired, potentials - theta_raw, potentials)
        for i in np.flatnonzero(fired):
            spike_ticks[i].append(j)
    return [np.asarray(t, dtype=np.int64) for t in spike_ticks]


@dataclass
class EncodedDataset:
    """All per-sample train sets plus the corpus-wide difference histogram."""

    samples: list[list[DiffSpikeTrain]]
    histogram: Counter

    @property
    def n_samples(self) -> int:
        return len(self.samples)


def encode_dataset(
    images: Iterable[np.ndarray],
    kernel: TernaryKernel,
    cfg: EncoderConfig | None = None,
) -> EncodedDataset:
    """Encode every image and accumulate the global difference histogram."""
    cfg = cfg or EncoderConfig()
    samples: list[list[DiffSpikeTrain]] = []
    histogram: Counter = Counter()
    shape = None
    for image in images:
        img = np.asarray(image)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise ValueError(f"image shape {img.shape} differs from first {shape}")
        trains = encode_image(img, kernel, cfg)
        samples.append(trains)
        for train in trains:
            histogram.update(decode_symbols(train).tolist())
    return EncodedDataset(samples, histogram)


def random_kernel(
    patch_side: int,
    channels: int = 1,
    n_kernels: int = 1,
    rng: np.random.Generator | None = None,
    zero_fraction: float = 0.2,
) -> TernaryKernel:
    """Uniform random ternary kernel, handy for fixtures and smoke tests."""
    rng = rng or np.random.default_rng()
    ticks = channels * patch_side * patch_side
    w = rng.choice(
        np.array([-1, 0, 1], dtype=np.int8),
        size=(n_kernels, ticks),
        p=[(1 - zero_fraction) / 2, zero_fraction, (1 - zero_fraction) / 2],
    )
    return TernaryKernel(patch_side, w, channels=channels)
