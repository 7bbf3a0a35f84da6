"""Differentiable model of the event-driven spiking pipeline.

The forward pass simulates the same dynamics the inference engine
applies to its merged event stream: binary decay per tick, weighted
spike accumulation, one threshold decision per timestamp with soft
reset, and layers that are only evaluated at ticks where at least one
input event arrives.  Keeping that last gate in the training graph is
what lets a trained float model survive quantization and replay
bit-for-bit semantics in the engine within a fraction of a point.

Spike decisions use a fast-sigmoid surrogate derivative; the encoder
kernel passes through a hard ternary projection with a straight-through
gradient so it lands exactly on {-1, 0, 1} at export time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

THETA = 1.0
DECAY = 0.5
WEIGHT_ONE = 64  # Q6 fraction scaling used by the engine
WEIGHT_LIMIT = 127  # symmetric raw bound; -128 is never produced
WEIGHT_RANGE = WEIGHT_LIMIT / WEIGHT_ONE


class ConfigError(ValueError):
    """TrainConfig fields that cannot describe a runnable model."""


@dataclass(frozen=True)
class TrainConfig:
    """Architecture plus optimization knobs for one training run.

    The first architecture entry must equal the number of patches the
    image grid produces; the encoder contributes one spike train per
    patch.  The default is the desk-scale 400-128-10 stack on 28x28
    images with a shared 9x9 ternary kernel.
    """

    architecture: tuple[int, ...] = (400, 128, 10)
    patch_side: int = 9
    stride: int = 1
    image_shape: tuple[int, int] = (28, 28)
    epochs: int = 5
    batch_size: int = 128
    learning_rate: float = 5e-3
    seed: int = 0
    surrogate_slope: float = 2.0
    ternary_temperature: float = 0.5

    def __post_init__(self):
        if len(self.architecture) < 2 or min(self.architecture) < 1:
            raise ConfigError("architecture needs at least two positive sizes")
        if self.patch_side < 1 or self.stride < 1:
            raise ConfigError("patch side and stride must be positive")
        h, w = self.image_shape
        if self.patch_side > h or self.patch_side > w:
            raise ConfigError("patch does not fit inside the image")
        rows, cols = self.patch_grid
        if rows * cols != self.architecture[0]:
            raise ConfigError(
                f"architecture input fan {self.architecture[0]} does not match "
                f"the {rows}x{cols}={rows * cols} patch grid"
            )
        if not 0 < self.ternary_temperature < 1:
            raise ConfigError("ternary temperature must sit strictly inside (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs, batch size and learning rate must be positive")

    @property
    def patch_grid(self) -> tuple[int, int]:
        h, w = self.image_shape
        return (
            (h - self.patch_side) // self.stride + 1,
            (w - self.patch_side) // self.stride + 1,
        )

    @property
    def ticks(self) -> int:
        return self.patch_side * self.patch_side


class _SurrogateSpike(torch.autograd.Function):
    """Heaviside forward, fast-sigmoid derivative 1/(slope*|v|+1)^2 backward."""

    @staticmethod
    def forward(ctx, v: torch.Tensor, slope: float) -> torch.Tensor:
        ctx.save_for_backward(v)
        ctx.slope = slope
        return (v >= 0).to(v.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (v,) = ctx.saved_tensors
        grad = grad_output / (ctx.slope * v.abs() + 1.0) ** 2
        return grad, None


class _TernaryProject(torch.autograd.Function):
    """Hard {-1, 0, 1} projection with a straight-through gradient."""

    @staticmethod
    def forward(ctx, w: torch.Tensor, temperature: float) -> torch.Tensor:
        zero = torch.zeros_like(w)
        return torch.where(w > temperature, 1.0, torch.where(w < -temperature, -1.0, zero))

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output, None


def spike(v: torch.Tensor, slope: float) -> torch.Tensor:
    return _SurrogateSpike.apply(v, slope)


def ternary(w: torch.Tensor, temperature: float) -> torch.Tensor:
    return _TernaryProject.apply(w, temperature)


def ternarize_array(kernel: np.ndarray, temperature: float) -> np.ndarray:
    """Numpy twin of the forward projection, used at export time."""
    out = np.zeros_like(kernel, dtype=np.int8)
    out[kernel > temperature] = 1
    out[kernel < -temperature] = -1
    return out


def extract_patches(images: torch.Tensor, patch_side: int, stride: int) -> torch.Tensor:
    """[n, H, W] uint8 images to [n, patches, ticks] float drive values in [0, 1].

    Patches are taken row-major across the grid and serialized row-major
    inside each patch, matching the engine's tick order.
    """
    x = images.to(torch.float32) / 255.0
    windows = x.unfold(1, patch_side, stride).unfold(2, patch_side, stride)
    n, rows, cols = windows.shape[:3]
    return windows.reshape(n, rows * cols, patch_side * patch_side)


class SpikingNet(nn.Module):
    """Encoder kernel plus dense LIF stack, simulated tick by tick."""

    def __init__(self, config: TrainConfig):
        super().__init__()
        self.config = config
        # positive-leaning start: a kernel with dead ticks everywhere keeps
        # the event-presence gates shut and starves every layer of gradient
        self.kernel_raw = nn.Parameter(torch.empty(config.ticks).uniform_(0.25, 1.0))
        layers = []
        for fan_in, fan_out in zip(config.architecture, config.architecture[1:]):
            linear = nn.Linear(fan_in, fan_out, bias=False)
            # spiking drive needs larger-than-default weights to reach theta
            nn.init.uniform_(linear.weight, -2.0 / fan_in**0.5, 2.0 / fan_in**0.5)
            layers.append(linear)
        self.layers = nn.ModuleList(layers)

    def clamp_(self) -> None:
        """Keep parameters inside the exportable range after each step."""
        with torch.no_grad():
            self.kernel_raw.clamp_(-1.0, 1.0)
            for linear in self.layers:
                linear.weight.clamp_(-WEIGHT_RANGE, WEIGHT_RANGE)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        """Spike counts per class, [batch, n_classes]."""
        cfg = self.config
        batch, n_patches, ticks = patches.shape
        w_enc = ternary(self.kernel_raw, cfg.ternary_temperature)
        drive = patches * w_enc
        mem_enc = patches.new_zeros(batch, n_patches)
        mems = [patches.new_zeros(batch, n) for n in cfg.architecture[1:]]
        counts = patches.new_zeros(batch, cfg.architecture[-1])
        for t in range(ticks):
            mem_enc = DECAY * mem_enc + drive[:, :, t]
            s = spike(mem_enc - THETA, cfg.surrogate_slope)
            mem_enc = mem_enc - s
            # a layer only reaches a threshold decision at ticks where it
            # receives at least one event, exactly like the engine
            present = (s.detach().sum(dim=1, keepdim=True) > 0).to(s.dtype)
            x = s
            for i, linear in enumerate(self.layers):
                mems[i] = DECAY * mems[i] + linear(x)
                fired = present * spike(mems[i] - THETA, cfg.surrogate_slope)
                mems[i] = mems[i] - fired
                present = (fired.detach().sum(dim=1, keepdim=True) > 0).to(s.dtype)
                x = fired
            counts = counts + x
        return counts


@dataclass
class TrainedParams:
    """Float parameters of a finished run plus the config that produced them."""

    config: TrainConfig
    kernel: np.ndarray  # [ticks] float
    weights: list[np.ndarray] = field(default_factory=list)  # [fan_in, fan_out] float

    @classmethod
    def from_net(cls, net: SpikingNet) -> "TrainedParams":
        kernel = net.kernel_raw.detach().cpu().numpy().astype(np.float64)
        weights = [
            linear.weight.detach().cpu().numpy().T.astype(np.float64)
            for linear in net.layers
        ]
        return cls(net.config, kernel, weights)

    def to_net(self, quantized: bool = False) -> SpikingNet:
        """Rebuild a runnable module; `quantized` snaps weights to Q6 values."""
        net = SpikingNet(self.config)
        with torch.no_grad():
            net.kernel_raw.copy_(torch.from_numpy(self.kernel).to(torch.float32))
            for linear, w in zip(net.layers, self.weights):
                values = np.rint(w * WEIGHT_ONE) / WEIGHT_ONE if quantized else w
                linear.weight.copy_(torch.from_numpy(values.T).to(torch.float32))
        return net


def evaluate(
    net: SpikingNet,
    images: np.ndarray,
    labels: np.ndarray | None = None,
    batch_size: int = 256,
) -> tuple[np.ndarray, float | None]:
    """Predictions for every image, plus accuracy when labels are given."""
    net.eval()
    cfg = net.config
    tensor = torch.from_numpy(np.ascontiguousarray(images))
    predictions = np.empty(len(images), dtype=np.int64)
    with torch.no_grad():
        for lo in range(0, len(images), batch_size):
            chunk = tensor[lo : lo + batch_size]
            counts = net(extract_patches(chunk, cfg.patch_side, cfg.stride))
            predictions[lo : lo + len(chunk)] = counts.argmax(dim=1).numpy()
    if labels is None:
        return predictions, None
    return predictions, float((predictions == np.asarray(labels)).mean())
