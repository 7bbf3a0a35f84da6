"""Bit-exact file formats: .lsnn models, .dts spike streams, dataset readers.

Model files (.lsnn) are little-endian with a 4-byte magic, a u16 format
version and an explicit section table.  Sections appear in a canonical
order (META, ENCK, then one LW section per layer), so saving a loaded
model reproduces the input bytes exactly.

Spike-stream files (.dts) hold differential-time trains packed at the
stream's symbol bitwidth, LSB-first within each byte, each train padded
to a byte boundary.

Dataset readers cover the big-endian IDX image/label format and the
CIFAR-10 binary batch layout.  Every reader validates sizes before
allocating and raises a typed error on malformed input; none of them
crash on arbitrary bytes.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import DiffSpikeTrain
from .encoder import EncoderConfig, TernaryKernel, patch_grid
from .lif import FixedPointFormat, LayerWeights, Network

MODEL_MAGIC = b"LSNN"
MODEL_VERSION = 1
STREAM_MAGIC = b"DTS1"


class FileFormatError(ValueError):
    """Malformed file; base for all reader errors."""


class MagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FileFormatError):
    """Recognized file with an unsupported format version."""


class TruncationError(FileFormatError):
    """File ends before its own headers say it should."""


class InvariantError(FileFormatError):
    """Structurally readable file whose contents violate a model invariant."""


def _take(buf: bytes, offset: int, n: int) -> bytes:
    if offset + n > len(buf) or n < 0:
        raise TruncationError(f"need {n} bytes at offset {offset}, file has {len(buf)}")
    return buf[offset : offset + n]


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a temp file and rename, so failures leave no partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Network model container
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Everything needed to encode images and run inference, as one unit."""

    layer_sizes: tuple[int, ...]
    weights: tuple[LayerWeights, ...]
    kernel: TernaryKernel
    image_shape: tuple[int, int]
    theta: float = 1.0
    beta: float = 0.5
    potential_format: FixedPointFormat = FixedPointFormat(32, 16)
    codec_bitwidth: int = 2
    pixel_norm: bool = True
    provenance: str = ""
    version: int = MODEL_VERSION

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "image_shape", tuple(int(v) for v in self.image_shape))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise InvariantError("need at least two positive layer sizes")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise InvariantError("one weight matrix per layer transition required")
        for i, w in enumerate(self.weights):
            if (w.fan_in, w.fan_out) != (self.layer_sizes[i], self.layer_sizes[i + 1]):
                raise InvariantError(
                    f"layer {i} weights are {w.fan_in}x{w.fan_out}, "
                    f"sizes say {self.layer_sizes[i]}x{self.layer_sizes[i + 1]}"
                )
        fmts = {w.fmt for w in self.weights}
        if len(fmts) > 1:
            raise InvariantError("all layers must share one weight format")
        if self.beta != 0.5:
            raise InvariantError("only the halving decay rate 0.5 is supported")
        if self.theta != 1.0:
            raise InvariantError("threshold must be 1.0")
        try:
            rows, cols = patch_grid(
                *self.image_shape, self.kernel.patch_side, self.kernel.stride
            )
        except ValueError as exc:
            raise InvariantError(str(exc)) from exc
        if rows * cols != self.layer_sizes[0]:
            raise InvariantError(
                f"patch grid {rows}x{cols} does not match input fan {self.layer_sizes[0]}"
            )
        if not self.kernel.shared and self.kernel.weights.shape[0] != self.layer_sizes[0]:
            raise InvariantError("per-patch kernel row count must equal the input fan")
        if not 1 <= self.codec_bitwidth <= 16:
            raise InvariantError("codec bitwidth out of range")
        if self.version != MODEL_VERSION:
            raise VersionError(f"unsupported model version {self.version}")

    @property
    def weight_format(self) -> FixedPointFormat:
        return self.weights[0].fmt

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            bitwidth=self.codec_bitwidth,
            normalize=self.pixel_norm,
            theta=self.theta,
            fmt=self.potential_format,
        )

    def network(self) -> Network:
        return Network(list(self.weights), self.potential_format, self.theta)

    def __eq__(self, other):
        if not isinstance(other, NetworkModel):
            return NotImplemented
        return (
            self.layer_sizes == other.layer_sizes
            and len(self.weights) == len(other.weights)
            and all(
                a.fmt == b.fmt and np.array_equal(a.values, b.values)
                for a, b in zip(self.weights, other.weights)
            )
            and self.kernel.patch_side == other.kernel.patch_side
            and self.kernel.stride == other.kernel.stride
            and self.kernel.channels == other.kernel.channels
            and np.array_equal(self.kernel.weights, other.kernel.weights)
            and self.image_shape == other.image_shape
            and (self.theta, self.beta) == (other.theta, other.beta)
            and self.potential_format == other.potential_format
            and self.codec_bitwidth == other.codec_bitwidth
            and self.pixel_norm == other.pixel_norm
            and self.provenance == other.provenance
            and self.version == other.version
        )


# ---------------------------------------------------------------------------
# .lsnn serialization
# ---------------------------------------------------------------------------


def _meta_bytes(model: NetworkModel) -> bytes:
    sizes = model.layer_sizes
    provenance = model.provenance.encode("utf-8")
    parts = [struct.pack("<H", len(sizes))]
    parts.append(struct.pack(f"<{len(sizes)}I", *sizes))
    parts.append(
        struct.pack(
            "<BBBB",
            model.potential_format.total_bits,
            model.potential_format.fraction_bits,
            model.weight_format.total_bits,
            model.weight_format.fraction_bits,
        )
    )
    parts.append(struct.pack("<dd", model.theta, model.beta))
    parts.append(
        struct.pack(
            "<HHHBBHHB",
            model.kernel.patch_side,
            model.kernel.stride,
            model.kernel.channels,
            1 if model.kernel.shared else 0,
            1 if model.pixel_norm else 0,
            model.image_shape[0],
            model.image_shape[1],
            model.codec_bitwidth,
        )
    )
    parts.append(struct.pack("<I", len(provenance)))
    parts.append(provenance)
    return b"".join(parts)


def _parse_meta(payload: bytes) -> dict:
    off = 0

    def unpack(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        values = struct.unpack_from(fmt, _take(payload, off, size), 0)
        off += size
        return values

    (n_sizes,) = unpack("<H")
    if n_sizes < 2:
        raise InvariantError("model needs at least two layer sizes")
    sizes = unpack(f"<{n_sizes}I")
    p_total, p_frac, w_total, w_frac = unpack("<BBBB")
    theta, beta = unpack("<dd")
    patch_side, stride, channels, shared, pixel_norm, img_h, img_w, bitwidth = unpack("<HHHBBHHB")
    (prov_len,) = unpack("<I")
    provenance = _take(payload, off, prov_len)
    off += prov_len
    if off != len(payload):
        raise InvariantError("metadata section has trailing bytes")
    try:
        potential_format = FixedPointFormat(p_total, p_frac)
        weight_format = FixedPointFormat(w_total, w_frac)
        provenance_text = provenance.decode("utf-8")
    except ValueError as exc:  # includes UnicodeDecodeError
        raise InvariantError(str(exc)) from exc
    return {
        "sizes": tuple(int(s) for s in sizes),
        "potential_format": potential_format,
        "weight_format": weight_format,
        "theta": theta,
        "beta": beta,
        "patch_side": patch_side,
        "stride": stride,
        "channels": channels,
        "shared": bool(shared),
        "pixel_norm": bool(pixel_norm),
        "image_shape": (img_h, img_w),
        "bitwidth": bitwidth,
        "provenance": provenance_text,
    }


def model_to_bytes(model: NetworkModel) -> bytes:
    sections: list[tuple[bytes, bytes]] = [(b"META", _meta_bytes(model))]
    sections.append((b"ENCK", model.kernel.weights.astype(np.int8).tobytes()))
    for i, w in enumerate(model.weights):
        sections.append((f"LW{i:02d}".encode("ascii"), w.values.astype(np.int8).tobytes()))
    header_len = 8 + 12 * len(sections)
    table = []
    offset = header_len
    for tag, payload in sections:
        table.append(struct.pack("<4sII", tag, offset, len(payload)))
        offset += len(payload)
    return b"".join(
        [MODEL_MAGIC, struct.pack("<HH", MODEL_VERSION, len(sections))]
        + table
        + [payload for _, payload in sections]
    )


def model_from_bytes(buf: bytes) -> NetworkModel:
    if _take(buf, 0, 4) != MODEL_MAGIC:
        raise MagicError("not a model file (bad magic)")
    version, n_sections = struct.unpack("<HH", _take(buf, 4, 4))
    if version != MODEL_VERSION:
        raise VersionError(f"unsupported model version {version}")
    table_end = 8 + 12 * n_sections
    sections: list[tuple[bytes, bytes]] = []
    cursor = table_end
    for i in range(n_sections):
        tag, offset, length = struct.unpack("<4sII", _take(buf, 8 + 12 * i, 12))
        if offset != cursor:
            raise InvariantError("sections must be contiguous and in table order")
        sections.append((tag, _take(buf, offset, length)))
        cursor = offset + length
    if cursor != len(buf):
        raise TruncationError("file length does not match the section table")

    tags = [tag for tag, _ in sections]
    if len(sections) < 3 or tags[0] != b"META" or tags[1] != b"ENCK":
        raise InvariantError("canonical section order is META, ENCK, LW00..")
    meta = _parse_meta(sections[0][1])
    n_layers = len(meta["sizes"]) - 1
    expected = [f"LW{i:02d}".encode("ascii") for i in range(n_layers)]
    if tags[2:] != expected:
        raise InvariantError(f"expected layer sections {expected}, found {tags[2:]}")

    ticks = meta["channels"] * meta["patch_side"] ** 2
    n_kernels = 1 if meta["shared"] else meta["sizes"][0]
    enck = np.frombuffer(sections[1][1], dtype=np.int8)
    if enck.size != n_kernels * ticks:
        raise InvariantError(
            f"encoder section holds {enck.size} weights, expected {n_kernels * ticks}"
        )
    try:
        kernel = TernaryKernel(
            meta["patch_side"],
            enck.reshape(n_kernels, ticks),
            stride=meta["stride"],
            channels=meta["channels"],
        )
        weights = []
        for i in range(n_layers):
            fan_in, fan_out = meta["sizes"][i], meta["sizes"][i + 1]
            raw = np.frombuffer(sections[2 + i][1], dtype=np.int8)
            if raw.size != fan_in * fan_out:
                raise InvariantError(
                    f"layer {i} section holds {raw.size} weights, "
                    f"expected {fan_in * fan_out}"
                )
            weights.append(LayerWeights(raw.reshape(fan_in, fan_out), meta["weight_format"]))
        return NetworkModel(
            layer_sizes=meta["sizes"],
            weights=tuple(weights),
            kernel=kernel,
            image_shape=meta["image_shape"],
            theta=meta["theta"],
            beta=meta["beta"],
            potential_format=meta["potential_format"],
            codec_bitwidth=meta["bitwidth"],
            pixel_norm=meta["pixel_norm"],
            provenance=meta["provenance"],
        )
    except FileFormatError:
        raise
    except (ValueError, UnicodeDecodeError) as exc:
        raise InvariantError(str(exc)) from exc


def save_model(model: NetworkModel, path) -> None:
    atomic_write_bytes(path, model_to_bytes(model))


def load_model(path) -> NetworkModel:
    with open(path, "rb") as handle:
        return model_from_bytes(handle.read())


# ---------------------------------------------------------------------------
# .dts spike streams
# ---------------------------------------------------------------------------


def pack_symbols(symbols: np.ndarray, bitwidth: int) -> bytes:
    """Pack symbols at ``bitwidth`` bits each, LSB-first, byte padded."""
    if symbols.size == 0:
        return b""
    bits = ((symbols[:, np.newaxis] >> np.arange(bitwidth)) & 1).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def unpack_symbols(payload: bytes, count: int, bitwidth: int) -> np.ndarray:
    need = (count * bitwidth + 7) // 8
    if len(payload) != need:
        raise TruncationError(f"train payload is {len(payload)} bytes, expected {need}")
    if count == 0:
        return np.array([], dtype=np.int64)
    bits = np.unpackbits(
        np.frombuffer(payload, dtype=np.uint8), count=count * bitwidth, bitorder="little"
    )
    weights_of_bits = (1 << np.arange(bitwidth)).astype(np.int64)
    return bits.reshape(count, bitwidth) @ weights_of_bits


def stream_to_bytes(trains: Sequence[DiffSpikeTrain], bitwidth: int | None = None) -> bytes:
    if bitwidth is None:
        widths = {t.bitwidth for t in trains}
        if len(widths) > 1:
            raise InvariantError(f"stream mixes bitwidths {sorted(widths)}")
        bitwidth = widths.pop() if widths else 2
    if not 1 <= bitwidth <= 16:
        raise InvariantError("stream bitwidth must lie in [1, 16]")
    parts = [STREAM_MAGIC, struct.pack("<BI", bitwidth, len(trains))]
    for train in trains:
        if train.bitwidth != bitwidth:
            raise InvariantError("all trains in a stream must share its bitwidth")
        parts.append(struct.pack("<I", train.symbols.size))
        parts.append(pack_symbols(train.symbols, bitwidth))
    return b"".join(parts)


def stream_from_bytes(buf: bytes) -> list[DiffSpikeTrain]:
    if _take(buf, 0, 4) != STREAM_MAGIC:
        raise MagicError("not a spike-stream file (bad magic)")
    bitwidth, n_trains = struct.unpack("<BI", _take(buf, 4, 5))
    if not 1 <= bitwidth <= 16:
        raise InvariantError(f"stream bitwidth {bitwidth} out of range")
    trains = []
    off = 9
    for _ in range(n_trains):
        (count,) = struct.unpack("<I", _take(buf, off, 4))
        off += 4
        nbytes = (count * bitwidth + 7) // 8
        symbols = unpack_symbols(_take(buf, off, nbytes), count, bitwidth)
        off += nbytes
        trains.append(DiffSpikeTrain(bitwidth, symbols))
    if off != len(buf):
        raise TruncationError("trailing bytes after the last train")
    return trains


def write_spike_stream(trains: Sequence[DiffSpikeTrain], path, bitwidth: int | None = None) -> None:
    atomic_write_bytes(path, stream_to_bytes(trains, bitwidth))


def read_spike_stream(path) -> list[DiffSpikeTrain]:
    with open(path, "rb") as handle:
        return stream_from_bytes(handle.read())


# ---------------------------------------------------------------------------
# Dataset readers and writers
# ---------------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def read_idx_images(path) -> np.ndarray:
    """IDX image file to a [count, height, width] uint8 array."""
    with open(path, "rb") as handle:
        buf = handle.read()
    magic, count, height, width = struct.unpack(">IIII", _take(buf, 0, 16))
    if magic != IDX_IMAGES_MAGIC:
        raise MagicError(f"image magic {magic:#010x} != {IDX_IMAGES_MAGIC:#010x}")
    payload = _take(buf, 16, count * height * width)
    if len(buf) != 16 + count * height * width:
        raise TruncationError("image file longer than its header describes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, height, width)


def read_idx_labels(path) -> np.ndarray:
    """IDX label file to a [count] uint8 array of digits 0..9."""
    with open(path, "rb") as handle:
        buf = handle.read()
    magic, count = struct.unpack(">II", _take(buf, 0, 8))
    if magic != IDX_LABELS_MAGIC:
        raise MagicError(f"label magic {magic:#010x} != {IDX_LABELS_MAGIC:#010x}")
    payload = _take(buf, 8, count)
    if len(buf) != 8 + count:
        raise TruncationError("label file longer than its header describes")
    labels = np.frombuffer(payload, dtype=np.uint8)
    if labels.size and labels.max() > 9:
        raise InvariantError("labels outside the digit range 0..9")
    return labels


def write_idx_images(images: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(images, dtype=np.uint8)
    if arr.ndim != 3:
        raise ValueError("expected [count, height, width] images")
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, *arr.shape)
    atomic_write_bytes(path, header + arr.tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(labels, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("expected a flat label vector")
    if arr.size and arr.max() > 9:
        raise ValueError("labels outside the digit range 0..9")
    header = struct.pack(">II", IDX_LABELS_MAGIC, arr.size)
    atomic_write_bytes(path, header + arr.tobytes())


CIFAR_RECORD = 3073  # label byte + 3 channel planes of 32*32 bytes


def read_cifar10_bin(path) -> tuple[np.ndarray, np.ndarray]:
    """CIFAR-10 binary batch to ([count, 32, 32, 3] uint8, [count] labels)."""
    with open(path, "rb") as handle:
        buf = handle.read()
    if len(buf) % CIFAR_RECORD != 0:
        raise TruncationError(
            f"file size {len(buf)} is not a multiple of the {CIFAR_RECORD}-byte record"
        )
    records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].copy()
    if labels.size and labels.max() > 9:
        raise InvariantError("labels outside the class range 0..9")
    planes = records[:, 1:].reshape(-1, 3, 32, 32)
    images = np.ascontiguousarray(planes.transpose(0, 2, 3, 1))
    return images, labels
