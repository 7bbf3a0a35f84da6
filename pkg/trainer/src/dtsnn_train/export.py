"""Quantization and model export.

Hard-ternarizes the encoder kernel, rounds layer weights to Q6 raw
integers, re-evaluates the quantized network, and writes the sectioned
little-endian .lsnn container the inference engine loads.  The writer
is self-contained on purpose: the file format is the contract between
the two packages, not a shared module.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .network import WEIGHT_LIMIT, WEIGHT_ONE, TrainedParams, evaluate, ternarize_array

MODEL_MAGIC = b"LSNN"
MODEL_VERSION = 1
POTENTIAL_FORMAT = (32, 16)
WEIGHT_FORMAT = (8, 6)
THETA = 1.0
BETA = 0.5
CODEC_BITWIDTH = 2


class ExportOverflowError(ValueError):
    """Rounded weights left the representable Q6 range; lists offenders."""


@dataclass(frozen=True)
class ExportReport:
    model_path: str
    metrics_path: str
    float_test_accuracy: float | None
    quantized_test_accuracy: float | None

    @property
    def accuracy_drop(self) -> float | None:
        if self.float_test_accuracy is None or self.quantized_test_accuracy is None:
            return None
        return self.float_test_accuracy - self.quantized_test_accuracy


def quantize_weights(weights: list[np.ndarray]) -> list[np.ndarray]:
    """Round float matrices to Q6 raw int8; overflow is an error, not a clamp."""
    quantized = []
    offenders = []
    for layer, w in enumerate(weights):
        raw = np.rint(np.asarray(w, dtype=np.float64) * WEIGHT_ONE).astype(np.int64)
        bad = np.argwhere(np.abs(raw) > WEIGHT_LIMIT)
        for row, col in bad[:8]:
            offenders.append(f"layer {layer} [{row},{col}]={w[row, col]:+.4f}")
        quantized.append(raw.astype(np.int8))
    if offenders:
        raise ExportOverflowError(
            "weights outside ±127/64 after rounding: " + "; ".join(offenders)
        )
    return quantized


def _meta_bytes(params: TrainedParams, provenance: str) -> bytes:
    cfg = params.config
    sizes = cfg.architecture
    prov = provenance.encode("utf-8")
    parts = [struct.pack("<H", len(sizes)), struct.pack(f"<{len(sizes)}I", *sizes)]
    parts.append(struct.pack("<BBBB", *POTENTIAL_FORMAT, *WEIGHT_FORMAT))
    parts.append(struct.pack("<dd", THETA, BETA))
    parts.append(
        struct.pack(
            "<HHHBBHHB",
            cfg.patch_side,
            cfg.stride,
            1,  # channels: the trainer covers grayscale inputs
            1,  # shared kernel
            1,  # engine-side pixel normalization
            cfg.image_shape[0],
            cfg.image_shape[1],
            CODEC_BITWIDTH,
        )
    )
    parts.append(struct.pack("<I", len(prov)))
    parts.append(prov)
    return b"".join(parts)


def model_bytes(params: TrainedParams, provenance: str = "dtsnn-train") -> bytes:
    """Serialize quantized parameters into the engine's .lsnn container."""
    kernel = ternarize_array(params.kernel, params.config.ternary_temperature)
    layer_weights = quantize_weights(params.weights)
    sections = [(b"META", _meta_bytes(params, provenance))]
    sections.append((b"ENCK", kernel.reshape(1, -1).tobytes()))
    for i, raw in enumerate(layer_weights):
        sections.append((f"LW{i:02d}".encode("ascii"), raw.tobytes()))
    header_len = 8 + 12 * len(sections)
    table, offset = [], header_len
    for tag, payload in sections:
        table.append(struct.pack("<4sII", tag, offset, len(payload)))
        offset += len(payload)
    return b"".join(
        [MODEL_MAGIC, struct.pack("<HH", MODEL_VERSION, len(sections))]
        + table
        + [payload for _, payload in sections]
    )


def quantize_and_export(
    params: TrainedParams,
    path: str,
    dataset: Dataset | None = None,
    metrics: dict | None = None,
    metrics_path: str | None = None,
) -> ExportReport:
    """Write the .lsnn model plus a JSON metrics log next to it.

    When a dataset is given, the quantized network is re-evaluated on
    its test split so the log records the float-to-quantized accuracy
    drop.
    """
    payload = model_bytes(params)
    with open(path, "wb") as f:
        f.write(payload)

    float_accuracy = (metrics or {}).get("float_test_accuracy")
    quantized_accuracy = None
    if dataset is not None:
        _, quantized_accuracy = evaluate(
            params.to_net(quantized=True), dataset.test_images, dataset.test_labels
        )
    metrics_path = metrics_path or path + ".json"
    report = ExportReport(path, metrics_path, float_accuracy, quantized_accuracy)
    log = dict(metrics or {})
    log.update(
        {
            "model_path": path,
            "quantized_test_accuracy": quantized_accuracy,
            "accuracy_drop": report.accuracy_drop,
            "weight_one": WEIGHT_ONE,
            "codec_bitwidth": CODEC_BITWIDTH,
        }
    )
    with open(metrics_path, "w", encoding="ascii") as f:
        json.dump(log, f, indent=2, sort_keys=True)
        f.write("\n")
    return report
