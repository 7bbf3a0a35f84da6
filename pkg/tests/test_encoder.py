"""Patch serialization and ternary-LIF encoding against a float oracle."""

from collections import Counter

import numpy as np
import pytest

from dtsnn.codec import EmptyInputError, decode_symbols, optimal_bitwidth, to_absolute
from dtsnn.encoder import (
    EncoderConfig,
    TernaryKernel,
    _run_patch_neurons,
    encode_dataset,
    encode_image,
    extract_patches,
    patch_grid,
    pixel_values,
    random_kernel,
)
from dtsnn.lif import FanMismatchError, FixedPointFormat, LayerWeights, Network

# ---------------------------------------------------------------------------
# Oracle: one patch neuron in float64.  The potential halves each tick, adds
# w_j * x_j, and fires (soft reset) on P >= theta.  Pixel values are the
# quantized magnitudes the engine consumes, expressed in float, so the only
# divergence from fixed point is shift truncation.
# ---------------------------------------------------------------------------


def oracle_patch_spikes(values_raw, kernel_row, theta=1.0, one=65536):
    p = 0.0
    times = []
    margin = float("inf")
    for j, (x, w) in enumerate(zip(values_raw, kernel_row)):
        p = p * 0.5 + int(w) * (int(x) / one)
        margin = min(margin, abs(p - theta))
        if p >= theta:
            times.append(j)
            p -= theta
    return times, margin


def spike_times(train):
    return to_absolute(train).times.tolist() if train.symbols.size else []


# ---------------------------------------------------------------------------
# Patch extraction
# ---------------------------------------------------------------------------


def test_grid_28x28_side9_stride1_is_400():
    assert patch_grid(28, 28, 9) == (20, 20)
    img = np.zeros((28, 28), dtype=np.uint8)
    patches = extract_patches(img, 9)
    assert patches.shape == (400, 81)


def test_grid_28x28_side3_is_676():
    assert extract_patches(np.zeros((28, 28)), 3).shape == (676, 9)


def test_patch_covering_whole_image_is_single():
    img = np.arange(16).reshape(4, 4)
    patches = extract_patches(img, 4)
    assert patches.shape == (1, 16)
    assert patches[0].tolist() == list(range(16))


def test_patch_side_larger_than_image_rejected():
    with pytest.raises(ValueError):
        extract_patches(np.zeros((3, 3)), 4)


def test_serialization_row_major_within_and_across_patches():
    img = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    patches = extract_patches(img, 2)
    assert patches.tolist() == [
        [1, 2, 4, 5],
        [2, 3, 5, 6],
        [4, 5, 7, 8],
        [5, 6, 8, 9],
    ]


def test_stride_subsamples_grid():
    img = np.arange(25).reshape(5, 5)
    patches = extract_patches(img, 3, stride=2)
    assert patches.shape == (4, 9)
    assert patches[0][0] == 0 and patches[1][0] == 2
    assert patches[2][0] == 10 and patches[3][0] == 12


def test_channels_serialize_one_after_another():
    img = np.stack([np.full((2, 2), 1), np.full((2, 2), 2), np.full((2, 2), 3)], axis=2)
    patches = extract_patches(img, 2)
    assert patches.shape == (1, 12)
    assert patches[0].tolist() == [1] * 4 + [2] * 4 + [3] * 4


# ---------------------------------------------------------------------------
# Kernel and config validation
# ---------------------------------------------------------------------------


def test_kernel_rejects_values_outside_ternary_set():
    with pytest.raises(ValueError):
        TernaryKernel(2, np.array([[0, 1, 2, 0]]))


def test_kernel_rejects_wrong_width():
    with pytest.raises(ValueError):
        TernaryKernel(3, np.ones((1, 8), dtype=np.int8))


def test_per_patch_kernel_row_count_must_match_grid():
    kernel = TernaryKernel(2, np.ones((3, 4), dtype=np.int8))
    assert not kernel.shared
    with pytest.raises(FanMismatchError):
        encode_image(np.zeros((3, 3)), kernel)


def test_channel_count_mismatch_rejected():
    kernel = TernaryKernel(2, np.ones((1, 12), dtype=np.int8), channels=3)
    with pytest.raises(FanMismatchError):
        encode_image(np.zeros((4, 4)), kernel)


def test_pixel_normalization_endpoints():
    cfg = EncoderConfig()
    vals = pixel_values(np.array([[0, 255, 128]]), cfg)
    assert vals.tolist() == [[0, 65536, 32897]]  # 128/255 rounded to Q16
    raw_cfg = EncoderConfig(normalize=False)
    assert pixel_values(np.array([[3]]), raw_cfg).tolist() == [[3 << 16]]


# ---------------------------------------------------------------------------
# Image encoding
# ---------------------------------------------------------------------------


def test_all_zero_image_encodes_to_empty_trains():
    kernel = random_kernel(3, rng=np.random.default_rng(0))
    trains = encode_image(np.zeros((5, 5), dtype=np.uint8), kernel)
    assert len(trains) == 9
    assert all(t.symbols.size == 0 for t in trains)
    assert all(t.bitwidth == 2 for t in trains)


def test_all_ones_patch_all_plus_kernel_fires_every_tick():
    # Normalized 255 is exactly 1.0 = theta, so the neuron fires at tick 0
    # and at every tick after it.
    side = 3
    kernel = TernaryKernel(side, np.ones((1, side * side), dtype=np.int8))
    trains = encode_image(np.full((side, side), 255, dtype=np.uint8), kernel)
    assert len(trains) == 1
    assert spike_times(trains[0]) == list(range(side * side))
    assert decode_symbols(trains[0]).tolist() == [0] + [1] * (side * side - 1)


def test_nine_by_nine_patch_matches_float_oracle():
    rng = np.random.default_rng(42)
    cfg = EncoderConfig()
    checked = 0
    while checked < 30:
        img = rng.integers(0, 256, size=(9, 9)).astype(np.uint8)
        kernel = random_kernel(9, rng=rng)
        values = pixel_values(extract_patches(img, 9), cfg)[0]
        want, margin = oracle_patch_spikes(values, kernel.weights[0])
        if margin < 5e-3:
            continue
        trains = encode_image(img, kernel, cfg)
        assert spike_times(trains[0]) == want
        checked += 1


def test_spike_times_never_exceed_timeline():
    rng = np.random.default_rng(1)
    for _ in range(20):
        side = int(rng.integers(2, 6))
        h = side + int(rng.integers(0, 4))
        w = side + int(rng.integers(0, 4))
        img = rng.integers(0, 256, size=(h, w)).astype(np.uint8)
        kernel = random_kernel(side, rng=rng, zero_fraction=0.0)
        for train in encode_image(img, kernel):
            times = spike_times(train)
            if times:
                assert 0 <= times[0] and times[-1] <= side * side - 1


def test_configured_bitwidth_applies_to_all_trains():
    img = np.full((4, 4), 200, dtype=np.uint8)
    kernel = random_kernel(2, rng=np.random.default_rng(3), zero_fraction=0.0)
    for b in (1, 2, 5):
        trains = encode_image(img, kernel, EncoderConfig(bitwidth=b))
        assert all(t.bitwidth == b for t in trains)


def test_encoder_equals_single_neuron_lif_run():
    # One patch as a sequence of weighted events at consecutive ticks must
    # reproduce the core engine's single-neuron trace exactly.
    rng = np.random.default_rng(5)
    wide = FixedPointFormat(32, 16)
    for _ in range(10):
        side = 4
        img = rng.integers(0, 256, size=(side, side)).astype(np.uint8)
        kernel = random_kernel(side, rng=rng)
        values = pixel_values(extract_patches(img, side), EncoderConfig())[0]
        signed = (values * kernel.weights[0]).reshape(-1, 1)
        net = Network([LayerWeights(signed, wide)])
        ticks = side * side
        events = [(0 if j == 0 else 1, j) for j in range(ticks)]
        _, out = net.infer(events, return_events=True)
        trains = encode_image(img, kernel)
        assert [t for t, _ in out] == spike_times(trains[0])


def test_multiplier_free_arithmetic_trace():
    # Run the real tick loop on guarded integers that abort on any multiply
    # or divide; spike times must match the plain integer run.
    class GuardedInt:
        __slots__ = ("v",)

        def __init__(self, v):
            self.v = int(v)

        @staticmethod
        def _val(o):
            return o.v if isinstance(o, GuardedInt) else int(o)

        def __add__(self, o):
            return GuardedInt(self.v + self._val(o))

        __radd__ = __add__

        def __sub__(self, o):
            return GuardedInt(self.v - self._val(o))

        def __rsub__(self, o):
            return GuardedInt(self._val(o) - self.v)

        def __neg__(self):
            return GuardedInt(-self.v)

        def __rshift__(self, o):
            return GuardedInt(self.v >> self._val(o))

        def __lshift__(self, o):
            return GuardedInt(self.v << self._val(o))

        def __ge__(self, o):
            return self.v >= self._val(o)

        def __gt__(self, o):
            return self.v > self._val(o)

        def __le__(self, o):
            return self.v <= self._val(o)

        def __lt__(self, o):
            return self.v < self._val(o)

        def __eq__(self, o):
            return self.v == self._val(o)

        def _forbidden(self, *_):
            raise AssertionError("encoder arithmetic used a multiplier")

        __mul__ = __rmul__ = __truediv__ = __rtruediv__ = _forbidden
        __floordiv__ = __rfloordiv__ = __mod__ = __pow__ = _forbidden

    rng = np.random.default_rng(6)
    img = rng.integers(0, 256, size=(5, 5)).astype(np.uint8)
    kernel = random_kernel(3, rng=rng)
    values = pixel_values(extract_patches(img, 3), EncoderConfig())
    guarded = np.empty(values.shape, dtype=object)
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            guarded[i, j] = GuardedInt(values[i, j])
    weights = kernel.rows_for(values.shape[0])
    plain = _run_patch_neurons(values, weights, 65536)
    traced = _run_patch_neurons(guarded, weights, 65536)
    assert [t.tolist() for t in plain] == [t.tolist() for t in traced]


# ---------------------------------------------------------------------------
# Dataset encoding
# ---------------------------------------------------------------------------


def test_dataset_histogram_matches_per_train_decodes():
    rng = np.random.default_rng(7)
    images = [rng.integers(0, 256, size=(6, 6)).astype(np.uint8) for _ in range(10)]
    kernel = random_kernel(3, rng=rng, zero_fraction=0.0)
    encoded = encode_dataset(images, kernel)
    assert encoded.n_samples == 10
    assert all(len(s) == 16 for s in encoded.samples)
    want = Counter()
    for sample in encoded.samples:
        for train in sample:
            want.update(decode_symbols(train).tolist())
    assert encoded.histogram == want
    assert sum(want.values()) > 0
    b_star, report = optimal_bitwidth(encoded.histogram)
    assert report.histogram == dict(encoded.histogram) and b_star >= 1


def test_empty_dataset_encodes_to_empty_histogram():
    encoded = encode_dataset([], random_kernel(2, rng=np.random.default_rng(8)))
    assert encoded.n_samples == 0
    assert encoded.histogram == Counter()
    with pytest.raises(EmptyInputError):
        optimal_bitwidth(encoded.histogram)


def test_dataset_shape_mismatch_rejected():
    kernel = random_kernel(2, rng=np.random.default_rng(9))
    images = [np.zeros((4, 4)), np.zeros((5, 4))]
    with pytest.raises(ValueError):
        encode_dataset(images, kernel)


def test_three_channel_image_timeline_is_channel_serial():
    # A pixel bright only in the last channel can still fire, at a tick in
    # the third channel block of the serialized window.
    img = np.zeros((3, 3, 3), dtype=np.uint8)
    img[:, :, 2] = 255
    kernel = TernaryKernel(3, np.ones((1, 27), dtype=np.int8), channels=3)
    trains = encode_image(img, kernel)
    times = spike_times(trains[0])
    assert times and times[0] >= 18  # first two channel blocks are silent
    assert times[-1] <= 26
