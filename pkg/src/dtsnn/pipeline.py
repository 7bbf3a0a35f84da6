"""End-to-end inference pipeline with compiled hot loops.

The readable operations in `merger` and `lif` define the semantics; this
module reimplements the two hot paths as JIT-compiled kernels over flat
arrays and is property-tested to match them event for event:

- stream merging runs a binary heap over each train's next spike time,
  which is the repeated-minimum procedure with the subtractions strength-
  reduced to absolute-time comparisons;
- layer integration walks the merged events once, batching simultaneous
  spikes per timestamp.

If the JIT compiler is unavailable the same functions run as plain
Python, slower but identical.  Sample-level parallelism uses threads;
the kernels hold no shared state and release the interpreter lock.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import DiffSpikeTrain
from .encoder import encode_image
from .lif import AddressingError, Network
from .merger import IncompatibleTrainsError
from .model_io import NetworkModel

try:
    from numba import njit

    JIT_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    JIT_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def decorate(func):
            return func

        return decorate


THREADS_ENV_VAR = "DTSNN_THREADS"


def default_jobs() -> int:
    value = os.environ.get(THREADS_ENV_VAR, "").strip()
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return 1


# ---------------------------------------------------------------------------
# Flat-array stream merging
# ---------------------------------------------------------------------------


def trains_to_arrays(trains: Sequence[DiffSpikeTrain]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate train symbols with an offsets index, [off[i], off[i+1])."""
    offsets = np.zeros(len(trains) + 1, dtype=np.int64)
    for i, train in enumerate(trains):
        offsets[i + 1] = offsets[i] + train.symbols.size
    if trains:
        symbols = np.concatenate([t.symbols for t in trains])
    else:
        symbols = np.array([], dtype=np.int64)
    return symbols.astype(np.int64), offsets


@njit(cache=True, nogil=True)
def _advance_stream(symbols, offsets, pos, t_next, i, overflow):
    """Move stream i to its next spike; False when only padding remains."""
    t = t_next[i]
    while pos[i] < offsets[i + 1]:
        s = symbols[pos[i]]
        pos[i] += 1
        t += s
        if s != overflow:
            t_next[i] = t
            return True
    t_next[i] = t
    return False


@njit(cache=True, nogil=True)
def _heap_less(t_next, a, b):
    # Chronological order; simultaneous spikes go to the lower train index.
    return t_next[a] < t_next[b] or (t_next[a] == t_next[b] and a < b)


@njit(cache=True, nogil=True)
def _sift_down(heap, size, root, t_next):
    while True:
        child = 2 * root + 1
        if child >= size:
            return
        if child + 1 < size and _heap_less(t_next, heap[child + 1], heap[child]):
            child += 1
        if _heap_less(t_next, heap[child], heap[root]):
            heap[root], heap[child] = heap[child], heap[root]
            root = child
        else:
            return


@njit(cache=True, nogil=True)
def _merge_kernel(symbols, offsets, overflow):
    n_streams = offsets.size - 1
    pos = offsets[:-1].copy()
    t_next = np.zeros(n_streams, dtype=np.int64)
    heap = np.empty(n_streams, dtype=np.int64)
    size = 0
    for i in range(n_streams):
        if _advance_stream(symbols, offsets, pos, t_next, i, overflow):
            heap[size] = i
            size += 1
    for k in range(size // 2 - 1, -1, -1):
        _sift_down(heap, size, k, t_next)

    n_out = 0
    for k in range(symbols.size):
        if symbols[k] != overflow:
            n_out += 1
    out_deltas = np.empty(n_out, dtype=np.int64)
    out_origins = np.empty(n_out, dtype=np.int64)
    prev_t = np.int64(0)
    k = 0
    while size > 0:
        i = heap[0]
        out_deltas[k] = t_next[i] - prev_t
        out_origins[k] = i
        prev_t = t_next[i]
        k += 1
        if _advance_stream(symbols, offsets, pos, t_next, i, overflow):
            _sift_down(heap, size, 0, t_next)
        else:
            size -= 1
            heap[0] = heap[size]
            _sift_down(heap, size, 0, t_next)
    return out_deltas[:k], out_origins[:k]


def merge_fast(trains: Sequence[DiffSpikeTrain]) -> tuple[np.ndarray, np.ndarray]:
    """Merged (deltas, origins) arrays for a set of same-bitwidth trains."""
    if not trains:
        return np.array([], dtype=np.int64), np.array([], dtype=np.int64)
    widths = {t.bitwidth for t in trains}
    if len(widths) > 1:
        raise IncompatibleTrainsError(f"cannot merge bitwidths {sorted(widths)}")
    symbols, offsets = trains_to_arrays(trains)
    overflow = trains[0].overflow_symbol
    return _merge_kernel(symbols, offsets, np.int64(overflow))


# ---------------------------------------------------------------------------
# Flat-array layer integration
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _layer_kernel(aligned, times, origins, theta, lo, hi, shift_cap):
    n = aligned.shape[1]
    potentials = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    cap = times.size if times.size > 16 else 16
    out_times = np.empty(cap, dtype=np.int64)
    out_origins = np.empty(cap, dtype=np.int64)
    k = 0
    last_t = np.int64(0)
    e = 0
    n_events = times.size
    while e < n_events:
        t = times[e]
        dt = t - last_t
        if dt > shift_cap:
            dt = shift_cap
        if dt > 0:
            for j in range(n):
                potentials[j] >>= dt
        while e < n_events and times[e] == t:
            row = origins[e]
            for j in range(n):
                potentials[j] += aligned[row, j]
            e += 1
        for j in range(n):
            if potentials[j] > hi:
                potentials[j] = hi
            elif potentials[j] < lo:
                potentials[j] = lo
        for j in range(n):
            if potentials[j] >= theta:
                potentials[j] -= theta
                counts[j] += 1
                if k == out_times.size:
                    grown_t = np.empty(out_times.size * 2, dtype=np.int64)
                    grown_o = np.empty(out_times.size * 2, dtype=np.int64)
                    grown_t[:k] = out_times
                    grown_o[:k] = out_origins
                    out_times = grown_t
                    out_origins = grown_o
                out_times[k] = t
                out_origins[k] = j
                k += 1
        last_t = t
    return out_times[:k], out_origins[:k], counts


def infer_events_fast(
    network: Network, deltas: np.ndarray, origins: np.ndarray
) -> np.ndarray:
    """Counts per output class for one merged stream, via the compiled path."""
    deltas = np.asarray(deltas, dtype=np.int64)
    origins = np.asarray(origins, dtype=np.int64)
    if origins.size and (origins.min() < 0 or origins.max() >= network.fan_in):
        raise AddressingError("event origins exceed the first layer's fan")
    times = np.cumsum(deltas)
    counts = np.zeros(network.n_outputs, dtype=np.int64)
    fmt = network.fmt
    for aligned in network.aligned:
        times, origins, counts = _layer_kernel(
            np.ascontiguousarray(aligned, dtype=np.int64),
            times,
            origins,
            np.int64(network.theta_raw),
            np.int64(fmt.min_raw),
            np.int64(fmt.max_raw),
            np.int64(fmt.total_bits - 1),
        )
    return counts


# ---------------------------------------------------------------------------
# Whole-sample and whole-dataset inference
# ---------------------------------------------------------------------------


def infer_trains(model: NetworkModel, trains, network: Network | None = None, fast: bool = True):
    """Counts for one sample given its per-patch trains."""
    if len(trains) != model.layer_sizes[0]:
        raise AddressingError(
            f"sample has {len(trains)} trains for input fan {model.layer_sizes[0]}"
        )
    deltas, origins = merge_fast(trains)
    if fast:
        net = network or model.network()
        return infer_events_fast(net, deltas, origins)
    net = network or model.network()
    return net.infer(zip(deltas.tolist(), origins.tolist()))


def infer_image(model: NetworkModel, image, network: Network | None = None, fast: bool = True):
    """Encode one image and run it through the network; returns counts."""
    trains = encode_image(image, model.kernel, model.encoder_config())
    return infer_trains(model, trains, network=network, fast=fast)


def infer_dataset(
    model: NetworkModel,
    images: Sequence[np.ndarray],
    jobs: int | None = None,
    fast: bool = True,
) -> np.ndarray:
    """Counts for every image, [n_images, n_classes]; jobs only change speed."""
    jobs = jobs or default_jobs()
    n = len(images)
    out = np.zeros((n, model.n_classes), dtype=np.int64)
    if n == 0:
        return out
    if jobs <= 1 or n == 1:
        network = model.network()
        for i, image in enumerate(images):
            out[i] = infer_image(model, image, network=network, fast=fast)
        return out

    def work(span):
        lo, hi = span
        network = model.network()  # worker-private potentials
        for i in range(lo, hi):
            out[i] = infer_image(model, images[i], network=network, fast=fast)

    step = (n + jobs - 1) // jobs
    spans = [(lo, min(lo + step, n)) for lo in range(0, n, step)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        list(pool.map(work, spans))
    return out


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchResult:
    samples: int
    merged_events: int
    encode_seconds: float
    infer_seconds: float

    @property
    def events_per_second(self) -> float:
        return self.merged_events / self.infer_seconds if self.infer_seconds else 0.0

    @property
    def inferences_per_second(self) -> float:
        return self.samples / self.infer_seconds if self.infer_seconds else 0.0


def warm_up_jit() -> None:
    """Force kernel compilation so benchmarks time steady-state execution."""
    train = DiffSpikeTrain(2, np.array([1, 3, 0, 2], dtype=np.int64))
    deltas, origins = merge_fast([train, train])
    aligned = np.array([[1 << 10], [1 << 10]], dtype=np.int64)
    _layer_kernel(
        aligned,
        np.cumsum(deltas),
        origins,
        np.int64(1 << 16),
        np.int64(-(2**31 - 1)),
        np.int64(2**31 - 1),
        np.int64(31),
    )


def bench_model(model: NetworkModel, images: Sequence[np.ndarray], jobs: int = 1) -> BenchResult:
    """Encode once, then time merge+integrate over the whole image set."""
    warm_up_jit()
    t0 = time.perf_counter()
    cfg = model.encoder_config()
    per_sample = [encode_image(img, model.kernel, cfg) for img in images]
    t1 = time.perf_counter()
    merged_events = 0

    def run_span(span):
        nonlocal_events = 0
        network = model.network()
        for i in range(*span):
            deltas, origins = merge_fast(per_sample[i])
            nonlocal_events += deltas.size
            infer_events_fast(network, deltas, origins)
        return nonlocal_events

    t2 = time.perf_counter()
    if jobs <= 1:
        merged_events = run_span((0, len(per_sample)))
    else:
        step = (len(per_sample) + jobs - 1) // jobs
        spans = [(lo, min(lo + step, len(per_sample))) for lo in range(0, len(per_sample), step)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            merged_events = sum(pool.map(run_span, spans))
    t3 = time.perf_counter()
    return BenchResult(
        samples=len(per_sample),
        merged_events=merged_events,
        encode_seconds=t1 - t0,
        infer_seconds=t3 - t2,
    )
