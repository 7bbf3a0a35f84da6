"""Event-driven, multiplier-free LIF layers on fixed-point arithmetic.

Neuron dynamics per input event batch at one timestamp:

    P <- (P >> dt) + sum of weight rows of the spiking synapses
    fire where P >= theta, then P -= theta (soft reset)

With decay rate 1/2 per tick the decay is an arithmetic right shift, so
the whole engine runs on adds, shifts and compares.  Potentials live in
signed fixed point (default Q16 in 32 bits), weights in a narrower
format (default Q6 in 8 bits) and are aligned to the potential format by
a left shift when a network is built.  Thresholds are evaluated once per
timestamp after all simultaneous weights are accumulated, so a neuron
fires at most once per input event time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class AddressingError(IndexError):
    """Synapse index outside the layer's input fan."""


class FanMismatchError(ValueError):
    """Adjacent layers (or stream and first layer) disagree on fan width."""


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed point: ``total_bits`` wide with ``fraction_bits`` fraction."""

    total_bits: int = 32
    fraction_bits: int = 16

    def __post_init__(self):
        if not 1 <= self.fraction_bits <= self.total_bits - 2:
            raise ValueError("need fraction_bits in [1, total_bits - 2] so 1.0 fits")
        if self.total_bits > 62:
            raise ValueError("formats beyond 62 bits exceed the int64 engine")

    @property
    def one(self) -> int:
        return 1 << self.fraction_bits

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_raw(self) -> int:
        return -self.max_raw  # symmetric saturation

    def to_raw(self, value: float) -> int:
        raw = round(value * self.one)
        if not self.min_raw <= raw <= self.max_raw:
            raise ValueError(f"{value} overflows Q{self.fraction_bits}/{self.total_bits}")
        return raw

    def to_float(self, raw) -> float:
        return float(np.asarray(raw, dtype=np.float64) / self.one)


POTENTIAL_FORMAT = FixedPointFormat(32, 16)
WEIGHT_FORMAT = FixedPointFormat(8, 6)


@dataclass(frozen=True)
class LayerWeights:
    """Signed fixed-point weight matrix, row index = input synapse index."""

    values: np.ndarray  # raw integers, shape [fan_in, fan_out]
    fmt: FixedPointFormat = WEIGHT_FORMAT

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.int64)
        if values.ndim != 2:
            raise ValueError("weights must be a [fan_in, fan_out] matrix")
        if values.size and (
            values.min() < self.fmt.min_raw or values.max() > self.fmt.max_raw
        ):
            raise ValueError("weight entries exceed their fixed-point bounds")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def fan_in(self) -> int:
        return self.values.shape[0]

    @property
    def fan_out(self) -> int:
        return self.values.shape[1]

    def aligned(self, potential_fmt: FixedPointFormat) -> np.ndarray:
        """Weight rows shifted into the potential's fraction scale."""
        shift = potential_fmt.fraction_bits - self.fmt.fraction_bits
        if shift < 0:
            raise ValueError("potential format narrower than weight format")
        return self.values << shift


def decay(potential: int, delta_t: int, fmt: FixedPointFormat = POTENTIAL_FORMAT) -> int:
    """beta=1/2 decay over ``delta_t`` ticks: arithmetic right shift."""
    if delta_t < 0:
        raise ValueError("time never runs backwards")
    return potential >> min(delta_t, fmt.total_bits - 1)


class LayerState:
    """Per-neuron potentials plus bookkeeping for one layer."""

    def __init__(self, n_neurons: int, fmt: FixedPointFormat = POTENTIAL_FORMAT):
        self.fmt = fmt
        self.potentials = np.zeros(n_neurons, dtype=np.int64)
        self.spike_counts = np.zeros(n_neurons, dtype=np.int64)
        self.last_time = 0

    @property
    def n_neurons(self) -> int:
        return self.potentials.size

    def reset(self) -> None:
        self.potentials[:] = 0
        self.spike_counts[:] = 0
        self.last_time = 0


def integrate_timestamp(
    state: LayerState,
    weights: LayerWeights,
    delta_t: int,
    synapse_indices: Sequence[int],
    aligned: np.ndarray | None = None,
    theta_raw: int | None = None,
) -> list[int]:
    """Advance one layer by one input timestamp; returns fired neuron indices.

    All potentials decay by ``delta_t`` first, then the weight rows of every
    spiking synapse are accumulated (a synapse listed twice contributes
    twice), the sum saturates at the format bounds, and the threshold is
    evaluated once.  Fired indices come back ascending, which is how the
    events serialize downstream.
    """
    if delta_t < 0:
        raise ValueError("time never runs backwards")
    idx = np.asarray(synapse_indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= weights.fan_in):
        raise AddressingError(
            f"synapse index outside [0, {weights.fan_in}) for this layer"
        )
    if aligned is None:
        aligned = weights.aligned(state.fmt)
    if theta_raw is None:
        theta_raw = state.fmt.one

    p = state.potentials
    p >>= min(delta_t, state.fmt.total_bits - 1)
    if idx.size:
        p += aligned[idx].sum(axis=0)
        np.clip(p, state.fmt.min_raw, state.fmt.max_raw, out=p)
    fired = np.flatnonzero(p >= theta_raw)
    p[fired] -= theta_raw
    state.spike_counts[fired] += 1
    return fired.tolist()


class Classification(NamedTuple):
    index: int
    no_spikes: bool


def classify(counts: Sequence[int]) -> Classification:
    """Argmax of the output spike counts; ties pick the lowest index."""
    arr = np.asarray(counts, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("cannot classify an empty count vector")
    return Classification(int(arr.argmax()), bool(arr.sum() == 0))


class Network:
    """A feedforward stack of LIF layers driven by one merged event stream."""

    def __init__(
        self,
        weights: Sequence[LayerWeights],
        potential_format: FixedPointFormat = POTENTIAL_FORMAT,
        theta: float = 1.0,
    ):
        if not weights:
            raise ValueError("a network needs at least one layer")
        for lower, upper in zip(weights, weights[1:]):
            if lower.fan_out != upper.fan_in:
                raise FanMismatchError(
                    f"layer fan {lower.fan_out} feeds layer expecting {upper.fan_in}"
                )
        self.weights = list(weights)
        self.fmt = potential_format
        self.theta_raw = potential_format.to_raw(theta)
        self.aligned = [w.aligned(potential_format) for w in self.weights]
        self.states = [LayerState(w.fan_out, potential_format) for w in self.weights]

    @property
    def fan_in(self) -> int:
        return self.weights[0].fan_in

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].fan_out

    def reset(self) -> None:
        for state in self.states:
            state.reset()

    def infer(
        self, events: Iterable[tuple[int, int]], return_events: bool = False
    ):
        """Run one sample; returns output spike counts per class.

        ``events`` is the merged stream as (delta, origin) pairs.  The
        network is reset first, then each layer consumes its predecessor's
        full event list: outputs triggered at time t feed the next layer at
        time t, so the relative order of simultaneous events never matters.
        """
        self.reset()
        pairs = [(int(d), int(o)) for d, o in events]
        counts = np.zeros(self.n_outputs, dtype=np.int64)
        if pairs:
            deltas = np.array([p[0] for p in pairs], dtype=np.int64)
            origins = np.array([p[1] for p in pairs], dtype=np.int64)
            if origins.size and (origins.min() < 0 or origins.max() >= self.fan_in):
                raise FanMismatchError("event origins exceed the first layer's fan")
            times = np.cumsum(deltas)
            pending = list(zip(times.tolist(), origins.tolist()))
            for state, weights, aligned in zip(self.states, self.weights, self.aligned):
                produced: list[tuple[int, int]] = []
                i = 0
                while i < len(pending):
                    t = pending[i][0]
                    j = i
                    while j < len(pending) and pending[j][0] == t:
                        j += 1
                    batch = [pending[k][1] for k in range(i, j)]
                    fired = integrate_timestamp(
                        state, weights, t - state.last_time, batch,
                        aligned=aligned, theta_raw=self.theta_raw,
                    )
                    state.last_time = t
                    produced.extend((t, n) for n in fired)
                    i = j
                pending = produced
            counts = self.states[-1].spike_counts.copy()
        if return_events:
            return counts, pending if pairs else []
        return counts


def network_infer(network: Network, events: Iterable[tuple[int, int]]) -> np.ndarray:
    """Per-class output spike counts for one merged event stream."""
    return network.infer(events)


def reset(network: Network) -> None:
    network.reset()
