"""Spike-train representations and the differential-time codec.

A spike train is stored one of three ways:

* absolute time -- the tick index of every spike,
* sampled -- one bit per tick,
* differential time -- the gap to the previous spike, chopped into
  fixed-width symbols.

For bit width ``b`` the all-ones value ``2**b - 1`` is reserved as the
*overflow* symbol: it advances time by ``2**b - 1`` ticks without firing.
Any smaller value ``v`` is a *terminal* symbol meaning "a spike fires
``v`` ticks from here".  A gap ``d`` therefore packs into
``d // (2**b - 1)`` overflows followed by one terminal, so the advance of
every symbol equals its numeric value and the running position is simply
the cumulative sum of the symbol values.

The closed-form cost model (``formula_symbol_count`` and friends) charges
``ceil(d / (2**b - 1))`` symbols per gap.  That undercounts the codec by
exactly one symbol whenever ``d`` is a positive multiple of ``2**b - 1``
(and for ``d == 0``), so both the formula cost and the exact cost are
exposed side by side; see ``exact_total_bits``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_BITWIDTH_RANGE = range(1, 17)


class InvalidBitwidthError(ValueError):
    """Bit width outside the representable range (b >= 1)."""


class OrderingError(ValueError):
    """Absolute spike times are not sorted."""


class EmptyInputError(ValueError):
    """Operation needs at least one spike / histogram entry."""


def _as_readonly_i64(values: Iterable[int]) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _check_bitwidth(b: int) -> int:
    if not isinstance(b, (int, np.integer)) or b < 1:
        raise InvalidBitwidthError(f"bit width must be an integer >= 1, got {b!r}")
    return int(b)


@dataclass(frozen=True)
class DiffSpikeTrain:
    """One synapse's spike train in differential time.

    ``symbols`` mixes terminal values in ``[0, 2**b - 2]`` with overflow
    symbols ``2**b - 1``.  Trailing overflows are legal: they extend the
    train's duration without encoding a spike.
    """

    bitwidth: int
    symbols: np.ndarray

    def __post_init__(self):
        _check_bitwidth(self.bitwidth)
        object.__setattr__(self, "symbols", _as_readonly_i64(self.symbols))
        if self.symbols.size and (
            self.symbols.min() < 0 or self.symbols.max() >= (1 << self.bitwidth)
        ):
            raise ValueError(
                f"symbols must lie in [0, 2**{self.bitwidth} - 1]"
            )

    @property
    def overflow_symbol(self) -> int:
        return (1 << self.bitwidth) - 1

    @property
    def spike_count(self) -> int:
        return int(np.count_nonzero(self.symbols != self.overflow_symbol))

    @property
    def duration(self) -> int:
        """Total ticks the train spans (every symbol advances by its value)."""
        return int(self.symbols.sum()) if self.symbols.size else 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiffSpikeTrain):
            return NotImplemented
        return self.bitwidth == other.bitwidth and np.array_equal(
            self.symbols, other.symbols
        )


@dataclass(frozen=True)
class AbsSpikeTrain:
    """Spike times as absolute tick indices, sorted non-decreasing."""

    times: np.ndarray
    duration: int = -1  # -1: default to the last spike time

    def __post_init__(self):
        object.__setattr__(self, "times", _as_readonly_i64(self.times))
        if self.times.size:
            if self.times.min() < 0:
                raise ValueError("spike times must be non-negative")
            if np.any(np.diff(self.times) < 0):
                raise OrderingError("spike times must be sorted non-decreasing")
        last = int(self.times[-1]) if self.times.size else 0
        dur = last if self.duration < 0 else int(self.duration)
        if dur < last:
            raise ValueError(f"duration {dur} precedes last spike at {last}")
        object.__setattr__(self, "duration", dur)

    @property
    def spike_count(self) -> int:
        return int(self.times.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AbsSpikeTrain):
            return NotImplemented
        return self.duration == other.duration and np.array_equal(
            self.times, other.times
        )


@dataclass(frozen=True)
class SampledSpikeTrain:
    """One bit per tick; bit t is 1 iff a spike fires at tick t."""

    bits: np.ndarray

    def __post_init__(self):
        bits = _as_readonly_i64(self.bits)
        if bits.size == 0:
            raise EmptyInputError("sampled train needs at least one tick")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("sampled bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @property
    def duration(self) -> int:
        return int(self.bits.size) - 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampledSpikeTrain):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


def encode_differences(differences: Sequence[int], b: int) -> DiffSpikeTrain:
    """Pack inter-spike gaps into overflow+terminal symbols of width ``b``."""
    b = _check_bitwidth(b)
    d = np.asarray(differences, dtype=np.int64)
    if d.ndim == 0:
        d = d.reshape(1)
    if d.size and d.min() < 0:
        raise ValueError("differences must be non-negative")
    if d.size == 0:
        return DiffSpikeTrain(b, np.empty(0, dtype=np.int64))
    m = (1 << b) - 1
    q = d // m                      # overflow symbols per gap
    r = d - q * m                   # terminal value, in [0, m - 1]
    counts = q + 1
    out = np.full(int(counts.sum()), m, dtype=np.int64)
    out[np.cumsum(counts) - 1] = r  # last symbol of each gap is the terminal
    return DiffSpikeTrain(b, out)


def decode_symbols(train: DiffSpikeTrain) -> np.ndarray:
    """Inverse of :func:`encode_differences`; trailing overflows yield no gap."""
    s = train.symbols
    m = train.overflow_symbol
    terminals = np.flatnonzero(s != m)
    if terminals.size == 0:
        return np.empty(0, dtype=np.int64)
    # overflow count since the previous terminal, times m, plus the terminal
    prev = np.concatenate(([np.int64(-1)], terminals[:-1]))
    return s[terminals] + (terminals - prev - 1) * m


def from_absolute(train: AbsSpikeTrain, b: int) -> DiffSpikeTrain:
    """Differential form of an absolute train, first gap referenced to t=0.

    Duration beyond the last spike is carried as trailing overflows, which
    advance in steps of ``2**b - 1``; a remainder shorter than one overflow
    cannot be represented and is dropped.
    """
    b = _check_bitwidth(b)
    diffs = np.diff(train.times, prepend=np.int64(0))
    encoded = encode_differences(diffs, b)
    last = int(train.times[-1]) if train.times.size else 0
    m = (1 << b) - 1
    pad = (train.duration - last) // m
    if pad:
        symbols = np.concatenate(
            [encoded.symbols, np.full(pad, m, dtype=np.int64)]
        )
        return DiffSpikeTrain(b, symbols)
    return encoded


def to_absolute(train: DiffSpikeTrain) -> AbsSpikeTrain:
    """Cumulative sum of the decoded gaps, duration included."""
    diffs = decode_symbols(train)
    return AbsSpikeTrain(np.cumsum(diffs), train.duration)


def to_sampled(train: DiffSpikeTrain) -> SampledSpikeTrain:
    """Per-tick bit view; simultaneous spikes collapse onto one bit."""
    abs_train = to_absolute(train)
    bits = np.zeros(abs_train.duration + 1, dtype=np.int64)
    bits[abs_train.times] = 1
    return SampledSpikeTrain(bits)


def from_sampled(sampled: SampledSpikeTrain) -> DiffSpikeTrain:
    """The equivalent single-bit differential train (0 terminal, 1 overflow)."""
    times = np.flatnonzero(sampled.bits)
    return from_absolute(AbsSpikeTrain(times, sampled.duration), b=1)


def formula_symbol_count(differences: Sequence[int], b: int) -> int:
    """Closed-form symbol count: sum of ceil(d / (2**b - 1)) over the gaps."""
    b = _check_bitwidth(b)
    d = np.asarray(differences, dtype=np.int64)
    m = (1 << b) - 1
    return int(np.sum(-(-d // m)))


def formula_total_bits(differences: Sequence[int], b: int) -> int:
    """Closed-form total cost: b times the closed-form symbol count."""
    return _check_bitwidth(b) * formula_symbol_count(differences, b)


def formula_total_bits_from_histogram(histogram: Mapping[int, int], b: int) -> int:
    """Histogram form of the closed-form cost: b * sum_i K_i ceil(i/(2**b-1))."""
    b = _check_bitwidth(b)
    m = (1 << b) - 1
    return b * sum(count * -(-diff // m) for diff, count in histogram.items())


def exact_symbol_count(differences: Sequence[int], b: int) -> int:
    """Symbols the codec actually emits: floor(d / (2**b - 1)) + 1 per gap."""
    b = _check_bitwidth(b)
    d = np.asarray(differences, dtype=np.int64)
    m = (1 << b) - 1
    return int(np.sum(d // m + 1))


def exact_total_bits(differences: Sequence[int], b: int) -> int:
    """Total bits actually spent by the codec for these gaps."""
    return _check_bitwidth(b) * exact_symbol_count(differences, b)


def exact_total_bits_from_histogram(histogram: Mapping[int, int], b: int) -> int:
    """Histogram form of the bits the codec actually emits."""
    b = _check_bitwidth(b)
    m = (1 << b) - 1
    return b * sum(count * (diff // m + 1) for diff, count in histogram.items())


@dataclass(frozen=True)
class CostReport:
    """Per-bitwidth encoding costs for one histogram of spike gaps."""

    histogram: dict[int, int]
    formula_bits: dict[int, int]
    exact_bits: dict[int, int]
    b_star: int
    absolute_bits_per_spike: int | None = None

    def __post_init__(self):
        for b, bits in self.formula_bits.items():
            if bits > self.exact_bits[b]:
                raise ValueError(f"formula cost exceeds exact cost at b={b}")


def histogram_of(differences: Sequence[int]) -> dict[int, int]:
    """Gap histogram {difference: count}."""
    d = np.asarray(differences, dtype=np.int64)
    values, counts = np.unique(d, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def optimal_bitwidth(
    histogram: Mapping[int, int],
    b_range: Iterable[int] = DEFAULT_BITWIDTH_RANGE,
    absolute_bits_per_spike: int | None = None,
) -> tuple[int, CostReport]:
    """Scan ``b_range`` for the cheapest closed-form cost; ties pick smaller b."""
    hist = {int(k): int(v) for k, v in histogram.items() if v}
    if not hist:
        raise EmptyInputError("histogram has no spikes")
    if min(hist) < 0 or min(hist.values()) < 0:
        raise ValueError("histogram needs non-negative gaps and counts")
    bs = sorted(_check_bitwidth(b) for b in b_range)
    if not bs:
        raise EmptyInputError("empty bitwidth range")
    formula = {b: formula_total_bits_from_histogram(hist, b) for b in bs}
    exact = {b: exact_total_bits_from_histogram(hist, b) for b in bs}
    b_star = min(bs, key=lambda b: (formula[b], b))
    report = CostReport(hist, formula, exact, b_star, absolute_bits_per_spike)
    return b_star, report


def _ceil_log2(n: int) -> int:
    if n < 1:
        raise ValueError("ceil_log2 needs n >= 1")
    return (n - 1).bit_length()


@dataclass(frozen=True)
class EncodingComparison:
    """Cost of one absolute train under the three representations."""

    spike_count: int
    duration: int
    absolute_bits_per_spike: int
    absolute_total_bits: int
    sampled_total_bits: int
    evenly_spaced_bits_per_spike: int
    single_symbol_bitwidth: int
    cost: CostReport = field(repr=False)


def encoding_comparison(
    train: AbsSpikeTrain, b_range: Iterable[int] = DEFAULT_BITWIDTH_RANGE
) -> EncodingComparison:
    """Compare absolute, sampled and per-b differential costs for one train.

    ``single_symbol_bitwidth`` is the smallest b whose closed-form count
    charges one symbol per spike, i.e. the differential width needed when
    overflow symbols are ruled out; for a train whose spikes all sit at the
    final tick it collapses to the absolute-time width.
    """
    if train.spike_count == 0:
        raise EmptyInputError("comparison needs at least one spike")
    k = train.spike_count
    t = train.duration
    diffs = np.diff(train.times, prepend=np.int64(0))
    abs_bits = _ceil_log2(t + 1)
    _, report = optimal_bitwidth(
        histogram_of(diffs), b_range, absolute_bits_per_spike=abs_bits
    )
    max_diff = int(diffs.max())
    return EncodingComparison(
        spike_count=k,
        duration=t,
        absolute_bits_per_spike=abs_bits,
        absolute_total_bits=k * abs_bits,
        sampled_total_bits=t + 1,
        evenly_spaced_bits_per_spike=_ceil_log2(-(-(t + 1) // k)),
        single_symbol_bitwidth=max(1, _ceil_log2(max_diff + 1)),
        cost=report,
    )
