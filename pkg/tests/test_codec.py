import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtsnn.codec import (
    AbsSpikeTrain,
    DiffSpikeTrain,
    EmptyInputError,
    InvalidBitwidthError,
    OrderingError,
    SampledSpikeTrain,
    decode_symbols,
    encode_differences,
    encoding_comparison,
    exact_total_bits,
    from_absolute,
    from_sampled,
    histogram_of,
    optimal_bitwidth,
    formula_symbol_count,
    formula_total_bits,
    to_absolute,
    to_sampled,
)


# --- independent oracles ------------------------------------------------

def oracle_encode(differences, b):
    """Symbol list built gap by gap with plain Python arithmetic."""
    m = 2**b - 1
    out = []
    for d in differences:
        while d >= m:
            out.append(m)
            d -= m
        out.append(d)
    return out


def oracle_bstar(histogram, b_range):
    """Direct scan of the closed-form cost b * sum K_i * ceil(i / (2^b-1))."""
    best_b, best_cost = None, None
    for b in b_range:
        cost = b * sum(k * math.ceil(i / (2**b - 1)) for i, k in histogram.items())
        if best_cost is None or cost < best_cost:
            best_b, best_cost = b, cost
    return best_b


diff_lists = st.lists(st.integers(min_value=0, max_value=5000), max_size=60)
bitwidths = st.integers(min_value=1, max_value=16)


# --- encode / decode ----------------------------------------------------

def test_encode_single_terminals():
    assert encode_differences([2, 5], 3).symbols.tolist() == [2, 5]


def test_encode_overflow_then_zero_terminal():
    assert encode_differences([7], 3).symbols.tolist() == [7, 0]


def test_encode_b1_terminal_range_is_zero():
    assert encode_differences([1], 1).symbols.tolist() == [1, 0]


def test_encode_rejects_zero_bitwidth():
    with pytest.raises(InvalidBitwidthError):
        encode_differences([1, 2], 0)


def test_decode_overflow_chain():
    train = DiffSpikeTrain(3, [7, 0])
    assert decode_symbols(train).tolist() == [7]


def test_decode_empty():
    train = DiffSpikeTrain(4, [])
    assert decode_symbols(train).tolist() == []
    assert train.duration == 0


def test_decode_all_overflow_is_duration_only():
    train = DiffSpikeTrain(2, [3, 3, 3])
    assert decode_symbols(train).tolist() == []
    assert train.spike_count == 0
    assert train.duration == 9


def test_symbol_bounds_enforced():
    with pytest.raises(ValueError):
        DiffSpikeTrain(2, [4])
    with pytest.raises(ValueError):
        DiffSpikeTrain(2, [-1])


@given(diff_lists, bitwidths)
def test_roundtrip_decode_encode(differences, b):
    train = encode_differences(differences, b)
    assert decode_symbols(train).tolist() == differences
    assert train.symbols.tolist() == oracle_encode(differences, b)


@given(diff_lists, bitwidths)
def test_no_symbol_reaches_two_to_the_b(differences, b):
    train = encode_differences(differences, b)
    if train.symbols.size:
        assert int(train.symbols.max()) < 2**b


# --- absolute conversions -----------------------------------------------

def test_from_absolute_simple():
    train = from_absolute(AbsSpikeTrain([2, 7]), 4)
    assert train.symbols.tolist() == [2, 5]


def test_from_absolute_spike_now():
    assert from_absolute(AbsSpikeTrain([0]), 2).symbols.tolist() == [0]


def test_from_absolute_derived_example():
    # gaps of [2,3,4,7] referenced to t=0 are [2,1,1,3]; at b=2 the final
    # gap of 3 costs one overflow plus terminal 0 (oracle: oracle_encode)
    train = from_absolute(AbsSpikeTrain([2, 3, 4, 7]), 2)
    assert train.symbols.tolist() == [2, 1, 1, 3, 0]
    assert train.symbols.tolist() == oracle_encode([2, 1, 1, 3], 2)


def test_from_absolute_rejects_unsorted():
    with pytest.raises(OrderingError):
        AbsSpikeTrain([3, 1])


def test_to_absolute_cumsum():
    train = encode_differences([2, 5], 3)
    assert to_absolute(train).times.tolist() == [2, 7]


def test_to_absolute_empty():
    assert to_absolute(DiffSpikeTrain(3, [])).times.tolist() == []


@given(
    st.lists(st.integers(min_value=0, max_value=300), min_size=0, max_size=40),
    bitwidths,
    st.integers(min_value=0, max_value=3),
)
def test_roundtrip_absolute(gaps, b, extra_overflows):
    times = np.cumsum(gaps)
    last = int(times[-1]) if len(gaps) else 0
    duration = last + extra_overflows * (2**b - 1)
    original = AbsSpikeTrain(times, duration)
    assert to_absolute(from_absolute(original, b)) == original


# --- sampled conversions ------------------------------------------------

def test_sampled_to_absolute_reading():
    train = from_sampled(SampledSpikeTrain([1, 0, 1]))
    assert train.bitwidth == 1
    assert to_absolute(train).times.tolist() == [0, 2]


def test_absolute_to_sampled():
    train = from_absolute(AbsSpikeTrain([0, 2]), 1)
    assert to_sampled(train).bits.tolist() == [1, 0, 1]


def test_all_zero_bits_duration_only():
    train = from_sampled(SampledSpikeTrain([0] * 5))
    assert train.spike_count == 0
    assert train.duration == 4


@given(st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=80))
def test_sampled_roundtrip(bits):
    sampled = SampledSpikeTrain(bits)
    assert to_sampled(from_sampled(sampled)) == sampled


# --- cost model ----------------------------------------------------------

def test_formula_counts_unit_gaps():
    assert formula_symbol_count([1, 1, 1, 1], 1) == 4
    assert formula_total_bits([1, 1, 1, 1], 1) == 4


def test_formula_at_exact_multiple():
    # ceil(7/7) charges one symbol, though the codec emits overflow+terminal
    assert formula_symbol_count([7], 3) == 1
    assert formula_total_bits([7], 3) == 3
    assert exact_total_bits([7], 3) == 6


def test_exact_bits_two_terminals():
    assert exact_total_bits([2, 5], 3) == 6


@given(diff_lists, st.integers(min_value=1, max_value=12))
def test_cost_bracketing(differences, b):
    formula = formula_total_bits(differences, b)
    exact = exact_total_bits(differences, b)
    assert formula <= exact <= formula + b * len(differences)


def test_exact_bits_match_emitted_symbols():
    for b in range(1, 9):
        for diffs in ([0], [1, 6, 7, 8], [3, 3, 3], list(range(20))):
            emitted = encode_differences(diffs, b).symbols.size
            assert exact_total_bits(diffs, b) == b * emitted


# --- optimal bitwidth ----------------------------------------------------

def test_bstar_unit_gap_histogram():
    b_star, report = optimal_bitwidth({1: 4}, range(1, 9))
    assert b_star == 1
    assert b_star == oracle_bstar({1: 4}, range(1, 9))
    assert report.formula_bits[1] == 4


def test_bstar_single_huge_gap():
    b_star, _ = optimal_bitwidth({1000: 1})
    assert b_star == 10
    assert b_star == oracle_bstar({1000: 1}, range(1, 17))


def test_bstar_empty_histogram():
    with pytest.raises(EmptyInputError):
        optimal_bitwidth({})


def test_bstar_tie_prefers_smaller():
    # one gap of 1: cost is b for every b, so the scan must settle on b=1
    b_star, _ = optimal_bitwidth({1: 1})
    assert b_star == 1


@given(
    st.dictionaries(
        st.integers(min_value=0, max_value=4000),
        st.integers(min_value=1, max_value=50),
        min_size=1,
        max_size=12,
    )
)
@settings(max_examples=200)
def test_bstar_matches_bruteforce(histogram):
    b_star, report = optimal_bitwidth(histogram)
    assert b_star == oracle_bstar(histogram, range(1, 17))
    for b in range(1, 17):
        assert report.formula_bits[b] <= report.exact_bits[b]


# --- encoding comparison --------------------------------------------------

def test_comparison_absolute_costs():
    times = np.arange(9, 100, 10)  # 10 spikes, last at 99
    report = encoding_comparison(AbsSpikeTrain(times, 99))
    assert report.spike_count == 10
    assert report.absolute_bits_per_spike == 7
    assert report.absolute_total_bits == 70
    assert report.sampled_total_bits == 100
    assert report.evenly_spaced_bits_per_spike == 4


def test_comparison_worst_case_equals_absolute():
    # all spikes at the final tick: without overflow symbols the
    # differential width degrades to the absolute-time width
    report = encoding_comparison(AbsSpikeTrain([99] * 5, 99))
    assert report.single_symbol_bitwidth == report.absolute_bits_per_spike


def test_comparison_rejects_empty():
    with pytest.raises(EmptyInputError):
        encoding_comparison(AbsSpikeTrain([], 10))


def test_histogram_of():
    assert histogram_of([2, 1, 1, 3]) == {1: 2, 2: 1, 3: 1}
