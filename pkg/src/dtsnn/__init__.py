"""dtsnn: event-driven LIF network inference on differential-time spike streams."""

from dtsnn.codec import (
    AbsSpikeTrain,
    CostReport,
    DiffSpikeTrain,
    SampledSpikeTrain,
    decode_symbols,
    encode_differences,
    encoding_comparison,
    exact_total_bits,
    exact_total_bits_from_histogram,
    from_absolute,
    from_sampled,
    histogram_of,
    optimal_bitwidth,
    formula_symbol_count,
    formula_total_bits,
    to_absolute,
    to_sampled,
)

__version__ = "0.1.0"

__all__ = [
    "AbsSpikeTrain",
    "CostReport",
    "DiffSpikeTrain",
    "SampledSpikeTrain",
    "decode_symbols",
    "encode_differences",
    "encoding_comparison",
    "exact_total_bits",
    "exact_total_bits_from_histogram",
    "from_absolute",
    "from_sampled",
    "histogram_of",
    "optimal_bitwidth",
    "formula_symbol_count",
    "formula_total_bits",
    "to_absolute",
    "to_sampled",
]
