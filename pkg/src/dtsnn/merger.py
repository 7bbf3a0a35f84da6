"""Merging differential-time spike trains into one ordered event stream.

Multiple trains carry no cross-train ordering, but their *first* pending
gaps are all measured from the same moving zero, so they compare like
absolute times.  Repeatedly emitting the minimum head, subtracting it
from the other heads (moving the zero) and refilling the winner yields
the merged stream directly in differential time.

Two equivalent drivers are provided: :func:`merge_multiway` runs the
procedure over M heads at once, :func:`merge_tree` cascades two-input
merger elements in a binary tree of depth ceil(log2 M), recovering the
originating input index from the per-stage winner bits the way the
hardware does.  Both are generators at heart and consume input symbols
only as far as the events already emitted require.
"""

from __future__ import annotations

from typing import Iterable, Iterator, NamedTuple, Sequence

from dtsnn.codec import DiffSpikeTrain


class IncompatibleTrainsError(ValueError):
    """Input trains do not share a common bitwidth."""


class MergedEvent(NamedTuple):
    delta: int   # ticks since the previous merged event (or t=0)
    origin: int  # index of the input train that fired


class MergerHead:
    """Continuously updated first gap of one input, overflow symbols folded in.

    ``value`` is the time from the shared moving zero to this input's next
    spike; refilling pulls symbols lazily, so a head never looks ahead of
    the events already merged.
    """

    __slots__ = ("_symbols", "_overflow", "value", "exhausted")

    def __init__(self, symbols: Iterable[int], bitwidth: int):
        self._symbols = iter(symbols)
        self._overflow = (1 << bitwidth) - 1
        self.value = 0
        self.exhausted = False
        self.refill()

    @classmethod
    def from_train(cls, train: DiffSpikeTrain) -> "MergerHead":
        return cls(train.symbols, train.bitwidth)

    def refill(self) -> None:
        """Advance to the next gap; trailing overflows exhaust the head."""
        pending = 0
        for symbol in self._symbols:
            if symbol == self._overflow:
                pending += self._overflow
            else:
                self.value = pending + int(symbol)
                return
        self.value = 0
        self.exhausted = True


def merger_element_step(
    head_a: MergerHead, head_b: MergerHead
) -> tuple[int, int] | None:
    """One step of the two-input merger element.

    Emits ``(delta, side)`` with side 0 for the upper input and 1 for the
    lower; ties go to the upper input and an exhausted side always loses.
    Returns None once both inputs are exhausted.
    """
    if head_a.exhausted and head_b.exhausted:
        return None
    if head_b.exhausted or (not head_a.exhausted and head_a.value <= head_b.value):
        winner, loser, side = head_a, head_b, 0
    else:
        winner, loser, side = head_b, head_a, 1
    delta = winner.value
    if not loser.exhausted:
        loser.value -= delta
    winner.refill()
    return delta, side


def _common_bitwidth(trains: Sequence[DiffSpikeTrain]) -> int:
    widths = {t.bitwidth for t in trains}
    if len(widths) > 1:
        raise IncompatibleTrainsError(f"mixed bitwidths: {sorted(widths)}")
    return widths.pop() if widths else 1


def iter_merge_multiway(trains: Sequence[DiffSpikeTrain]) -> Iterator[MergedEvent]:
    """Lazily merge M trains by repeated minimum selection over M heads."""
    _common_bitwidth(trains)
    heads = [MergerHead.from_train(t) for t in trains]
    while True:
        winner = -1
        for i, head in enumerate(heads):
            if head.exhausted:
                continue
            if winner < 0 or head.value < heads[winner].value:
                winner = i
        if winner < 0:
            return
        minimum = heads[winner].value
        yield MergedEvent(minimum, winner)
        for i, head in enumerate(heads):
            if i != winner and not head.exhausted:
                head.value -= minimum
        heads[winner].refill()


def merge_multiway(trains: Sequence[DiffSpikeTrain]) -> list[MergedEvent]:
    return list(iter_merge_multiway(trains))


def _leaf_stream(train: DiffSpikeTrain) -> Iterator[tuple[int, int]]:
    head = MergerHead.from_train(train)
    while not head.exhausted:
        yield head.value, 0
        head.refill()


class _StreamHead:
    """Merger-element input fed by a child (delta, origin) stream."""

    __slots__ = ("_stream", "value", "origin", "exhausted")

    def __init__(self, stream: Iterator[tuple[int, int]]):
        self._stream = stream
        self.value = 0
        self.origin = 0
        self.exhausted = False
        self.refill()

    def refill(self) -> None:
        nxt = next(self._stream, None)
        if nxt is None:
            self.exhausted = True
        else:
            self.value, self.origin = nxt


def _node_stream(
    upper: Iterator[tuple[int, int]],
    lower: Iterator[tuple[int, int]],
    bit_position: int,
) -> Iterator[tuple[int, int]]:
    a, b = _StreamHead(upper), _StreamHead(lower)
    while True:
        if a.exhausted and b.exhausted:
            return
        if b.exhausted or (not a.exhausted and a.value <= b.value):
            winner, loser, side = a, b, 0
        else:
            winner, loser, side = b, a, 1
        delta = winner.value
        yield delta, winner.origin | (side << bit_position)
        if not loser.exhausted:
            loser.value -= delta
        winner.refill()


def iter_merge_tree(trains: Sequence[DiffSpikeTrain]) -> Iterator[MergedEvent]:
    """Binary tree of merger elements; one origin bit appended per stage."""
    bitwidth = _common_bitwidth(trains)
    if not trains:
        return iter(())

    padded = 1
    while padded < len(trains):
        padded *= 2
    empty = DiffSpikeTrain(bitwidth, [])
    inputs = list(trains) + [empty] * (padded - len(trains))

    def build(lo: int, hi: int) -> Iterator[tuple[int, int]]:
        if hi - lo == 1:
            return _leaf_stream(inputs[lo])
        mid = (lo + hi) // 2
        bit_position = (hi - lo).bit_length() - 2  # log2(width) - 1
        return _node_stream(build(lo, mid), build(mid, hi), bit_position)

    return (MergedEvent(d, o) for d, o in build(0, padded))


def merge_tree(trains: Sequence[DiffSpikeTrain]) -> list[MergedEvent]:
    return list(iter_merge_tree(trains))
