"""Serialization of the transmitted proposal indices.

Default mode packs each index in exactly ceil(log2 N) bits for its block's
proposal budget N (zero bits when N = 1). When a frequency table over
indices is available as shared side information, an arithmetic coder under
the add-1 smoothed table usually beats the fixed-length layout, since A*
selection is heavily skewed toward small indices.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from ..binio import BitReader, BitWriter, FormatError

_FULL = 0xFFFFFFFF
_HALF = 0x80000000
_QUARTER = 0x40000000
_THREEQ = 0xC0000000
_MAX_TOTAL = 1 << 28

FIXED_MODE = 0
HISTOGRAM_MODE = 1


def fixed_width(n_samples: int) -> int:
    """Bits needed for a 1-based index into n_samples proposals."""
    if n_samples < 1:
        raise ValueError("sample count must be positive")
    return (n_samples - 1).bit_length()


@dataclasses.dataclass(frozen=True)
class IndexCode:
    payload: bytes
    bit_count: int
    mode: int
    widths: tuple[int, ...] | None = None


def _smoothed_cumulative(histogram) -> np.ndarray:
    counts = np.asarray(histogram, dtype=np.uint64)
    if counts.ndim != 1 or counts.shape[0] < 1:
        raise ValueError("histogram must be a nonempty vector of counts")
    freq = counts.astype(np.int64) + 1  # add-1 smoothing: every index codable
    total = int(freq.sum())
    while total >= _MAX_TOTAL:
        freq = np.maximum(freq // 2, 1)
        total = int(freq.sum())
    cum = np.zeros(freq.shape[0] + 1, dtype=np.int64)
    np.cumsum(freq, out=cum[1:])
    return cum


def code_indices(blocks, histogram=None) -> IndexCode:
    """Pack the indices of EncodedBlocks into a bit string."""
    blocks = list(blocks)
    if histogram is None:
        writer = BitWriter()
        widths = []
        for block in blocks:
            width = fixed_width(block.n_samples)
            widths.append(width)
            writer.write(block.index - 1, width)
        return IndexCode(writer.getvalue(), writer.bit_count, FIXED_MODE, tuple(widths))

    cum = _smoothed_cumulative(histogram)
    support = cum.shape[0] - 1
    total = int(cum[-1])
    writer = BitWriter()
    low, high, pending = 0, _FULL, 0

    def emit(bit):
        nonlocal pending
        writer.write(bit, 1)
        if pending:
            opposite = ((1 << pending) - 1) if bit == 0 else 0
            writer.write(opposite, pending)
            pending = 0

    for block in blocks:
        symbol = block.index - 1
        if symbol >= support:
            raise ValueError(
                f"index {block.index} is outside the histogram support ({support}); "
                "re-train the frequency table or use fixed-length coding"
            )
        span = high - low + 1
        high = low + (span * int(cum[symbol + 1])) // total - 1
        low = low + (span * int(cum[symbol])) // total
        while True:
            if high < _HALF:
                emit(0)
            elif low >= _HALF:
                emit(1)
                low -= _HALF
                high -= _HALF
            elif low >= _QUARTER and high < _THREEQ:
                pending += 1
                low -= _QUARTER
                high -= _QUARTER
            else:
                break
            low = low << 1
            high = (high << 1) | 1
    pending += 1
    emit(0 if low < _QUARTER else 1)
    return IndexCode(writer.getvalue(), writer.bit_count, HISTOGRAM_MODE)


def decode_indices(payload: bytes, bit_count: int, count: int,
                   widths=None, histogram=None) -> list[int]:
    """Inverse of code_indices; returns 1-based indices."""
    if histogram is None:
        if widths is None:
            raise ValueError("fixed-length decoding needs the per-block widths")
        widths = list(widths)
        if len(widths) != count:
            raise FormatError("width table length does not match block count")
        if sum(widths) != bit_count:
            raise FormatError("payload bit count does not match the width table")
        reader = BitReader(payload, bit_count)
        return [reader.read(width) + 1 for width in widths]

    cum = _smoothed_cumulative(histogram)
    total = int(cum[-1])
    reader = BitReader(payload, bit_count)
    value = reader.read(32)
    low, high = 0, _FULL
    out = []
    for _ in range(count):
        span = high - low + 1
        scaled = ((value - low + 1) * total - 1) // span
        symbol = int(np.searchsorted(cum, scaled, side="right")) - 1
        if symbol < 0 or symbol >= cum.shape[0] - 1:
            raise FormatError("corrupt arithmetic-coded payload")
        span_high = low + (span * int(cum[symbol + 1])) // total - 1
        span_low = low + (span * int(cum[symbol])) // total
        low, high = span_low, span_high
        while True:
            if high < _HALF:
                pass
            elif low >= _HALF:
                low -= _HALF
                high -= _HALF
                value -= _HALF
            elif low >= _QUARTER and high < _THREEQ:
                low -= _QUARTER
                high -= _QUARTER
                value -= _QUARTER
            else:
                break
            low = low << 1
            high = (high << 1) | 1
            value = ((value << 1) | reader.read(1)) & _FULL
        out.append(symbol + 1)
    return out
