"""Little-endian binary framing shared by the model and bitstream files.

Everything on disk goes through Writer/Reader so the byte layout is defined
in exactly one place. Bit-level payloads use BitWriter/BitReader (MSB-first
within the stream, zero-padded to a byte boundary).
"""

from __future__ import annotations

import struct

import numpy as np


class FormatError(ValueError):
    """Raised for malformed, truncated, or inconsistent serialized data."""


class Writer:
    def __init__(self):
        self._buf = bytearray()

    def u8(self, value):
        self._buf += struct.pack("<B", value)

    def u16(self, value):
        self._buf += struct.pack("<H", value)

    def u32(self, value):
        self._buf += struct.pack("<I", value)

    def u64(self, value):
        self._buf += struct.pack("<Q", value)

    def f64(self, value):
        self._buf += struct.pack("<d", float(value))

    def raw(self, data: bytes):
        self._buf += data

    def f64_array(self, values):
        """Length-prefixed (u64 count) little-endian float64 array."""
        arr = np.ascontiguousarray(values, dtype="<f8")
        if arr.ndim != 1:
            raise ValueError("only flat arrays are serialized")
        self.u64(arr.shape[0])
        self._buf += arr.tobytes()

    def u64_array(self, values):
        arr = np.ascontiguousarray(values, dtype="<u8")
        if arr.ndim != 1:
            raise ValueError("only flat arrays are serialized")
        self.u64(arr.shape[0])
        self._buf += arr.tobytes()

    def getvalue(self) -> bytes:
        return bytes(self._buf)

    def __len__(self):
        return len(self._buf)


class Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n) -> bytes:
        if self._pos + n > len(self._data):
            raise FormatError("truncated stream")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self):
        return struct.unpack("<B", self._take(1))[0]

    def u16(self):
        return struct.unpack("<H", self._take(2))[0]

    def u32(self):
        return struct.unpack("<I", self._take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self):
        return struct.unpack("<d", self._take(8))[0]

    def raw(self, n) -> bytes:
        return self._take(n)

    def f64_array(self) -> np.ndarray:
        n = self.u64()
        return np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)

    def u64_array(self) -> np.ndarray:
        n = self.u64()
        return np.frombuffer(self._take(8 * n), dtype="<u8").astype(np.uint64)

    @property
    def position(self):
        return self._pos

    def remaining(self):
        return len(self._data) - self._pos


class BitWriter:
    """Packs unsigned integers MSB-first into a byte string."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, width: int):
        if width < 0:
            raise ValueError("negative bit width")
        if value < 0 or (width < 64 and value >> width):
            raise ValueError(f"value {value} does not fit in {width} bits")
        self._acc = (self._acc << width) | value
        self._nbits += width
        while self._nbits >= 8:
            self._nbits -= 8
            self._bytes.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    @property
    def bit_count(self):
        return 8 * len(self._bytes) + self._nbits

    def getvalue(self) -> bytes:
        """Zero-pads the tail to a byte boundary."""
        out = bytearray(self._bytes)
        if self._nbits:
            out.append((self._acc << (8 - self._nbits)) & 0xFF)
        return bytes(out)


class BitReader:
    """Reads MSB-first unsigned integers; bits past the end read as zero.

    The zero-extension matters to the range decoder, which drains a few
    bits beyond the payload while flushing its window.
    """

    def __init__(self, data: bytes, bit_count=None):
        self._data = data
        self._limit = 8 * len(data) if bit_count is None else bit_count
        if self._limit > 8 * len(data):
            raise FormatError("declared bit count exceeds payload size")
        self._pos = 0

    def read(self, width: int) -> int:
        out = 0
        for _ in range(width):
            out <<= 1
            if self._pos < self._limit:
                byte = self._data[self._pos >> 3]
                out |= (byte >> (7 - (self._pos & 7))) & 1
            self._pos += 1
        return out

    @property
    def bits_consumed(self):
        return min(self._pos, self._limit)

    def exhausted(self):
        return self._pos >= self._limit
