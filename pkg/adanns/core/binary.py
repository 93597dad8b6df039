"""
Little-endian binary block helpers for index and codec files
"""

import struct
from typing import Optional

import numpy as np

from .exceptions import FormatError


class ByteWriter:
    """Accumulates little-endian fields into one bytes object"""

    def __init__(self):
        self._parts = []

    def magic(self, tag: bytes) -> "ByteWriter":
        self._parts.append(tag)
        return self

    def u8(self, value: int) -> "ByteWriter":
        self._parts.append(struct.pack("<B", value))
        return self

    def u32(self, value: int) -> "ByteWriter":
        self._parts.append(struct.pack("<I", value))
        return self

    def u64(self, value: int) -> "ByteWriter":
        self._parts.append(struct.pack("<Q", value))
        return self

    def f64(self, value: float) -> "ByteWriter":
        self._parts.append(struct.pack("<d", value))
        return self

    def array(self, values: np.ndarray, dtype: str) -> "ByteWriter":
        self._parts.append(np.ascontiguousarray(values, dtype=np.dtype(dtype)).tobytes())
        return self

    def blob(self, payload: bytes) -> "ByteWriter":
        """Length-prefixed (u64) opaque block"""
        self.u64(len(payload))
        self._parts.append(payload)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class ByteReader:
    """Sequential reader that reports the byte offset of any short read"""

    def __init__(self, buffer: bytes, path: Optional[str] = None, base_offset: int = 0):
        self._buffer = memoryview(buffer)
        self._offset = 0
        self._base = base_offset
        self.path = path

    @property
    def offset(self) -> int:
        return self._base + self._offset

    def _take(self, size: int, what: str) -> memoryview:
        if self._offset + size > len(self._buffer):
            raise FormatError(
                f"truncated {what}: need {size} bytes, {len(self._buffer) - self._offset} remain",
                offset=self.offset,
                path=self.path,
            )
        chunk = self._buffer[self._offset:self._offset + size]
        self._offset += size
        return chunk

    def expect_magic(self, tag: bytes) -> None:
        start = self.offset
        found = bytes(self._take(len(tag), "magic tag"))
        if found != tag:
            raise FormatError(f"bad magic tag {found!r}, expected {tag!r}", offset=start, path=self.path)

    def expect_version(self, supported: int) -> int:
        start = self.offset
        version = self.u32("version")
        if version != supported:
            raise FormatError(f"unsupported version {version}", offset=start, path=self.path)
        return version

    def u8(self, what: str = "u8") -> int:
        return struct.unpack("<B", self._take(1, what))[0]

    def u32(self, what: str = "u32") -> int:
        return struct.unpack("<I", self._take(4, what))[0]

    def u64(self, what: str = "u64") -> int:
        return struct.unpack("<Q", self._take(8, what))[0]

    def f64(self, what: str = "f64") -> float:
        return struct.unpack("<d", self._take(8, what))[0]

    def array(self, count: int, dtype: str, what: str = "array") -> np.ndarray:
        dt = np.dtype(dtype)
        raw = self._take(count * dt.itemsize, what)
        return np.frombuffer(raw, dtype=dt).copy()

    def blob(self, what: str = "block") -> "ByteReader":
        size = self.u64(f"{what} length")
        start = self.offset
        return ByteReader(bytes(self._take(size, what)), path=self.path, base_offset=start)

    def expect_end(self) -> None:
        if self._offset != len(self._buffer):
            raise FormatError(
                f"{len(self._buffer) - self._offset} trailing bytes",
                offset=self.offset,
                path=self.path,
            )
