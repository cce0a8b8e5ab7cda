"""Little-endian helpers shared by the XMDS1 / XMDM1 / XMCK1 file formats."""

import struct
from typing import Tuple

import numpy as np

from ..errors import FormatError


class BinaryWriter:
    def __init__(self):
        self._chunks = []

    def raw(self, data: bytes) -> "BinaryWriter":
        self._chunks.append(bytes(data))
        return self

    def pack(self, fmt: str, *values) -> "BinaryWriter":
        return self.raw(struct.pack("<" + fmt, *values))

    def array(self, values, dtype: str) -> "BinaryWriter":
        return self.raw(np.ascontiguousarray(values, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())

    def text(self, value: str) -> "BinaryWriter":
        encoded = value.encode("utf-8")
        return self.pack("I", len(encoded)).raw(encoded)

    def getvalue(self) -> bytes:
        return b"".join(self._chunks)


class BinaryReader:
    """Sequential reader that reports the byte offset of any decoding failure"""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"truncated file while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt).copy()

    def text(self, what: str) -> str:
        (length,) = self.unpack("I", f"{what} length")
        start = self.offset
        try:
            return self.take(length, what).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"invalid UTF-8 in {what}: {e}", start) from e

    def expect_magic(self, magic: bytes) -> None:
        found = self.take(len(magic), "magic")
        if found != magic:
            raise FormatError(f"bad magic {found!r}, expected {magic!r}", 0)

    def expect_version(self, supported: int) -> int:
        start = self.offset
        (version,) = self.unpack("H", "version")
        if version != supported:
            raise FormatError(f"unsupported version {version}, expected {supported}", start)
        return version

    def expect_end(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{len(self.data) - self.offset} trailing bytes", self.offset)
