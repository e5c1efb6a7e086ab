"""Canonical binary encoding.

This encoding is normative for everything that gets hashed or signed: all
integers are fixed-width big-endian, byte strings carry a 4-byte big-endian
length prefix, struct fields appear in declared order, and union payloads are
prefixed by a single tag byte.  Decoding is strict: trailing bytes are an
error, so a byte stream has exactly one valid reading.
"""

from __future__ import annotations

import struct
from typing import Callable, TypeVar

from .errors import DecodeError

T = TypeVar("T")

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")

MAX_BYTES_LEN = 1 << 26  # 64 MiB; guards length prefixes on hostile input


class Writer:
    """Accumulates canonical bytes."""

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> "Writer":
        self._parts.append(_U8.pack(value))
        return self

    def u32(self, value: int) -> "Writer":
        self._parts.append(_U32.pack(value))
        return self

    def u64(self, value: int) -> "Writer":
        self._parts.append(_U64.pack(value))
        return self

    def boolean(self, value: bool) -> "Writer":
        return self.u8(1 if value else 0)

    def raw(self, value: bytes) -> "Writer":
        self._parts.append(value)
        return self

    def bytes_(self, value: bytes) -> "Writer":
        self._parts.append(_U32.pack(len(value)))
        self._parts.append(value)
        return self

    def text(self, value: str) -> "Writer":
        return self.bytes_(value.encode("utf-8"))

    def optional(self, value: T | None, write: Callable[["Writer", T], object]) -> "Writer":
        if value is None:
            return self.u8(0)
        self.u8(1)
        write(self, value)
        return self

    def sequence(self, items, write: Callable[["Writer", T], object]) -> "Writer":
        self.u32(len(items))
        for item in items:
            write(self, item)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Strict cursor over canonical bytes; every read must fit."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise DecodeError(f"truncated input: wanted {n} bytes at offset {self._pos}")
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def boolean(self) -> bool:
        value = self.u8()
        if value not in (0, 1):
            raise DecodeError(f"invalid boolean byte {value}")
        return value == 1

    def bytes_(self) -> bytes:
        length = self.u32()
        if length > MAX_BYTES_LEN:
            raise DecodeError(f"byte string length {length} exceeds limit")
        return self._take(length)

    def text(self) -> str:
        raw = self.bytes_()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid utf-8: {exc}") from None

    def optional(self, read: Callable[["Reader"], T]) -> T | None:
        flag = self.u8()
        if flag == 0:
            return None
        if flag != 1:
            raise DecodeError(f"invalid optional flag {flag}")
        return read(self)

    def sequence(self, read: Callable[["Reader"], T]) -> list[T]:
        count = self.u32()
        return [read(self) for _ in range(count)]

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(f"{self.remaining()} trailing bytes after decode")


def decode_exact(data: bytes, read: Callable[[Reader], T]) -> T:
    """Decode a full buffer, rejecting trailing garbage."""
    reader = Reader(data)
    value = read(reader)
    reader.expect_end()
    return value
