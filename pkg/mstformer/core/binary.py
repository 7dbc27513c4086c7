"""Little-endian reader shared by the checkpoint and dataset containers."""
import struct

from mstformer.exceptions import DataFormatError


class ByteReader:
    """Sequential reader that reports the byte offset of every failure."""

    def __init__(self, payload: bytes, kind: str):
        self.payload = payload
        self.kind = kind
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.payload) - self.offset

    def take(self, count: int, what: str) -> bytes:
        if count < 0 or self.offset + count > len(self.payload):
            raise DataFormatError(f"truncated {self.kind} while reading {what}", self.offset)
        chunk = self.payload[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def expect_end(self, what: str) -> None:
        if self.remaining:
            raise DataFormatError(f"trailing bytes after {what}", self.offset)
