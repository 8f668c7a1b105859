"""Payload framing shared by every carrier.

Frame layout, all integers little-endian::

    magic     4  b"STEG"
    version   1  = 1
    flags     1  bit 0: body is DES-CBC encrypted
    name_len  2
    name      name_len bytes, UTF-8
    body_len  4
    body      body_len bytes (ciphertext when encrypted)
    crc       4  CRC-32 of the plaintext body

Carriers do not know the frame length in advance, so extraction goes through
:func:`read_frame`, which pulls bytes on demand from a reader callable.
"""

from __future__ import annotations

import struct
import zlib
from typing import Callable

import numpy as np

from . import des
from .errors import FormatError, IntegrityError, UsageError

MAGIC = b"STEG"
VERSION = 1
FLAG_ENCRYPTED = 0x01

_PREFIX = struct.Struct("<4sBBH")
_U32 = struct.Struct("<I")

# magic + version + flags + name_len + body_len + crc
OVERHEAD = 16

NO_FRAME = "no hidden data / wrong bit depth"


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def frame_payload(body: bytes, name: str = "", passphrase: str | None = None) -> bytes:
    body = bytes(body)
    name_raw = name.encode("utf-8")
    if len(name_raw) >= 1 << 16:
        raise UsageError("name too long for frame")
    crc = crc32(body)
    flags = 0
    if passphrase is not None:
        if not passphrase:
            raise UsageError("empty passphrase with encryption requested")
        body = des.des_encrypt(body, passphrase)
        flags |= FLAG_ENCRYPTED
    if len(body) >= 1 << 32:
        raise UsageError("body too long for frame")
    return b"".join((
        _PREFIX.pack(MAGIC, VERSION, flags, len(name_raw)),
        name_raw,
        _U32.pack(len(body)),
        body,
        _U32.pack(crc),
    ))


def read_frame(read: Callable[[int], bytes], limit: int | None = None) -> bytes:
    """Pull one complete frame from ``read(n)``, validating the header first.

    ``limit`` is the most bytes the carrier can hold; a length field pointing
    past it means there is no frame (or the bit depth is wrong), so the
    reader is never asked for more than the carrier has.
    """
    head = read(_PREFIX.size)
    magic, version, flags, name_len = _PREFIX.unpack(head)
    if magic != MAGIC or version != VERSION or flags & ~FLAG_ENCRYPTED:
        raise FormatError(NO_FRAME)
    name = read(name_len + 4)
    (body_len,) = _U32.unpack(name[-4:])
    total = OVERHEAD + name_len + body_len
    if limit is not None and total > limit:
        raise FormatError(f"{NO_FRAME} (frame claims {total} bytes, carrier holds {limit})")
    return head + name + read(body_len + 4)


def parse_frame(data: bytes, passphrase: str | None = None) -> tuple[bytes, str]:
    data = bytes(data)
    if len(data) < OVERHEAD:
        raise FormatError(f"frame too short: {len(data)} bytes")
    magic, version, flags, name_len = _PREFIX.unpack_from(data)
    if magic != MAGIC or version != VERSION or flags & ~FLAG_ENCRYPTED:
        raise FormatError(NO_FRAME)
    pos = _PREFIX.size
    if len(data) < pos + name_len + 4:
        raise FormatError("truncated frame header")
    try:
        name = data[pos:pos + name_len].decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("frame name is not valid UTF-8") from None
    pos += name_len
    (body_len,) = _U32.unpack_from(data, pos)
    pos += 4
    if len(data) < pos + body_len + 4:
        raise FormatError("truncated frame body")
    body = data[pos:pos + body_len]
    (crc,) = _U32.unpack_from(data, pos + body_len)

    if flags & FLAG_ENCRYPTED:
        if not passphrase:
            raise IntegrityError("passphrase required")
        try:
            body = des.des_decrypt(body, passphrase)
        except IntegrityError:
            raise IntegrityError("wrong passphrase or corrupted carrier") from None
    if crc32(body) != crc:
        raise IntegrityError("wrong passphrase or corrupted carrier")
    return body, name


def to_bits(data: bytes) -> np.ndarray:
    """MSB-first bits of ``data`` as a uint8 array of 0/1."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def from_bits(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise UsageError(f"bit count {bits.size} is not a multiple of 8")
    return np.packbits(bits).tobytes()


class BitStream:
    """Cursor over an MSB-first bit sequence; reads past the end yield zeros."""

    def __init__(self, data: bytes = b""):
        self.bits = to_bits(data)
        self.cursor = 0

    def __len__(self):
        return int(self.bits.size)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.bits.size

    def read(self, n: int) -> list[int]:
        out = self.bits[self.cursor:self.cursor + n].tolist()
        self.cursor = min(self.cursor + n, self.bits.size)
        return out + [0] * (n - len(out))
