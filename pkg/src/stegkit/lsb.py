"""Carrier-agnostic k-bit LSB replacement over an array of unsigned units.

Within each unit the earlier stream bit lands at position k-1, so a unit's
k low bits read MSB-first give back the stream. When the stream runs out
mid-unit, the remaining low bits keep their cover values.
"""

from __future__ import annotations

import numpy as np

from .errors import CapacityError, FormatError, UsageError
from .payload import NO_FRAME, read_frame, to_bits


def check_depth(k: int, max_bits: int = 8) -> int:
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= max_bits:
        raise UsageError(f"bit depth must be in 1..{max_bits}, got {k!r}")
    return int(k)


def embed_bits(units: np.ndarray, bits: np.ndarray, k: int) -> np.ndarray:
    """Return a copy of ``units`` with ``bits`` written into the k low bits."""
    units = np.asarray(units)
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size > units.size * k:
        raise CapacityError(bits.size, units.size * k, unit="bits")
    out = units.copy()
    if bits.size == 0:
        return out
    n_units = -(-bits.size // k)
    pad = n_units * k - bits.size
    padded = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)]).reshape(n_units, k)
    weights = (1 << np.arange(k - 1, -1, -1)).astype(np.uint32)
    values = (padded.astype(np.uint32) * weights).sum(axis=1).astype(out.dtype)

    full = out.dtype.type((1 << k) - 1)
    out[:n_units] = (out[:n_units] & ~full) | values
    if pad:
        # last unit only received k - pad bits; its lowest pad bits stay cover
        keep = out.dtype.type((1 << pad) - 1)
        last = n_units - 1
        out[last] = (out[last] & ~keep) | (units[last] & keep)
    return out


def extract_bits(units: np.ndarray, k: int, start: int, count: int) -> np.ndarray:
    """Bits ``start .. start+count`` of the stream hidden in ``units``."""
    if count <= 0:
        return np.zeros(0, dtype=np.uint8)
    first, last = start // k, -(-(start + count) // k)
    chunk = np.asarray(units[first:last]).astype(np.uint32)
    shifts = np.arange(k - 1, -1, -1, dtype=np.uint32)
    bits = ((chunk[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    off = start - first * k
    return bits[off:off + count]


def extract_bytes(units: np.ndarray, k: int, start: int, count: int) -> bytes:
    return np.packbits(extract_bits(units, k, start * 8, count * 8)).tobytes()


def embed_frame(units: np.ndarray, frame: bytes, k: int) -> np.ndarray:
    available = units.size * k // 8
    if len(frame) > available:
        raise CapacityError(len(frame), available)
    return embed_bits(units, to_bits(frame), k)


def extract_frame(units: np.ndarray, k: int) -> bytes:
    """Read one payload frame out of ``units`` at depth ``k``."""
    limit = units.size * k // 8
    pos = 0

    def read(n: int) -> bytes:
        nonlocal pos
        if pos + n > limit:
            raise FormatError(NO_FRAME)
        out = extract_bytes(units, k, pos, n)
        pos += n
        return out

    return read_frame(read, limit)
