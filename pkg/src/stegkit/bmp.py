"""24-bit uncompressed BMP codec and LSB embedding in its channel bytes."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import lsb
from .errors import FormatError, UsageError
from .payload import parse_frame

_FILE_HEADER = struct.Struct("<2sIHHI")
_INFO_HEADER = struct.Struct("<IiiHHIIiiII")


@dataclass(frozen=True)
class BmpImage:
    """Decoded image.

    ``pixels`` is (height, width, 3) uint8 RGB, top row first, regardless of
    how the file stores it. Everything needed for a byte-identical rewrite
    (headers, row padding, trailing bytes) is kept alongside.
    """

    width: int
    height: int
    pixels: np.ndarray
    header_blob: bytes
    row_padding: bytes = b""
    trailer: bytes = b""
    top_down: bool = False

    @property
    def row_stride(self) -> int:
        return (3 * self.width + 3) & ~3


def _fail(field: str, value) -> FormatError:
    return FormatError(f"unsupported BMP: {field} = {value!r}")


def load_bmp(data: bytes) -> BmpImage:
    data = bytes(data)
    if len(data) < _FILE_HEADER.size + 4:
        raise FormatError(f"not a BMP file: only {len(data)} bytes")
    magic, _size, _r1, _r2, offset = _FILE_HEADER.unpack_from(data)
    if magic != b"BM":
        raise _fail("magic", magic)
    (info_size,) = struct.unpack_from("<I", data, _FILE_HEADER.size)
    if info_size < _INFO_HEADER.size:
        raise _fail("info header size", info_size)
    if len(data) < _FILE_HEADER.size + _INFO_HEADER.size:
        raise FormatError("truncated BMP info header")
    (_, width, height, planes, bpp, compression,
     *_rest) = _INFO_HEADER.unpack_from(data, _FILE_HEADER.size)
    if bpp != 24:
        raise _fail("bits per pixel", bpp)
    if compression != 0:
        raise _fail("compression", compression)
    if planes != 1:
        raise _fail("planes", planes)
    if width <= 0 or height == 0:
        raise _fail("dimensions", (width, height))
    if offset < _FILE_HEADER.size + info_size:
        raise _fail("pixel offset", offset)

    top_down = height < 0
    height = abs(height)
    stride = (3 * width + 3) & ~3
    end = offset + stride * height
    if end > len(data):
        raise FormatError(
            f"truncated pixel array: need {end} bytes, file has {len(data)}")
    rows = np.frombuffer(data, dtype=np.uint8, count=stride * height,
                         offset=offset).reshape(height, stride)
    stored = rows[:, :3 * width].reshape(height, width, 3)
    pixels = stored[:, :, ::-1]
    if not top_down:
        pixels = pixels[::-1]
    return BmpImage(
        width=width,
        height=height,
        pixels=np.ascontiguousarray(pixels),
        header_blob=data[:offset],
        row_padding=rows[:, 3 * width:].tobytes(),
        trailer=data[end:],
        top_down=top_down,
    )


def save_bmp(img: BmpImage) -> bytes:
    stored = img.pixels[:, :, ::-1]
    if not img.top_down:
        stored = stored[::-1]
    pad = img.row_stride - 3 * img.width
    body = stored.reshape(img.height, 3 * img.width)
    if pad:
        padding = np.frombuffer(img.row_padding, dtype=np.uint8).reshape(img.height, pad)
        body = np.concatenate([body, padding], axis=1)
    return img.header_blob + body.astype(np.uint8).tobytes() + img.trailer


def make_bmp(pixels: np.ndarray) -> BmpImage:
    """Wrap an (h, w, 3) RGB array in a canonical 54-byte-header BMP."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or 0 in pixels.shape:
        raise UsageError(f"expected a non-empty (h, w, 3) array, got shape {pixels.shape}")
    height, width = pixels.shape[:2]
    stride = (3 * width + 3) & ~3
    image_size = stride * height
    offset = _FILE_HEADER.size + _INFO_HEADER.size
    header = _FILE_HEADER.pack(b"BM", offset + image_size, 0, 0, offset) + _INFO_HEADER.pack(
        _INFO_HEADER.size, width, height, 1, 24, 0, image_size, 2835, 2835, 0, 0)
    return BmpImage(width, height, pixels, header,
                    row_padding=bytes((stride - 3 * width) * height))


def channel_bytes(img: BmpImage) -> np.ndarray:
    """Channel bytes in stored-file order: bottom-up rows, B-G-R, no padding."""
    stored = img.pixels[:, :, ::-1]
    if not img.top_down:
        stored = stored[::-1]
    return np.ascontiguousarray(stored).ravel()


def with_channel_bytes(img: BmpImage, flat: np.ndarray) -> BmpImage:
    stored = flat.reshape(img.height, img.width, 3)
    if not img.top_down:
        stored = stored[::-1]
    return replace(img, pixels=np.ascontiguousarray(stored[:, :, ::-1]))


def capacity(img: BmpImage, k: int) -> int:
    """Raw capacity in bytes; subtract the frame overhead for usable payload."""
    k = lsb.check_depth(k)
    return 3 * img.width * img.height * k // 8


def embed(img: BmpImage, frame: bytes, k: int) -> BmpImage:
    k = lsb.check_depth(k)
    return with_channel_bytes(img, lsb.embed_frame(channel_bytes(img), frame, k))


def extract(img: BmpImage, k: int, passphrase: str | None = None) -> tuple[bytes, str]:
    k = lsb.check_depth(k)
    return parse_frame(lsb.extract_frame(channel_bytes(img), k), passphrase)


class Distortion(NamedTuple):
    mse: float
    psnr_db: float

    @property
    def identical(self) -> bool:
        return self.mse == 0.0


def distortion(cover: BmpImage, stego: BmpImage) -> Distortion:
    """MSE over all channel bytes and PSNR against a 255 peak (inf when equal)."""
    if cover.pixels.shape != stego.pixels.shape:
        raise UsageError(
            f"dimension mismatch: {cover.width}x{cover.height} vs {stego.width}x{stego.height}")
    diff = cover.pixels.astype(np.float64) - stego.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(255.0 ** 2 / mse)
    return Distortion(mse, psnr)
