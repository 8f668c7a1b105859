"""16-bit PCM WAV codec, sample-LSB embedding, and tone injection."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import lsb
from .errors import FormatError, UsageError
from .payload import parse_frame

PCM = 1


@dataclass(frozen=True)
class WavAudio:
    """Interleaved int16 samples plus every non-``data`` chunk, verbatim.

    ``chunks`` holds ``(id, body)`` pairs in file order; the ``data`` entry is
    a placeholder whose body is regenerated from ``samples`` on save.
    """

    sample_rate: int
    channels: int
    samples: np.ndarray
    chunks: list = field(default_factory=list)
    trailer: bytes = b""

    @property
    def frames(self) -> int:
        return self.samples.size // self.channels

    def channel_matrix(self) -> np.ndarray:
        return self.samples.reshape(-1, self.channels)


def load_wav(data: bytes) -> WavAudio:
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    (riff_size,) = struct.unpack_from("<I", data, 4)
    end = min(8 + riff_size, len(data))
    pos = 12
    chunks = []
    fmt = None
    samples = None
    while pos + 8 <= end:
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        if body_start + size > len(data):
            raise FormatError(f"truncated {cid.decode('latin-1')!r} chunk: "
                              f"declares {size} bytes, {len(data) - body_start} present")
        body = data[body_start:body_start + size]
        if cid == b"fmt ":
            if size < 16:
                raise FormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
        if cid == b"data":
            if fmt is None:
                raise FormatError("data chunk before fmt chunk")
            if size % 2:
                raise FormatError(f"data chunk size {size} is not whole 16-bit samples")
            samples = np.frombuffer(body, dtype="<i2").astype(np.int16)
            body = b""
        chunks.append((cid, body))
        pos = body_start + size + (size & 1)
    if fmt is None:
        raise FormatError("missing fmt chunk")
    tag, channels, rate, _byte_rate, _align, bits = fmt
    if tag != PCM:
        raise FormatError(f"unsupported WAV: format tag = {tag} (only PCM = 1)")
    if bits != 16:
        raise FormatError(f"unsupported WAV: bits per sample = {bits} (only 16)")
    if channels not in (1, 2):
        raise FormatError(f"unsupported WAV: channels = {channels}")
    if samples is None:
        raise FormatError("missing data chunk")
    if samples.size % channels:
        raise FormatError("data chunk does not hold whole frames")
    trailer = data[pos:]
    return WavAudio(rate, channels, samples, chunks, trailer)


def save_wav(audio: WavAudio) -> bytes:
    parts = []
    for cid, body in audio.chunks:
        if cid == b"data":
            body = np.asarray(audio.samples, dtype="<i2").tobytes()
        parts.append(cid + struct.pack("<I", len(body)) + body)
        if len(body) & 1:
            parts.append(b"\x00")
    payload = b"".join(parts)
    return b"RIFF" + struct.pack("<I", 4 + len(payload)) + b"WAVE" + payload + audio.trailer


def make_wav(samples, sample_rate: int = 8000, channels: int = 1) -> WavAudio:
    """Canonical 44-byte-header WAV around interleaved int16 samples."""
    samples = np.asarray(samples)
    if channels not in (1, 2) or samples.size % channels:
        raise UsageError("samples must hold whole frames of 1 or 2 channels")
    samples = samples.astype(np.int16)
    fmt = struct.pack("<HHIIHH", PCM, channels, sample_rate,
                      sample_rate * channels * 2, channels * 2, 16)
    return WavAudio(sample_rate, channels, samples, [(b"fmt ", fmt), (b"data", b"")])


def _units(audio: WavAudio) -> np.ndarray:
    return audio.samples.view(np.uint16)


def capacity(audio: WavAudio, k: int) -> int:
    k = lsb.check_depth(k)
    return audio.samples.size * k // 8


def embed_audio(audio: WavAudio, frame: bytes, k: int) -> WavAudio:
    # k <= 8 keeps changes inside the low byte of each sample
    k = lsb.check_depth(k)
    units = lsb.embed_frame(_units(audio), frame, k)
    return replace(audio, samples=units.view(np.int16))


def extract_audio(audio: WavAudio, k: int, passphrase: str | None = None) -> tuple[bytes, str]:
    k = lsb.check_depth(k)
    return parse_frame(lsb.extract_frame(_units(audio), k), passphrase)


def add_tone(audio: WavAudio, omega_over_pi: float, amplitude: float) -> tuple[WavAudio, int]:
    """Add ``amplitude * 32767 * cos(pi * omega_over_pi * n)`` to every channel.

    ``n`` counts frames. Returns the new audio and how many samples clipped.
    """
    if not 0 < omega_over_pi < 1:
        raise UsageError(f"omega_over_pi must be in (0, 1), got {omega_over_pi}")
    if amplitude < 0:
        raise UsageError(f"amplitude must be non-negative, got {amplitude}")
    n = np.arange(audio.frames)
    tone = np.rint(amplitude * 32767.0 * np.cos(np.pi * omega_over_pi * n)).astype(np.int64)
    mixed = audio.channel_matrix().astype(np.int64) + tone[:, None]
    clipped = int(np.count_nonzero((mixed > 32767) | (mixed < -32768)))
    mixed = np.clip(mixed, -32768, 32767).astype(np.int16).ravel()
    return replace(audio, samples=mixed), clipped


def to_signal(audio: WavAudio) -> np.ndarray:
    """Float signal s/32768, channels averaged."""
    return audio.channel_matrix().astype(np.float64).mean(axis=1) / 32768.0
