"""A small cluster-allocated virtual disk with slack-space and named-stream hiding.

The image is a single file::

    superblock   52 bytes, see ``_SUPER``
    alloc table  4 bytes per cluster: FREE, END_OF_CHAIN or the next cluster
    file table   u32 count, then per file:
                   u16 path_len, path, u64 size, u32 first cluster,
                   u16 stream count, then per stream:
                     u16 name_len, name, u64 size, u32 first cluster
    data region  cluster_count * cluster_bytes

All integers little-endian. A file or stream with no clusters stores
END_OF_CHAIN as its first cluster.

Writing a file zero-fills the rest of its last sector (RAM slack) but leaves
later sectors of the last cluster (file slack) untouched, so old data
survives there, and that is where :func:`slack_hide` puts its chunks.
"""

from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import CapacityError, FormatError, IntegrityError, UsageError
from .payload import crc32, frame_payload, parse_frame

SECTOR_SIZE = 512
FREE = 0xFFFFFFFE
END_OF_CHAIN = 0xFFFFFFFF
MAX_CLUSTERS = 0xFFFFFFF0
MAGIC = b"VFS1"
VERSION = 1

_SUPER = struct.Struct("<4sHHIIIQQQQ")
METADATA_NAME = "slack-metadata"

SELECTIONS = ("dumb", "random", "intelligent")
OBFUSCATIONS = ("none", "random_key", "xor_file")


@dataclass
class StreamEntry:
    name: str
    size: int
    first: int = END_OF_CHAIN


@dataclass
class FileEntry:
    path: str
    size: int
    first: int = END_OF_CHAIN
    streams: dict = field(default_factory=dict)


class SlackExtent(NamedTuple):
    path: str
    cluster: int
    offset: int
    length: int
    kind: str  # "ram_slack" | "file_slack"


class StreamInfo(NamedTuple):
    path: str
    stream: str
    size: int

    def __str__(self):
        return f"{self.path}:{self.stream}:$DATA {self.size}"


class ExportResult(NamedTuple):
    main: bytes
    streams: dict
    dropped: list


def normalize_path(path: str) -> str:
    parts = [p for p in str(path).split("/") if p]
    for p in parts:
        if p in (".", "..") or ":" in p:
            raise UsageError(f"invalid path component {p!r} in {path!r}")
    return "/".join(parts)


def _check_stream_name(name: str) -> str:
    if not name or ":" in name or "/" in name:
        raise UsageError(f"invalid stream name {name!r}")
    return name


class DiskImage:
    """Single-owner mutable disk. Not safe for concurrent writers."""

    def __init__(self, sectors_per_cluster: int, cluster_count: int,
                 table=None, files=None, data=None):
        self.sector_size = SECTOR_SIZE
        self.sectors_per_cluster = sectors_per_cluster
        self.cluster_count = cluster_count
        self.table = (np.full(cluster_count, FREE, dtype=np.uint32)
                      if table is None else table)
        self.files: dict[str, FileEntry] = {} if files is None else files
        self.data = bytearray(cluster_count * self.cluster_bytes) if data is None else data

    @property
    def cluster_bytes(self) -> int:
        return self.sector_size * self.sectors_per_cluster

    # -- allocation ---------------------------------------------------------

    def clusters_for(self, size: int) -> int:
        return -(-size // self.cluster_bytes)

    def free_clusters(self) -> int:
        return int(np.count_nonzero(self.table == FREE))

    def chain(self, first: int) -> list[int]:
        out = []
        seen = set()
        cur = first
        while cur != END_OF_CHAIN:
            if cur >= self.cluster_count or cur in seen:
                raise FormatError(f"broken cluster chain at {cur}")
            seen.add(cur)
            out.append(cur)
            cur = int(self.table[cur])
            if cur == FREE:
                raise FormatError("cluster chain runs into a free cluster")
        return out

    def _store(self, content: bytes) -> int:
        """Allocate lowest-numbered free clusters and write ``content``."""
        n = self.clusters_for(len(content))
        if n == 0:
            return END_OF_CHAIN
        free = np.flatnonzero(self.table == FREE)
        if free.size < n:
            raise CapacityError(n * self.cluster_bytes, int(free.size) * self.cluster_bytes)
        clusters = free[:n]
        self.table[clusters[:-1]] = clusters[1:]
        self.table[clusters[-1]] = END_OF_CHAIN
        cb = self.cluster_bytes
        for i, c in enumerate(clusters):
            piece = content[i * cb:(i + 1) * cb]
            base = int(c) * cb
            self.data[base:base + len(piece)] = piece
        # zero the rest of the final sector; later sectors keep old contents
        tail = len(content) - (n - 1) * cb
        sector_end = -(-tail // SECTOR_SIZE) * SECTOR_SIZE
        base = int(clusters[-1]) * cb
        self.data[base + tail:base + sector_end] = bytes(sector_end - tail)
        return int(clusters[0])

    def _load(self, first: int, size: int) -> bytes:
        cb = self.cluster_bytes
        out = bytearray()
        for c in self.chain(first):
            out += self.data[c * cb:(c + 1) * cb]
        return bytes(out[:size])

    def _release(self, first: int) -> None:
        for c in self.chain(first):
            self.table[c] = FREE

    # -- files --------------------------------------------------------------

    def entry(self, path: str) -> FileEntry:
        p = normalize_path(path)
        try:
            return self.files[p]
        except KeyError:
            raise UsageError(f"no such file: {p or '/'}") from None

    def write_file(self, path: str, content: bytes, overwrite: bool = False) -> None:
        p = normalize_path(path)
        if not p:
            raise UsageError("cannot write to the root")
        content = bytes(content)
        old = self.files.get(p)
        if old is not None and not overwrite:
            raise UsageError(f"file exists: {p}")
        if any(q.startswith(p + "/") for q in self.files):
            raise UsageError(f"{p} is a directory")
        parts = p.split("/")
        for i in range(1, len(parts)):
            if "/".join(parts[:i]) in self.files:
                raise UsageError(f"{'/'.join(parts[:i])} is a file")
        streams = {}
        if old is not None:
            reclaim = self.clusters_for(old.size)
            if self.free_clusters() + reclaim < self.clusters_for(len(content)):
                raise CapacityError(self.clusters_for(len(content)) * self.cluster_bytes,
                                    (self.free_clusters() + reclaim) * self.cluster_bytes)
            self._release(old.first)
            streams = old.streams
        first = self._store(content)
        self.files[p] = FileEntry(p, len(content), first, streams)

    def read_file(self, path: str) -> bytes:
        e = self.entry(path)
        return self._load(e.first, e.size)

    def delete_file(self, path: str) -> None:
        """Drop the entry and free its clusters; their bytes stay on disk."""
        e = self.entry(path)
        self._release(e.first)
        for s in e.streams.values():
            self._release(s.first)
        del self.files[e.path]

    def read_raw(self, cluster: int) -> bytes:
        if not 0 <= cluster < self.cluster_count:
            raise UsageError(f"cluster {cluster} out of range 0..{self.cluster_count - 1}")
        cb = self.cluster_bytes
        return bytes(self.data[cluster * cb:(cluster + 1) * cb])

    def list_files(self) -> list[FileEntry]:
        return [self.files[p] for p in sorted(self.files)]

    def in_scope(self, root: str = "", levels: int | None = None) -> list[FileEntry]:
        """Files under ``root`` at most ``levels`` directories below it."""
        r = normalize_path(root)
        if r and r not in self.files and not any(p.startswith(r + "/") for p in self.files):
            raise UsageError(f"no such directory: {r}")
        out = []
        for p in sorted(self.files):
            if r and p == r:
                rel = p.rsplit("/", 1)[-1]
            elif r:
                if not p.startswith(r + "/"):
                    continue
                rel = p[len(r) + 1:]
            else:
                rel = p
            if levels is None or rel.count("/") <= levels:
                out.append(self.files[p])
        return out

    # -- integrity ----------------------------------------------------------

    def check(self) -> list[str]:
        """Allocation problems: shared, leaked, cyclic, or mis-sized chains."""
        problems = []
        owner: dict[int, str] = {}
        chains = []
        for f in self.files.values():
            chains.append((f.path, f.first, f.size))
            for s in f.streams.values():
                chains.append((f"{f.path}:{s.name}", s.first, s.size))
        for label, first, size in chains:
            try:
                clusters = self.chain(first)
            except FormatError as exc:
                problems.append(f"{label}: {exc}")
                continue
            if len(clusters) != self.clusters_for(size):
                problems.append(f"{label}: {len(clusters)} clusters for {size} bytes")
            for c in clusters:
                if c in owner:
                    problems.append(f"cluster {c} shared by {owner[c]} and {label}")
                owner[c] = label
        used = set(np.flatnonzero(self.table != FREE).tolist())
        leaked = used - set(owner)
        if leaked:
            problems.append(f"leaked clusters: {sorted(leaked)[:10]}")
        return problems

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        table = self.table.astype("<u4").tobytes()
        records = [struct.pack("<I", len(self.files))]
        for f in self.files.values():
            raw = f.path.encode("utf-8")
            records.append(struct.pack("<H", len(raw)) + raw)
            records.append(struct.pack("<QIH", f.size, f.first, len(f.streams)))
            for s in f.streams.values():
                raw = s.name.encode("utf-8")
                records.append(struct.pack("<H", len(raw)) + raw + struct.pack("<QI", s.size, s.first))
        ftable = b"".join(records)
        table_off = _SUPER.size
        files_off = table_off + len(table)
        data_off = files_off + len(ftable)
        sb = _SUPER.pack(MAGIC, VERSION, 0, self.sector_size, self.sectors_per_cluster,
                         self.cluster_count, table_off, files_off, len(ftable), data_off)
        return sb + table + ftable + bytes(self.data)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "DiskImage":
        raw = bytes(raw)
        if len(raw) < _SUPER.size:
            raise FormatError("not a disk image: too short")
        (magic, version, _res, sector, spc, count,
         table_off, files_off, files_len, data_off) = _SUPER.unpack_from(raw)
        if magic != MAGIC:
            raise FormatError(f"not a disk image: magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported disk image version {version}")
        if sector != SECTOR_SIZE or not _valid_spc(spc) or not 1 <= count < MAX_CLUSTERS:
            raise FormatError(f"bad geometry: sector={sector} spc={spc} clusters={count}")
        cb = sector * spc
        if (table_off != _SUPER.size or files_off != table_off + 4 * count
                or data_off != files_off + files_len or len(raw) != data_off + count * cb):
            raise FormatError("disk image layout is inconsistent with its superblock")
        table = np.frombuffer(raw, dtype="<u4", count=count, offset=table_off).astype(np.uint32)
        files = _parse_file_table(raw[files_off:data_off])
        disk = cls(spc, count, table, files, bytearray(raw[data_off:]))
        problems = disk.check()
        if problems:
            raise FormatError("corrupt allocation: " + "; ".join(problems[:3]))
        return disk


def _valid_spc(spc: int) -> bool:
    return 1 <= spc <= 128 and spc & (spc - 1) == 0


def _parse_file_table(buf: bytes) -> dict:
    pos = 0

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise FormatError("truncated file table")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    def text() -> str:
        nonlocal pos
        (n,) = take("<H")
        if pos + n > len(buf):
            raise FormatError("truncated file table")
        s = buf[pos:pos + n]
        pos += n
        try:
            return s.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("file table name is not UTF-8") from None

    files = {}
    (count,) = take("<I")
    for _ in range(count):
        path = text()
        size, first, nstreams = take("<QIH")
        entry = FileEntry(path, size, first)
        for _ in range(nstreams):
            name = text()
            ssize, sfirst = take("<QI")
            entry.streams[name] = StreamEntry(name, ssize, sfirst)
        if path in files:
            raise FormatError(f"duplicate file table entry {path!r}")
        files[path] = entry
    if pos != len(buf):
        raise FormatError("trailing bytes in file table")
    return files


def format_disk(cluster_count: int, sectors_per_cluster: int) -> DiskImage:
    if not _valid_spc(sectors_per_cluster):
        raise UsageError(
            f"sectors per cluster must be a power of two in 1..128, got {sectors_per_cluster}")
    if not 1 <= cluster_count < MAX_CLUSTERS:
        raise UsageError(f"cluster count out of range: {cluster_count}")
    return DiskImage(sectors_per_cluster, cluster_count)


def load_disk(raw: bytes) -> DiskImage:
    return DiskImage.from_bytes(raw)


def save_disk(d: DiskImage) -> bytes:
    return d.to_bytes()


# -- slack space ---------------------------------------------------------------

def file_slack(d: DiskImage, entry: FileEntry) -> list[SlackExtent]:
    if entry.size == 0:
        return []
    cb = d.cluster_bytes
    last = d.chain(entry.first)[-1]
    used = entry.size - (d.clusters_for(entry.size) - 1) * cb
    sector_end = -(-used // SECTOR_SIZE) * SECTOR_SIZE
    out = []
    if sector_end > used:
        out.append(SlackExtent(entry.path, last, used, sector_end - used, "ram_slack"))
    if cb > sector_end:
        out.append(SlackExtent(entry.path, last, sector_end, cb - sector_end, "file_slack"))
    return out


def slack_map(d: DiskImage, root: str = "", levels: int | None = None) -> list[SlackExtent]:
    out = []
    for e in d.in_scope(root, levels):
        out.extend(file_slack(d, e))
    return out


def _keystream(mode: str, n: int, seed: int, xor_key: bytes | None) -> bytes:
    if mode == "none":
        return bytes(n)
    if mode == "random_key":
        return random.Random(seed).randbytes(n)
    if mode == "xor_file":
        if not xor_key:
            raise UsageError("xor_file obfuscation needs a non-empty key file")
        reps = -(-n // len(xor_key))
        return (bytes(xor_key) * reps)[:n]
    raise UsageError(f"unknown obfuscation {mode!r}; choose from {', '.join(OBFUSCATIONS)}")


def _xor(a: bytes, b: bytes) -> bytes:
    return (np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).tobytes()


def slack_hide(d: DiskImage, payload: bytes, passphrase: str, selection: str = "dumb",
               obfuscation: str = "none", seed: int = 0, xor_key: bytes | None = None,
               root: str = "", levels: int | None = None, name: str = "") -> bytes:
    """Spread ``payload`` over file slack in scope; return encrypted metadata.

    ``d`` is modified in place only after every check has passed.
    """
    if not passphrase:
        raise UsageError("empty passphrase")
    if selection not in SELECTIONS:
        raise UsageError(f"unknown selection {selection!r}; choose from {', '.join(SELECTIONS)}")
    payload = bytes(payload)
    extents = [e for e in slack_map(d, root, levels) if e.kind == "file_slack"]
    if selection == "random":
        random.Random(seed).shuffle(extents)
    elif selection == "intelligent":
        extents.sort(key=lambda e: -e.length)
    available = sum(e.length for e in extents)
    if len(payload) > available:
        raise CapacityError(len(payload), available)
    stored = _xor(payload, _keystream(obfuscation, len(payload), seed, xor_key))

    cb = d.cluster_bytes
    chunks = []
    pos = 0
    for e in extents:
        if pos >= len(stored):
            break
        piece = stored[pos:pos + e.length]
        base = e.cluster * cb + e.offset
        d.data[base:base + len(piece)] = piece
        chunks.append({"path": e.path, "cluster": e.cluster, "offset": e.offset,
                       "length": len(piece), "crc": crc32(piece)})
        pos += len(piece)

    meta = {
        "version": 1,
        "name": name,
        "size": len(payload),
        "crc": crc32(payload),
        "selection": selection,
        "obfuscation": obfuscation,
        "key": _keystream(obfuscation, len(payload), seed, None).hex()
        if obfuscation == "random_key" else None,
        "chunks": chunks,
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return frame_payload(blob, METADATA_NAME, passphrase)


def read_slack_metadata(metadata: bytes, passphrase: str) -> dict:
    if not passphrase:
        raise UsageError("empty passphrase")
    blob, _ = parse_frame(metadata, passphrase)
    try:
        meta = json.loads(blob)
    except ValueError:
        raise FormatError("slack metadata is not valid JSON") from None
    if meta.get("version") != 1:
        raise FormatError(f"unsupported slack metadata version {meta.get('version')!r}")
    return meta


def slack_restore(d: DiskImage, metadata: bytes, passphrase: str,
                  xor_key: bytes | None = None) -> bytes:
    meta = read_slack_metadata(metadata, passphrase)
    cb = d.cluster_bytes
    parts = []
    for ch in meta["chunks"]:
        base = ch["cluster"] * cb + ch["offset"]
        piece = bytes(d.data[base:base + ch["length"]])
        if len(piece) != ch["length"] or crc32(piece) != ch["crc"]:
            raise IntegrityError(
                f"slack chunk in {ch['path']} (cluster {ch['cluster']}) was overwritten")
        parts.append(piece)
    stored = b"".join(parts)
    if meta["obfuscation"] == "random_key":
        key = bytes.fromhex(meta["key"])
    else:
        key = _keystream(meta["obfuscation"], len(stored), 0, xor_key)
    payload = _xor(stored, key)
    if crc32(payload) != meta["crc"]:
        raise IntegrityError("restored payload fails its CRC (wrong xor key file?)")
    return payload


# -- alternate data streams ----------------------------------------------------

def ads_attach(d: DiskImage, path: str, stream: str, content: bytes) -> None:
    e = d.entry(path)
    _check_stream_name(stream)
    if stream in e.streams:
        raise UsageError(f"stream exists: {e.path}:{stream}")
    first = d._store(bytes(content))
    e.streams[stream] = StreamEntry(stream, len(content), first)


def ads_read(d: DiskImage, path: str, stream: str) -> bytes:
    e = d.entry(path)
    try:
        s = e.streams[stream]
    except KeyError:
        raise UsageError(f"no such stream: {e.path}:{stream}") from None
    return d._load(s.first, s.size)


def ads_remove(d: DiskImage, path: str, stream: str) -> None:
    e = d.entry(path)
    try:
        s = e.streams.pop(stream)
    except KeyError:
        raise UsageError(f"no such stream: {e.path}:{stream}") from None
    d._release(s.first)


def ads_scan(d: DiskImage, root: str = "", levels: int | None = None) -> list[StreamInfo]:
    return [StreamInfo(e.path, s.name, s.size)
            for e in d.in_scope(root, levels)
            for s in sorted(e.streams.values(), key=lambda s: s.name)]


def export_file(d: DiskImage, path: str, include_streams: bool = False) -> ExportResult:
    """Copy a file out. Without streams this mimics a copy to a FAT volume."""
    e = d.entry(path)
    main = d.read_file(e.path)
    names = sorted(e.streams)
    if include_streams:
        return ExportResult(main, {n: ads_read(d, e.path, n) for n in names}, [])
    return ExportResult(main, {}, names)
