"""Archive container: header, per-level index and block payload.

Byte layout (all integers little-endian, scalars IEEE-754)::

    "IPC1" | version u16 | scalar kind u8 | interp kind u8 | ndims u8 | pad[3]
    dims (ndims x u64) | eb f64 | L u8 | L_p u8 | anchor cap u8 | pad u8
    value min f64 | value max f64 | payload length u64
    per level L..1:
        count u64 | delta 33 x f64 | outliers (offset u64, len u64, count u64)
        32 x plane (offset u64, len u64)
    index CRC-32 u32
    payload

Offsets are relative to the first payload byte.  The index CRC doubles as
the archive identity bound into retrieval sessions.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import BinaryIO

import numpy as np

from .bpcodec import NPLANES, EncodedBlock
from .errors import CorruptDataError
from .predictor import InterpKind

__all__ = [
    "ArchiveHeader",
    "ArchiveIndex",
    "LevelBlocks",
    "LevelRecord",
    "RetrievalPlan",
    "layout_blocks",
    "read_blocks",
    "read_header",
    "write_archive",
]

MAGIC = b"IPC1"
VERSION = 1
NDELTA = NPLANES + 1
SCALAR_CODES = {"f32": 0, "f64": 1}

_PREFIX = struct.Struct("<4sHBBB3x")
_PARAMS = struct.Struct("<dBBBx")
_EXTRA = struct.Struct("<ddQ")
_RECORD = struct.Struct(f"<Q{NDELTA}d3Q{2 * NPLANES}Q")
_CRC = struct.Struct("<I")


@dataclass(frozen=True)
class ArchiveHeader:
    scalar_kind: str
    interp: str
    dims: tuple[int, ...]
    eb: float
    levels: int
    progressive_levels: int
    anchor_cap: int
    value_min: float
    value_max: float
    payload_length: int = 0
    version: int = VERSION

    @property
    def value_range(self) -> float:
        return self.value_max - self.value_min

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))


@dataclass
class LevelRecord:
    level: int
    count: int
    delta: np.ndarray
    outliers: tuple[int, int, int]  # offset, length, count
    planes: list[tuple[int, int]]  # (offset, length) for planes 0..31

    def plane_lengths(self) -> np.ndarray:
        return np.array([length for _, length in self.planes], dtype=np.int64)

    def loaded_size(self, k: int) -> int:
        """Payload bytes needed for the outliers plus planes ``0..k-1``."""
        return int(self.outliers[1] + self.plane_lengths()[:k].sum())


@dataclass(frozen=True)
class RetrievalPlan:
    """Loaded plane count per level; ``loaded[l - 1]`` belongs to level ``l``."""

    loaded: tuple[int, ...]
    nbytes: int | None = None
    bound: float | None = None

    def __post_init__(self):
        loaded = tuple(int(k) for k in self.loaded)
        if any(not 0 <= k <= NPLANES for k in loaded):
            raise ValueError(f"plane counts must lie in 0..{NPLANES}: {loaded}")
        object.__setattr__(self, "loaded", loaded)

    @classmethod
    def full(cls, levels: int) -> "RetrievalPlan":
        return cls((NPLANES,) * levels)

    def k(self, level: int) -> int:
        return self.loaded[level - 1]

    def discarded(self, level: int) -> int:
        return NPLANES - self.loaded[level - 1]

    def covers(self, other: "RetrievalPlan") -> bool:
        return all(a >= b for a, b in zip(self.loaded, other.loaded))

    def union(self, other: "RetrievalPlan") -> "RetrievalPlan":
        return RetrievalPlan(tuple(max(a, b) for a, b in zip(self.loaded, other.loaded)))


@dataclass
class LevelBlocks:
    """Encoded blocks of one level as produced by compression."""

    level: int
    count: int
    delta: np.ndarray
    outlier_count: int
    outlier_block: EncodedBlock
    plane_blocks: list[EncodedBlock]


@dataclass
class ArchiveIndex:
    header: ArchiveHeader
    records: dict[int, LevelRecord]
    data_offset: int
    identity: int

    def record(self, level: int) -> LevelRecord:
        return self.records[level]

    def validate_plan(self, plan: RetrievalPlan) -> None:
        h = self.header
        if len(plan.loaded) != h.levels:
            raise ValueError(f"plan covers {len(plan.loaded)} levels, archive has {h.levels}")
        for level in range(h.progressive_levels + 1, h.levels + 1):
            if plan.k(level) != NPLANES:
                raise ValueError(f"non-progressive level {level} must be fully loaded")

    def plan_size(self, plan: RetrievalPlan, base: RetrievalPlan | None = None) -> int:
        """Payload bytes :func:`read_blocks` reads for ``plan`` (on top of ``base``)."""
        total = 0
        for level, rec in self.records.items():
            lengths = rec.plane_lengths()
            if base is None:
                total += rec.loaded_size(plan.k(level))
            else:
                total += int(lengths[base.k(level):plan.k(level)].sum())
        return total


def _pack_index(header: ArchiveHeader, records: list[LevelRecord]) -> bytes:
    out = bytearray()
    out += _PREFIX.pack(MAGIC, header.version, SCALAR_CODES[header.scalar_kind],
                        InterpKind.parse(header.interp).code, len(header.dims))
    out += struct.pack(f"<{len(header.dims)}Q", *header.dims)
    out += _PARAMS.pack(header.eb, header.levels, header.progressive_levels, header.anchor_cap)
    out += _EXTRA.pack(header.value_min, header.value_max, header.payload_length)
    for rec in records:
        flat_planes = [v for entry in rec.planes for v in entry]
        out += _RECORD.pack(rec.count, *map(float, rec.delta), *rec.outliers, *flat_planes)
    out += _CRC.pack(zlib.crc32(out))
    return bytes(out)


def layout_blocks(level_blocks: list[LevelBlocks]) -> tuple[list[LevelRecord], bytes]:
    """Place blocks level-major (outliers, then planes 0..31) and index them."""
    payload = bytearray()
    records = []
    for lb in level_blocks:
        start = len(payload)
        payload += lb.outlier_block.to_bytes()
        outliers = (start, len(payload) - start, lb.outlier_count)
        planes = []
        for block in lb.plane_blocks:
            start = len(payload)
            payload += block.to_bytes()
            planes.append((start, len(payload) - start))
        records.append(LevelRecord(lb.level, lb.count, np.asarray(lb.delta, dtype=np.float64),
                                   outliers, planes))
    return records, bytes(payload)


def write_archive(header: ArchiveHeader, records: list[LevelRecord], payload: bytes,
                  stream: BinaryIO | None = None) -> bytes:
    """Serialize an archive; records must be ordered from level L down to 1."""
    if [r.level for r in records] != list(range(header.levels, 0, -1)):
        raise ValueError("level records must run from level L down to 1")
    for rec in records:
        spans = [rec.outliers[:2], *rec.planes]
        if any(off < 0 or off + length > len(payload) for off, length in spans):
            raise ValueError(f"level {rec.level} indexes bytes outside the payload")
    if header.payload_length != len(payload):
        header = replace(header, payload_length=len(payload))
    data = _pack_index(header, records) + payload
    if stream is not None:
        stream.write(data)
    return data


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise CorruptDataError(f"truncated archive while reading {what}")
    return data


def read_header(stream) -> ArchiveIndex:
    """Read the header and level index without touching the payload."""
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = io.BytesIO(stream)
    raw = bytearray()

    def take(n, what):
        chunk = _read_exact(stream, n, what)
        raw.extend(chunk)
        return chunk

    magic, version, kind, interp, ndims = _PREFIX.unpack(take(_PREFIX.size, "header"))
    if magic != MAGIC:
        raise CorruptDataError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptDataError(f"unsupported archive version {version}")
    kinds = {v: k for k, v in SCALAR_CODES.items()}
    if kind not in kinds or interp not in (0, 1) or not 1 <= ndims <= 4:
        raise CorruptDataError("malformed archive header")
    dims = struct.unpack(f"<{ndims}Q", take(8 * ndims, "dims"))
    eb, levels, lp, cap = _PARAMS.unpack(take(_PARAMS.size, "parameters"))
    vmin, vmax, payload_length = _EXTRA.unpack(take(_EXTRA.size, "parameters"))
    if not (levels >= 1 and 1 <= lp <= levels) or 0 in dims:
        raise CorruptDataError("inconsistent level parameters")

    header = ArchiveHeader(kinds[kind], InterpKind.parse(interp).name, tuple(dims), eb,
                           levels, lp, cap, vmin, vmax, payload_length, version)
    records = {}
    for level in range(levels, 0, -1):
        values = _RECORD.unpack(take(_RECORD.size, f"level {level} record"))
        count = values[0]
        delta = np.array(values[1:1 + NDELTA], dtype=np.float64)
        outliers = tuple(values[1 + NDELTA:4 + NDELTA])
        flat = values[4 + NDELTA:]
        planes = [(flat[2 * p], flat[2 * p + 1]) for p in range(NPLANES)]
        rec = LevelRecord(level, count, delta, outliers, planes)
        for off, length in [outliers[:2], *planes]:
            if off + length > payload_length:
                raise CorruptDataError(f"level {level} indexes bytes beyond the payload")
        records[level] = rec
    (crc,) = _CRC.unpack(_read_exact(stream, _CRC.size, "index checksum"))
    if crc != zlib.crc32(raw):
        raise CorruptDataError("archive index checksum mismatch")
    return ArchiveIndex(header, records, len(raw) + _CRC.size, crc)


@dataclass
class LoadedLevel:
    outliers: EncodedBlock | None = None
    planes: dict[int, EncodedBlock] = field(default_factory=dict)


def read_blocks(stream, index: ArchiveIndex, plan: RetrievalPlan,
                base: RetrievalPlan | None = None) -> tuple[dict[int, LoadedLevel], int]:
    """Read the blocks a plan needs; returns them per level and the byte count read.

    With ``base`` only planes ``base.k(l)..plan.k(l)-1`` are read and outlier
    blocks are skipped, since the base load already holds them.
    """
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = io.BytesIO(stream)
    index.validate_plan(plan)
    if base is not None and not plan.covers(base):
        raise ValueError("plan must include every plane of the base plan")
    loaded: dict[int, LoadedLevel] = {}
    nread = 0

    def fetch(offset, length):
        nonlocal nread
        stream.seek(index.data_offset + offset)
        data = _read_exact(stream, length, "block")
        nread += length
        return EncodedBlock.from_bytes(data)

    for level in range(index.header.levels, 0, -1):
        rec = index.records[level]
        entry = LoadedLevel()
        if base is None:
            entry.outliers = fetch(*rec.outliers[:2])
        first = 0 if base is None else base.k(level)
        for p in range(first, plan.k(level)):
            entry.planes[p] = fetch(*rec.planes[p])
        loaded[level] = entry
    return loaded, nread
