"""Bitplane splitting, 2-bit prefix XOR coding and lossless block backends.

Plane 0 carries the most significant negabinary digit (bit 31) of every
codeword and plane 31 the least significant one.  Inside a plane, bit ``i``
of codeword ``i`` sits at byte ``i // 8``, bit ``i % 8`` (LSB first).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptDataError

__all__ = [
    "BACKENDS",
    "BitplaneSet",
    "EncodedBlock",
    "NPLANES",
    "backend_decode",
    "backend_encode",
    "merge",
    "split",
    "xor_decode",
    "xor_encode",
]

NPLANES = 32
_SHIFTS = np.arange(NPLANES - 1, -1, -1, dtype=np.uint32)


@dataclass
class BitplaneSet:
    """``planes[p]`` is the packed bit-vector of plane ``p`` over ``count`` codewords."""

    count: int
    planes: np.ndarray  # (32, ceil(count / 8)) uint8

    @property
    def nbytes(self) -> int:
        return self.planes.shape[1]

    @classmethod
    def empty(cls, count: int) -> "BitplaneSet":
        return cls(count, np.zeros((NPLANES, (count + 7) // 8), dtype=np.uint8))

    def plane_bytes(self, p: int) -> bytes:
        return self.planes[p].tobytes()


def split(codewords) -> BitplaneSet:
    c = np.asarray(codewords, dtype=np.uint32).reshape(-1)
    bits = ((c[None, :] >> _SHIFTS[:, None]) & 1).astype(np.uint8)
    return BitplaneSet(c.size, np.packbits(bits, axis=1, bitorder="little"))


def merge(bitplanes: BitplaneSet, k: int = NPLANES) -> np.ndarray:
    """Rebuild codewords from planes ``0..k-1``; the other digits read as 0."""
    if not 0 <= k <= NPLANES:
        raise ValueError(f"plane count {k} outside 0..{NPLANES}")
    out = np.zeros(bitplanes.count, dtype=np.uint32)
    if k == 0 or bitplanes.count == 0:
        return out
    bits = np.unpackbits(
        bitplanes.planes[:k], axis=1, count=bitplanes.count, bitorder="little"
    ).astype(np.uint32)
    for p in range(k):
        out |= bits[p] << _SHIFTS[p]
    return out


def xor_encode(bitplanes: BitplaneSet) -> BitplaneSet:
    """XOR every plane with the two planes above it."""
    b = bitplanes.planes
    e = b.copy()
    e[1:] ^= b[:-1]
    e[2:] ^= b[:-2]
    return BitplaneSet(bitplanes.count, e)


def xor_decode(encoded: BitplaneSet, k: int, start: int = 0, prefix: BitplaneSet | None = None) -> BitplaneSet:
    """Undo :func:`xor_encode` for planes ``start..k-1``.

    Planes below ``start`` are taken from ``prefix`` (already decoded); rows of
    ``encoded`` outside ``start..k-1`` are never read.
    """
    if not 0 <= start <= k <= NPLANES:
        raise ValueError(f"invalid plane range {start}..{k}")
    if start > 0 and prefix is None:
        raise ValueError(f"decoding plane {start} needs the decoded planes above it")
    out = BitplaneSet.empty(encoded.count)
    if start:
        out.planes[:start] = prefix.planes[:start]
    b = out.planes
    for p in range(start, k):
        row = encoded.planes[p].copy()
        if p >= 1:
            row ^= b[p - 1]
        if p >= 2:
            row ^= b[p - 2]
        b[p] = row
    return out


# -- lossless backends -------------------------------------------------------

_HEADER = struct.Struct("<BQQI")

IDENTITY, ZLIB = 0, 1
BACKENDS = {
    IDENTITY: (lambda data: bytes(data), lambda data: bytes(data)),
    ZLIB: (lambda data: zlib.compress(data, 6), zlib.decompress),
}


@dataclass(frozen=True)
class EncodedBlock:
    backend: int
    raw_bits: int
    payload: bytes
    checksum: int

    HEADER_SIZE = _HEADER.size

    @property
    def raw_size(self) -> int:
        return (self.raw_bits + 7) // 8

    def __len__(self) -> int:
        return _HEADER.size + len(self.payload)

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.backend, self.raw_bits, len(self.payload), self.checksum) + self.payload

    @classmethod
    def from_bytes(cls, buf, offset: int = 0) -> "EncodedBlock":
        buf = memoryview(buf)
        if len(buf) - offset < _HEADER.size:
            raise CorruptDataError("truncated block header")
        backend, raw_bits, length, checksum = _HEADER.unpack_from(buf, offset)
        start = offset + _HEADER.size
        if len(buf) - start < length:
            raise CorruptDataError("truncated block payload")
        return cls(backend, raw_bits, bytes(buf[start:start + length]), checksum)


def backend_encode(data: bytes, backend: int | None = ZLIB, raw_bits: int | None = None) -> EncodedBlock:
    """Losslessly encode ``data``.  ``backend=None`` keeps the smallest encoding."""
    data = bytes(data)
    if raw_bits is None:
        raw_bits = 8 * len(data)
    if (raw_bits + 7) // 8 != len(data):
        raise ValueError(f"{len(data)} bytes cannot hold {raw_bits} bits")
    if backend is None:
        candidates = [backend_encode(data, b, raw_bits) for b in sorted(BACKENDS)]
        return min(candidates, key=len)
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend id {backend}")
    payload = BACKENDS[backend][0](data)
    return EncodedBlock(backend, raw_bits, payload, zlib.crc32(payload))


def backend_decode(block: EncodedBlock) -> bytes:
    if block.backend not in BACKENDS:
        raise CorruptDataError(f"unknown backend id {block.backend}")
    if zlib.crc32(block.payload) != block.checksum:
        raise CorruptDataError("block checksum mismatch")
    try:
        data = BACKENDS[block.backend][1](block.payload)
    except zlib.error as exc:
        raise CorruptDataError(f"backend failed to decode block: {exc}") from exc
    if len(data) != block.raw_size:
        raise CorruptDataError(
            f"block decoded to {len(data)} bytes, expected {block.raw_size}"
        )
    return data


def encode_planes(bitplanes: BitplaneSet, backend: int | None = None) -> list[EncodedBlock]:
    """Prefix-XOR the planes and encode each one as an independent block."""
    encoded = xor_encode(bitplanes)
    return [
        backend_encode(encoded.plane_bytes(p), backend, encoded.count)
        for p in range(NPLANES)
    ]


def decode_planes(blocks: dict[int, EncodedBlock], count: int) -> BitplaneSet:
    """Unpack backend blocks keyed by plane index into a (still XOR-coded) plane set."""
    out = BitplaneSet.empty(count)
    for p, block in blocks.items():
        if block.raw_bits != count:
            raise CorruptDataError(
                f"plane {p} holds {block.raw_bits} bits, expected {count}"
            )
        out.planes[p] = np.frombuffer(backend_decode(block), dtype=np.uint8)
    return out
