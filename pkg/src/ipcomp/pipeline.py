"""Compression, from-scratch reconstruction and incremental refinement.

Reconstruction state is kept in fixed point: every value is an integer
multiple of ``2*eb / 2**frac_bits``, where ``frac_bits`` covers the fractional
bits all interpolation passes can introduce.  Predictions are then exact
integer operations, the encoder and decoder agree bit for bit, and a
reconstruction is an exact linear function of the quantization codes.  That
linearity is what lets :func:`refine` push only code increments through the
predictor and still land on the same bytes as :func:`reconstruct`.
"""

from __future__ import annotations

import io
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import bpcodec
from .archive import (
    ArchiveHeader,
    ArchiveIndex,
    LevelBlocks,
    RetrievalPlan,
    layout_blocks,
    read_blocks,
    read_header,
    write_archive,
)
from .bpcodec import NPLANES, EncodedBlock
from .errors import CorruptDataError, SessionMismatchError
from .grid import DEFAULT_ANCHOR_CAP, FieldGrid, level_count, level_passes
from .planner import ErrorModel
from .predictor import CUBIC, InterpKind, predict_pass
from .quantizer import from_negabinary, quantize, to_negabinary, truncate

__all__ = [
    "Archive",
    "RetrievalSession",
    "compress",
    "reconstruct",
    "refine",
]

log = logging.getLogger(__name__)

# relative headroom added to measured losses for float rounding in the output
_ROUNDING = {"f64": 2.0**-50, "f32": 2.0**-22}
# relative error allowance for measuring propagated losses in float32
_PROPAGATION_SLACK = 2.0**-10
_BATCH_ELEMENTS = 1 << 24


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("IPCOMP_THREADS", "")))
    except ValueError:
        return min(4, os.cpu_count() or 1)


def _pmap(fn, items):
    items = list(items)
    workers = _threads()
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class _FixedPoint:
    frac_bits: int
    dtype: np.dtype
    step: float  # 2 * eb

    @classmethod
    def for_grid(cls, kind: InterpKind, dims, levels: int, eb: float) -> "_FixedPoint":
        passes = (levels - 1) * sum(1 for n in dims if n > 1)
        frac_bits = kind.pass_bits * passes
        # linear: |state| < 2**37 (codes < 2**32 through <= 24 averaging passes)
        dtype = np.dtype(np.int64) if frac_bits + 38 <= 62 else np.dtype(object)
        return cls(frac_bits, dtype, 2.0 * eb)

    def zeros(self, shape) -> np.ndarray:
        out = np.zeros(shape, dtype=self.dtype)
        if self.dtype == object:
            out.fill(0)
        return out

    def lift(self, codes: np.ndarray) -> np.ndarray:
        """Codes as fixed-point values."""
        codes = np.asarray(codes, dtype=np.int64)
        if self.dtype == object:
            codes = codes.astype(object)
        return codes << self.frac_bits

    def to_float(self, state: np.ndarray) -> np.ndarray:
        return state.astype(np.float64) * math.ldexp(self.step, -self.frac_bits)


def _ordinal_to_flat(dims, level: int, levels: int) -> np.ndarray:
    """Flat grid index of each point of ``level`` in traversal order."""
    flat = np.arange(math.prod(dims)).reshape(dims)
    return np.concatenate(
        [flat[p.slices].reshape(-1) for p in level_passes(dims, level, levels)]
    )


# -- compression ---------------------------------------------------------------


@dataclass
class _LevelCodes:
    codes: np.ndarray
    outlier_ordinals: np.ndarray
    outlier_values: np.ndarray


def _quantize_levels(x: np.ndarray, eb: float, kind: InterpKind, levels: int,
                     fx: _FixedPoint, scalar_kind: str):
    """Walk the levels coarse to fine, quantizing against the decoder's own state."""
    dims = x.shape
    state = fx.zeros(dims)
    out = {}
    for level in range(levels, 0, -1):
        codes, ords, vals = [], [], []
        offset = 0
        for p in level_passes(dims, level, levels):
            pred = predict_pass(state, p, kind)
            target = x[p.slices]
            q, bad = quantize(target - fx.to_float(pred), eb)
            recon = pred + fx.lift(q)
            value = fx.to_float(recon)
            with np.errstate(invalid="ignore"):
                ok = np.abs(target - value) <= eb
                if scalar_kind == "f32":
                    ok &= np.abs(target - value.astype(np.float32)) <= eb
            bad |= ~ok
            if bad.any():
                q[bad] = 0
                recon[bad] = pred[bad]
                idx = np.flatnonzero(bad)
                ords.append(offset + idx)
                vals.append(target.reshape(-1)[idx])
            state[p.slices] = recon
            codes.append(q.reshape(-1))
            offset += p.size
        out[level] = _LevelCodes(
            np.concatenate(codes) if codes else np.zeros(0, np.int64),
            np.concatenate(ords) if ords else np.zeros(0, np.int64),
            np.concatenate(vals) if vals else np.zeros(0, np.float64),
        )
    return out, state


def _propagated_loss(dims, levels: int, level: int, increments: np.ndarray,
                     kind: InterpKind) -> np.ndarray:
    """Max |change| anywhere in the grid caused by per-point code increments at ``level``.

    ``increments`` is (batch, |V_level|) in code units.  Linear and copy
    predictions never leave the hull of their sources, so for the linear kind
    the maximum is reached inside ``level`` itself; cubic ones can overshoot
    and are followed through every finer level.
    """
    nb = increments.shape[0]
    field_ = np.zeros((nb,) + tuple(dims), dtype=increments.dtype)
    offset = 0
    for p in level_passes(dims, level, levels):
        block = increments[:, offset:offset + p.size].reshape((nb,) + p.shape)
        field_[(slice(None),) + p.slices] = predict_pass(field_, p, kind) + block
        offset += p.size
    if kind is CUBIC:
        for finer in range(level - 1, 0, -1):
            for p in level_passes(dims, finer, levels):
                field_[(slice(None),) + p.slices] = predict_pass(field_, p, kind)
    return np.abs(field_.reshape(nb, -1)).max(axis=1)


def _loss_table(dims, levels: int, level: int, codes: np.ndarray, kind: InterpKind,
                step: float, headroom: float, peak: float) -> np.ndarray:
    """Measured max output deviation when the ``d`` lowest planes of a level are dropped."""
    table = np.zeros(NPLANES + 1)
    if codes.size == 0:
        return table
    words = to_negabinary(codes)
    distinct = []
    which = np.full(NPLANES + 1, -1)
    previous = codes
    for d in range(1, NPLANES + 1):
        kept = from_negabinary(truncate(words, d))
        if np.array_equal(kept, previous):
            which[d] = which[d - 1]
            continue
        distinct.append(kept - codes)
        which[d] = len(distinct) - 1
        previous = kept
    if distinct:
        per_batch = max(1, _BATCH_ELEMENTS // math.prod(dims))
        losses = []
        for i in range(0, len(distinct), per_batch):
            chunk = np.stack(distinct[i:i + per_batch]).astype(np.float32)
            losses.append(_propagated_loss(dims, levels, level, chunk, kind))
        losses = np.concatenate(losses).astype(np.float64) * step
        for d in range(1, NPLANES + 1):
            if which[d] >= 0:
                raw = losses[which[d]]
                table[d] = raw * (1 + _PROPAGATION_SLACK) + headroom * (peak + raw)
    return table


def compress(grid: FieldGrid, eb: float, interp="cubic", progressive_levels: int | None = None,
             anchor_cap: int = DEFAULT_ANCHOR_CAP, backend: int | None = None) -> bytes:
    """Compress a field so that full retrieval keeps every point within ``eb``.

    ``progressive_levels`` (default: all) is the number of finest levels whose
    bitplanes may be skipped at retrieval; coarser levels are always loaded.
    ``backend=None`` picks the smaller of the lossless backends per block.
    """
    if not (eb > 0 and math.isfinite(eb)):
        raise ValueError(f"error bound must be positive and finite, got {eb}")
    kind = InterpKind.parse(interp)
    dims = grid.dims
    levels = level_count(dims, anchor_cap)
    if progressive_levels is None:
        progressive_levels = levels
    if not 1 <= progressive_levels <= levels:
        raise ValueError(f"progressive level count must lie in 1..{levels}")
    x = grid.as_array().astype(np.float64)
    finite = x[np.isfinite(x)]
    vmin, vmax = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 0.0)

    fx = _FixedPoint.for_grid(kind, dims, levels, eb)
    per_level, state = _quantize_levels(x, eb, kind, levels, fx, grid.scalar_kind)
    peak = float(np.abs(fx.to_float(state)).max(initial=0.0))
    headroom = _ROUNDING[grid.scalar_kind]

    def encode_level(level):
        lc = per_level[level]
        delta = _loss_table(dims, levels, level, lc.codes, kind, fx.step, headroom, peak)
        planes = bpcodec.split(to_negabinary(lc.codes))
        blocks = bpcodec.encode_planes(planes, backend)
        raw = lc.outlier_ordinals.astype("<u8").tobytes() + lc.outlier_values.astype("<f8").tobytes()
        outliers = bpcodec.backend_encode(raw, backend)
        return LevelBlocks(level, lc.codes.size, delta, lc.outlier_ordinals.size, outliers, blocks)

    level_blocks = _pmap(encode_level, range(levels, 0, -1))
    records, payload = layout_blocks(level_blocks)
    header = ArchiveHeader(grid.scalar_kind, kind.name, dims, float(eb), levels,
                           progressive_levels, anchor_cap, vmin, vmax, len(payload))
    data = write_archive(header, records, payload)
    log.debug("compressed %s to %d bytes", dims, len(data))
    return data


# -- retrieval -------------------------------------------------------------------


class Archive:
    """A compressed field opened for planning and partial reads."""

    def __init__(self, stream):
        if isinstance(stream, (bytes, bytearray, memoryview)):
            stream = io.BytesIO(bytes(stream))
        self.stream = stream
        stream.seek(0)
        self.index: ArchiveIndex = read_header(stream)
        self.bytes_read = 0

    @classmethod
    def open(cls, path) -> "Archive":
        return cls(open(Path(path), "rb"))

    def close(self):
        self.stream.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def header(self) -> ArchiveHeader:
        return self.index.header

    @property
    def identity(self) -> int:
        return self.index.identity

    def error_model(self) -> ErrorModel:
        return ErrorModel.from_index(self.index)

    def full_plan(self) -> RetrievalPlan:
        return RetrievalPlan.full(self.header.levels)

    def read(self, plan: RetrievalPlan, base: RetrievalPlan | None = None):
        blocks, nread = read_blocks(self.stream, self.index, plan, base)
        self.bytes_read += nread
        return blocks, nread


def _as_archive(archive) -> Archive:
    return archive if isinstance(archive, Archive) else Archive(archive)


def _decode_outliers(block: EncodedBlock, count: int):
    raw = bpcodec.backend_decode(block)
    if len(raw) != 16 * count:
        raise CorruptDataError("outlier block size does not match its count")
    ords = np.frombuffer(raw[:8 * count], dtype="<u8").astype(np.int64)
    vals = np.frombuffer(raw[8 * count:], dtype="<f8").astype(np.float64)
    return ords, vals


@dataclass
class RetrievalSession:
    """What a retrieval loaded, so a later refinement only reads new planes.

    ``codewords[l]`` holds level ``l``'s negabinary codewords with the
    unloaded digits zeroed.  Serialized layout::

        "IPS1" | archive identity u32 | L u8 | bytes loaded u64
        per level L..1: k u8 | outlier count u64 | codeword block | outlier block
    """

    identity: int
    plan: RetrievalPlan
    codewords: dict[int, np.ndarray]
    outliers: dict[int, tuple[np.ndarray, np.ndarray]]
    bytes_loaded: int = 0
    _state: np.ndarray | None = field(default=None, repr=False, compare=False)

    MAGIC = b"IPS1"

    def to_bytes(self) -> bytes:
        out = bytearray(self.MAGIC + struct.pack("<IBQ", self.identity, len(self.plan.loaded), self.bytes_loaded))
        for level in range(len(self.plan.loaded), 0, -1):
            words = self.codewords[level].astype("<u4").tobytes()
            ords, vals = self.outliers[level]
            raw = ords.astype("<u8").tobytes() + vals.astype("<f8").tobytes()
            out += struct.pack("<BQ", self.plan.k(level), ords.size)
            out += bpcodec.backend_encode(words, None).to_bytes()
            out += bpcodec.backend_encode(raw, None).to_bytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "RetrievalSession":
        buf = memoryview(data)
        if bytes(buf[:4]) != cls.MAGIC:
            raise CorruptDataError("not a retrieval session")
        identity, nlevels, nbytes = struct.unpack_from("<IBQ", buf, 4)
        pos = 17
        loaded, codewords, outliers = {}, {}, {}
        for level in range(nlevels, 0, -1):
            k, count = struct.unpack_from("<BQ", buf, pos)
            pos += 9
            words = EncodedBlock.from_bytes(buf, pos)
            pos += len(words)
            extra = EncodedBlock.from_bytes(buf, pos)
            pos += len(extra)
            loaded[level] = k
            codewords[level] = np.frombuffer(bpcodec.backend_decode(words), dtype="<u4").astype(np.uint32)
            outliers[level] = _decode_outliers(extra, count)
        plan = RetrievalPlan(tuple(loaded[l] for l in range(1, nlevels + 1)))
        return cls(identity, plan, codewords, outliers, nbytes)


def _synthesize(header: ArchiveHeader, codes: dict[int, np.ndarray], fx: _FixedPoint,
                observer: Callable[[int], None] | None = None) -> np.ndarray:
    """Run the predictor over all levels, adding each level's dequantized codes."""
    kind = InterpKind.parse(header.interp)
    state = fx.zeros(header.dims)
    for level in range(header.levels, 0, -1):
        if observer is not None:
            observer(level)
        q = codes[level]
        offset = 0
        for p in level_passes(header.dims, level, header.levels):
            pred = predict_pass(state, p, kind)
            state[p.slices] = pred + fx.lift(q[offset:offset + p.size].reshape(p.shape))
            offset += p.size
        if offset != q.size:
            raise CorruptDataError(f"level {level} holds {q.size} codes, expected {offset}")
    return state


def _render(header: ArchiveHeader, state: np.ndarray, fx: _FixedPoint,
            outliers: dict[int, tuple[np.ndarray, np.ndarray]]) -> FieldGrid:
    values = fx.to_float(state).reshape(-1)
    if header.scalar_kind == "f32":
        values = values.astype(np.float32)
    for level, (ords, vals) in outliers.items():
        if ords.size:
            flat = _ordinal_to_flat(header.dims, level, header.levels)
            if ords.max() >= flat.size:
                raise CorruptDataError(f"outlier ordinal out of range in level {level}")
            values[flat[ords]] = vals
    return FieldGrid(header.dims, values)


def _fixed_point(header: ArchiveHeader) -> _FixedPoint:
    return _FixedPoint.for_grid(InterpKind.parse(header.interp), header.dims, header.levels, header.eb)


def _decode_level(count: int, planes: dict[int, EncodedBlock], k: int,
                  start: int = 0, prefix: np.ndarray | None = None) -> np.ndarray:
    encoded = bpcodec.decode_planes(planes, count)
    known = bpcodec.split(prefix) if prefix is not None else None
    decoded = bpcodec.xor_decode(encoded, k, start, known)
    return bpcodec.merge(decoded, k)


def reconstruct(archive, plan: RetrievalPlan | None = None,
                observer: Callable[[int], None] | None = None) -> tuple[FieldGrid, RetrievalSession]:
    """Load the blocks ``plan`` names and rebuild the field in one pass over the levels."""
    archive = _as_archive(archive)
    header = archive.header
    if plan is None:
        plan = archive.full_plan()
    blocks, nread = archive.read(plan)

    def decode(level):
        rec = archive.index.records[level]
        words = _decode_level(rec.count, blocks[level].planes, plan.k(level))
        outliers = _decode_outliers(blocks[level].outliers, rec.outliers[2])
        return level, words, outliers

    decoded = _pmap(decode, range(header.levels, 0, -1))
    codewords = {level: words for level, words, _ in decoded}
    outliers = {level: extra for level, _, extra in decoded}
    fx = _fixed_point(header)
    codes = {level: from_negabinary(w) for level, w in codewords.items()}
    state = _synthesize(header, codes, fx, observer)
    grid = _render(header, state, fx, outliers)
    session = RetrievalSession(archive.identity, RetrievalPlan(plan.loaded), codewords,
                               outliers, nread, state)
    return grid, session


def refine(archive, session: RetrievalSession, previous: FieldGrid,
           plan: RetrievalPlan) -> tuple[FieldGrid, RetrievalSession]:
    """Move a previous reconstruction to ``plan`` by loading only the missing planes.

    Levels where ``plan`` holds fewer planes than the session are truncated
    from the session's codewords without any reads.  The code increments of
    every level are pushed through the predictor starting from a zero field,
    and the result is added to the previous state.  The output equals
    ``reconstruct(archive, plan)`` exactly.
    """
    archive = _as_archive(archive)
    header = archive.header
    if session.identity != archive.identity:
        raise SessionMismatchError("session belongs to a different archive")
    archive.index.validate_plan(plan)
    fx = _fixed_point(header)
    old_codes = {l: from_negabinary(w) for l, w in session.codewords.items()}
    state = session._state
    if state is None:
        state = _synthesize(header, old_codes, fx)
    if _render(header, state, fx, session.outliers).tobytes() != previous.tobytes():
        raise SessionMismatchError("previous reconstruction does not match the session")

    blocks, nread = archive.read(plan.union(session.plan), base=session.plan)
    codewords = dict(session.codewords)
    increments = {}
    for level in range(header.levels, 0, -1):
        k_old, k_new = session.plan.k(level), plan.k(level)
        if k_new > k_old:
            rec = archive.index.records[level]
            codewords[level] = _decode_level(rec.count, blocks[level].planes, k_new,
                                             k_old, session.codewords[level])
        elif k_new < k_old:
            codewords[level] = truncate(session.codewords[level], NPLANES - k_new)
        else:
            continue
        increments[level] = from_negabinary(codewords[level]) - old_codes[level]

    kind = InterpKind.parse(header.interp)
    change = fx.zeros(header.dims)
    top = max(increments, default=0)
    for level in range(top, 0, -1):
        dq = increments.get(level)
        offset = 0
        for p in level_passes(header.dims, level, header.levels):
            pred = predict_pass(change, p, kind)
            if dq is not None:
                pred = pred + fx.lift(dq[offset:offset + p.size].reshape(p.shape))
            change[p.slices] = pred
            offset += p.size
    new_state = state + change
    grid = _render(header, new_state, fx, session.outliers)
    updated = RetrievalSession(session.identity, RetrievalPlan(plan.loaded), codewords,
                               session.outliers, session.bytes_loaded + nread, new_state)
    return grid, updated
