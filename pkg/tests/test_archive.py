import io
from dataclasses import replace

import numpy as np
import pytest

from ipcomp import compress, reconstruct
from ipcomp.archive import (
    ArchiveHeader,
    LevelBlocks,
    RetrievalPlan,
    layout_blocks,
    read_blocks,
    read_header,
    write_archive,
)
from ipcomp.bpcodec import backend_encode
from ipcomp.errors import CorruptDataError
from ipcomp.grid import FieldGrid
from ipcomp.pipeline import Archive
from ipcomp.quantizer import from_negabinary, suffix_uncertainty


class CountingStream(io.BytesIO):
    """Records the furthest byte any read reached."""

    def __init__(self, data):
        super().__init__(data)
        self.furthest = 0

    def read(self, n=-1):
        out = super().read(n)
        self.furthest = max(self.furthest, self.tell())
        return out


def toy_archive(levels=2, rng=None):
    rng = rng or np.random.default_rng(5)
    header = ArchiveHeader("f64", "linear", (9,), 0.5, levels, levels, 64, -1.0, 2.0)
    blocks = []
    for level in range(levels, 0, -1):
        planes = [backend_encode(rng.integers(0, 256, 3, dtype=np.uint8).tobytes(), None, 20)
                  for _ in range(32)]
        outliers = backend_encode(np.arange(4, dtype="<u8").tobytes() + np.ones(4).tobytes(), None)
        blocks.append(LevelBlocks(level, 20, np.linspace(0, 1, 33), 4, outliers, planes))
    records, payload = layout_blocks(blocks)
    return header, records, payload, blocks


def test_round_trip():
    header, records, payload, blocks = toy_archive()
    data = write_archive(header, records, payload)
    index = read_header(data)
    assert index.header.payload_length == len(payload)
    assert index.header.dims == (9,) and index.header.interp == "linear"
    assert index.data_offset + len(payload) == len(data)
    for rec in records:
        got = index.records[rec.level]
        assert got.count == rec.count and got.outliers == rec.outliers
        assert got.planes == rec.planes
        assert np.array_equal(got.delta, rec.delta)
    loaded, _ = read_blocks(data, index, RetrievalPlan.full(2))
    for lb in blocks:
        assert loaded[lb.level].outliers == lb.outlier_block
        for p in range(32):
            assert loaded[lb.level].planes[p] == lb.plane_blocks[p]


def test_header_read_never_touches_payload():
    header, records, payload, _ = toy_archive()
    stream = CountingStream(write_archive(header, records, payload))
    index = read_header(stream)
    assert stream.furthest == index.data_offset


def test_read_sizes():
    header, records, payload, _ = toy_archive()
    data = write_archive(header, records, payload)
    index = read_header(data)
    _, nread = read_blocks(data, index, RetrievalPlan((0, 0)))
    assert nread == sum(rec.outliers[1] for rec in records)
    _, nread = read_blocks(data, index, RetrievalPlan.full(2))
    assert nread == len(payload)
    plan = RetrievalPlan((8, 32))
    _, nread = read_blocks(data, index, plan)
    expected = sum(rec.outliers[1] + sum(ln for _, ln in rec.planes[:plan.k(rec.level)]) for rec in records)
    assert nread == expected == index.plan_size(plan)
    base = RetrievalPlan((4, 20))
    loaded, nread = read_blocks(data, index, plan, base)
    assert nread == index.plan_size(plan, base)
    assert sorted(loaded[1].planes) == list(range(4, 8)) and loaded[1].outliers is None
    with pytest.raises(ValueError):
        read_blocks(data, index, base, plan)


def test_non_progressive_levels_must_be_loaded():
    header, records, payload, _ = toy_archive()
    data = write_archive(replace(header, progressive_levels=1), records, payload)
    index = read_header(data)
    with pytest.raises(ValueError):
        read_blocks(data, index, RetrievalPlan((32, 10)))


def test_corruption_is_detected():
    header, records, payload, _ = toy_archive()
    data = bytearray(write_archive(header, records, payload))
    with pytest.raises(CorruptDataError):
        read_header(b"XXXX" + bytes(data[4:]))
    with pytest.raises(CorruptDataError):
        read_header(bytes(data[:40]))
    flipped = bytearray(data)
    flipped[30] ^= 1
    with pytest.raises(CorruptDataError):
        read_header(bytes(flipped))
    index = read_header(bytes(data))
    with pytest.raises(CorruptDataError):
        read_blocks(bytes(data[:-10]), index, RetrievalPlan.full(2))


def test_level_order_enforced():
    header, records, payload, _ = toy_archive()
    with pytest.raises(ValueError):
        write_archive(header, records[::-1], payload)


@pytest.mark.parametrize("interp", ["linear", "cubic"])
def test_delta_tables_are_sound(interp, smooth, rng):
    x = smooth((20, 17, 12), rng)
    eb = 1e-4 * np.ptp(x)
    archive = Archive(compress(FieldGrid.from_array(x), eb, interp))
    full, full_session = reconstruct(archive)
    L = archive.header.levels
    for level in range(1, L + 1):
        rec = archive.index.records[level]
        assert rec.delta[0] == 0
        codes = full_session.codewords[level]
        for d in (1, 2, 5, 9, 14, 20, 32):
            loaded = [32] * L
            loaded[level - 1] = 32 - d
            part, session = reconstruct(archive, RetrievalPlan(tuple(loaded)))
            loss = np.abs(part.values - full.values).max()
            assert loss <= rec.delta[d]
            # measured tables are attained up to the float headroom
            assert loss >= rec.delta[d] / 1.01
            # analytic cross-check on the codes themselves
            dq = from_negabinary(session.codewords[level]) - from_negabinary(codes)
            assert np.abs(dq).max() <= suffix_uncertainty(d)
