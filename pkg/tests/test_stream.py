import os

import numpy as np
import pytest

from pgsv.errors import (CorruptStreamError, StreamFormatError,
                         StreamTruncatedError)
from pgsv.quantize import QuantParams, quantize_video
from pgsv.splats import GaussianVideo, LayeredFrame, SplatArray
from pgsv.stream import (pack_bits, read_stream, truncate_stream, unpack_bits,
                         write_stream)

from conftest import FIXTURES

import sys
sys.path.insert(0, FIXTURES)
from make_fixtures import golden_quantized_video  # noqa: E402


class TestBitPacking:
    @pytest.mark.parametrize("bits", [1, 3, 5, 6, 8, 12, 16])
    def test_round_trip(self, bits):
        rng = np.random.default_rng(bits)
        values = rng.integers(0, 2 ** bits, size=201, dtype=np.uint32)
        packed = pack_bits(values, bits)
        assert len(packed) == (201 * bits + 7) // 8
        out = unpack_bits(packed, 201, bits)
        assert np.array_equal(out, values)

    def test_msb_first_within_byte(self):
        # two 6-bit values 0b101010, 0b010101 -> 10101001 0101(0000)
        packed = pack_bits(np.array([0b101010, 0b010101]), 6)
        assert packed == bytes([0b10101001, 0b01010000])

    def test_short_buffer_rejected(self):
        with pytest.raises(CorruptStreamError):
            unpack_bits(b"\x00", 10, 6)


def _random_quantized(seed=3, counts=(20, 30, 25), frames=3):
    rng = np.random.default_rng(seed)

    def mkframe(kind):
        layers = [SplatArray(rng.random((n, 2)),
                             np.column_stack([rng.uniform(0.5, 3, n),
                                              rng.uniform(-0.5, 0.5, n),
                                              rng.uniform(0.5, 3, n)]),
                             rng.random((n, 3)), rng.uniform(0.2, 1.5, n))
                  for n in counts]
        return LayeredFrame(layers, kind, counts)

    fr = [mkframe("I")]
    for t in range(1, frames):
        prev = fr[-1]
        layers = [SplatArray(
            l.pos + rng.normal(0, 0.01, l.pos.shape).astype(np.float32),
            l.chol + rng.normal(0, 0.05, l.chol.shape).astype(np.float32),
            l.color + rng.normal(0, 0.02, l.color.shape).astype(np.float32),
            np.ones(len(l), dtype=np.float32)) for l in prev.layers]
        fr.append(LayeredFrame(layers, "P", counts))
    video = GaussianVideo(fr, 32, 32, [(32, 32)] * len(counts), "quality")
    qv, _ = quantize_video(video, QuantParams(), seed=0)
    return qv


def _frames_equal(a, b):
    if a.frame_kind != b.frame_kind:
        return False
    if not np.array_equal(a.codebooks, b.codebooks):
        return False
    for l1, l2 in zip(a.layers, b.layers):
        for field in ("pos_codes", "chol_codes", "chol_gamma", "chol_beta",
                      "color_codes"):
            if not np.array_equal(getattr(l1, field), getattr(l2, field)):
                return False
    return True


class TestStreamRoundTrip:
    def test_write_read_field_identical(self):
        qv = _random_quantized()
        data = write_stream(qv)
        back = read_stream(data)
        assert back.width == qv.width and back.height == qv.height
        assert back.level_resolutions == qv.level_resolutions
        assert all(_frames_equal(a, b) for a, b in zip(qv.frames, back.frames))

    def test_writes_are_deterministic(self):
        qv = _random_quantized()
        assert write_stream(qv) == write_stream(qv)

    def test_chunk_count_in_header(self):
        from pgsv.stream import _parse_header
        qv = _random_quantized(frames=2)
        h = _parse_header(write_stream(qv))
        assert len(h.table) == 2 * 3

    def test_offsets_strictly_increasing(self):
        from pgsv.stream import _parse_header
        h = _parse_header(write_stream(_random_quantized()))
        offsets = [off for off, _ in h.table]
        assert offsets == sorted(offsets)
        assert len(set(offsets)) == len(offsets)


class TestTruncate:
    def test_prefix_equivalence(self):
        qv = _random_quantized()
        data = write_stream(qv)
        for level in range(3):
            sub = truncate_stream(data, level)
            a = read_stream(sub, level)
            b = read_stream(data, level)
            assert a.level_resolutions == b.level_resolutions
            assert all(_frames_equal(x, y) for x, y in zip(a.frames, b.frames))

    def test_top_level_truncate_is_identity(self):
        data = write_stream(_random_quantized())
        assert truncate_stream(data, 2) == data

    def test_truncated_smaller(self):
        data = write_stream(_random_quantized())
        assert len(truncate_stream(data, 0)) < len(truncate_stream(data, 1)) \
            < len(data)

    def test_chunk_size_accounting(self):
        from pgsv.stream import _header_size, _parse_header
        data = write_stream(_random_quantized(frames=2))
        h = _parse_header(data)
        chunk_bytes = sum(length for _, length in h.table)
        assert len(data) == h.size + chunk_bytes
        lvl0 = truncate_stream(data, 0)
        enh = sum(length for (off, length) in h.table[2:])
        header_delta = h.size - _header_size(2, 1)
        assert len(lvl0) == len(data) - enh - header_delta

    def test_retruncation_idempotent(self):
        data = write_stream(_random_quantized())
        once = truncate_stream(data, 0)
        assert truncate_stream(once, 0) == once

    def test_level_out_of_range(self):
        data = write_stream(_random_quantized())
        with pytest.raises(IndexError):
            truncate_stream(data, 3)
        with pytest.raises(IndexError):
            read_stream(data, 5)


class TestErrors:
    def test_bad_magic(self):
        data = bytearray(write_stream(_random_quantized()))
        data[0] ^= 0xFF
        with pytest.raises(StreamFormatError):
            read_stream(bytes(data))

    def test_bad_version(self):
        data = bytearray(write_stream(_random_quantized()))
        data[4] = 99
        with pytest.raises(StreamFormatError):
            read_stream(bytes(data))

    def test_payload_truncated_inside_layer(self):
        data = write_stream(_random_quantized())
        cut = data[: len(data) - 10]
        with pytest.raises(StreamTruncatedError):
            read_stream(cut)
        # lower layers before the cut still decode
        read_stream(cut, 0)


class TestGoldenFixture:
    def test_writer_reproduces_golden_bytes(self):
        with open(os.path.join(FIXTURES, "golden.pgsv"), "rb") as f:
            golden = f.read()
        assert write_stream(golden_quantized_video()) == golden

    def test_golden_reads_back(self):
        with open(os.path.join(FIXTURES, "golden.pgsv"), "rb") as f:
            golden = f.read()
        qv = read_stream(golden)
        ref = golden_quantized_video()
        assert qv.scalability_mode == "resolution"
        assert qv.level_resolutions == ref.level_resolutions
        assert all(_frames_equal(a, b) for a, b in zip(qv.frames, ref.frames))
