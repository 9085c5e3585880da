"""Layered prefix-truncatable container for quantized videos (.pgsv files).

All integers are little-endian.  Sub-byte codes are packed MSB-first within
each byte and every field is padded to a byte boundary.  Chunks are laid out
layer-major (every frame's layer 0, then every frame's layer 1, ...), so a
stream truncated after layer l keeps a contiguous prefix of the chunk region;
the header carries explicit per-chunk offsets either way.

Header layout:
    magic "PGSL" | version u16 | width u32 | height u32 | frame_count u32
    | layer_count u16 | scalability_mode u8
    | pos_bits_I u8 | pos_bits_P u8 | chol_bits_I u8 | chol_bits_P u8
    | vq_stages u8 | codebook_bits u8
    | layer_count x (H u32, W u32)
    | frame_count x kind u8 (0 = I, 1 = P)
    | layer-major chunk table: (layer_count * frame_count) x (offset u64, length u64)

Chunk layout (one per frame per layer):
    splat_count u32
    positions  (I: count*2 x u16 half codes; P: count*2 x 12-bit codes, packed)
    chol gamma 3 x f32 | chol beta 3 x f32 | count*3 x b-bit offset-binary codes
    [layer-0 chunks only: codebooks vq_stages * B * 3 x f32]
    count * vq_stages x codebook_bits-bit VQ indices, packed
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (CorruptStreamError, StreamFormatError,
                     StreamTruncatedError)
from .quantize import (QuantParams, QuantizedFrame, QuantizedLayer,
                       QuantizedVideo, _chol_signed, signed_range,
                       unsigned_range)

MAGIC = b"PGSL"
VERSION = 1


def pack_bits(values, bits: int) -> bytes:
    """MSB-first bit packing of nonnegative integers, zero-padded to bytes."""
    v = np.asarray(values, dtype=np.uint32).ravel()
    if v.size == 0:
        return b""
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint32)
    bitmat = ((v[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return np.packbits(bitmat.ravel(), bitorder="big").tobytes()


def unpack_bits(data: bytes, count: int, bits: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.uint32)
    need = (count * bits + 7) // 8
    if len(data) < need:
        raise CorruptStreamError("bit-packed field shorter than declared")
    raw = np.frombuffer(data[:need], dtype=np.uint8)
    bitarr = np.unpackbits(raw, bitorder="big")[: count * bits]
    weights = (np.uint32(1) << np.arange(bits - 1, -1, -1, dtype=np.uint32))
    return np.sum(bitarr.reshape(count, bits).astype(np.uint32)
                  * weights[None, :], axis=1, dtype=np.uint32)


def packed_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8


def _chol_range(frame_kind: str, layer_index: int, params: QuantParams):
    bits = params.chol_bits(frame_kind)
    if _chol_signed(frame_kind, layer_index):
        return bits, signed_range(bits)
    return bits, unsigned_range(bits)


def _build_chunk(ql: QuantizedLayer, layer_index: int, frame: QuantizedFrame,
                 params: QuantParams) -> bytes:
    n = ql.pos_codes.shape[0]
    out = bytearray()
    out += struct.pack("<I", n)
    if frame.frame_kind == "I":
        out += np.ascontiguousarray(ql.pos_codes, dtype="<u2").tobytes()
    else:
        out += pack_bits(ql.pos_codes.ravel(), 12)
    out += np.ascontiguousarray(ql.chol_gamma, dtype="<f4").tobytes()
    out += np.ascontiguousarray(ql.chol_beta, dtype="<f4").tobytes()
    bits, (lmin, lmax) = _chol_range(frame.frame_kind, layer_index, params)
    codes = ql.chol_codes.astype(np.int64)
    if codes.size and (codes.min() < lmin or codes.max() > lmax):
        raise StreamFormatError("chol codes outside their declared range")
    out += pack_bits((codes - lmin).ravel(), bits)
    if layer_index == 0:
        out += np.ascontiguousarray(frame.codebooks, dtype="<f4").tobytes()
    if ql.color_codes.size and int(ql.color_codes.max()) >= params.codebook_size:
        raise StreamFormatError("VQ index outside the codebook")
    out += pack_bits(ql.color_codes.ravel(), params.codebook_bits)
    return bytes(out)


def _parse_chunk(data: bytes, layer_index: int, frame_kind: str,
                 params: QuantParams):
    """Returns (QuantizedLayer, codebooks-or-None); data is exactly one chunk."""
    pos = 0

    def need(nbytes: int) -> bytes:
        nonlocal pos
        if pos + nbytes > len(data):
            raise CorruptStreamError("chunk ends mid-field")
        piece = data[pos:pos + nbytes]
        pos += nbytes
        return piece

    (count,) = struct.unpack("<I", need(4))
    if frame_kind == "I":
        pos_codes = np.frombuffer(need(count * 4), dtype="<u2").reshape(count, 2)
        pos_codes = pos_codes.astype(np.uint16)
    else:
        raw = need(packed_size(count * 2, 12))
        pos_codes = unpack_bits(raw, count * 2, 12).astype(np.uint16).reshape(count, 2)
    gamma = np.frombuffer(need(12), dtype="<f4").astype(np.float32)
    beta = np.frombuffer(need(12), dtype="<f4").astype(np.float32)
    bits, (lmin, _) = _chol_range(frame_kind, layer_index, params)
    raw = need(packed_size(count * 3, bits))
    chol_codes = (unpack_bits(raw, count * 3, bits).astype(np.int64)
                  + lmin).astype(np.int32).reshape(count, 3)
    codebooks = None
    if layer_index == 0:
        nfloats = params.vq_stages * params.codebook_size * 3
        codebooks = np.frombuffer(need(nfloats * 4), dtype="<f4").astype(
            np.float32).reshape(params.vq_stages, params.codebook_size, 3)
    raw = need(packed_size(count * params.vq_stages, params.codebook_bits))
    color_codes = unpack_bits(raw, count * params.vq_stages,
                              params.codebook_bits).astype(np.uint8)
    color_codes = color_codes.reshape(count, params.vq_stages)
    if pos != len(data):
        raise CorruptStreamError("chunk carries trailing bytes")
    return QuantizedLayer(pos_codes, chol_codes, gamma, beta, color_codes), codebooks


@dataclass
class _Header:
    width: int
    height: int
    frame_count: int
    layer_count: int
    scalability_mode: str
    params: QuantParams
    level_resolutions: list
    frame_kinds: list
    table: list  # layer-major [(offset, length)]
    size: int    # header byte length


def _header_size(frame_count: int, layer_count: int) -> int:
    return 27 + 8 * layer_count + frame_count + 16 * layer_count * frame_count


def _pack_header(h: _Header) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HIIIH", VERSION, h.width, h.height,
                       h.frame_count, h.layer_count)
    out += struct.pack("<B", 0 if h.scalability_mode == "quality" else 1)
    p = h.params
    out += struct.pack("<6B", p.pos_bits_iframe, p.pos_bits_pframe,
                       p.chol_bits_iframe, p.chol_bits_pframe,
                       p.vq_stages, p.codebook_bits)
    for lh, lw in h.level_resolutions:
        out += struct.pack("<II", lh, lw)
    out += bytes(0 if k == "I" else 1 for k in h.frame_kinds)
    for off, length in h.table:
        out += struct.pack("<QQ", off, length)
    return bytes(out)


def _parse_header(data: bytes) -> _Header:
    if len(data) < 27:
        raise StreamFormatError("stream shorter than a header")
    if data[:4] != MAGIC:
        raise StreamFormatError("bad magic (not a .pgsv stream)")
    version, width, height, frame_count, layer_count = struct.unpack(
        "<HIIIH", data[4:20])
    if version != VERSION:
        raise StreamFormatError(f"unsupported stream version {version}")
    (mode_byte,) = struct.unpack("<B", data[20:21])
    fields = struct.unpack("<6B", data[21:27])
    params = QuantParams(pos_bits_iframe=fields[0], pos_bits_pframe=fields[1],
                         chol_bits_iframe=fields[2], chol_bits_pframe=fields[3],
                         vq_stages=fields[4], codebook_bits=fields[5])
    size = _header_size(frame_count, layer_count)
    if len(data) < size:
        raise StreamFormatError("stream shorter than its header tables")
    pos = 27
    resolutions = []
    for _ in range(layer_count):
        lh, lw = struct.unpack("<II", data[pos:pos + 8])
        resolutions.append((lh, lw))
        pos += 8
    kinds = ["I" if b == 0 else "P" for b in data[pos:pos + frame_count]]
    pos += frame_count
    table = []
    for _ in range(layer_count * frame_count):
        off, length = struct.unpack("<QQ", data[pos:pos + 16])
        table.append((off, length))
        pos += 16
    return _Header(width, height, frame_count, layer_count,
                   "quality" if mode_byte == 0 else "resolution",
                   params, resolutions, kinds, table, size)


def write_stream(video: QuantizedVideo) -> bytes:
    """Serialize a quantized video; byte-exact and deterministic."""
    layer_count = video.num_layers
    for t, frame in enumerate(video.frames):
        if len(frame.layers) != layer_count:
            raise StreamFormatError(f"frame {t} has {len(frame.layers)} layers, "
                                    f"expected {layer_count}")
    chunks = []
    for l in range(layer_count):
        for frame in video.frames:
            chunks.append(_build_chunk(frame.layers[l], l, frame, video.params))
    hsize = _header_size(len(video.frames), layer_count)
    table = []
    offset = hsize
    for chunk in chunks:
        table.append((offset, len(chunk)))
        offset += len(chunk)
    header = _Header(video.width, video.height, len(video.frames), layer_count,
                     video.scalability_mode, video.params,
                     list(video.level_resolutions),
                     [f.frame_kind for f in video.frames], table, hsize)
    return _pack_header(header) + b"".join(chunks)


def read_stream(data: bytes, max_level: int | None = None) -> QuantizedVideo:
    """Decode chunks for layers <= max_level into a quantized video."""
    h = _parse_header(data)
    top = h.layer_count - 1
    if max_level is None:
        max_level = top
    if not 0 <= max_level <= top:
        raise IndexError(f"max_level {max_level} out of range (top {top})")
    per_frame_layers = [[] for _ in range(h.frame_count)]
    per_frame_codebooks = [None] * h.frame_count
    for l in range(max_level + 1):
        for t in range(h.frame_count):
            off, length = h.table[l * h.frame_count + t]
            if off + length > len(data):
                raise StreamTruncatedError(
                    f"chunk (frame {t}, layer {l}) extends past end of stream")
            ql, codebooks = _parse_chunk(data[off:off + length], l,
                                         h.frame_kinds[t], h.params)
            per_frame_layers[t].append(ql)
            if codebooks is not None:
                per_frame_codebooks[t] = codebooks
    frames = []
    for t in range(h.frame_count):
        kind = h.frame_kinds[t]
        frames.append(QuantizedFrame(kind, per_frame_codebooks[t],
                                     per_frame_layers[t],
                                     t - 1 if kind == "P" else None))
    return QuantizedVideo(frames, h.width, h.height,
                          h.level_resolutions[: max_level + 1],
                          h.scalability_mode, h.params)


def truncate_stream(data: bytes, level: int) -> bytes:
    """Drop all chunks above `level` and rewrite the header offsets."""
    h = _parse_header(data)
    top = h.layer_count - 1
    if not 0 <= level <= top:
        raise IndexError(f"level {level} out of range (top {top})")
    keep = (level + 1) * h.frame_count
    spans = h.table[:keep]
    for t_l, (off, length) in enumerate(spans):
        if off + length > len(data):
            raise StreamTruncatedError("chunk extends past end of stream")
    new_hsize = _header_size(h.frame_count, level + 1)
    new_table = []
    offset = new_hsize
    for _, length in spans:
        new_table.append((offset, length))
        offset += length
    new_header = _Header(h.width, h.height, h.frame_count, level + 1,
                         h.scalability_mode, h.params,
                         h.level_resolutions[: level + 1],
                         h.frame_kinds, new_table, new_hsize)
    body = b"".join(data[off:off + length] for off, length in spans)
    return _pack_header(new_header) + body
