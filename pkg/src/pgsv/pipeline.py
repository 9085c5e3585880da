"""High-level encode/decode/evaluate orchestration shared by the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .media import lanczos_resize
from .metrics import rd_table
from .quantize import (QuantParams, QuantizedVideo, dequantize_frame,
                       finetune_quantized, quantize_video)
from .raster import render
from .splats import CodecConfig, GaussianVideo, SplatArray
from .stream import truncate_stream, write_stream
from .train import build_pyramid, encode_sequence


@dataclass
class EncodeResult:
    video: GaussianVideo          # full-precision (fine-tuned when enabled)
    qvideo: QuantizedVideo
    reports: list
    stream: bytes


def encode_frames(frames, config: CodecConfig, qparams: QuantParams,
                  seed: int = 0, *, threads: int = 1, finetune: bool = True,
                  log_fn=None, collect_losses: bool = False) -> EncodeResult:
    """Train, optionally fine-tune under quantization, quantize, serialize."""
    video, reports = encode_sequence(frames, config, seed, threads=threads,
                                     log_fn=log_fn,
                                     collect_losses=collect_losses)
    if finetune and qparams.finetune_iters > 0:
        pyramids = [build_pyramid(np.asarray(f, dtype=np.float64), config)
                    for f in frames]
        video, qvideo = finetune_quantized(video, pyramids, qparams, config,
                                           seed, threads=threads)
    else:
        qvideo, _ = quantize_video(video, qparams, seed)
    return EncodeResult(video, qvideo, reports, write_stream(qvideo))


def dequantize_chain(qvideo: QuantizedVideo) -> list:
    """Dequantize all frames, resolving P-frame references in order."""
    frames = []
    ref = None
    for qf in qvideo.frames:
        dq = dequantize_frame(qf, ref if qf.frame_kind == "P" else None,
                              qvideo.params)
        frames.append(dq)
        ref = dq
    return frames


def decode_images(qvideo: QuantizedVideo, level: int | None = None, *,
                  threads: int = 1) -> list:
    """Render every frame at `level` (default: highest available).

    Resolution-mode streams render at the level's own resolution; quality-mode
    streams always render at full resolution.
    """
    top = qvideo.num_layers - 1
    if level is None:
        level = top
    if not 0 <= level <= top:
        raise IndexError(f"level {level} out of range (top {top})")
    lh, lw = qvideo.level_resolutions[level]
    scale = lh / qvideo.height
    images = []
    for frame in dequantize_chain(qvideo):
        splats = SplatArray.concat(frame.layers[: level + 1])
        images.append(render(splats, lw, lh, chol_scale=scale,
                             threads=threads))
    return images


def level_targets(references, qvideo: QuantizedVideo, level: int) -> list:
    """Evaluation targets for a level: the references, downsampled in
    resolution mode to the level's resolution."""
    lh, lw = qvideo.level_resolutions[level]
    out = []
    for ref in references:
        if ref.shape[:2] == (lh, lw):
            out.append(ref)
        else:
            out.append(lanczos_resize(ref, lw, lh))
    return out


def eval_stream(stream: bytes, qvideo: QuantizedVideo, references, levels, *,
                threads: int = 1):
    """RD rows (bytes at each level via truncation, mean PSNR / MS-SSIM)."""
    budget = sum(qvideo.frames[0].layer_counts())
    entries = []
    for level in levels:
        decoded = decode_images(qvideo, level, threads=threads)
        targets = level_targets(references, qvideo, level)
        nbytes = len(truncate_stream(stream, level))
        entries.append((budget, level, nbytes, decoded, targets))
    return rd_table(entries)
