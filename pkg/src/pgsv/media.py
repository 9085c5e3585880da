"""Frame I/O and resampling: PNG files, raw 8-bit YUV 4:2:0, color conversion.

All in-memory frames are (H, W, 3) float arrays in [0,1] linear RGB.  Raw YUV
is converted once at load using BT.601 full-range coefficients; training and
metrics both run in RGB.
"""

from __future__ import annotations

import os
import re

import numpy as np
from PIL import Image


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def save_png(img: np.ndarray, path):
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """BT.601 full-range YCbCr -> RGB; inputs in [0,1]."""
    cb = u - 0.5
    cr = v - 0.5
    r = y + 1.402 * cr
    b = y + 1.772 * cb
    g = (y - 0.299 * r - 0.114 * b) / 0.587
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def rgb_to_yuv(img: np.ndarray):
    """BT.601 full-range RGB -> YCbCr planes in [0,1]."""
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = (b - y) / 1.772 + 0.5
    v = (r - y) / 1.402 + 0.5
    return y, np.clip(u, 0.0, 1.0), np.clip(v, 0.0, 1.0)


def load_yuv420(path, width: int, height: int, max_frames: int | None = None):
    """Read raw 8-bit YUV 4:2:0 frames as RGB; chroma is nearest-upsampled."""
    if width % 2 or height % 2:
        raise ValueError("YUV 4:2:0 requires even dimensions")
    frame_bytes = width * height * 3 // 2
    size = os.path.getsize(path)
    total = size // frame_bytes
    if total == 0:
        raise ValueError(f"{path}: shorter than one {width}x{height} frame")
    count = total if max_frames is None else min(total, max_frames)
    frames = []
    cw, ch = width // 2, height // 2
    with open(path, "rb") as f:
        for _ in range(count):
            raw = np.frombuffer(f.read(frame_bytes), dtype=np.uint8)
            y = raw[: width * height].reshape(height, width).astype(np.float64) / 255.0
            u = raw[width * height: width * height + cw * ch].reshape(ch, cw)
            v = raw[width * height + cw * ch:].reshape(ch, cw)
            u = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1).astype(np.float64) / 255.0
            v = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1).astype(np.float64) / 255.0
            frames.append(yuv_to_rgb(y, u, v))
    return frames


def save_yuv420(frames, path):
    """Write RGB frames as raw 8-bit YUV 4:2:0 (chroma by 2x2 mean)."""
    with open(path, "wb") as f:
        for img in frames:
            h, w = img.shape[:2]
            if w % 2 or h % 2:
                raise ValueError("YUV 4:2:0 requires even dimensions")
            y, u, v = rgb_to_yuv(np.clip(img, 0.0, 1.0))
            f.write(np.rint(y * 255.0).astype(np.uint8).tobytes())
            for plane in (u, v):
                sub = 0.25 * (plane[0::2, 0::2] + plane[1::2, 0::2]
                              + plane[0::2, 1::2] + plane[1::2, 1::2])
                f.write(np.rint(sub * 255.0).astype(np.uint8).tobytes())


def lanczos_resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Lanczos-3 resampling via Pillow, per channel, preserving float range."""
    img = np.asarray(img, dtype=np.float32)
    if img.shape[0] == height and img.shape[1] == width:
        return img.astype(np.float64)
    chans = []
    for ch in range(img.shape[2]):
        pi = Image.fromarray(img[:, :, ch], mode="F")
        chans.append(np.asarray(pi.resize((width, height), Image.LANCZOS),
                                dtype=np.float64))
    return np.stack(chans, axis=-1)


def box_downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 mean pooling (dimensions must be even)."""
    h, w = img.shape[:2]
    if h % 2 or w % 2:
        raise ValueError("box_downsample2 requires even dimensions")
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2]
                   + img[0::2, 1::2] + img[1::2, 1::2])


_NUM_RE = re.compile(r"(\d+)")


def _numeric_key(name: str):
    return [int(p) if p.isdigit() else p for p in _NUM_RE.split(name)]


def load_input(path, *, size: tuple[int, int] | None = None,
               max_frames: int | None = None):
    """Load an encoder input: a PNG, a directory of numbered PNGs, or raw YUV.

    Returns (frames, width, height).  `size` is (width, height), required for
    raw YUV.
    """
    if os.path.isdir(path):
        names = sorted((n for n in os.listdir(path)
                        if n.lower().endswith(".png")), key=_numeric_key)
        if not names:
            raise ValueError(f"no PNG frames found in {path}")
        if max_frames is not None:
            names = names[:max_frames]
        frames = [load_png(os.path.join(path, n)) for n in names]
    elif path.lower().endswith((".yuv", ".raw")):
        if size is None:
            raise ValueError("raw YUV input requires an explicit --size WxH")
        frames = load_yuv420(path, size[0], size[1], max_frames)
    else:
        frames = [load_png(path)]
        if max_frames is not None:
            frames = frames[:max_frames]
    h, w = frames[0].shape[:2]
    for i, fr in enumerate(frames):
        if fr.shape[:2] != (h, w):
            raise ValueError(f"frame {i} has mismatched dimensions")
    return frames, w, h
