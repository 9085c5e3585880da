"""Quality metrics and rate-distortion tabulation.

PSNR runs on RGB in [0,1] after clamping.  MS-SSIM runs on the BT.601
luminance channel with the standard 5-scale weights; on small inputs the
scale count is reduced and the weights renormalized.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DegenerateRangeError, ShapeMismatchError

PSNR_CAP_DB = 100.0

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WIN_SIZE = 11
_WIN_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03

RD_CSV_COLUMNS = ("budget", "level", "bytes", "psnr_db", "ms_ssim", "frames")


def _as_image_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over [0,1] images, capped at 100."""
    a, b = _as_image_pair(a, b)
    diff = np.clip(a, 0.0, 1.0) - np.clip(b, 0.0, 1.0)
    mse = float(np.mean(diff * diff))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def luminance(img: np.ndarray) -> np.ndarray:
    """BT.601 full-range luma from linear RGB (or passthrough if single-channel)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable 2D correlation, cropped to the valid region."""
    half = (kernel.size - 1) // 2
    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    return out[half:-half, half:-half]


def _ssim_components(x: np.ndarray, y: np.ndarray, kernel: np.ndarray):
    c1 = _K1 * _K1
    c2 = _K2 * _K2
    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    sxx = _filter_valid(x * x, kernel) - mu_x * mu_x
    syy = _filter_valid(y * y, kernel) - mu_y * mu_y
    sxy = _filter_valid(x * y, kernel) - mu_x * mu_y
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] & ~1, img.shape[1] & ~1
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2]
                   + img[0::2, 1::2] + img[1::2, 1::2])


def num_msssim_scales(height: int, width: int) -> int:
    """Scales usable before the 11x11 window no longer fits."""
    scales = 1
    m = min(height, width)
    while scales < len(MSSSIM_WEIGHTS) and (m >> scales) >= _WIN_SIZE:
        scales += 1
    return scales


def ms_ssim(a, b) -> float:
    """Multi-scale SSIM on luminance; dyadic 2x2-mean downsampling between scales."""
    a, b = _as_image_pair(a, b)
    x = luminance(np.clip(a, 0.0, 1.0))
    y = luminance(np.clip(b, 0.0, 1.0))
    scales = num_msssim_scales(*x.shape)
    weights = np.asarray(MSSSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    kernel = _gaussian_window(_WIN_SIZE, _WIN_SIGMA)
    score = 1.0
    for level in range(scales):
        ssim_val, cs_val = _ssim_components(x, y, kernel)
        if level < scales - 1:
            score *= max(cs_val, 0.0) ** weights[level]
            x = _downsample2(x)
            y = _downsample2(y)
        else:
            score *= max(ssim_val, 0.0) ** weights[level]
    return float(np.clip(score, 0.0, 1.0))


def minmax_normalize(values) -> np.ndarray:
    """Map a sequence affinely onto [0,1]; extremes land exactly on 0 and 1."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        raise DegenerateRangeError("min-max normalization needs >= 2 distinct values")
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class RDPoint:
    budget: int
    level: int
    bytes: int
    psnr_db: float
    ms_ssim: float
    frames: int


def rd_table(entries) -> list[RDPoint]:
    """Aggregate per-(budget, level) evaluations into sorted RD rows.

    Each entry is (budget, level, stream_bytes, decoded_frames, target_frames);
    metrics are averaged over frames.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("rd_table needs at least one entry")
    rows = []
    for budget, level, nbytes, decoded, targets in entries:
        if len(decoded) != len(targets):
            raise ShapeMismatchError("decoded/target frame counts differ")
        ps = [psnr(d, t) for d, t in zip(decoded, targets)]
        ss = [ms_ssim(d, t) for d, t in zip(decoded, targets)]
        rows.append(RDPoint(int(budget), int(level), int(nbytes),
                            float(np.mean(ps)), float(np.mean(ss)),
                            len(decoded)))
    rows.sort(key=lambda r: (r.budget, r.level))
    return rows


def rd_rows_to_csv(rows, extra_columns: dict | None = None) -> str:
    """Render RD rows with the stable column order; extras append after."""
    buf = io.StringIO()
    extra = extra_columns or {}
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(RD_CSV_COLUMNS) + list(extra))
    for i, r in enumerate(rows):
        base = [r.budget, r.level, r.bytes, f"{r.psnr_db:.6f}",
                f"{r.ms_ssim:.6f}", r.frames]
        writer.writerow(base + [extra[k][i] for k in extra])
    return buf.getvalue()
