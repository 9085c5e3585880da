"""Splat rasterization: accumulated-blending forward pass and analytic backward.

Pixel (x, y) has its center at (x+0.5, y+0.5) in render-target pixel units.
A splat's covariance is built from its Cholesky vector (stored in top-level
pixel units) scaled by `chol_scale = H_render / H_top`, so lower-resolution
renders shrink footprints proportionally.

Each splat is evaluated only inside a bounding box of radius 3*sqrt(largest
eigenvalue of Sigma), and contributions whose Gaussian exponent falls below
ln(eps_cut) are dropped.  Passing eps_cut=0 disables both the box and the
cutoff, which makes the output match the brute-force reference renderer to
float64 accuracy.

The inner loops are compiled (see _kernels); accumulation order is fixed
(splat index order within disjoint row bands), so renders and gradients are
bit-reproducible for a given input at any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateCovarianceError, ShapeMismatchError
from .splats import SplatArray

# Contribution cutoff: below one quantization step of 8-bit output.
DEFAULT_CUTOFF = 1.0 / 255.0

# Bounding-box support, in units of sqrt(largest eigenvalue).
SUPPORT_SIGMAS = 3.0


@dataclass
class SplatGradients:
    """Loss gradients for every splat parameter, float64."""

    pos: np.ndarray     # (N, 2)
    chol: np.ndarray    # (N, 3)
    color: np.ndarray   # (N, 3)
    weight: np.ndarray  # (N,)

    @staticmethod
    def zeros(n: int) -> "SplatGradients":
        return SplatGradients(np.zeros((n, 2)), np.zeros((n, 3)),
                              np.zeros((n, 3)), np.zeros(n))


class _Geometry:
    """Per-splat pixel-space quantities shared by forward and backward."""

    __slots__ = ("cx", "cy", "ia", "ib", "ic", "ix0", "ix1", "iy0", "iy1",
                 "qmax", "l", "scale")

    def __init__(self, splats: SplatArray, width: int, height: int,
                 chol_scale: float, eps_cut: float):
        pos = splats.pos.astype(np.float64)
        l = splats.chol.astype(np.float64)
        if np.any(l[:, 0] <= 0.0) or np.any(l[:, 2] <= 0.0):
            raise DegenerateCovarianceError("Cholesky diagonal must be positive")
        self.l = l
        self.scale = float(chol_scale)
        self.cx = pos[:, 0] * width
        self.cy = pos[:, 1] * height

        ls = l * self.scale
        # Sigma = [[a, b], [b, c]] in render-target pixel units.
        a = ls[:, 0] ** 2
        b = ls[:, 0] * ls[:, 1]
        c = ls[:, 1] ** 2 + ls[:, 2] ** 2
        det = a * c - b * b
        if not np.all(np.isfinite(det)) or np.any(det <= 0.0):
            raise DegenerateCovarianceError("singular covariance in splat set")
        self.ia = c / det
        self.ib = -b / det
        self.ic = a / det

        if eps_cut > 0.0:
            self.qmax = -2.0 * np.log(eps_cut)
            half_tr = 0.5 * (a + c)
            lam_max = half_tr + np.sqrt((0.5 * (a - c)) ** 2 + b ** 2)
            radius = SUPPORT_SIGMAS * np.sqrt(lam_max)
            self.ix0 = np.maximum(np.ceil(self.cx - radius - 0.5), 0).astype(np.int64)
            self.ix1 = np.minimum(np.floor(self.cx + radius - 0.5), width - 1).astype(np.int64)
            self.iy0 = np.maximum(np.ceil(self.cy - radius - 0.5), 0).astype(np.int64)
            self.iy1 = np.minimum(np.floor(self.cy + radius - 0.5), height - 1).astype(np.int64)
        else:
            n = len(splats)
            self.qmax = np.inf
            self.ix0 = np.zeros(n, dtype=np.int64)
            self.ix1 = np.full(n, width - 1, dtype=np.int64)
            self.iy0 = np.zeros(n, dtype=np.int64)
            self.iy1 = np.full(n, height - 1, dtype=np.int64)


def _row_bands(height: int, threads: int) -> list:
    threads = max(1, min(threads, height))
    edges = np.linspace(0, height, threads + 1).astype(np.int64)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(threads)
            if edges[i + 1] > edges[i]]


def render(splats: SplatArray, width: int, height: int, *,
           chol_scale: float = 1.0, eps_cut: float = DEFAULT_CUTOFF,
           threads: int = 1) -> np.ndarray:
    """Accumulate w_n * c_n * exp(-0.5 d^T Sigma^-1 d) over all splats.

    Returns an (H, W, 3) float64 image.  No sorting, no alpha: the sum is
    order-independent up to floating-point reassociation.
    """
    if width < 1 or height < 1:
        raise ValueError("render target must be at least 1x1")
    out = np.zeros((height, width, 3))
    if len(splats) == 0:
        return out
    geom = _Geometry(splats, width, height, chol_scale, eps_cut)
    wcolor = splats.color.astype(np.float64) \
        * splats.weight.astype(np.float64)[:, None]
    args = (geom.cx, geom.cy, geom.ia, geom.ib, geom.ic, wcolor,
            geom.ix0, geom.ix1, geom.iy0, geom.iy1, geom.qmax)
    bands = _row_bands(height, threads)
    if len(bands) == 1:
        _kernels.forward_band(*args, 0, height, out)
    else:
        # bands write disjoint rows; the kernels release the GIL
        with ThreadPoolExecutor(max_workers=len(bands)) as pool:
            list(pool.map(
                lambda band: _kernels.forward_band(*args, band[0], band[1], out),
                bands))
    return out


def render_reference(splats: SplatArray, width: int, height: int, *,
                     chol_scale: float = 1.0) -> np.ndarray:
    """Brute-force oracle: every pixel against every splat, no cutoff, no
    support box, plain numpy.  Defines ground truth for `render`."""
    if width < 1 or height < 1:
        raise ValueError("render target must be at least 1x1")
    img = np.zeros((height, width, 3))
    if len(splats) == 0:
        return img
    geom = _Geometry(splats, width, height, chol_scale, 0.0)
    px = np.arange(width) + 0.5
    py = np.arange(height) + 0.5
    for n in range(len(splats)):
        dx = px - geom.cx[n]
        dy = py - geom.cy[n]
        q = geom.ia[n] * dx[None, :] ** 2 \
            + 2.0 * geom.ib[n] * dy[:, None] * dx[None, :] \
            + geom.ic[n] * dy[:, None] ** 2
        g = np.exp(-0.5 * q)
        contrib = float(splats.weight[n]) * splats.color[n].astype(np.float64)
        img += g[:, :, None] * contrib
    return img


def _splat_ranges(count: int, threads: int) -> list:
    threads = max(1, min(threads, count))
    edges = np.linspace(0, count, threads + 1).astype(np.int64)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(threads)
            if edges[i + 1] > edges[i]]


def render_backward(splats: SplatArray, width: int, height: int,
                    upstream_grad: np.ndarray, *, chol_scale: float = 1.0,
                    eps_cut: float = DEFAULT_CUTOFF,
                    threads: int = 1) -> SplatGradients:
    """Chain rule through the accumulation formula and the Cholesky map.

    `upstream_grad` is dLoss/dImage with the render's (H, W, 3) shape.
    Splats fully outside their cutoff radius receive zero gradients.
    """
    upstream = np.ascontiguousarray(upstream_grad, dtype=np.float64)
    if upstream.shape != (height, width, 3):
        raise ShapeMismatchError(
            f"upstream gradient shape {upstream.shape} != {(height, width, 3)}")
    n = len(splats)
    grads = SplatGradients.zeros(n)
    if n == 0:
        return grads
    geom = _Geometry(splats, width, height, chol_scale, eps_cut)
    color = splats.color.astype(np.float64)
    weight = splats.weight.astype(np.float64)
    grad_m = np.zeros((n, 3))
    args = (geom.cx, geom.cy, geom.ia, geom.ib, geom.ic, color, weight,
            geom.ix0, geom.ix1, geom.iy0, geom.iy1, geom.qmax, upstream,
            float(width), float(height))
    outs = (grads.pos, grad_m, grads.color, grads.weight)
    ranges = _splat_ranges(n, threads)
    if len(ranges) == 1:
        _kernels.backward_range(*args, 0, n, *outs)
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            list(pool.map(
                lambda r: _kernels.backward_range(*args, r[0], r[1], *outs),
                ranges))

    # chain dLoss/dSigma into the stored Cholesky entries:
    #   Sigma = s^2 * L L^T with L = [[l1, 0], [l2, l3]]
    s2 = geom.scale * geom.scale
    l1, l2, l3 = geom.l[:, 0], geom.l[:, 1], geom.l[:, 2]
    m00, m01, m11 = grad_m[:, 0], grad_m[:, 1], grad_m[:, 2]
    grads.chol[:, 0] = 2.0 * s2 * (l1 * m00 + l2 * m01)
    grads.chol[:, 1] = 2.0 * s2 * (l1 * m01 + l2 * m11)
    grads.chol[:, 2] = 2.0 * s2 * (l3 * m11)
    return grads
