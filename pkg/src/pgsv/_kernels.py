"""Compiled inner loops for the rasterizer.

Kernels are sequential and fastmath-free: within a row band, splats
accumulate in index order, so renders are bit-reproducible regardless of
thread count (bands touch disjoint rows; backward splat ranges touch
disjoint gradient rows).
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, fastmath=False)
def forward_band(cx, cy, ia, ib, ic, wcolor, ix0, ix1, iy0, iy1, qmax,
                 y_lo, y_hi, out):
    """Accumulate splat contributions into rows [y_lo, y_hi) of `out`."""
    for s in range(cx.size):
        ya = iy0[s] if iy0[s] > y_lo else y_lo
        yb = iy1[s] if iy1[s] < y_hi - 1 else y_hi - 1
        for y in range(ya, yb + 1):
            dy = (y + 0.5) - cy[s]
            for x in range(ix0[s], ix1[s] + 1):
                dx = (x + 0.5) - cx[s]
                q = ia[s] * dx * dx + 2.0 * ib[s] * dx * dy + ic[s] * dy * dy
                if q <= qmax:
                    g = math.exp(-0.5 * q)
                    out[y, x, 0] += wcolor[s, 0] * g
                    out[y, x, 1] += wcolor[s, 1] * g
                    out[y, x, 2] += wcolor[s, 2] * g


@njit(cache=True, nogil=True, fastmath=False)
def backward_range(cx, cy, ia, ib, ic, color, weight, ix0, ix1, iy0, iy1,
                   qmax, upstream, width, height, s_lo, s_hi,
                   grad_pos, grad_m, grad_color, grad_weight):
    """Per-splat reductions of the chain rule, for splats [s_lo, s_hi).

    grad_m receives dLoss/dSigma as (m00, m01, m11) per splat; the caller
    chains it through the Cholesky map.
    """
    for s in range(s_lo, s_hi):
        sc0 = 0.0
        sc1 = 0.0
        sc2 = 0.0
        s_w = 0.0
        sdx = 0.0
        sdy = 0.0
        m00 = 0.0
        m01 = 0.0
        m11 = 0.0
        for y in range(iy0[s], iy1[s] + 1):
            dy = (y + 0.5) - cy[s]
            for x in range(ix0[s], ix1[s] + 1):
                dx = (x + 0.5) - cx[s]
                q = ia[s] * dx * dx + 2.0 * ib[s] * dx * dy + ic[s] * dy * dy
                if q <= qmax:
                    g = math.exp(-0.5 * q)
                    u0 = upstream[y, x, 0]
                    u1 = upstream[y, x, 1]
                    u2 = upstream[y, x, 2]
                    sc0 += u0 * g
                    sc1 += u1 * g
                    sc2 += u2 * g
                    ug = (color[s, 0] * u0 + color[s, 1] * u1
                          + color[s, 2] * u2) * g
                    s_w += ug
                    adx = ia[s] * dx + ib[s] * dy
                    ady = ib[s] * dx + ic[s] * dy
                    sdx += ug * adx
                    sdy += ug * ady
                    m00 += ug * adx * adx
                    m01 += ug * adx * ady
                    m11 += ug * ady * ady
        w = weight[s]
        grad_color[s, 0] = w * sc0
        grad_color[s, 1] = w * sc1
        grad_color[s, 2] = w * sc2
        grad_weight[s] = s_w
        grad_pos[s, 0] = w * width * sdx
        grad_pos[s, 1] = w * height * sdy
        grad_m[s, 0] = 0.5 * w * m00
        grad_m[s, 1] = 0.5 * w * m01
        grad_m[s, 2] = 0.5 * w * m11
