"""Parameter updates (Adan, plus an Adam fallback), the L2 loss, LR schedule.

The optimizers are plain state machines over dicts of numpy arrays keyed by
parameter name.  All moment math runs in float64; updated parameters are cast
back to their input dtype, so float32 splat parameters stay bit-reproducible
across identical runs.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import ShapeMismatchError, TrainingDivergedError


def l2_loss(pred: np.ndarray, target: np.ndarray):
    """Per-pixel squared-norm loss, averaged over pixels (not channels).

    loss = (1/HW) * sum_pixels ||pred - target||^2
    grad = 2 * (pred - target) / (HW)
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    npix = pred.shape[0] * pred.shape[1]
    diff = pred - target
    loss = float(np.sum(diff * diff) / npix)
    return loss, 2.0 * diff / npix


def lr_at(step: int, lr0: float, period: int) -> float:
    """Learning rate halved every `period` steps."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    return lr0 * 0.5 ** (step // period)


def _check_finite(grads: dict):
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise TrainingDivergedError(
                f"non-finite gradient in '{key}' ({bad} of {g.size} entries)")


class Adan:
    """Adaptive Nesterov momentum: EMA of gradients, of gradient differences,
    and an adaptive second moment of their combination, with bias correction.

    Decoupled weight decay defaults to 0 (splat parameters should not shrink
    toward zero).
    """

    name = "adan"

    def __init__(self, betas=(0.98, 0.92, 0.99), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.betas = tuple(float(b) for b in betas)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.k = 0
        self.m: dict = {}
        self.v: dict = {}
        self.n: dict = {}
        self.g_prev: dict = {}

    def step(self, params: dict, grads: dict, lr: float) -> dict:
        if lr <= 0:
            raise ValueError("lr must be positive")
        _check_finite(grads)
        b1, b2, b3 = self.betas
        self.k += 1
        bc1 = 1.0 - b1 ** self.k
        bc2 = 1.0 - b2 ** self.k
        bc3 = 1.0 - b3 ** self.k
        out = {}
        for key, p in params.items():
            g = np.asarray(grads[key], dtype=np.float64)
            if g.shape != p.shape:
                raise ShapeMismatchError(f"grad/param shape mismatch for '{key}'")
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
                self.n[key] = np.zeros_like(g)
                self.g_prev[key] = g.copy()
            diff = g - self.g_prev[key]
            self.m[key] = b1 * self.m[key] + (1.0 - b1) * g
            self.v[key] = b2 * self.v[key] + (1.0 - b2) * diff
            upd = g + b2 * diff
            self.n[key] = b3 * self.n[key] + (1.0 - b3) * upd * upd
            denom = np.sqrt(self.n[key] / bc3) + self.eps
            direction = (self.m[key] / bc1 + b2 * self.v[key] / bc2) / denom
            new_p = p.astype(np.float64) - lr * direction
            if self.weight_decay:
                new_p /= 1.0 + lr * self.weight_decay
            out[key] = new_p.astype(p.dtype)
            self.g_prev[key] = g
        return out

    def take(self, idx: np.ndarray):
        """Keep only the given rows of every moment buffer (after pruning)."""
        for buf in (self.m, self.v, self.n, self.g_prev):
            for key in buf:
                buf[key] = buf[key][idx]

    def state_bytes(self) -> bytes:
        arrays = {"_k": np.array([self.k], dtype=np.int64)}
        for kind, buf in (("m", self.m), ("v", self.v),
                          ("n", self.n), ("g", self.g_prev)):
            for key, arr in buf.items():
                arrays[f"{kind}.{key}"] = arr
        bio = io.BytesIO()
        np.savez(bio, **arrays)
        return bio.getvalue()

    def load_state_bytes(self, data: bytes):
        with np.load(io.BytesIO(data)) as z:
            self.k = int(z["_k"][0])
            self.m, self.v, self.n, self.g_prev = {}, {}, {}, {}
            for name in z.files:
                if name == "_k":
                    continue
                kind, key = name.split(".", 1)
                {"m": self.m, "v": self.v, "n": self.n,
                 "g": self.g_prev}[kind][key] = z[name]


class Adam:
    """Standard Adam with bias correction; ablation fallback for Adan."""

    name = "adam"

    def __init__(self, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.betas = tuple(float(b) for b in betas)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.k = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict, lr: float) -> dict:
        if lr <= 0:
            raise ValueError("lr must be positive")
        _check_finite(grads)
        b1, b2 = self.betas
        self.k += 1
        bc1 = 1.0 - b1 ** self.k
        bc2 = 1.0 - b2 ** self.k
        out = {}
        for key, p in params.items():
            g = np.asarray(grads[key], dtype=np.float64)
            if g.shape != p.shape:
                raise ShapeMismatchError(f"grad/param shape mismatch for '{key}'")
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = b1 * self.m[key] + (1.0 - b1) * g
            self.v[key] = b2 * self.v[key] + (1.0 - b2) * g * g
            direction = (self.m[key] / bc1) / (np.sqrt(self.v[key] / bc2) + self.eps)
            new_p = p.astype(np.float64) - lr * direction
            if self.weight_decay:
                new_p /= 1.0 + lr * self.weight_decay
            out[key] = new_p.astype(p.dtype)
        return out

    def take(self, idx: np.ndarray):
        for buf in (self.m, self.v):
            for key in buf:
                buf[key] = buf[key][idx]


def make_optimizer(kind: str):
    if kind == "adan":
        return Adan()
    if kind == "adam":
        return Adam()
    raise ValueError(f"unknown optimizer {kind!r}")
