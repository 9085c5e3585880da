"""Quantization of layered splats and quantization-aware fine-tuning.

I-frames quantize parameters directly; P-frames quantize differences against
the dequantized reference frame.  Positions use reduced floating point (half
for I-frames, a 12-bit 1/5/6 layout for P-frame deltas), Cholesky vectors use
b-bit asymmetric integer coding with per-channel learnable scale/offset, and
weighted colors (w * c) go through a residual vector quantizer whose
codebooks are fit per frame with k-means.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CorruptStreamError
from .optim import make_optimizer
from .raster import render
from .splats import EPS_CHOL, GaussianVideo, LayeredFrame, SplatArray
from .metrics import psnr
from .train import GroundTruthPyramid, _joint_loss_grads, rng_for

_ROLE_QUANT = 3
_ROLE_FINETUNE = 4

GAMMA_FLOOR = 1e-8
_F16_MAX = 65504.0


@dataclass
class QuantParams:
    """Bit widths and VQ geometry.  Defaults follow the reference settings:
    16/12-bit positions, 6/5-bit Cholesky codes (I/P), two 64-entry VQ stages."""

    pos_bits_iframe: int = 16
    pos_bits_pframe: int = 12
    chol_bits_iframe: int = 6
    chol_bits_pframe: int = 5
    vq_stages: int = 2
    codebook_bits: int = 6
    commitment_weight: float = 1e-3
    finetune_iters: int = 2000
    finetune_lr: float = 3e-4
    codebook_refit_interval: int = 250

    def __post_init__(self):
        for b in (self.chol_bits_iframe, self.chol_bits_pframe):
            if not 2 <= b <= 16:
                raise ConfigError("chol bits must be in [2, 16]")
        if self.pos_bits_iframe != 16 or self.pos_bits_pframe != 12:
            raise ConfigError("position coding supports 16-bit I / 12-bit P only")
        if not 1 <= self.codebook_bits <= 8:
            raise ConfigError("codebook_bits must be in [1, 8]")
        if self.vq_stages < 1:
            raise ConfigError("vq_stages must be >= 1")

    @property
    def codebook_size(self) -> int:
        return 2 ** self.codebook_bits

    def chol_bits(self, frame_kind: str) -> int:
        return self.chol_bits_iframe if frame_kind == "I" else self.chol_bits_pframe

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "QuantParams":
        known = set(QuantParams.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown quant keys: {sorted(unknown)}")
        return QuantParams(**d)


def signed_range(bits: int) -> tuple[int, int]:
    return -(2 ** (bits - 1)), 2 ** (bits - 1) - 1


def unsigned_range(bits: int) -> tuple[int, int]:
    return 0, 2 ** bits - 1


# ---------------------------------------------------------------------------
# Scalar coding
# ---------------------------------------------------------------------------

def asym_quantize(values, bits: int, signed: bool,
                  gamma: float | None = None, beta: float | None = None):
    """b-bit asymmetric quantization: code = round((x - beta) / gamma).

    gamma spans the value range over 2^b - 1 steps (floored at 1e-8); beta
    anchors the range minimum onto code 0 (unsigned) or the range midpoint
    onto code 0 (signed), so e.g. all-zero deltas code to 0.  Returns
    (codes int32, gamma float32, beta float32).
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot quantize an empty value set")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite values")
    lmin, lmax = signed_range(bits) if signed else unsigned_range(bits)
    if gamma is None:
        vmin, vmax = float(v.min()), float(v.max())
        gamma = np.float32(max((vmax - vmin) / (2 ** bits - 1), GAMMA_FLOOR))
        beta = np.float32(0.5 * (vmin + vmax) if signed else vmin)
    else:
        gamma = np.float32(max(float(gamma), GAMMA_FLOOR))
        beta = np.float32(beta)
    codes = np.clip(np.rint((v - float(beta)) / float(gamma)),
                    lmin, lmax).astype(np.int32)
    return codes, gamma, beta


def asym_dequantize(codes, gamma, beta) -> np.ndarray:
    return (codes.astype(np.float32) * np.float32(gamma)
            + np.float32(beta)).astype(np.float32)


def half_encode(values) -> np.ndarray:
    """IEEE half codes (uint16) with clamping beyond the half range."""
    v = np.asarray(values, dtype=np.float64)
    clipped = np.clip(v, -_F16_MAX, _F16_MAX)
    n_over = int(np.count_nonzero(clipped != v))
    if n_over:
        warnings.warn(f"{n_over} position values clamped to the half range")
    return np.ascontiguousarray(clipped.astype("<f2")).view(np.uint16)


def half_decode(codes) -> np.ndarray:
    return np.ascontiguousarray(codes, dtype=np.uint16).view("<f2").astype(np.float32)


def f12_encode(values) -> np.ndarray:
    """12-bit reduced float (1 sign / 5 exponent / 6 mantissa) codes.

    Derived from half precision by rounding away 4 mantissa bits with
    round-to-nearest-even; magnitudes that would round to infinity clamp to
    the largest finite value.
    """
    h = half_encode(values).astype(np.uint32)
    lsb = (h >> 4) & 1
    r = (h + 7 + lsb) >> 4
    sign = r & 0x800
    mag = np.minimum(r & 0x7FF, 0x7BF)
    return (sign | mag).astype(np.uint16)


def f12_decode(codes) -> np.ndarray:
    h = (np.ascontiguousarray(codes, dtype=np.uint16) << np.uint16(4))
    return h.view("<f2").astype(np.float32)


# ---------------------------------------------------------------------------
# Residual vector quantization
# ---------------------------------------------------------------------------

def _kmeans(data: np.ndarray, k: int, rng: np.random.Generator,
            iters: int = 50) -> np.ndarray:
    """k-means++ seeding plus Lloyd refinement; empty clusters reseed at the
    point currently farthest from its center."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[int(rng.integers(n))]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        idx = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
        centers[j] = data[idx]
        d2 = np.minimum(d2, np.sum((data - centers[j]) ** 2, axis=1))
    prev_assign = None
    for _ in range(iters):
        dist = (np.sum(data * data, axis=1)[:, None]
                - 2.0 * data @ centers.T
                + np.sum(centers * centers, axis=1)[None, :])
        assign = np.argmin(dist, axis=1)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        for dim in range(data.shape[1]):
            sums[:, dim] = np.bincount(assign, weights=data[:, dim], minlength=k)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not np.all(nonempty):
            far = np.sum((data - centers[assign]) ** 2, axis=1)
            for j in np.nonzero(~nonempty)[0]:
                pick = int(np.argmax(far))
                centers[j] = data[pick]
                far[pick] = 0.0
    return centers


def rvq_train(colors, stages: int, size: int, rng: np.random.Generator,
              iters: int = 50) -> np.ndarray:
    """Greedy residual codebooks: stage k is k-means on stage-k residuals."""
    data = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if data.shape[0] == 0:
        raise ValueError("cannot train codebooks on zero vectors")
    codebooks = np.zeros((stages, size, 3), dtype=np.float32)
    residual = data.copy()
    padded = data.shape[0] < size
    if padded:
        warnings.warn(f"only {data.shape[0]} vectors for codebook size {size}; "
                      "duplicate-padding")
    for s in range(stages):
        if padded:
            centers = residual[np.arange(size) % residual.shape[0]].copy()
        else:
            centers = _kmeans(residual, size, rng, iters)
        codebooks[s] = centers.astype(np.float32)
        idx = _nearest_codeword(residual, codebooks[s])
        residual = residual - codebooks[s].astype(np.float64)[idx]
    return codebooks


def _nearest_codeword(vectors: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    cb = codebook.astype(np.float64)
    dist = (np.sum(vectors * vectors, axis=1)[:, None]
            - 2.0 * vectors @ cb.T
            + np.sum(cb * cb, axis=1)[None, :])
    return np.argmin(dist, axis=1)  # argmin breaks ties toward lower index


def rvq_encode(colors, codebooks: np.ndarray) -> np.ndarray:
    """Greedy per-stage nearest-codeword indices, shape (N, M)."""
    data = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    stages = codebooks.shape[0]
    indices = np.empty((data.shape[0], stages), dtype=np.uint8)
    residual = data.copy()
    for s in range(stages):
        idx = _nearest_codeword(residual, codebooks[s])
        indices[:, s] = idx
        residual -= codebooks[s].astype(np.float64)[idx]
    return indices


def rvq_decode(indices, codebooks: np.ndarray) -> np.ndarray:
    indices = np.asarray(indices)
    if indices.size and int(indices.max()) >= codebooks.shape[1]:
        raise CorruptStreamError("VQ index out of codebook bounds")
    out = np.zeros((indices.shape[0], 3), dtype=np.float32)
    for s in range(codebooks.shape[0]):
        out += codebooks[s][indices[:, s]]
    return out


# ---------------------------------------------------------------------------
# Frame quantization
# ---------------------------------------------------------------------------

@dataclass
class QuantizedLayer:
    pos_codes: np.ndarray    # (N, 2) uint16 (f16 bits for I, 12-bit codes for P)
    chol_codes: np.ndarray   # (N, 3) int32 within the signed/unsigned range
    chol_gamma: np.ndarray   # (3,) float32
    chol_beta: np.ndarray    # (3,) float32
    color_codes: np.ndarray  # (N, M) uint8


@dataclass
class QuantizedFrame:
    frame_kind: str
    codebooks: np.ndarray    # (M, B, 3) float32
    layers: list             # list[QuantizedLayer]
    ref_index: int | None = None

    def layer_counts(self) -> tuple:
        return tuple(l.pos_codes.shape[0] for l in self.layers)


@dataclass
class QuantizedVideo:
    frames: list             # list[QuantizedFrame]
    width: int
    height: int
    level_resolutions: list
    scalability_mode: str
    params: QuantParams = field(default_factory=QuantParams)

    @property
    def num_layers(self) -> int:
        return len(self.level_resolutions)


@dataclass
class FrameQuantTables:
    """Scale/offset pairs and codebooks reused across re-quantization."""

    chol_gamma: list         # per layer (3,) float32
    chol_beta: list
    codebooks: np.ndarray


def frame_tables(qframe: QuantizedFrame) -> FrameQuantTables:
    return FrameQuantTables([l.chol_gamma.copy() for l in qframe.layers],
                            [l.chol_beta.copy() for l in qframe.layers],
                            qframe.codebooks.copy())


def _fused_colors(layer: SplatArray) -> np.ndarray:
    return (layer.weight[:, None] * layer.color).astype(np.float32)


def _chol_signed(frame_kind: str, layer_index: int) -> bool:
    if frame_kind == "P":
        return True
    return layer_index > 0


def quantize_frame(frame: LayeredFrame, ref: LayeredFrame | None,
                   params: QuantParams, rng: np.random.Generator | None = None,
                   tables: FrameQuantTables | None = None) -> QuantizedFrame:
    """Quantize one layered frame (absolute for I, deltas vs `ref` for P)."""
    kind = frame.frame_kind
    if kind == "P" and ref is None:
        raise ValueError("P-frame quantization requires the dequantized reference")
    if rng is None:
        rng = np.random.default_rng(0)
    bits = params.chol_bits(kind)

    pos_values, chol_values, color_values = [], [], []
    for li, layer in enumerate(frame.layers):
        c = _fused_colors(layer)
        if kind == "P":
            ref_layer = ref.layers[li]
            pos_values.append(layer.pos - ref_layer.pos)
            chol_values.append(layer.chol - ref_layer.chol)
            color_values.append(c - _fused_colors(ref_layer))
        else:
            pos_values.append(layer.pos)
            chol_values.append(layer.chol)
            color_values.append(c)

    if tables is None:
        codebooks = rvq_train(np.concatenate(color_values), params.vq_stages,
                              params.codebook_size, rng)
    else:
        codebooks = tables.codebooks.copy()

    layers = []
    for li in range(frame.num_layers):
        if kind == "P":
            pos_codes = f12_encode(pos_values[li]).reshape(-1, 2)
        else:
            pos_codes = half_encode(pos_values[li]).reshape(-1, 2)
        signed = _chol_signed(kind, li)
        codes = np.empty(chol_values[li].shape, dtype=np.int32)
        gamma = np.empty(3, dtype=np.float32)
        beta = np.empty(3, dtype=np.float32)
        for ch in range(3):
            g0 = tables.chol_gamma[li][ch] if tables is not None else None
            b0 = tables.chol_beta[li][ch] if tables is not None else None
            codes[:, ch], gamma[ch], beta[ch] = asym_quantize(
                chol_values[li][:, ch], bits, signed, g0, b0)
        color_codes = rvq_encode(color_values[li], codebooks)
        layers.append(QuantizedLayer(pos_codes, codes, gamma, beta, color_codes))
    return QuantizedFrame(kind, codebooks, layers)


def dequantize_frame(qframe: QuantizedFrame, ref: LayeredFrame | None,
                     params: QuantParams) -> LayeredFrame:
    """Reconstruct renderable splats; weights fold to 1 with fused colors."""
    if qframe.frame_kind == "P" and ref is None:
        raise ValueError("P-frame dequantization requires the reference")
    layers = []
    for li, ql in enumerate(qframe.layers):
        if qframe.frame_kind == "P":
            pos = ref.layers[li].pos + f12_decode(ql.pos_codes.ravel()).reshape(-1, 2)
        else:
            pos = half_decode(ql.pos_codes.ravel()).reshape(-1, 2)
        chol = (ql.chol_codes.astype(np.float32) * ql.chol_gamma[None, :]
                + ql.chol_beta[None, :])
        color = rvq_decode(ql.color_codes, qframe.codebooks)
        if qframe.frame_kind == "P":
            chol = ref.layers[li].chol + chol
            color = _fused_colors(ref.layers[li]) + color
        # decoded Cholesky diagonals keep the positive-definite floor
        chol = chol.copy()
        chol[:, 0] = np.maximum(chol[:, 0], EPS_CHOL)
        chol[:, 2] = np.maximum(chol[:, 2], EPS_CHOL)
        n = pos.shape[0]
        layers.append(SplatArray(pos, chol, color, np.ones(n, dtype=np.float32)))
    counts = tuple(len(l) for l in layers)
    return LayeredFrame(layers, qframe.frame_kind, counts)


def quantize_video(video: GaussianVideo, params: QuantParams, seed: int = 0):
    """Quantize all frames in order, chaining P-frame references.

    Returns (QuantizedVideo, dequantized GaussianVideo).
    """
    qframes = []
    dq_frames = []
    ref = None
    for t, frame in enumerate(video.frames):
        qf = quantize_frame(frame, ref if frame.frame_kind == "P" else None,
                            params, rng_for(seed, _ROLE_QUANT, t))
        qf.ref_index = t - 1 if frame.frame_kind == "P" else None
        dq = dequantize_frame(qf, ref if frame.frame_kind == "P" else None, params)
        qframes.append(qf)
        dq_frames.append(dq)
        ref = dq
    qvideo = QuantizedVideo(qframes, video.width, video.height,
                            list(video.level_resolutions),
                            video.scalability_mode, params)
    dq_video = GaussianVideo(dq_frames, video.width, video.height,
                             list(video.level_resolutions),
                             video.scalability_mode)
    return qvideo, dq_video


# ---------------------------------------------------------------------------
# Quantization-aware fine-tuning
# ---------------------------------------------------------------------------

def _fuse_frame(frame: LayeredFrame) -> LayeredFrame:
    """Fold weights into colors (w := 1); renders are unchanged."""
    layers = []
    for layer in frame.layers:
        layers.append(SplatArray(layer.pos.copy(), layer.chol.copy(),
                                 _fused_colors(layer),
                                 np.ones(len(layer), dtype=np.float32)))
    return LayeredFrame(layers, frame.frame_kind, frame.layer_budgets)


def _quantized_view(params: dict, sizes, kind: str, qparams: QuantParams,
                    gammas, betas, codebooks, ref_arrays):
    """Current straight-through quantize/dequantize of the training params.

    Returns (dequantized params dict, per-layer chol codes) so scale/offset
    gradients can be formed.
    """
    pos, chol, color = params["pos"], params["chol"], params["color"]
    if kind == "P":
        ref_pos, ref_chol, ref_color = ref_arrays
        pos_q = ref_pos + f12_decode(f12_encode(pos - ref_pos).ravel()).reshape(-1, 2)
        color_vals = color - ref_color
    else:
        pos_q = half_decode(half_encode(pos).ravel()).reshape(-1, 2)
        color_vals = color
    bits = qparams.chol_bits(kind)
    chol_q = np.empty_like(chol)
    codes_out = []
    offset = 0
    for li, size in enumerate(sizes):
        sl = slice(offset, offset + size)
        vals = chol[sl] - ref_arrays[1][sl] if kind == "P" else chol[sl]
        signed = _chol_signed(kind, li)
        codes = np.empty((size, 3), dtype=np.int32)
        for ch in range(3):
            codes[:, ch], _, _ = asym_quantize(vals[:, ch], bits, signed,
                                               gammas[li][ch], betas[li][ch])
        dq = codes.astype(np.float32) * gammas[li][None, :] + betas[li][None, :]
        if kind == "P":
            dq = ref_arrays[1][sl] + dq
        chol_q[sl] = dq
        codes_out.append(codes)
        offset += size
    chol_q[:, 0] = np.maximum(chol_q[:, 0], EPS_CHOL)
    chol_q[:, 2] = np.maximum(chol_q[:, 2], EPS_CHOL)
    color_q = rvq_decode(rvq_encode(color_vals, codebooks), codebooks)
    if kind == "P":
        color_q = ref_arrays[2] + color_q
    dq_params = {"pos": pos_q.astype(np.float32),
                 "chol": chol_q.astype(np.float32),
                 "color": color_q.astype(np.float32),
                 "weight": np.ones(pos.shape[0], dtype=np.float32)}
    return dq_params, codes_out


def _quantized_top_psnr(qframe: QuantizedFrame,
                        ref: LayeredFrame | None, qparams: QuantParams,
                        pyramid: GroundTruthPyramid, threads: int) -> float:
    dq = dequantize_frame(qframe, ref, qparams)
    th, tw = pyramid.resolutions[-1]
    img = render(SplatArray.concat(dq.layers), tw, th, threads=threads)
    return psnr(img, pyramid.levels[-1])


def finetune_quantized(video: GaussianVideo, pyramids, qparams: QuantParams,
                       config, seed: int = 0, *, threads: int = 1):
    """Brief re-optimization with quantization in the loop.

    Straight-through estimates pass render gradients to the full-precision
    parameters; a commitment term pulls colors toward their codeword sums;
    scale/offset pairs receive analytic gradients and codebooks are refit
    periodically.  If a frame's quantized-render PSNR ends up worse than
    before fine-tuning, that frame rolls back.

    Returns (fine-tuned GaussianVideo with fused colors, QuantizedVideo).
    """
    out_frames = []
    qframes = []
    ref = None
    lam = qparams.commitment_weight
    for t, frame in enumerate(video.frames):
        pyramid = pyramids[t]
        kind = frame.frame_kind
        fused = _fuse_frame(frame)
        # the same substream quantize_video would use, so the rollback
        # baseline equals the canonical no-finetune quantization
        rng = rng_for(seed, _ROLE_QUANT, t)
        base_q = quantize_frame(fused, ref if kind == "P" else None, qparams, rng)
        base_psnr = _quantized_top_psnr(base_q, ref if kind == "P" else None,
                                        qparams, pyramid, threads)

        sizes = list(fused.layer_counts())
        merged = SplatArray.concat(fused.layers)
        params = {"pos": merged.pos.copy(), "chol": merged.chol.copy(),
                  "color": merged.color.copy()}
        gammas = [l.chol_gamma.copy() for l in base_q.layers]
        betas = [l.chol_beta.copy() for l in base_q.layers]
        codebooks = base_q.codebooks.copy()
        if kind == "P":
            ref_merged = SplatArray.concat(ref.layers)
            ref_arrays = (ref_merged.pos, ref_merged.chol,
                          (ref_merged.weight[:, None] * ref_merged.color
                           ).astype(np.float32))
        else:
            ref_arrays = (None, merged.chol * 0, None)  # chol ref unused for I

        opt = make_optimizer(config.optimizer)
        best_psnr = base_psnr
        best = (fused, base_q)
        probe_every = 50
        for i in range(qparams.finetune_iters):
            dq_params, codes = _quantized_view(params, sizes, kind, qparams,
                                               gammas, betas, codebooks,
                                               ref_arrays)
            _, grads, _ = _joint_loss_grads(dq_params, sizes, pyramid, i,
                                            threads=threads)
            # straight-through to the full-precision params; the commitment
            # term lam*||c - Q_c(c)||^2 contributes only through its gradient
            color_err = params["color"] - dq_params["color"]
            step_grads = {"pos": grads["pos"], "chol": grads["chol"],
                          "color": grads["color"] + 2.0 * lam * color_err}
            offset = 0
            for li, size in enumerate(sizes):
                gl = grads["chol"][offset:offset + size]
                step_grads[f"gamma{li}"] = np.sum(
                    gl * codes[li].astype(np.float64), axis=0)
                step_grads[f"beta{li}"] = np.sum(gl, axis=0)
                offset += size
            step_params = dict(params)
            for li in range(len(sizes)):
                step_params[f"gamma{li}"] = gammas[li]
                step_params[f"beta{li}"] = betas[li]
            new_params = opt.step(step_params, step_grads, qparams.finetune_lr)
            for li in range(len(sizes)):
                gammas[li] = np.maximum(new_params[f"gamma{li}"],
                                        GAMMA_FLOOR).astype(np.float32)
                betas[li] = new_params[f"beta{li}"].astype(np.float32)
            params = {key: new_params[key] for key in ("pos", "chol", "color")}
            np.clip(params["pos"], -0.5, 1.5, out=params["pos"])
            np.maximum(params["chol"][:, 0], EPS_CHOL, out=params["chol"][:, 0])
            np.maximum(params["chol"][:, 2], EPS_CHOL, out=params["chol"][:, 2])
            remaining = qparams.finetune_iters - (i + 1)
            if (i + 1) % qparams.codebook_refit_interval == 0 \
                    and remaining >= qparams.codebook_refit_interval // 2:
                # colors need time to settle on fresh codebooks, so never
                # refit close to the end of the loop
                vals = (params["color"] - ref_arrays[2] if kind == "P"
                        else params["color"])
                codebooks = rvq_train(vals, qparams.vq_stages,
                                      qparams.codebook_size,
                                      rng_for(seed, _ROLE_FINETUNE, t, i))
            if (i + 1) % probe_every == 0 or remaining == 0:
                cand = _frame_from(params, sizes, kind, fused.layer_budgets)
                tables = FrameQuantTables([g.copy() for g in gammas],
                                          [b.copy() for b in betas],
                                          codebooks.copy())
                cand_q = quantize_frame(cand, ref if kind == "P" else None,
                                        qparams, rng, tables=tables)
                cand_psnr = _quantized_top_psnr(
                    cand_q, ref if kind == "P" else None, qparams, pyramid,
                    threads)
                if cand_psnr > best_psnr:
                    best_psnr = cand_psnr
                    best = (cand, cand_q)

        # best-of selection doubles as the roll-back guarantee: fine-tuning
        # can only match or improve the pre-finetune quantized render
        tuned, tuned_q = best
        tuned_q.ref_index = t - 1 if kind == "P" else None
        out_frames.append(tuned)
        qframes.append(tuned_q)
        ref = dequantize_frame(tuned_q, ref if kind == "P" else None, qparams)

    tuned_video = GaussianVideo(out_frames, video.width, video.height,
                                list(video.level_resolutions),
                                video.scalability_mode)
    qvideo = QuantizedVideo(qframes, video.width, video.height,
                            list(video.level_resolutions),
                            video.scalability_mode, qparams)
    return tuned_video, qvideo


def _frame_from(params: dict, sizes, kind: str, budgets) -> LayeredFrame:
    layers = []
    offset = 0
    for size in sizes:
        sl = slice(offset, offset + size)
        layers.append(SplatArray(params["pos"][sl], params["chol"][sl],
                                 params["color"][sl],
                                 np.ones(size, dtype=np.float32)))
        offset += size
    return LayeredFrame(layers, kind, tuple(budgets))
