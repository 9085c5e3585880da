"""Training pipeline: key-frame selection, layered init, cyclic joint loss,
scheduled pruning, per-frame convergence, and the comparison baselines.

Each frame trains independently to convergence; P-frames warm-start from the
previous frame's converged splats.  During an iteration the top level is
always supervised, plus one intermediate level chosen cyclically, so the
layers' optimization trajectories stay aligned.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .media import lanczos_resize
from .metrics import psnr
from .optim import l2_loss, lr_at, make_optimizer
from .raster import DEFAULT_CUTOFF, SplatGradients, render, render_backward
from .splats import (EPS_CHOL, POS_CLAMP, CodecConfig, GaussianVideo,
                     LayeredFrame, SplatArray, level_view)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Deterministic substream for a semantic role (init, stage, frame...)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


_ROLE_JOINT_INIT = 1
_ROLE_SINGLE = 2


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------

@dataclass
class GroundTruthPyramid:
    """Per-level target images.  In quality mode every level references the
    same full-resolution frame; in resolution mode levels are downsampled."""

    levels: list            # list of (H_l, W_l, 3) float images
    resolutions: list       # list of (H_l, W_l)

    @property
    def num_levels(self) -> int:
        return len(self.levels)


def level_resolutions(total_budget: int, budgets, top_res) -> list:
    """Resolution ladder (H_l, W_l) with ratio sqrt(cumulative budget share)."""
    height, width = top_res
    budgets = tuple(int(b) for b in budgets)
    if any(b <= 0 for b in budgets):
        raise ConfigError("level budgets must be positive")
    if sum(budgets) != total_budget:
        raise ConfigError("budgets must sum to the total budget")
    out = []
    csum = 0
    for b in budgets:
        csum += b
        r = np.sqrt(csum / total_budget)
        out.append((int(np.floor(height * r + 0.5)), int(np.floor(width * r + 0.5))))
    out[-1] = (int(height), int(width))
    return out


def resolutions_for_config(config: CodecConfig, height: int, width: int) -> list:
    if config.scalability_mode == "quality":
        return [(height, width)] * config.num_layers
    return level_resolutions(config.total_budget, config.layer_budgets(),
                             (height, width))


def build_pyramid(image: np.ndarray, config: CodecConfig) -> GroundTruthPyramid:
    h, w = image.shape[:2]
    resolutions = resolutions_for_config(config, h, w)
    if config.scalability_mode == "quality":
        return GroundTruthPyramid([image] * config.num_layers, resolutions)
    levels = [image if (lh, lw) == (h, w) else lanczos_resize(image, lw, lh)
              for lh, lw in resolutions]
    return GroundTruthPyramid(levels, resolutions)


# ---------------------------------------------------------------------------
# Schedule primitives
# ---------------------------------------------------------------------------

def cyclic_level(k: int, num_levels: int) -> int:
    """Intermediate level for iteration k: cycles over 0..num_levels-2."""
    if num_levels < 2:
        raise ConfigError("cyclic level selection needs at least two levels")
    return k % (num_levels - 1)


def gsp_quota(k: int, total: int, interval: int, horizon: int) -> int:
    """Splats to remove at iteration k under the pruning schedule.

    Pruning fires every `interval` iterations during the first `horizon`
    iterations, removing ceil(total * interval / horizon) splats per event;
    the final event is adjusted so exactly `total` are removed overall.
    """
    if total <= 0 or k >= horizon or k % interval != 0:
        return 0
    planned = int(np.ceil(total * interval / horizon))
    removed_before = min(total, (k // interval) * planned)
    return min(planned, total - removed_before)


def _prune_lowest_weight(weights: np.ndarray, quota: int) -> np.ndarray:
    """Indices kept after removing `quota` smallest-|w| entries, order stable."""
    order = np.argsort(np.abs(weights), kind="stable")
    mask = np.ones(weights.shape[0], dtype=bool)
    mask[order[:quota]] = False
    return np.nonzero(mask)[0]


def gsp_prune(frame: LayeredFrame, k: int, gsp, prune_totals) -> LayeredFrame:
    """Remove scheduled low-contribution splats from each layer."""
    interval, horizon = gsp
    quotas = [gsp_quota(k, int(t), interval, horizon) for t in prune_totals]
    if all(q == 0 for q in quotas):
        return frame
    layers = []
    for layer, quota in zip(frame.layers, quotas):
        if quota > len(layer):
            raise ConfigError(f"prune quota {quota} exceeds layer size {len(layer)}")
        layers.append(layer.take(_prune_lowest_weight(layer.weight, quota))
                      if quota else layer)
    return LayeredFrame(layers, frame.frame_kind, frame.layer_budgets)


def select_keyframes(frames, tau: float) -> list:
    """I/P flags: frame 0 is I; later frames are I when the mean absolute
    pixel difference to their predecessor exceeds tau."""
    if len(frames) == 0:
        raise ValueError("empty frame sequence")
    flags = ["I"]
    for prev, cur in zip(frames, frames[1:]):
        mad = float(np.mean(np.abs(np.asarray(cur, dtype=np.float64)
                                   - np.asarray(prev, dtype=np.float64))))
        flags.append("I" if mad > tau else "P")
    return flags


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def random_splats(count: int, rng: np.random.Generator,
                  config: CodecConfig) -> SplatArray:
    pos = rng.random((count, 2))
    chol = np.tile([config.init_sigma_px, 0.0, config.init_sigma_px], (count, 1))
    color = rng.random((count, 3))
    weight = np.ones(count)
    return SplatArray(pos, chol, color, weight)


def init_iframe(budgets, aug_counts, rng: np.random.Generator,
                config: CodecConfig) -> LayeredFrame:
    layers = [random_splats(int(b) + int(a), rng, config)
              for b, a in zip(budgets, aug_counts)]
    return LayeredFrame(layers, "I", tuple(budgets))


def init_pframe(prev: LayeredFrame, aug_counts, rng: np.random.Generator,
                config: CodecConfig) -> LayeredFrame:
    layers = []
    for layer, a in zip(prev.layers, aug_counts):
        if a:
            layers.append(SplatArray.concat([layer.copy(),
                                             random_splats(int(a), rng, config)]))
        else:
            layers.append(layer.copy())
    return LayeredFrame(layers, "P", prev.layer_budgets)


# ---------------------------------------------------------------------------
# Joint loss
# ---------------------------------------------------------------------------

def _splat_view(params: dict, upto: int | None = None) -> SplatArray:
    sl = slice(None) if upto is None else slice(0, upto)
    return SplatArray(params["pos"][sl], params["chol"][sl],
                      params["color"][sl], params["weight"][sl])


def _joint_loss_grads(params: dict, sizes, pyramid: GroundTruthPyramid,
                      k: int, *, eps_cut: float = DEFAULT_CUTOFF,
                      threads: int = 1):
    """Top-level L2 plus the cyclic intermediate level's L2.

    Splats inside the intermediate prefix receive gradients from both
    renders; higher layers only from the top render.
    """
    num_levels = len(sizes)
    top_h = pyramid.resolutions[-1][0]
    full = _splat_view(params)

    th, tw = pyramid.resolutions[-1]
    pred = render(full, tw, th, chol_scale=1.0, eps_cut=eps_cut, threads=threads)
    loss, grad_img = l2_loss(pred, pyramid.levels[-1])
    g = render_backward(full, tw, th, grad_img, chol_scale=1.0,
                        eps_cut=eps_cut, threads=threads)
    grads = {"pos": g.pos, "chol": g.chol, "color": g.color, "weight": g.weight}

    lk = None
    if num_levels >= 2:
        lk = cyclic_level(k, num_levels)
        prefix = int(sum(sizes[: lk + 1]))
        lh, lw = pyramid.resolutions[lk]
        scale = lh / top_h
        sub = _splat_view(params, prefix)
        pred_l = render(sub, lw, lh, chol_scale=scale, eps_cut=eps_cut,
                        threads=threads)
        loss_l, grad_img_l = l2_loss(pred_l, pyramid.levels[lk])
        g_l = render_backward(sub, lw, lh, grad_img_l, chol_scale=scale,
                              eps_cut=eps_cut, threads=threads)
        loss += loss_l
        grads["pos"][:prefix] += g_l.pos
        grads["chol"][:prefix] += g_l.chol
        grads["color"][:prefix] += g_l.color
        grads["weight"][:prefix] += g_l.weight
    return loss, grads, lk


def joint_loss(frame: LayeredFrame, pyramid: GroundTruthPyramid, k: int, *,
               eps_cut: float = DEFAULT_CUTOFF,
               threads: int = 1):
    """Public form of the per-iteration loss over a layered frame."""
    if frame.num_layers != pyramid.num_levels:
        raise ConfigError("frame layer count does not match pyramid levels")
    merged = SplatArray.concat(frame.layers)
    params = {"pos": merged.pos, "chol": merged.chol,
              "color": merged.color, "weight": merged.weight}
    sizes = frame.layer_counts()
    loss, grads, _ = _joint_loss_grads(params, sizes, pyramid, k,
                                       eps_cut=eps_cut, threads=threads)
    return loss, SplatGradients(grads["pos"], grads["chol"],
                                grads["color"], grads["weight"])


def _clamp_params(params: dict):
    np.clip(params["pos"], POS_CLAMP[0], POS_CLAMP[1], out=params["pos"])
    chol = params["chol"]
    np.maximum(chol[:, 0], EPS_CHOL, out=chol[:, 0])
    np.maximum(chol[:, 2], EPS_CHOL, out=chol[:, 2])


# ---------------------------------------------------------------------------
# Per-frame training
# ---------------------------------------------------------------------------

@dataclass
class TrainReport:
    frame_index: int
    frame_kind: str
    iterations: int
    final_loss: float
    level_psnr: tuple
    layer_counts: tuple
    seconds: float
    converged: bool
    losses: list | None = None


def _level_psnrs(params: dict, sizes, pyramid: GroundTruthPyramid,
                 threads: int = 1) -> tuple:
    top_h = pyramid.resolutions[-1][0]
    out = []
    for lvl in range(len(sizes)):
        prefix = int(sum(sizes[: lvl + 1]))
        lh, lw = pyramid.resolutions[lvl]
        img = render(_splat_view(params, prefix), lw, lh,
                     chol_scale=lh / top_h, threads=threads)
        out.append(psnr(img, pyramid.levels[lvl]))
    return tuple(out)


def train_frame(init: LayeredFrame, pyramid: GroundTruthPyramid,
                config: CodecConfig, *, frame_index: int = 0,
                threads: int = 1, log_fn=None,
                collect_losses: bool = False):
    """Optimize one frame to convergence; returns (frame, TrainReport).

    Loop: cyclic level -> joint loss -> optimizer step -> scheduled pruning.
    Stops when the joint loss changes by less than convergence_delta across
    convergence_window consecutive iterations (compared against the same
    cyclic phase, so the level alternation does not mask convergence), or at
    the per-kind hard iteration cap.
    """
    if init.num_layers != config.num_layers:
        raise ConfigError("frame layer count does not match config")
    budgets = init.layer_budgets or config.layer_budgets()
    merged = SplatArray.concat(init.layers)
    params = {"pos": merged.pos.copy(), "chol": merged.chol.copy(),
              "color": merged.color.copy(), "weight": merged.weight.copy()}
    sizes = list(init.layer_counts())
    prune_totals = [s - b for s, b in zip(sizes, budgets)]
    if any(t < 0 for t in prune_totals):
        raise ConfigError("initial layer counts below budget")

    opt = make_optimizer(config.optimizer)
    interval = config.gsp_interval
    horizon = config.gsp_horizon(init.frame_kind)
    cap = config.max_iters(init.frame_kind)
    phase = max(1, config.num_layers - 1)
    window = config.convergence_window
    delta = config.convergence_delta

    losses: list = []
    conv_run = 0
    converged = False
    t0 = time.perf_counter()
    k = 0
    for k in range(cap):
        lr = lr_at(k, config.lr0, config.lr_halving_period)
        loss, grads, lk = _joint_loss_grads(params, sizes, pyramid, k,
                                            threads=threads)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at iteration {k}")
        params = opt.step(params, grads, lr)
        _clamp_params(params)

        quotas = [gsp_quota(k, t, interval, horizon) for t in prune_totals]
        if any(quotas):
            keep_global = []
            offset = 0
            for li, (size, quota) in enumerate(zip(sizes, quotas)):
                if quota > size:
                    raise ConfigError(f"prune quota {quota} exceeds layer {li}")
                local = (_prune_lowest_weight(
                    params["weight"][offset:offset + size], quota)
                    if quota else np.arange(size))
                keep_global.append(local + offset)
                sizes[li] = size - quota
                offset += size
            keep = np.concatenate(keep_global)
            params = {key: arr[keep] for key, arr in params.items()}
            opt.take(keep)

        losses.append(loss)
        if log_fn is not None:
            log_fn(frame_index, k, lk, loss, lr, tuple(sizes))

        at_budget = all(s == b for s, b in zip(sizes, budgets))
        if at_budget and k >= phase and abs(loss - losses[k - phase]) < delta:
            conv_run += 1
            if conv_run >= window:
                converged = True
                break
        else:
            conv_run = 0

    frame = _frame_from_params(params, sizes, init.frame_kind, budgets)
    report = TrainReport(
        frame_index=frame_index,
        frame_kind=init.frame_kind,
        iterations=k + 1,
        final_loss=losses[-1] if losses else float("nan"),
        level_psnr=_level_psnrs(params, sizes, pyramid, threads),
        layer_counts=tuple(sizes),
        seconds=time.perf_counter() - t0,
        converged=converged,
        losses=losses if collect_losses else None,
    )
    return frame, report


def _frame_from_params(params: dict, sizes, kind: str, budgets) -> LayeredFrame:
    layers = []
    offset = 0
    for size in sizes:
        sl = slice(offset, offset + size)
        layers.append(SplatArray(params["pos"][sl], params["chol"][sl],
                                 params["color"][sl], params["weight"][sl]))
        offset += size
    return LayeredFrame(layers, kind, tuple(budgets))


# ---------------------------------------------------------------------------
# Sequence encoding
# ---------------------------------------------------------------------------

def encode_sequence(frames, config: CodecConfig, seed: int = 0, *,
                    threads: int = 1, log_fn=None,
                    collect_losses: bool = False):
    """Full training pipeline over a frame sequence (or a single image)."""
    if len(frames) == 0:
        raise ValueError("empty input sequence")
    height, width = frames[0].shape[:2]
    flags = (["I"] if len(frames) == 1
             else select_keyframes(frames, config.dks_threshold))
    budgets = config.layer_budgets()
    augs = config.aug_counts()
    out_frames = []
    reports = []
    prev = None
    for t, image in enumerate(frames):
        pyramid = build_pyramid(np.asarray(image, dtype=np.float64), config)
        rng = rng_for(seed, _ROLE_JOINT_INIT, t)
        if flags[t] == "I" or prev is None:
            init = init_iframe(budgets, augs, rng, config)
        else:
            init = init_pframe(prev, augs, rng, config)
        frame, report = train_frame(init, pyramid, config, frame_index=t,
                                    threads=threads, log_fn=log_fn,
                                    collect_losses=collect_losses)
        out_frames.append(frame)
        reports.append(report)
        prev = frame
    video = GaussianVideo(out_frames, width, height,
                          resolutions_for_config(config, height, width),
                          config.scalability_mode)
    return video, reports


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def _train_single_set(target: np.ndarray, budget: int, aug: int,
                      config: CodecConfig, rng: np.random.Generator, *,
                      chol_scale: float = 1.0, base_image=None,
                      threads: int = 1):
    """Train one splat set against one target; the shared core of the
    Monolithic baseline and each Sequential stage.

    `base_image` is the frozen render of lower layers (accumulated blending
    is additive, so the frozen part is a constant offset of the prediction).
    """
    height, width = target.shape[:2]
    splats = random_splats(budget + aug, rng, config)
    params = {"pos": splats.pos, "chol": splats.chol,
              "color": splats.color, "weight": splats.weight}
    opt = make_optimizer(config.optimizer)
    base = np.zeros_like(target) if base_image is None else base_image
    interval = config.gsp_interval
    horizon = config.gsp_horizon_iframe
    cap = config.max_iters_iframe
    window, delta = config.convergence_window, config.convergence_delta
    remaining = aug
    losses: list = []
    conv_run = 0
    converged = False
    k = 0
    for k in range(cap):
        lr = lr_at(k, config.lr0, config.lr_halving_period)
        view = _splat_view(params)
        pred = base + render(view, width, height, chol_scale=chol_scale,
                             threads=threads)
        loss, grad_img = l2_loss(pred, target)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at iteration {k}")
        g = render_backward(view, width, height, grad_img,
                            chol_scale=chol_scale, threads=threads)
        params = opt.step(params, {"pos": g.pos, "chol": g.chol,
                                   "color": g.color, "weight": g.weight}, lr)
        _clamp_params(params)
        quota = gsp_quota(k, aug, interval, horizon) if remaining else 0
        if quota:
            keep = _prune_lowest_weight(params["weight"], quota)
            params = {key: arr[keep] for key, arr in params.items()}
            opt.take(keep)
            remaining -= quota
        losses.append(loss)
        if remaining == 0 and k >= 1 and abs(loss - losses[k - 1]) < delta:
            conv_run += 1
            if conv_run >= window:
                converged = True
                break
        else:
            conv_run = 0
    report = TrainReport(0, "I", k + 1, losses[-1], (), (budget,),
                         0.0, converged)
    return _splat_view(params).copy(), report


def train_sequential_baseline(frames, config: CodecConfig, seed: int = 0, *,
                              threads: int = 1):
    """Layer-wise baseline: train the base set, freeze it, then train each
    enhancement set in turn against its level target."""
    if len(frames) == 0:
        raise ValueError("empty input sequence")
    height, width = frames[0].shape[:2]
    budgets = config.layer_budgets()
    augs = config.aug_counts()
    out_frames = []
    reports = []
    for t, image in enumerate(frames):
        pyramid = build_pyramid(np.asarray(image, dtype=np.float64), config)
        top_h = pyramid.resolutions[-1][0]
        layers = []
        frame_reports = []
        for stage in range(config.num_layers):
            lh, lw = pyramid.resolutions[stage]
            scale = lh / top_h
            if layers:
                base = render(SplatArray.concat(layers), lw, lh,
                              chol_scale=scale, threads=threads)
            else:
                base = None
            splats, rep = _train_single_set(
                pyramid.levels[stage], budgets[stage], augs[stage], config,
                rng_for(seed, _ROLE_SINGLE, t, stage),
                chol_scale=scale, base_image=base, threads=threads)
            layers.append(splats)
            frame_reports.append(rep)
        out_frames.append(LayeredFrame(layers, "I", budgets))
        reports.append(frame_reports)
    video = GaussianVideo(out_frames, width, height,
                          resolutions_for_config(config, height, width),
                          config.scalability_mode)
    return video, reports


def train_monolithic_baseline(frames, config: CodecConfig, seed: int = 0, *,
                              threads: int = 1):
    """Independent single-set model per level budget; the quality upper bound."""
    if len(frames) == 0:
        raise ValueError("empty input sequence")
    height, width = frames[0].shape[:2]
    budgets = config.layer_budgets()
    cumulative = list(np.cumsum(budgets))
    resolutions = resolutions_for_config(config, height, width)
    videos = []
    for level, total in enumerate(cumulative):
        aug = int(round(total * config.aug_prune_ratios[0]))
        lh, lw = resolutions[level]
        scale = lh / height
        out_frames = []
        for t, image in enumerate(frames):
            pyramid = build_pyramid(np.asarray(image, dtype=np.float64), config)
            splats, _ = _train_single_set(
                pyramid.levels[level], int(total), aug, config,
                rng_for(seed, _ROLE_SINGLE, t, level),
                chol_scale=scale, threads=threads)
            out_frames.append(LayeredFrame([splats], "I", (int(total),)))
        videos.append(GaussianVideo(out_frames, width, height, [(lh, lw)],
                                    config.scalability_mode))
    return videos


def pruning_baseline_view(mono, keep: int) -> SplatArray:
    """The `keep` largest-|w| splats of a trained single-set model."""
    splats = mono if isinstance(mono, SplatArray) else level_view(mono, mono.num_layers - 1)
    if keep > len(splats):
        raise IndexError(f"keep={keep} exceeds splat count {len(splats)}")
    if keep == 0:
        return SplatArray.empty()
    order = np.argsort(-np.abs(splats.weight.astype(np.float64)), kind="stable")
    idx = np.sort(order[:keep])
    return splats.take(idx)
