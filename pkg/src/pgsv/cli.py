"""Command-line front end: encode, decode, truncate, eval, rd-curve."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import report as report_mod
from .config import RunConfig, apply_cli_overrides, load_config_file, parse_size
from .errors import (CodecError, ConfigError, ShapeMismatchError,
                     StreamFormatError, TrainingDivergedError)
from .media import load_input, save_png, save_yuv420
from .pipeline import decode_images, encode_frames, eval_stream
from .splats import CodecConfig
from .stream import read_stream, truncate_stream
from .train import train_monolithic_baseline, train_sequential_baseline
from .quantize import quantize_video
from .stream import write_stream

EXIT_OK = 0
EXIT_CONFIG = 2          # argparse uses 2 for usage errors as well
EXIT_INPUT = 3           # unreadable input / bad dimensions
EXIT_DIVERGENCE = 4
EXIT_STREAM = 5          # bad magic, truncation, corrupt fields
EXIT_MISMATCH = 6        # reference/decode disagreement in eval


def _common_codec_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file ([codec]/[quant]/[run])")
    p.add_argument("--budget", type=int, help="total splat budget N")
    p.add_argument("--layers", type=int, help="layer count L")
    p.add_argument("--mode", choices=["quality", "resolution"],
                   help="scalability mode")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--threads", type=int,
                   help=f"worker threads (falls back to $PGSVC_THREADS)")
    p.add_argument("--frames", type=int, help="limit input frame count")
    p.add_argument("--size", help="WxH for raw YUV input")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _build_run(args) -> RunConfig:
    run = load_config_file(args.config) if args.config else RunConfig()
    return apply_cli_overrides(run, args)


def _load_frames(path, run: RunConfig):
    try:
        return load_input(path, size=run.size, max_frames=run.frames)
    except (OSError, ValueError) as exc:
        raise _InputError(str(exc)) from exc


class _InputError(Exception):
    pass


def _report_path(output: str) -> str:
    stem, _ = os.path.splitext(output)
    return stem + ".report.json"


def cmd_encode(args) -> int:
    run = _build_run(args)
    frames, width, height = _load_frames(args.input, run)
    log_rows = []
    log_fn = None
    if args.train_log:
        def log_fn(frame, k, level, loss, lr, counts):  # noqa: E306
            log_rows.append([frame, k, "" if level is None else level,
                             f"{loss:.10e}", f"{lr:.6e}",
                             ";".join(str(c) for c in counts)])
    result = encode_frames(frames, run.codec, run.quant, run.seed,
                           threads=run.threads,
                           finetune=not args.no_finetune, log_fn=log_fn,
                           collect_losses=bool(args.figures))
    with open(args.output, "wb") as f:
        f.write(result.stream)
    if args.train_log:
        with open(args.train_log, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["frame", "k", "level", "joint_loss", "lr",
                             "splat_counts"])
            writer.writerows(log_rows)
    report = {
        "input": args.input,
        "output": args.output,
        "width": width,
        "height": height,
        "frames": len(frames),
        "stream_bytes": len(result.stream),
        "frame_kinds": [fr.frame_kind for fr in result.video.frames],
        "per_frame": [{
            "index": r.frame_index,
            "kind": r.frame_kind,
            "iterations": r.iterations,
            "converged": r.converged,
            "final_loss": r.final_loss,
            "level_psnr_db": list(r.level_psnr),
            "layer_counts": list(r.layer_counts),
            "seconds": r.seconds,
        } for r in result.reports],
        "effective_config": run.to_dict(),
    }
    with open(_report_path(args.output), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    if args.figures:
        stem, _ = os.path.splitext(args.output)
        report_mod.plot_training_curves(stem + "_training.png", result.reports)
    if run.verbose:
        for r in result.reports:
            print(f"frame {r.frame_index} [{r.frame_kind}] "
                  f"iters={r.iterations} psnr={r.level_psnr[-1]:.2f}dB")
        print(f"wrote {len(result.stream)} bytes to {args.output}")
    return EXIT_OK


def cmd_decode(args) -> int:
    with open(args.stream, "rb") as f:
        data = f.read()
    qvideo = read_stream(data, args.level)
    threads = args.threads or 1
    images = decode_images(qvideo, args.level, threads=threads)
    out = args.output
    if out.lower().endswith(".yuv"):
        save_yuv420(images, out)
    elif len(images) == 1 and out.lower().endswith(".png"):
        save_png(images[0], out)
    else:
        os.makedirs(out, exist_ok=True)
        for i, img in enumerate(images):
            save_png(img, os.path.join(out, f"frame_{i:04d}.png"))
    return EXIT_OK


def cmd_truncate(args) -> int:
    with open(args.stream, "rb") as f:
        data = f.read()
    out = truncate_stream(data, args.level)
    with open(args.output, "wb") as f:
        f.write(out)
    return EXIT_OK


def _parse_levels(raw: str | None, top: int) -> list:
    if raw is None:
        return list(range(top + 1))
    return [int(p) for p in raw.replace(",", " ").split()]


def cmd_eval(args) -> int:
    run = _build_run(args)
    with open(args.stream, "rb") as f:
        data = f.read()
    qvideo = read_stream(data)
    references, _, _ = _load_frames(args.reference, run)
    if len(references) != len(qvideo.frames):
        print(f"error: reference has {len(references)} frames, stream has "
              f"{len(qvideo.frames)}", file=sys.stderr)
        return EXIT_MISMATCH
    levels = _parse_levels(args.levels, qvideo.num_layers - 1)
    rows = eval_stream(data, qvideo, references, levels, threads=run.threads)
    report_mod.write_rd_csv(args.output, {"pgsv": rows})
    stem, _ = os.path.splitext(args.output)
    report_mod.plot_level_quality(stem + ".png", rows)
    if run.verbose:
        for r in rows:
            print(f"level {r.level}: {r.bytes} B, {r.psnr_db:.2f} dB, "
                  f"ms-ssim {r.ms_ssim:.4f}")
    return EXIT_OK


def cmd_rd_curve(args) -> int:
    run = _build_run(args)
    frames, _, _ = _load_frames(args.input, run)
    budgets = [int(p) for p in args.budgets.replace(",", " ").split()]
    os.makedirs(args.output_dir, exist_ok=True)
    baselines = set(args.baseline or [])
    rows_by_method: dict = {"pgsv": []}
    failed = []
    for budget in budgets:
        codec = CodecConfig.from_dict({**run.codec.to_dict(),
                                       "total_budget": budget})
        levels = list(range(codec.num_layers))
        try:
            result = encode_frames(frames, codec, run.quant, run.seed,
                                   threads=run.threads)
            path = os.path.join(args.output_dir, f"pgsv_n{budget}.pgsv")
            with open(path, "wb") as f:
                f.write(result.stream)
            rows_by_method["pgsv"] += eval_stream(
                result.stream, result.qvideo, frames, levels,
                threads=run.threads)
        except CodecError as exc:
            failed.append(("pgsv", budget, str(exc)))
            continue
        if "sequential" in baselines:
            try:
                video, _ = train_sequential_baseline(frames, codec, run.seed,
                                                     threads=run.threads)
                qv, _ = quantize_video(video, run.quant, run.seed)
                stream = write_stream(qv)
                rows_by_method.setdefault("sequential", [])
                rows_by_method["sequential"] += eval_stream(
                    stream, qv, frames, levels, threads=run.threads)
            except CodecError as exc:
                failed.append(("sequential", budget, str(exc)))
        if "monolithic" in baselines:
            try:
                videos = train_monolithic_baseline(frames, codec, run.seed,
                                                   threads=run.threads)
                rows_by_method.setdefault("monolithic", [])
                for level, video in enumerate(videos):
                    qv, _ = quantize_video(video, run.quant, run.seed)
                    stream = write_stream(qv)
                    rows = eval_stream(stream, qv, frames, [0],
                                       threads=run.threads)
                    for r in rows:
                        rows_by_method["monolithic"].append(
                            type(r)(r.budget, level, r.bytes, r.psnr_db,
                                    r.ms_ssim, r.frames))
            except CodecError as exc:
                failed.append(("monolithic", budget, str(exc)))
    csv_path = os.path.join(args.output_dir, "rd_curve.csv")
    report_mod.write_rd_csv(csv_path, rows_by_method)
    report_mod.write_gnuplot_dat(args.output_dir, rows_by_method)
    report_mod.plot_rd_curves(os.path.join(args.output_dir, "rd_curve.png"),
                              rows_by_method)
    for method, budget, msg in failed:
        print(f"warning: {method} at budget {budget} failed: {msg}",
              file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pgsv",
        description="Progressive layered 2D Gaussian splat codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="train and write a .pgsv stream")
    p.add_argument("input", help="PNG file, directory of PNGs, or raw .yuv")
    p.add_argument("output", help="output .pgsv path")
    p.add_argument("--no-finetune", action="store_true",
                   help="skip quantization-aware fine-tuning")
    p.add_argument("--train-log", help="write per-iteration CSV log here")
    p.add_argument("--figures", action="store_true",
                   help="also render training-curve figures")
    _common_codec_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="render frames from a stream")
    p.add_argument("stream")
    p.add_argument("output", help=".png (single frame), .yuv, or a directory")
    p.add_argument("--level", type=int, default=None,
                   help="reconstruction level (default: top)")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("truncate", help="drop enhancement layers from a stream")
    p.add_argument("stream")
    p.add_argument("output")
    p.add_argument("--level", type=int, required=True)
    p.set_defaults(func=cmd_truncate)

    p = sub.add_parser("eval", help="PSNR/MS-SSIM rate-distortion table")
    p.add_argument("stream")
    p.add_argument("reference", help="reference input (PNG/dir/YUV)")
    p.add_argument("--levels", help="comma-separated levels (default: all)")
    p.add_argument("--output", default="eval.csv")
    _common_codec_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rd-curve", help="budget sweep with optional baselines")
    p.add_argument("input")
    p.add_argument("--budgets", required=True, help="e.g. 300,600,900")
    p.add_argument("--output-dir", default="rd_out")
    p.add_argument("--baseline", action="append",
                   choices=["sequential", "monolithic"],
                   help="also sweep a baseline (repeatable)")
    _common_codec_flags(p)
    p.set_defaults(func=cmd_rd_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except StreamFormatError as exc:
        print(f"error: bad stream: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except IndexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except ShapeMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
