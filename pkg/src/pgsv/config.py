"""Run configuration: INI-style config files with command-line overrides.

The file has three sections, all optional: [codec] (CodecConfig fields),
[quant] (QuantParams fields), and [run] (seed, threads, frames, size,
verbosity).  Unknown sections or keys are rejected, and the merged effective
configuration is echoed into encode reports for reproducibility.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .quantize import QuantParams
from .splats import CodecConfig

THREADS_ENV = "PGSVC_THREADS"

_RUN_KEYS = {"seed", "threads", "frames", "size", "verbose"}


@dataclass
class RunConfig:
    codec: CodecConfig = field(default_factory=CodecConfig)
    quant: QuantParams = field(default_factory=QuantParams)
    seed: int = 0
    threads: int = 1
    frames: int | None = None          # frame-count limit
    size: tuple | None = None          # (width, height) for raw YUV
    verbose: int = 0

    def to_dict(self) -> dict:
        return {
            "codec": self.codec.to_dict(),
            "quant": self.quant.to_dict(),
            "run": {"seed": self.seed, "threads": self.threads,
                    "frames": self.frames,
                    "size": list(self.size) if self.size else None,
                    "verbose": self.verbose},
        }


def _coerce(raw: str, current):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(float(p) for p in raw.replace(",", " ").split())
    return raw.strip()


def parse_size(raw: str) -> tuple:
    parts = raw.lower().replace("x", " ").split()
    if len(parts) != 2:
        raise ConfigError(f"size must be WxH, got {raw!r}")
    return int(parts[0]), int(parts[1])


def load_config_file(path) -> RunConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    unknown_sections = set(parser.sections()) - {"codec", "quant", "run"}
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {sorted(unknown_sections)}")
    run = RunConfig()

    codec_kwargs = {}
    if parser.has_section("codec"):
        defaults = CodecConfig()
        for key, raw in parser.items("codec"):
            if key not in CodecConfig.__dataclass_fields__:
                raise ConfigError(f"unknown [codec] key {key!r}")
            codec_kwargs[key] = _coerce(raw, getattr(defaults, key))
    quant_kwargs = {}
    if parser.has_section("quant"):
        defaults = QuantParams()
        for key, raw in parser.items("quant"):
            if key not in QuantParams.__dataclass_fields__:
                raise ConfigError(f"unknown [quant] key {key!r}")
            quant_kwargs[key] = _coerce(raw, getattr(defaults, key))
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown [run] key {key!r}")
            if key == "size":
                run.size = parse_size(raw)
            else:
                setattr(run, key, int(raw))

    run.codec = CodecConfig(**codec_kwargs)
    run.quant = QuantParams(**quant_kwargs)
    return run


def resolve_threads(explicit: int | None) -> int:
    """--threads flag, else the PGSVC_THREADS environment variable, else 1."""
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"bad {THREADS_ENV} value {env!r}") from exc
    return 1


def apply_cli_overrides(run: RunConfig, args) -> RunConfig:
    """Merge argparse values over the file-supplied configuration."""
    codec_kwargs = run.codec.to_dict()
    if getattr(args, "budget", None) is not None:
        codec_kwargs["total_budget"] = args.budget
    if getattr(args, "layers", None) is not None:
        n = args.layers
        codec_kwargs["num_layers"] = n
        if len(codec_kwargs["budget_split"]) != n:
            codec_kwargs["budget_split"] = tuple(1.0 / n for _ in range(n))
        if len(codec_kwargs["aug_prune_ratios"]) != n:
            codec_kwargs["aug_prune_ratios"] = (0.2,) + (0.4,) * (n - 1)
    if getattr(args, "mode", None) is not None:
        codec_kwargs["scalability_mode"] = args.mode
    run.codec = CodecConfig.from_dict(codec_kwargs)
    if getattr(args, "seed", None) is not None:
        run.seed = args.seed
    if getattr(args, "threads", None) is not None:
        run.threads = max(1, args.threads)
    elif run.threads == 1:
        run.threads = resolve_threads(None)
    if getattr(args, "frames", None) is not None:
        run.frames = args.frames
    if getattr(args, "size", None) is not None:
        run.size = parse_size(args.size)
    if getattr(args, "verbose", None):
        run.verbose = args.verbose
    return run
