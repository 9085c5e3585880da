"""Core splat containers: flat splat arrays, layered frames, videos, codec config.

Splat parameters are stored as float32 (the checkpoint precision); all
rendering and optimization math upcasts to float64 internally.  Positions are
normalized image coordinates in [0,1]^2 (x scaled by width, y by height), and
Cholesky entries are expressed in top-level pixel units so one splat set can
be rendered at any resolution.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DegenerateCovarianceError

# Floor for the Cholesky diagonal after any parameter update, in top-level
# pixel units.  Guarantees a positive-definite covariance.
EPS_CHOL = 1e-4

# Training keeps splat centers inside this normalized window.
POS_CLAMP = (-0.5, 1.5)

DET_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"PGSV"
CHECKPOINT_VERSION = 1


@dataclass
class SplatArray:
    """Struct-of-arrays bag of 2D Gaussian splats.

    pos:    (N, 2) float32, normalized [0,1]^2 coordinates (x, y)
    chol:   (N, 3) float32, Cholesky entries (l1, l2, l3), top-level pixels
    color:  (N, 3) float32, linear RGB, unbounded during training
    weight: (N,)   float32, contribution weight
    """

    pos: np.ndarray
    chol: np.ndarray
    color: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        self.pos = np.ascontiguousarray(self.pos, dtype=np.float32)
        self.chol = np.ascontiguousarray(self.chol, dtype=np.float32)
        self.color = np.ascontiguousarray(self.color, dtype=np.float32)
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float32)
        n = self.pos.shape[0]
        if self.pos.shape != (n, 2) or self.chol.shape != (n, 3) \
                or self.color.shape != (n, 3) or self.weight.shape != (n,):
            raise ValueError("inconsistent splat field shapes")

    def __len__(self) -> int:
        return self.pos.shape[0]

    def copy(self) -> "SplatArray":
        return SplatArray(self.pos.copy(), self.chol.copy(),
                          self.color.copy(), self.weight.copy())

    def take(self, idx) -> "SplatArray":
        return SplatArray(self.pos[idx], self.chol[idx],
                          self.color[idx], self.weight[idx])

    @staticmethod
    def empty() -> "SplatArray":
        return SplatArray(np.zeros((0, 2)), np.zeros((0, 3)),
                          np.zeros((0, 3)), np.zeros((0,)))

    @staticmethod
    def concat(parts) -> "SplatArray":
        parts = list(parts)
        if not parts:
            return SplatArray.empty()
        return SplatArray(
            np.concatenate([p.pos for p in parts]),
            np.concatenate([p.chol for p in parts]),
            np.concatenate([p.color for p in parts]),
            np.concatenate([p.weight for p in parts]),
        )

    def allclose(self, other: "SplatArray") -> bool:
        return (np.array_equal(self.pos, other.pos)
                and np.array_equal(self.chol, other.chol)
                and np.array_equal(self.color, other.color)
                and np.array_equal(self.weight, other.weight))


def cholesky_to_cov(chol) -> np.ndarray:
    """Covariance from a Cholesky vector: Sigma = L L^T, L = [[l1,0],[l2,l3]].

    Raises DegenerateCovarianceError if a diagonal entry is nonpositive.
    """
    l1, l2, l3 = (float(v) for v in np.asarray(chol, dtype=np.float64))
    if l1 <= 0.0 or l3 <= 0.0:
        raise DegenerateCovarianceError(
            f"nonpositive Cholesky diagonal (l1={l1}, l3={l3})")
    return np.array([[l1 * l1, l1 * l2],
                     [l1 * l2, l2 * l2 + l3 * l3]], dtype=np.float64)


def cov_inverse_det(cov) -> tuple[np.ndarray, float]:
    """Closed-form inverse and determinant of a 2x2 covariance."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got {cov.shape}")
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    det = a * c - b * b
    if det <= DET_FLOOR:
        raise DegenerateCovarianceError(f"covariance determinant {det} below floor")
    inv = np.array([[c, -b], [-b, a]], dtype=np.float64) / det
    return inv, float(det)


@dataclass
class LayeredFrame:
    """One frame as a base layer plus enhancement layers of splats."""

    layers: list  # list[SplatArray], index 0 is the base layer
    frame_kind: str = "I"  # "I" or "P"
    layer_budgets: tuple = ()

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a frame needs at least one layer")
        if self.frame_kind not in ("I", "P"):
            raise ValueError(f"frame_kind must be 'I' or 'P', got {self.frame_kind!r}")
        self.layer_budgets = tuple(int(b) for b in self.layer_budgets)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer_counts(self) -> tuple:
        return tuple(len(l) for l in self.layers)

    def copy(self) -> "LayeredFrame":
        return LayeredFrame([l.copy() for l in self.layers],
                            self.frame_kind, self.layer_budgets)


def level_view(frame: LayeredFrame, level: int) -> SplatArray:
    """Splats visible at a reconstruction level: union of layers 0..level."""
    if not 0 <= level < frame.num_layers:
        raise IndexError(f"level {level} out of range for {frame.num_layers} layers")
    return SplatArray.concat(frame.layers[: level + 1])


@dataclass
class GaussianVideo:
    """Ordered layered frames plus the resolution ladder they were trained at."""

    frames: list  # list[LayeredFrame]
    width: int
    height: int
    level_resolutions: list  # list[(H_l, W_l)], one per layer
    scalability_mode: str = "quality"

    def __post_init__(self):
        if self.scalability_mode not in ("quality", "resolution"):
            raise ValueError(f"bad scalability_mode {self.scalability_mode!r}")
        self.level_resolutions = [(int(h), int(w)) for h, w in self.level_resolutions]

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def num_layers(self) -> int:
        return len(self.level_resolutions)


def _split_counts(total: int, fractions) -> tuple:
    """Integer partition of `total` by fractions, largest remainders first."""
    raw = [total * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    short = total - sum(counts)
    order = np.argsort([c - r for c, r in zip(counts, raw)], kind="stable")
    for i in range(short):
        counts[order[i]] += 1
    return tuple(counts)


@dataclass
class CodecConfig:
    """Training-side knobs.  Defaults follow the reference operating point."""

    num_layers: int = 3
    total_budget: int = 600
    budget_split: tuple = (1 / 3, 1 / 3, 1 / 3)
    aug_prune_ratios: tuple = (0.2, 0.4, 0.4)
    gsp_interval: int = 100            # Z: prune every Z iterations
    gsp_horizon_iframe: int = 4000     # K for I-frames
    gsp_horizon_pframe: int = 1000     # K for P-frames
    lr0: float = 1e-3
    lr_halving_period: int = 20000
    convergence_window: int = 100      # W: consecutive small-change iterations
    convergence_delta: float = 1e-7
    dks_threshold: float = 0.08
    scalability_mode: str = "quality"
    max_iters_iframe: int = 50000
    max_iters_pframe: int = 20000
    init_sigma_px: float = 2.0         # isotropic Cholesky diagonal at init
    optimizer: str = "adan"            # "adan" or "adam" (ablation switch)

    def __post_init__(self):
        self.budget_split = tuple(float(f) for f in self.budget_split)
        self.aug_prune_ratios = tuple(float(f) for f in self.aug_prune_ratios)
        self.validate()

    def validate(self):
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.total_budget < self.num_layers:
            raise ConfigError("total_budget must cover at least one splat per layer")
        if len(self.budget_split) != self.num_layers:
            raise ConfigError("budget_split length must equal num_layers")
        if len(self.aug_prune_ratios) != self.num_layers:
            raise ConfigError("aug_prune_ratios length must equal num_layers")
        if abs(sum(self.budget_split) - 1.0) > 1e-9:
            raise ConfigError("budget_split must sum to 1")
        if any(f <= 0 for f in self.budget_split):
            raise ConfigError("budget_split fractions must be positive")
        if any(r < 0 for r in self.aug_prune_ratios):
            raise ConfigError("aug_prune_ratios must be nonnegative")
        if self.gsp_interval <= 0:
            raise ConfigError("gsp_interval must be positive")
        for k in (self.gsp_horizon_iframe, self.gsp_horizon_pframe):
            if self.gsp_interval > k:
                raise ConfigError("gsp_interval must not exceed the GSP horizon")
        if self.max_iters_iframe <= self.gsp_horizon_iframe:
            raise ConfigError("max_iters_iframe must exceed the I-frame GSP horizon")
        if self.max_iters_pframe <= self.gsp_horizon_pframe:
            raise ConfigError("max_iters_pframe must exceed the P-frame GSP horizon")
        if self.lr0 <= 0 or self.lr_halving_period <= 0:
            raise ConfigError("learning-rate schedule must be positive")
        if self.scalability_mode not in ("quality", "resolution"):
            raise ConfigError(f"bad scalability_mode {self.scalability_mode!r}")
        if self.optimizer not in ("adan", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if any(b <= 0 for b in self.layer_budgets()):
            raise ConfigError("every layer budget must be positive")

    def layer_budgets(self) -> tuple:
        return _split_counts(self.total_budget, self.budget_split)

    def aug_counts(self) -> tuple:
        """Per-layer injection counts; pruning removes the same amount."""
        return tuple(int(round(b * r)) for b, r in
                     zip(self.layer_budgets(), self.aug_prune_ratios))

    def gsp_horizon(self, frame_kind: str) -> int:
        return self.gsp_horizon_iframe if frame_kind == "I" else self.gsp_horizon_pframe

    def max_iters(self, frame_kind: str) -> int:
        return self.max_iters_iframe if frame_kind == "I" else self.max_iters_pframe

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "CodecConfig":
        known = {f for f in CodecConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("budget_split", "aug_prune_ratios"):
            if key in d:
                d[key] = tuple(d[key])
        return CodecConfig(**d)


# ---------------------------------------------------------------------------
# Full-precision checkpoint I/O
#
# Little-endian layout:
#   magic "PGSV" | version u16 | meta_len u32 | meta JSON (utf-8)
#   then per frame: kind u8, then per layer: count u32, count*9 float32
#   (pos[2], chol[3], color[3], weight[1] per splat).
# ---------------------------------------------------------------------------

def save_checkpoint(video: GaussianVideo, path_or_file, config: CodecConfig | None = None):
    close = False
    f = path_or_file
    if not hasattr(f, "write"):
        f = open(f, "wb")
        close = True
    try:
        meta = {
            "width": video.width,
            "height": video.height,
            "num_frames": video.num_frames,
            "num_layers": video.num_layers,
            "scalability_mode": video.scalability_mode,
            "level_resolutions": [list(r) for r in video.level_resolutions],
            "layer_budgets": [list(fr.layer_budgets) for fr in video.frames],
            "config": config.to_dict() if config is not None else None,
        }
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<H", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for frame in video.frames:
            f.write(b"I" if frame.frame_kind == "I" else b"P")
            for layer in frame.layers:
                n = len(layer)
                f.write(struct.pack("<I", n))
                rec = np.empty((n, 9), dtype="<f4")
                rec[:, 0:2] = layer.pos
                rec[:, 2:5] = layer.chol
                rec[:, 5:8] = layer.color
                rec[:, 8] = layer.weight
                f.write(rec.tobytes())
    finally:
        if close:
            f.close()


def load_checkpoint(path_or_file) -> tuple[GaussianVideo, CodecConfig | None]:
    close = False
    f = path_or_file
    if not hasattr(f, "read"):
        f = open(f, "rb")
        close = True
    try:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError("not a pgsv checkpoint (bad magic)")
        (version,) = struct.unpack("<H", f.read(2))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(meta_len).decode("utf-8"))
        num_layers = meta["num_layers"]
        frames = []
        for t in range(meta["num_frames"]):
            kind = f.read(1).decode("ascii")
            layers = []
            for _ in range(num_layers):
                (n,) = struct.unpack("<I", f.read(4))
                rec = np.frombuffer(f.read(n * 9 * 4), dtype="<f4").reshape(n, 9)
                layers.append(SplatArray(rec[:, 0:2], rec[:, 2:5],
                                         rec[:, 5:8], rec[:, 8]))
            frames.append(LayeredFrame(layers, kind, meta["layer_budgets"][t]))
        video = GaussianVideo(frames, meta["width"], meta["height"],
                              [tuple(r) for r in meta["level_resolutions"]],
                              meta["scalability_mode"])
        config = CodecConfig.from_dict(meta["config"]) if meta.get("config") else None
        return video, config
    finally:
        if close:
            f.close()
