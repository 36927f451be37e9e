"""The conditional prediction network and its checkpoint format.

One network class serves both roles in the pipeline: the multi-step
teacher (called with timesteps T..1) and the one-step student (called
with t=T to predict, t=0 to invert). The timestep enters as a sinusoidal
embedding of the phase t/T, mapped per block into a channel-wise scale
and shift, so a single parameter set can express different behavior at
different timesteps.

Architecture: x and y are concatenated on channels, lifted by a stem
convolution, refined by `depth` residual blocks (conv, instance norm,
time-conditioned affine, SiLU, conv, skip), and projected back to image
channels; the final output adds the input x scaled by a per-timestep
gain. Pipeline models use the gain one-minus-mix-level from the noising
schedule, so nearly-clean timesteps start near the identity while the
fully-noised timestep predicts from features alone instead of having to
cancel noise many times larger than the image; raw constructions
default to unit gains at every timestep.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, IoError, RangeError, ShapeError
from .schedule import Schedule

MAGIC = b"SINSR\0"
VERSION = 2


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture hyperparameters; the network input is [x ; y] on channels."""

    image_channels: int = 1
    base_channels: int = 32
    depth: int = 2
    time_embed_dim: int = 16

    def __post_init__(self):
        if self.image_channels not in (1, 3):
            raise ConfigError(f"image_channels must be 1 or 3, got {self.image_channels}")
        if self.base_channels < 8:
            raise ConfigError(f"base_channels must be >= 8, got {self.base_channels}")
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ConfigError(f"time_embed_dim must be even and >= 2, "
                              f"got {self.time_embed_dim}")

    @property
    def in_channels(self) -> int:
        return 2 * self.image_channels

    def quarter(self) -> "DenoiserConfig":
        """Small-model preset with a quarter of the channel width."""
        return DenoiserConfig(image_channels=self.image_channels,
                              base_channels=self.base_channels // 4,
                              depth=self.depth,
                              time_embed_dim=self.time_embed_dim)


def time_embedding(t: int, dim: int, t_max: int) -> np.ndarray:
    """Sinusoidal features of the phase t/t_max at dim/2 octave frequencies.

    Layout is [sin(w_0 p) .. sin(w_{d/2-1} p), cos(...)] with
    w_i = (pi/2) * 2^i, so t=0 gives zeros then ones, and the lowest
    frequency alone is injective over phases in [0, 1].
    """
    if dim < 2 or dim % 2:
        raise RangeError(f"embedding dim must be even and >= 2, got {dim}")
    if not (0 <= t <= t_max):
        raise RangeError(f"timestep {t} outside [0, {t_max}]")
    phase = t / t_max
    freqs = (math.pi / 2.0) * np.power(2.0, np.arange(dim // 2, dtype=np.float64))
    ang = freqs * phase
    return np.concatenate([np.sin(ang), np.cos(ang)]).astype(np.float32)


def schedule_gains(s: Schedule) -> np.ndarray:
    """Per-timestep input-skip gains derived from a noising schedule.

    One minus the marginal mix level: ~1 where the state is nearly the
    clean image (and exactly 1 at the t=0 inversion slot), ~0 where the
    state is dominated by the degraded input and noise.
    """
    return (1.0 - s.eta).astype(np.float64)


class Denoiser:
    """f(x, y, t): predicts an image with x's shape, conditioned on y and t.

    ``skip_gains`` (length t_max+1, indexed by t) scales the input skip
    of the final output; omitted it is all ones. ``call_count`` counts
    forward invocations; it is instrumentation for the evaluation
    harness and never influences outputs.
    """

    def __init__(self, config: DenoiserConfig, t_max: int,
                 params: dict[str, ad.Tensor] | None = None,
                 rng: np.random.Generator | None = None,
                 skip_gains: np.ndarray | None = None):
        if t_max < 1:
            raise ConfigError(f"t_max must be >= 1, got {t_max}")
        self.config = config
        self.t_max = int(t_max)
        self.call_count = 0
        if skip_gains is None:
            skip_gains = np.ones(self.t_max + 1, dtype=np.float64)
        else:
            skip_gains = np.asarray(skip_gains, dtype=np.float64)
            if skip_gains.shape != (self.t_max + 1,):
                raise ConfigError(f"skip_gains must have shape ({self.t_max + 1},), "
                                  f"got {skip_gains.shape}")
            if not np.all(np.isfinite(skip_gains)):
                raise ConfigError("skip_gains must be finite")
        self.skip_gains = skip_gains
        if params is None:
            if rng is None:
                raise ConfigError("need an rng to initialize parameters")
            params = self._init_params(rng)
        self.params = params

    def _init_params(self, rng: np.random.Generator) -> dict[str, ad.Tensor]:
        cfg = self.config
        bc, emb = cfg.base_channels, cfg.time_embed_dim

        def conv_init(f, c, small=False):
            std = 0.01 if small else math.sqrt(2.0 / (c * 9))
            w = (std * rng.standard_normal((f, c, 3, 3))).astype(np.float32)
            return ad.Tensor(w, requires_grad=True)

        def vec(n):
            return ad.Tensor(np.zeros(n, np.float32), requires_grad=True)

        def proj_init(out_dim):
            w = (0.01 * rng.standard_normal((out_dim, emb))).astype(np.float32)
            return ad.Tensor(w, requires_grad=True)

        p: dict[str, ad.Tensor] = {}
        p["stem.w"] = conv_init(bc, cfg.in_channels)
        p["stem.b"] = vec(bc)
        for d in range(cfg.depth):
            p[f"block{d}.conv1.w"] = conv_init(bc, bc)
            p[f"block{d}.conv1.b"] = vec(bc)
            p[f"block{d}.scale.w"] = proj_init(bc)
            p[f"block{d}.scale.b"] = vec(bc)
            p[f"block{d}.shift.w"] = proj_init(bc)
            p[f"block{d}.shift.b"] = vec(bc)
            p[f"block{d}.conv2.w"] = conv_init(bc, bc)
            p[f"block{d}.conv2.b"] = vec(bc)
        # small random head: near-identity start, but t-dependence is
        # already visible at initialization
        p["head.w"] = conv_init(cfg.image_channels, bc, small=True)
        p["head.b"] = vec(cfg.image_channels)
        return p

    def n_params(self) -> int:
        return sum(int(p.size) for p in self.params.values())

    def forward(self, x, y, t: int) -> ad.Tensor:
        if not isinstance(x, ad.Tensor):
            x = ad.Tensor(x)
        if not isinstance(y, ad.Tensor):
            y = ad.Tensor(y)
        if x.shape != y.shape:
            raise ShapeError(f"x and y must match, got {x.shape} vs {y.shape}")
        if len(x.shape) != 4 or x.shape[1] != self.config.image_channels:
            raise ShapeError(f"expected [N,{self.config.image_channels},H,W], "
                             f"got {x.shape}")
        if not (0 <= t <= self.t_max):
            raise RangeError(f"timestep {t} outside [0, {self.t_max}]")

        self.call_count += 1
        p = self.params
        emb = ad.Tensor(time_embedding(t, self.config.time_embed_dim, self.t_max))
        h = ad.conv2d(ad.concat_channels(x, y), p["stem.w"], p["stem.b"])
        for d in range(self.config.depth):
            s = ad.linear(emb, p[f"block{d}.scale.w"], p[f"block{d}.scale.b"])
            b = ad.linear(emb, p[f"block{d}.shift.w"], p[f"block{d}.shift.b"])
            r = ad.conv2d(h, p[f"block{d}.conv1.w"], p[f"block{d}.conv1.b"])
            r = ad.channel_affine(ad.instance_norm(r), ad.add(s, 1.0), b)
            r = ad.silu(r)
            r = ad.conv2d(r, p[f"block{d}.conv2.w"], p[f"block{d}.conv2.b"])
            h = ad.add(h, r)
        out = ad.conv2d(h, p["head.w"], p["head.b"])
        g = float(self.skip_gains[t])
        skip = x if g == 1.0 else ad.mul(x, g)
        return ad.add(skip, out)

    def __call__(self, x, y, t: int) -> ad.Tensor:
        return self.forward(x, y, t)


# ---------------------------------------------------------------------------
# checkpoint persistence
# ---------------------------------------------------------------------------


def save(model: Denoiser, s: Schedule, path) -> None:
    """Write model + schedule in the fixed little-endian binary layout."""
    cfg = model.config
    if model.t_max != s.T:
        raise ConfigError(f"model t_max {model.t_max} does not match "
                          f"schedule T {s.T}")
    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            f.write(struct.pack("<I", s.T))
            f.write(struct.pack("<d", s.kappa))
            f.write(np.asarray(s.eta, dtype="<f8").tobytes())
            f.write(np.asarray(model.skip_gains, dtype="<f8").tobytes())
            f.write(struct.pack("<4I", cfg.image_channels, cfg.base_channels,
                                cfg.depth, cfg.time_embed_dim))
            f.write(struct.pack("<I", len(model.params)))
            for name, tensor in model.params.items():
                nb = name.encode("utf-8")
                f.write(struct.pack("<H", len(nb)))
                f.write(nb)
                f.write(struct.pack("<B", tensor.data.ndim))
                f.write(struct.pack(f"<{tensor.data.ndim}I", *tensor.data.shape))
                f.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    except OSError as e:
        raise IoError(f"cannot write checkpoint {path}: {e}") from e


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IoError(f"truncated checkpoint at byte {f.tell() - len(buf)}: "
                      f"needed {n} bytes for {what}, got {len(buf)}")
    return buf


def load(path) -> tuple[Denoiser, Schedule]:
    """Read a checkpoint; bitwise inverse of ``save``."""
    try:
        f = open(path, "rb")
    except OSError as e:
        raise IoError(f"cannot open checkpoint {path}: {e}") from e
    with f:
        magic = _read_exact(f, len(MAGIC), "magic")
        if magic != MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (T,) = struct.unpack("<I", _read_exact(f, 4, "step count"))
        (kappa,) = struct.unpack("<d", _read_exact(f, 8, "kappa"))
        eta = np.frombuffer(_read_exact(f, 8 * (T + 1), "eta table"), dtype="<f8")
        gains = np.frombuffer(_read_exact(f, 8 * (T + 1), "skip gain table"),
                              dtype="<f8")
        try:
            schedule = Schedule(T=int(T), eta=eta.astype(np.float64), kappa=kappa)
        except ConfigError as e:
            raise FormatError(f"checkpoint carries an invalid schedule: {e}") from e
        ic, bc, depth, emb = struct.unpack("<4I", _read_exact(f, 16, "model config"))
        try:
            cfg = DenoiserConfig(image_channels=ic, base_channels=bc,
                                 depth=depth, time_embed_dim=emb)
        except ConfigError as e:
            raise FormatError(f"checkpoint carries an invalid model config: {e}") from e
        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        params: dict[str, ad.Tensor] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, nlen, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, "tensor rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "tensor dims"))
            n_items = int(np.prod(dims, dtype=np.int64)) if rank else 1
            raw = _read_exact(f, 4 * n_items, f"tensor '{name}' payload")
            arr = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
            params[name] = ad.Tensor(arr, requires_grad=True)
        trailing = f.read(1)
        if trailing:
            raise FormatError("checkpoint has trailing bytes after last tensor")
    try:
        model = Denoiser(cfg, t_max=int(T), params=params,
                         skip_gains=gains.astype(np.float64))
    except ConfigError as e:
        raise FormatError(f"checkpoint carries invalid skip gains: {e}") from e
    return model, schedule
