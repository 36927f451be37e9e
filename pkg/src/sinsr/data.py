"""Synthetic paired super-resolution corpus and its on-disk formats.

High-resolution images are procedural: band-limited Gaussian random
fields for texture, randomly placed ellipses and rectangles for sharp
edges, and sinusoidal gratings for structured detail beyond the
low-resolution Nyquist limit. The degradation is blur, box downsample,
sensor noise, and bilinear re-upsampling to the original grid, so every
pair (x0, y) lives at one spatial size and the restoration problem is
genuinely lossy but local.

Every example is a pure function of (corpus seed, example index), which
makes corpora reproducible and lets train/held-out splits be disjoint
by index-range construction.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import rng as rng_mod
from .errors import ConfigError, FormatError, IoError, ShapeError

CORPUS_MAGIC = b"SINSRDAT"
CORPUS_VERSION = 1


@dataclass(frozen=True)
class CorpusConfig:
    count: int = 512
    hr_size: int = 32
    scale: int = 4
    channels: int = 1
    blur_sigma: float = 2.0
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        if self.scale < 1:
            raise ConfigError(f"scale must be >= 1, got {self.scale}")
        if self.hr_size < 8 or self.hr_size % self.scale:
            raise ConfigError(f"hr_size must be >= 8 and divisible by scale, "
                              f"got {self.hr_size} (scale {self.scale})")
        if self.channels not in (1, 3):
            raise ConfigError(f"channels must be 1 or 3, got {self.channels}")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ConfigError("sigmas must be nonnegative")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError(f"seed must be a u64, got {self.seed}")


@dataclass(frozen=True)
class SrPair:
    """One training example: clean image, degraded observation, index seed."""

    x0: np.ndarray
    y: np.ndarray
    seed: int


def _radial_freq(n: int) -> np.ndarray:
    f = np.fft.fftfreq(n)
    return np.sqrt(f[:, None] ** 2 + f[None, :] ** 2)


def gen_hr(seed: int, cfg: CorpusConfig) -> np.ndarray:
    """Procedural clean image [C,H,W] in [0,1] for one example index."""
    gen = rng_mod.stream(cfg.seed, rng_mod.DATA_HR, seed)
    n = cfg.hr_size
    c = cfg.channels
    img = np.full((c, n, n), 0.5, dtype=np.float64)
    yy, xx = np.meshgrid(np.arange(n, dtype=np.float64),
                         np.arange(n, dtype=np.float64), indexing="ij")
    fr = _radial_freq(n)

    def channel_gains():
        if c == 1:
            return np.ones(1)
        return gen.uniform(0.6, 1.0, size=c)

    # band-limited random fields: texture kept below the low-resolution
    # Nyquist limit so it is recoverable in principle
    for _ in range(2):
        f_lo = gen.uniform(0.02, 0.06)
        f_hi = f_lo + gen.uniform(0.03, 0.05)
        spec = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
        field = np.fft.ifft2(spec * ((fr >= f_lo) & (fr <= f_hi))).real
        field /= max(field.std(), 1e-8)
        amp = gen.uniform(0.05, 0.12)
        gains = channel_gains()
        for ch in range(c):
            img[ch] += amp * gains[ch] * field

    # sharp-edged shapes: the main restorable structure
    for _ in range(int(gen.integers(3, 7))):
        cy, cx = gen.uniform(0.15 * n, 0.85 * n, size=2)
        ry, rx = gen.uniform(0.08 * n, 0.35 * n, size=2)
        theta = gen.uniform(0.0, math.pi)
        u = (yy - cy) * math.cos(theta) + (xx - cx) * math.sin(theta)
        v = -(yy - cy) * math.sin(theta) + (xx - cx) * math.cos(theta)
        if gen.uniform() < 0.5:
            mask = (u / ry) ** 2 + (v / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(u) <= ry) & (np.abs(v) <= rx)
        delta = gen.uniform(0.18, 0.35) * (1.0 if gen.uniform() < 0.5 else -1.0)
        gains = channel_gains()
        for ch in range(c):
            img[ch] += delta * gains[ch] * mask

    # one faint grating above the low-resolution Nyquist limit: genuinely
    # unrecoverable detail, kept small so it sets the noise floor, not the
    # restoration headroom
    theta = gen.uniform(0.0, math.pi)
    freq = gen.uniform(0.15, 0.30)
    phase = gen.uniform(0.0, 2.0 * math.pi)
    amp = gen.uniform(0.01, 0.03)
    wave = np.sin(2.0 * math.pi * freq
                  * (xx * math.cos(theta) + yy * math.sin(theta)) + phase)
    gains = channel_gains()
    for ch in range(c):
        img[ch] += amp * gains[ch] * wave

    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _box_down(x: np.ndarray, scale: int) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // scale, scale, w // scale, scale).mean(axis=(2, 4))


def _lerp_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    """Bilinear resize along one axis, half-pixel-centered sampling.

    The lerp form a + f*(b - a) is exact for constant inputs, which the
    constant-invariance contract of ``degrade`` relies on.
    """
    n_in = x.shape[axis]
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = np.clip(src - i0, 0.0, 1.0).astype(np.float32)
    a = np.take(x, i0, axis=axis)
    b = np.take(x, i1, axis=axis)
    shape = [1] * x.ndim
    shape[axis] = n_out
    f = frac.reshape(shape)
    return a + f * (b - a)


def bilinear_up(x: np.ndarray, n_out: int) -> np.ndarray:
    """Resize [C,h,w] to [C,n_out,n_out] with separable bilinear lerps."""
    out = _lerp_axis(x, n_out, axis=1)
    return _lerp_axis(out, n_out, axis=2)


def degrade(x0: np.ndarray, cfg: CorpusConfig, seed: int) -> np.ndarray:
    """Blur, downsample, add sensor noise, re-upsample, clip to [0,1]."""
    if x0.shape != (cfg.channels, cfg.hr_size, cfg.hr_size):
        raise ShapeError(f"expected {(cfg.channels, cfg.hr_size, cfg.hr_size)}, "
                         f"got {x0.shape}")
    x = x0.astype(np.float32, copy=True)
    if cfg.blur_sigma > 0:
        for ch in range(cfg.channels):
            x[ch] = gaussian_filter(x[ch], sigma=cfg.blur_sigma,
                                    mode="reflect", truncate=4.0)
    lr = _box_down(x, cfg.scale).astype(np.float32)
    if cfg.noise_sigma > 0:
        gen = rng_mod.stream(cfg.seed, rng_mod.DATA_DEGRADE, seed)
        lr = lr + cfg.noise_sigma * gen.standard_normal(lr.shape).astype(np.float32)
    up = bilinear_up(lr.astype(np.float32), cfg.hr_size)
    return np.clip(up, 0.0, 1.0).astype(np.float32)


def make_pair(index: int, cfg: CorpusConfig) -> SrPair:
    x0 = gen_hr(index, cfg)
    return SrPair(x0=x0, y=degrade(x0, cfg, index), seed=index)


def make_corpus(cfg: CorpusConfig, start: int = 0) -> list[SrPair]:
    """Examples for indices start..start+count-1; disjoint ranges give
    disjoint train/held-out splits by construction."""
    return [make_pair(start + i, cfg) for i in range(cfg.count)]


# ---------------------------------------------------------------------------
# corpus persistence
# ---------------------------------------------------------------------------


def save_corpus(pairs: list[SrPair], cfg: CorpusConfig, path) -> None:
    if len(pairs) != cfg.count:
        raise ConfigError(f"config says {cfg.count} pairs, got {len(pairs)}")
    try:
        with open(path, "wb") as f:
            f.write(CORPUS_MAGIC)
            f.write(struct.pack("<I", CORPUS_VERSION))
            f.write(struct.pack("<4I", cfg.count, cfg.hr_size, cfg.scale,
                                cfg.channels))
            f.write(struct.pack("<2d", cfg.blur_sigma, cfg.noise_sigma))
            f.write(struct.pack("<Q", cfg.seed))
            for p in pairs:
                f.write(struct.pack("<Q", p.seed))
                f.write(np.ascontiguousarray(p.x0, dtype="<f4").tobytes())
                f.write(np.ascontiguousarray(p.y, dtype="<f4").tobytes())
    except OSError as e:
        raise IoError(f"cannot write corpus {path}: {e}") from e


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise IoError(f"truncated corpus at byte {f.tell() - len(buf)}: "
                      f"needed {n} bytes for {what}, got {len(buf)}")
    return buf


def load_corpus(path) -> tuple[list[SrPair], CorpusConfig]:
    try:
        f = open(path, "rb")
    except OSError as e:
        raise IoError(f"cannot open corpus {path}: {e}") from e
    with f:
        magic = _read_exact(f, len(CORPUS_MAGIC), "magic")
        if magic != CORPUS_MAGIC:
            raise FormatError(f"bad corpus magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != CORPUS_VERSION:
            raise FormatError(f"unsupported corpus version {version}")
        count, hr_size, scale, channels = struct.unpack(
            "<4I", _read_exact(f, 16, "shape config"))
        blur_sigma, noise_sigma = struct.unpack("<2d", _read_exact(f, 16, "sigmas"))
        (seed,) = struct.unpack("<Q", _read_exact(f, 8, "seed"))
        try:
            cfg = CorpusConfig(count=count, hr_size=hr_size, scale=scale,
                               channels=channels, blur_sigma=blur_sigma,
                               noise_sigma=noise_sigma, seed=seed)
        except ConfigError as e:
            raise FormatError(f"corpus header invalid: {e}") from e
        shape = (channels, hr_size, hr_size)
        n_bytes = 4 * channels * hr_size * hr_size
        pairs = []
        for i in range(count):
            (pseed,) = struct.unpack("<Q", _read_exact(f, 8, f"pair {i} seed"))
            x0 = np.frombuffer(_read_exact(f, n_bytes, f"pair {i} clean image"),
                               dtype="<f4").reshape(shape).copy()
            y = np.frombuffer(_read_exact(f, n_bytes, f"pair {i} degraded image"),
                              dtype="<f4").reshape(shape).copy()
            pairs.append(SrPair(x0=x0, y=y, seed=pseed))
        if f.read(1):
            raise FormatError("corpus has trailing bytes after last pair")
    return pairs, cfg


# ---------------------------------------------------------------------------
# portable image export for visual inspection
# ---------------------------------------------------------------------------


def export_image(img: np.ndarray, path) -> None:
    """Write [H,W], [1,H,W] as binary PGM or [3,H,W] as binary PPM.

    Quantization is round-half-up on clip(v,0,1)*255 so 0.5 maps to 128.
    """
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ShapeError(f"expected [H,W], [1,H,W] or [3,H,W], got {arr.shape}")
    q = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    c, h, w = q.shape
    kind = b"P5" if c == 1 else b"P6"
    payload = q[0] if c == 1 else np.ascontiguousarray(q.transpose(1, 2, 0))
    try:
        with open(path, "wb") as f:
            f.write(kind + b"\n" + f"{w} {h}".encode() + b"\n255\n")
            f.write(payload.tobytes())
    except OSError as e:
        raise IoError(f"cannot write image {path}: {e}") from e


def import_image(path) -> np.ndarray:
    """Read a binary PGM/PPM written by ``export_image`` back to [C,H,W]."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoError(f"cannot read image {path}: {e}") from e
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] not in (b"P5", b"P6"):
        raise FormatError(f"not a binary PGM/PPM: {path}")
    try:
        w, h = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError as e:
        raise FormatError(f"bad image header in {path}") from e
    if maxval != 255:
        raise FormatError(f"unsupported max value {maxval}")
    c = 1 if parts[0] == b"P5" else 3
    data = np.frombuffer(parts[3][: w * h * c], dtype=np.uint8)
    if data.size != w * h * c:
        raise IoError(f"truncated image payload in {path}")
    if c == 1:
        out = data.reshape(1, h, w)
    else:
        out = data.reshape(h, w, 3).transpose(2, 0, 1)
    return (out.astype(np.float32) / 255.0).copy()
