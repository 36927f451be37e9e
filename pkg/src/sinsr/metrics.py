"""Reference-based image quality metrics, diversity, and timing."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ConfigError, ShapeError

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 7


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / mse) in dB, capped at 99 for (near-)identical inputs."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes {a.shape} and {b.shape} differ")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB)


def _ssim_plane(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    win = SSIM_WINDOW
    np_win = win * win
    cov_norm = np_win / (np_win - 1)  # unbiased local (co)variance

    def f(x):
        return uniform_filter(x, size=win)

    ux, uy = f(a), f(b)
    vx = cov_norm * (f(a * a) - ux * ux)
    vy = cov_norm * (f(b * b) - uy * uy)
    vxy = cov_norm * (f(a * b) - ux * uy)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / \
        ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    pad = (win - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean local structural similarity over valid 7x7 uniform windows.

    Accepts [H,W] or [C,H,W]; channels are averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.ndim != 3:
        raise ShapeError(f"ssim: expected [H,W] or [C,H,W], got {a.shape}")
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ConfigError(f"image {a.shape[1:]} smaller than the "
                          f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    return float(np.mean([_ssim_plane(a[c], b[c], peak) for c in range(a.shape[0])]))


def diversity(outputs: list[np.ndarray]) -> float:
    """Mean pairwise RMSE across outputs for the same input; 0 iff identical."""
    if len(outputs) < 2:
        raise ConfigError(f"diversity needs at least 2 outputs, got {len(outputs)}")
    total = 0.0
    pairs = 0
    for i in range(len(outputs)):
        for j in range(i + 1, len(outputs)):
            d = outputs[i].astype(np.float64) - outputs[j].astype(np.float64)
            total += math.sqrt(float(np.mean(d * d)))
            pairs += 1
    return total / pairs


@dataclass(frozen=True)
class TimingResult:
    mean_ms: float
    std_ms: float
    calls_per_rep: int


def timed_sample(fn, warmup: int, reps: int, counter=None) -> TimingResult:
    """Wall-clock stats of fn() over reps runs after warmup throwaways.

    ``counter`` is a zero-argument callable reading the instrumented
    network-call count (e.g. ``lambda: model.call_count``); the result
    reports calls per repetition.
    """
    if reps < 3:
        raise ConfigError(f"need reps >= 3 for a std estimate, got {reps}")
    for _ in range(warmup):
        fn()
    before = int(counter()) if counter is not None else 0
    times = np.empty(reps, dtype=np.float64)
    for i in range(reps):
        t0 = time.perf_counter()
        fn()
        times[i] = (time.perf_counter() - t0) * 1e3
    after = int(counter()) if counter is not None else 0
    calls, rem = divmod(after - before, reps)
    if rem:
        raise ConfigError(f"call count {after - before} not divisible by reps {reps}")
    return TimingResult(mean_ms=float(times.mean()),
                        std_ms=float(times.std(ddof=1)),
                        calls_per_rep=calls)


@dataclass(frozen=True)
class MethodRow:
    """One evaluated method over a shared example set."""

    name: str
    steps: int
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    mse_mean: float
    calls_per_image: int
    ms_per_image: float
    diversity: float

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")


@dataclass(frozen=True)
class EvalSummary:
    rows: tuple[MethodRow, ...]
    n_examples: int
    extras: dict = field(default_factory=dict)

    def row(self, name: str) -> MethodRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(f"no evaluated method named {name!r}")
