"""Residual-shifting schedule and its closed-form diffusion algebra.

The forward marginal moves a clean image x0 toward its degraded
counterpart y while injecting noise:

    x_t = (1 - eta_t) * x0 + eta_t * y + kappa * sqrt(eta_t) * eps

with eta_0 = 0 and eta_T close to 1. Everything else here is derived
from that one line: the deterministic reverse step's coefficients, the
stochastic reverse step's posterior mean and variance, and the fully
noised initial state. All eta arithmetic happens in float64; the
resulting scalar coefficients are applied to float32 image tensors.

Ops are duck-typed over plain float32 ndarrays and autodiff tensors:
they only use scalar-times-operand and operand-plus-operand, which both
kinds support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RangeError, ShapeError

DEFAULT_ETA_1 = 0.001
DEFAULT_ETA_T = 0.999
DEFAULT_POWER = 3.0
DEFAULT_KAPPA = 2.0
DEFAULT_STEPS = 15


@dataclass(frozen=True)
class Schedule:
    """Mixing weights eta_0..eta_T, per-step increments, and noise scale."""

    T: int
    eta: np.ndarray
    kappa: float
    alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        eta = np.array(self.eta, dtype=np.float64, copy=True)
        if self.T < 1:
            raise ConfigError(f"step count must be >= 1, got {self.T}")
        if eta.shape != (self.T + 1,):
            raise ConfigError(f"eta must have length T+1={self.T + 1}, got {eta.shape}")
        if eta[0] != 0.0:
            raise ConfigError(f"eta[0] must be exactly 0, got {eta[0]}")
        if not (0.99 < eta[self.T] <= 1.0):
            raise ConfigError(f"eta[T] must lie in (0.99, 1], got {eta[self.T]}")
        if not np.all(np.diff(eta) > 0.0):
            raise ConfigError("eta must be strictly increasing")
        if not self.kappa > 0.0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        alpha = np.diff(eta, prepend=0.0)
        alpha[0] = 0.0
        eta.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "alpha", alpha)

    def _check_t(self, t: int, low: int) -> None:
        if not isinstance(t, (int, np.integer)) or isinstance(t, bool):
            raise RangeError(f"timestep must be an integer, got {t!r}")
        if not (low <= t <= self.T):
            raise RangeError(f"timestep {t} outside [{low}, {self.T}]")


@dataclass(frozen=True)
class ReverseCoeffs:
    """Weights of the deterministic reverse step x0_pred/x_t/y combination."""

    k: float
    m: float
    j: float


def make_schedule(T: int = DEFAULT_STEPS, eta_1: float = DEFAULT_ETA_1,
                  eta_T: float = DEFAULT_ETA_T, p: float = DEFAULT_POWER,
                  kappa: float = DEFAULT_KAPPA) -> Schedule:
    """Power-law interpolation from eta_1 to eta_T over T steps.

    eta_t = eta_1 + (eta_T - eta_1) * ((t-1)/(T-1))^p for t in 1..T.
    The single-step schedule degenerates to [0, eta_T]: the one state
    the student ever sees must be the fully noised one.
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigError(f"step count must be a positive integer, got {T!r}")
    if not (0.0 < eta_1 < eta_T <= 1.0):
        raise ConfigError(f"need 0 < eta_1 < eta_T <= 1, got eta_1={eta_1}, eta_T={eta_T}")
    if not p > 0.0:
        raise ConfigError(f"power must be positive, got {p}")
    if not kappa > 0.0:
        raise ConfigError(f"kappa must be positive, got {kappa}")

    eta = np.zeros(int(T) + 1, dtype=np.float64)
    if T == 1:
        eta[1] = eta_T
    else:
        frac = (np.arange(1, T + 1, dtype=np.float64) - 1.0) / (T - 1.0)
        eta[1:] = eta_1 + (eta_T - eta_1) * frac ** float(p)
    return Schedule(T=int(T), eta=eta, kappa=float(kappa))


def _check_shapes(*arrs) -> None:
    shapes = {a.shape for a in arrs}
    if len(shapes) > 1:
        raise ShapeError(f"operands must share one shape, got {sorted(shapes)}")


def marginal_sample(s: Schedule, x0, y, t: int, eps):
    """Draw x_t given x0, y and a unit-normal eps (reparameterized)."""
    s._check_t(t, 0)
    _check_shapes(x0, y, eps)
    eta = float(s.eta[t])
    # (1-eta)*x0 + eta*y is exact at both endpoints, unlike x0 + eta*(y-x0)
    return (1.0 - eta) * x0 + eta * y + (s.kappa * math.sqrt(eta)) * eps


def initial_state(s: Schedule, y, eps):
    """Fully noised start of the reverse pass: y plus scaled unit noise.

    With eta_T slightly below 1 this is the standard approximation of
    the t=T marginal; the dropped term is (1-eta_T)*(x0-y).
    """
    _check_shapes(y, eps)
    return y + (s.kappa * math.sqrt(float(s.eta[s.T]))) * eps


def coeffs_from_etas(eta_prev: float, eta_t: float) -> ReverseCoeffs:
    """Reverse-step weights for an arbitrary valid (eta_{t-1}, eta_t) pair.

    Derived so the step transports the forward marginal at t onto the
    forward marginal at t-1 while carrying the same noise sample:
    m scales the noise exactly (m*sqrt(eta_t) = sqrt(eta_prev)) and the
    remaining mass splits between x0_pred and y to match the means.
    """
    eta_prev = float(eta_prev)
    eta_t = float(eta_t)
    if not (0.0 <= eta_prev <= eta_t <= 1.0) or eta_t == 0.0:
        raise RangeError(f"need 0 <= eta_prev <= eta_t <= 1 with eta_t > 0, "
                         f"got ({eta_prev}, {eta_t})")
    root = math.sqrt(eta_prev * eta_t)
    m = math.sqrt(eta_prev / eta_t)
    j = eta_prev - root
    k = 1.0 - eta_prev + root - m
    return ReverseCoeffs(k=k, m=m, j=j)


def reverse_coeffs(s: Schedule, t: int) -> ReverseCoeffs:
    """Weights of the deterministic reverse step t -> t-1."""
    s._check_t(t, 1)
    return coeffs_from_etas(s.eta[t - 1], s.eta[t])


def det_step(s: Schedule, t: int, xt, x0_pred, y):
    """Deterministic reverse update x_{t-1} = k*x0_pred + m*x_t + j*y."""
    s._check_t(t, 1)
    _check_shapes(xt, x0_pred, y)
    c = reverse_coeffs(s, t)
    return c.k * x0_pred + c.m * xt + c.j * y


def stoch_step(s: Schedule, t: int, xt, x0_pred, y, z):
    """Stochastic reverse draw from the posterior q(x_{t-1} | x_t, x0, y).

    Mean (eta_{t-1}/eta_t)*x_t + (alpha_t/eta_t)*x0_pred, variance
    kappa^2 * (eta_{t-1}/eta_t) * alpha_t. The final step t=1 has zero
    variance and collapses to the prediction itself.
    """
    s._check_t(t, 1)
    _check_shapes(xt, x0_pred, y, z)
    if t == 1:
        if isinstance(x0_pred, np.ndarray):
            return x0_pred.copy()
        return x0_pred
    eta_prev = float(s.eta[t - 1])
    eta_t = float(s.eta[t])
    alpha = float(s.alpha[t])
    ratio = eta_prev / eta_t
    std = s.kappa * math.sqrt(ratio * alpha)
    return ratio * xt + (alpha / eta_t) * x0_pred + std * z
