"""Inference procedures: multi-step teacher samplers, the one-step
student call, and inversion back to the noised initial state.

All functions here run outside the autodiff tape and operate on plain
float32 arrays shaped [N,C,H,W]; gradients never flow through multi-step
sampling. Non-finite values abort immediately with the offending
timestep, since a silent NaN would poison every later step and any
distillation batch built from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import no_grad
from .denoiser import Denoiser
from .errors import NumericError, ShapeError
from .rng import normal_f32
from .schedule import Schedule, det_step, initial_state, reverse_coeffs, stoch_step


@dataclass
class SampleTrace:
    """Result of a deterministic reverse pass.

    ``states`` is the full [(T, x_T) .. (0, x0_hat)] path when requested
    and None otherwise (keeping every step for a large batch is memory
    nobody usually needs).
    """

    x0_hat: np.ndarray
    eps: np.ndarray | None
    seed: int | None
    states: list[tuple[int, np.ndarray]] | None


def _check_finite(x: np.ndarray, t: int, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite {what} at timestep {t}")


def _start_state(s: Schedule, y: np.ndarray, eps: np.ndarray | None,
                 x_start: np.ndarray | None) -> np.ndarray:
    if (eps is None) == (x_start is None):
        raise ShapeError("provide exactly one of eps or x_start")
    if x_start is not None:
        if x_start.shape != y.shape:
            raise ShapeError(f"x_start {x_start.shape} does not match y {y.shape}")
        return x_start.astype(np.float32, copy=True)
    return initial_state(s, y, eps).astype(np.float32)


def sample_deterministic(teacher: Denoiser, s: Schedule, y: np.ndarray,
                         eps: np.ndarray | None = None,
                         x_start: np.ndarray | None = None,
                         keep_states: bool = False,
                         seed: int | None = None) -> SampleTrace:
    """Deterministic reverse pass from x_T to the final prediction.

    Exactly T network evaluations: each step t=T..2 re-predicts the clean
    image and takes the affine reverse update; the last step returns the
    t=1 prediction itself (its reverse coefficients collapse to k=1).
    """
    state = _start_state(s, y, eps, x_start)
    _check_finite(state, s.T, "initial state")
    states = [(s.T, state.copy())] if keep_states else None
    with no_grad():
        for t in range(s.T, 1, -1):
            pred = teacher.forward(state, y, t).data
            _check_finite(pred, t, "prediction")
            state = det_step(s, t, state, pred, y)
            _check_finite(state, t - 1, "state")
            if states is not None:
                states.append((t - 1, state.copy()))
        x0_hat = teacher.forward(state, y, 1).data
    _check_finite(x0_hat, 0, "final prediction")
    if states is not None:
        states.append((0, x0_hat.copy()))
    return SampleTrace(x0_hat=x0_hat, eps=eps, seed=seed, states=states)


def sample_stochastic(teacher: Denoiser, s: Schedule, y: np.ndarray,
                      rng: np.random.Generator,
                      eps: np.ndarray | None = None) -> np.ndarray:
    """Ancestral reverse pass drawing fresh posterior noise each step.

    ``eps`` fixes the initial-state noise when the caller needs the
    starting x_T to be known; the per-step posterior noise still comes
    from ``rng``.
    """
    if eps is None:
        eps = normal_f32(rng, y.shape)
    state = initial_state(s, y, eps).astype(np.float32)
    _check_finite(state, s.T, "initial state")
    zeros = np.zeros_like(state)
    with no_grad():
        for t in range(s.T, 0, -1):
            pred = teacher.forward(state, y, t).data
            _check_finite(pred, t, "prediction")
            z = normal_f32(rng, state.shape) if t > 1 else zeros
            state = stoch_step(s, t, state, pred, y, z)
            _check_finite(state, t - 1, "state")
    return state


def sample_student(student: Denoiser, s: Schedule, y: np.ndarray,
                   eps: np.ndarray | None = None,
                   x_start: np.ndarray | None = None) -> np.ndarray:
    """One-step prediction: a single forward call on the noised state."""
    state = _start_state(s, y, eps, x_start)
    _check_finite(state, s.T, "initial state")
    with no_grad():
        out = student.forward(state, y, s.T).data
    _check_finite(out, 0, "prediction")
    return out


def invert_student(student: Denoiser, s: Schedule, x0: np.ndarray,
                   y: np.ndarray) -> np.ndarray:
    """Learned inversion: one forward call at t=0 mapping x0 to x_T."""
    with no_grad():
        out = student.forward(x0, y, 0).data
    _check_finite(out, s.T, "inverted state")
    return out


def invert_ddim_style(teacher: Denoiser, s: Schedule, x0: np.ndarray,
                      y: np.ndarray) -> np.ndarray:
    """Approximate inversion by running the deterministic update backward.

    The forward-direction t=1 update is a bare network call with no exact
    inverse (its state coefficient is zero), so the recursion starts from
    x0 standing in for x_1 and inverts steps 2..T, estimating each step's
    clean-image prediction from the already-reconstructed earlier state.
    """
    if x0.shape != y.shape:
        raise ShapeError(f"x0 {x0.shape} does not match y {y.shape}")
    state = x0.astype(np.float32, copy=True)
    with no_grad():
        for t in range(2, s.T + 1):
            if t == 2:
                pred = x0
            else:
                pred = teacher.forward(state, y, t - 1).data
                _check_finite(pred, t - 1, "prediction")
            c = reverse_coeffs(s, t)
            state = (state - c.k * pred - c.j * y) / c.m
            _check_finite(state, t, "inverted state")
    return state
