"""Numerical certification suite for the reverse-process algebra.

Four checks, each an independent route to the same contracts the
samplers rely on:

  coefficient-identities   algebraic relations between the reverse
                           coefficients, float64, random weight pairs
  deterministic-transport  one reverse step maps the forward marginal
                           at t onto the forward marginal at t-1 with
                           the same noise draw, exactly (float32 tol)
  marginal-preservation    Monte-Carlo: the stochastic reverse step
                           leaves the forward marginal's mean and
                           variance unchanged, within 3 standard errors
  perfect-predictor        the full deterministic sampler, driven by a
                           stub that always predicts the true clean
                           image, reconstructs it from pure noise

A fault hook deliberately corrupts the coefficients so callers can
demonstrate the suite actually fails when the algebra is wrong.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rng as rng_mod
from .errors import ConfigError
from .sampler import sample_deterministic
from .schedule import (Schedule, ReverseCoeffs, coeffs_from_etas,
                       marginal_sample, stoch_step)

FAULT_COEFF_BIAS = "coeff-bias"
FAULTS = (FAULT_COEFF_BIAS,)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str


class _PerfectPredictor:
    """Stand-in network that always returns the true clean image."""

    def __init__(self, x0: np.ndarray):
        self.x0 = np.asarray(x0, dtype=np.float32)
        self.call_count = 0

    def forward(self, x, y, t):
        self.call_count += 1
        return ad.Tensor(self.x0.copy())


def _biased_coeffs(eta_prev: float, eta_t: float) -> ReverseCoeffs:
    c = coeffs_from_etas(eta_prev, eta_t)
    return ReverseCoeffs(k=c.k, m=c.m, j=c.j + 1e-3)


def _coeffs_fn(fault: str | None):
    if fault is None or fault == "":
        return coeffs_from_etas
    if fault == FAULT_COEFF_BIAS:
        return _biased_coeffs
    raise ConfigError(f"unknown fault {fault!r}; expected one of {FAULTS}")


def check_coefficient_identities(s: Schedule, n_pairs: int = 10000,
                                 seed: int = 0, tol: float = 1e-12,
                                 coeffs_fn=None) -> CheckResult:
    """Closure relations of the reverse coefficients in float64."""
    coeffs_fn = coeffs_fn or coeffs_from_etas
    gen = rng_mod.stream(seed, rng_mod.VERIFY, index=1)
    a = gen.uniform(0.0, 1.0, n_pairs)
    b = gen.uniform(1e-9, 1.0, n_pairs)
    lo = np.minimum(a, b) * 0.99
    hi = np.maximum(a, b)
    lo[:16] = 0.0  # boundary mass: t=1 has eta_prev exactly zero
    worst = 0.0
    for eta_prev, eta_t in zip(lo, hi):
        c = coeffs_fn(float(eta_prev), float(eta_t))
        worst = max(
            worst,
            abs(c.k + c.m + c.j - 1.0),
            abs(c.k + c.m * (1.0 - eta_t) - (1.0 - eta_prev)),
            abs(c.m * np.sqrt(eta_t) - np.sqrt(eta_prev)),
        )
    for t in range(1, s.T + 1):
        c = coeffs_fn(float(s.eta[t - 1]), float(s.eta[t]))
        worst = max(
            worst,
            abs(c.k + c.m + c.j - 1.0),
            abs(c.k + c.m * (1.0 - s.eta[t]) - (1.0 - s.eta[t - 1])),
            abs(c.m * np.sqrt(s.eta[t]) - np.sqrt(s.eta[t - 1])),
        )
    return CheckResult(
        name="coefficient-identities", passed=bool(worst <= tol),
        worst=float(worst), tol=tol,
        detail=f"{n_pairs} random pairs + schedule steps, max residual "
               f"{worst:.3e}")


def check_deterministic_transport(s: Schedule, n_cases: int = 100,
                                  seed: int = 0,
                                  tol: float = 1e-5) -> CheckResult:
    """Full reverse chain with exact predictions recovers the clean image.

    The start state is the forward marginal at T; agreement at the end
    certifies that every intermediate step carried both the mean and the
    noise term onto the next marginal.
    """
    gen = rng_mod.stream(seed, rng_mod.VERIFY, index=2)
    worst = 0.0
    for _ in range(n_cases):
        shape = (1, 1, 6, 6)
        x0 = gen.uniform(-2.0, 2.0, shape).astype(np.float32)
        y = gen.uniform(-2.0, 2.0, shape).astype(np.float32)
        eps = rng_mod.normal_f32(gen, shape)
        stub = _PerfectPredictor(x0)
        trace = sample_deterministic(stub, s, y, eps=eps)
        worst = max(worst, float(np.max(np.abs(trace.x0_hat - x0))))
        if stub.call_count != s.T:
            return CheckResult(
                name="deterministic-transport", passed=False,
                worst=float("inf"), tol=tol,
                detail=f"expected {s.T} network calls, saw {stub.call_count}")
    return CheckResult(
        name="deterministic-transport", passed=bool(worst <= tol),
        worst=float(worst), tol=tol,
        detail=f"{n_cases} random triples, max |x0_hat - x0| = {worst:.3e}")


def check_marginal_preservation(s: Schedule, n_draws: int = 100000,
                                seed: int = 0) -> CheckResult:
    """One stochastic reverse step keeps the forward marginal, per t.

    Scalar Monte-Carlo: draw x_t from the marginal at t, apply the
    stochastic step with an exact clean-image prediction, and compare
    the empirical mean and variance at t-1 against the closed form
    within 3 standard errors.
    """
    if s.T < 2:
        return CheckResult(
            name="marginal-preservation", passed=True, worst=0.0, tol=3.0,
            detail="no interior steps at T=1 (vacuous)")
    gen = rng_mod.stream(seed, rng_mod.VERIFY, index=3)
    worst_z = 0.0
    detail = ""
    for t in range(2, s.T + 1):
        x0 = float(gen.uniform(-1.0, 1.0))
        yv = float(gen.uniform(-1.0, 1.0))
        eps = gen.standard_normal(n_draws)
        xt = ((1.0 - s.eta[t]) * x0 + s.eta[t] * yv
              + s.kappa * np.sqrt(s.eta[t]) * eps)
        z = gen.standard_normal(n_draws)
        prev = stoch_step(s, t, xt, np.full(n_draws, x0), np.full(n_draws, yv), z)

        eta_p = s.eta[t - 1]
        want_mean = (1.0 - eta_p) * x0 + eta_p * yv
        want_var = s.kappa ** 2 * eta_p
        emp_mean = float(prev.mean())
        emp_var = float(prev.var(ddof=1))
        se_mean = np.sqrt(want_var / n_draws)
        se_var = want_var * np.sqrt(2.0 / (n_draws - 1))
        z_mean = abs(emp_mean - want_mean) / se_mean
        z_var = abs(emp_var - want_var) / se_var
        if max(z_mean, z_var) > worst_z:
            worst_z = max(z_mean, z_var)
            detail = (f"worst at t={t}: mean z={z_mean:.2f}, "
                      f"var z={z_var:.2f} ({n_draws} draws)")
    return CheckResult(
        name="marginal-preservation", passed=bool(worst_z <= 3.0),
        worst=float(worst_z), tol=3.0, detail=detail)


def check_perfect_predictor(s: Schedule, seed: int = 0,
                            tol: float = 1e-5) -> CheckResult:
    """End-to-end: the sampler's state sequence rides the exact marginals.

    Started exactly on the forward marginal at T, every intermediate
    state must agree with the same-noise marginal at its own timestep
    (the start-state form y + noise would differ by the designed
    (1 - eta_T) gap instead).  The final prediction must recover the
    clean image and the network must be called exactly T times.
    """
    gen = rng_mod.stream(seed, rng_mod.VERIFY, index=4)
    shape = (2, 1, 8, 8)
    x0 = gen.uniform(0.0, 1.0, shape).astype(np.float32)
    y = gen.uniform(0.0, 1.0, shape).astype(np.float32)
    eps = rng_mod.normal_f32(gen, shape)
    start = np.asarray(marginal_sample(s, x0, y, s.T, eps),
                       dtype=np.float32)
    stub = _PerfectPredictor(x0)
    trace = sample_deterministic(stub, s, y, x_start=start,
                                 keep_states=True)
    worst = float(np.max(np.abs(trace.x0_hat - x0)))
    for t, state in trace.states:
        if t == 0:
            continue
        ref = marginal_sample(s, x0, y, t, eps)
        worst = max(worst, float(np.max(np.abs(state - ref))))
    ok = worst <= tol and stub.call_count == s.T
    return CheckResult(
        name="perfect-predictor", passed=bool(ok), worst=worst, tol=tol,
        detail=f"max marginal/terminal error {worst:.3e}, "
               f"{stub.call_count} calls")


def run_suite(s: Schedule, seed: int = 0, n_pairs: int = 10000,
              n_cases: int = 100, n_draws: int = 100000,
              fault: str | None = None) -> list[CheckResult]:
    """All four checks in order; the fault hook only biases coefficients."""
    coeffs_fn = _coeffs_fn(fault)
    return [
        check_coefficient_identities(s, n_pairs=n_pairs, seed=seed,
                                     coeffs_fn=coeffs_fn),
        check_deterministic_transport(s, n_cases=n_cases, seed=seed),
        check_marginal_preservation(s, n_draws=n_draws, seed=seed),
        check_perfect_predictor(s, seed=seed),
    ]


def first_failure(results: list[CheckResult]) -> CheckResult | None:
    for r in results:
        if not r.passed:
            return r
    return None
