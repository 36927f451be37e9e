"""Held-out evaluation comparing sampling routes on one example set.

Four methods share the same examples and the same per-example starting
noise: the degraded input itself (the floor every method must beat),
the teacher run for its full step budget under its own stochastic
sampling process, the teacher collapsed to a single call, and the
one-step student.  The deterministic route is the distillation-pair
generator, not an evaluated method here.  Quality statistics come from
the whole set; timing and call counts from repeated single-image runs;
diversity from resampling the starting noise on one fixed example.
"""

from __future__ import annotations

import numpy as np

from . import rng as rng_mod
from .denoiser import Denoiser
from .errors import ConfigError
from .metrics import EvalSummary, MethodRow, diversity, psnr, ssim, timed_sample
from .sampler import sample_stochastic, sample_student
from .schedule import Schedule

INPUT_ROW = "input-y"
STUDENT_ROW = "student-1"
TEACHER_ONE_ROW = "teacher-1"


def teacher_row_name(s: Schedule) -> str:
    return f"teacher-{s.T}"


def _quality(pred: np.ndarray, x0: np.ndarray) -> tuple[float, float, float, float, float]:
    ps = np.array([psnr(pred[i], x0[i]) for i in range(len(x0))])
    ss = np.array([ssim(pred[i], x0[i]) for i in range(len(x0))])
    mse = float(np.mean((pred - x0) ** 2))
    return (float(ps.mean()), float(ps.std()), float(ss.mean()),
            float(ss.std()), mse)


def _timing(fn, model: Denoiser | None, reps: int, warmup: int):
    counter = (lambda: model.call_count) if model is not None else None
    return timed_sample(fn, warmup=warmup, reps=reps, counter=counter)


def _diversity(sample_one, n_draws: int, shape, gen) -> float:
    outs = []
    for _ in range(n_draws):
        eps = rng_mod.normal_f32(gen, shape)
        outs.append(sample_one(eps))
    return diversity(outs)


def evaluate_methods(teacher: Denoiser, student: Denoiser, s: Schedule,
                     heldout, seed: int = 0, timing_reps: int = 5,
                     timing_warmup: int = 1,
                     diversity_draws: int = 4) -> EvalSummary:
    """Quality/timing/diversity rows over a shared held-out set."""
    if not heldout:
        raise ConfigError("held-out set is empty")
    x0 = np.stack([p.x0 for p in heldout])
    y = np.stack([p.y for p in heldout])
    gen = rng_mod.stream(seed, rng_mod.EVAL)
    eps = rng_mod.normal_f32(gen, x0.shape)
    # the multi-step row re-noises at every step; its draws come from a
    # dedicated substream so the shared eps stays aligned across rows
    chain_gen = rng_mod.stream(seed, rng_mod.EVAL, index=2)

    preds = {
        INPUT_ROW: y,
        teacher_row_name(s): sample_stochastic(teacher, s, y, chain_gen,
                                               eps=eps),
        TEACHER_ONE_ROW: sample_student(teacher, s, y, eps=eps),
        STUDENT_ROW: sample_student(student, s, y, eps=eps),
    }

    y1 = y[:1]
    eps1 = eps[:1]
    timing = {
        INPUT_ROW: None,
        teacher_row_name(s): _timing(
            lambda: sample_stochastic(teacher, s, y1, chain_gen, eps=eps1),
            teacher, timing_reps, timing_warmup),
        TEACHER_ONE_ROW: _timing(
            lambda: sample_student(teacher, s, y1, eps=eps1),
            teacher, timing_reps, timing_warmup),
        STUDENT_ROW: _timing(
            lambda: sample_student(student, s, y1, eps=eps1),
            student, timing_reps, timing_warmup),
    }

    dgen = rng_mod.stream(seed, rng_mod.EVAL, index=1)
    divers = {
        INPUT_ROW: 0.0,
        teacher_row_name(s): _diversity(
            lambda e: sample_stochastic(teacher, s, y1, dgen, eps=e)[0],
            diversity_draws, y1.shape, dgen),
        TEACHER_ONE_ROW: _diversity(
            lambda e: sample_student(teacher, s, y1, eps=e)[0],
            diversity_draws, y1.shape, dgen),
        STUDENT_ROW: _diversity(
            lambda e: sample_student(student, s, y1, eps=e)[0],
            diversity_draws, y1.shape, dgen),
    }

    steps = {INPUT_ROW: 1, teacher_row_name(s): s.T,
             TEACHER_ONE_ROW: 1, STUDENT_ROW: 1}
    rows = []
    for name, pred in preds.items():
        pm, pstd, sm, sstd, mse = _quality(pred, x0)
        tr = timing[name]
        rows.append(MethodRow(
            name=name, steps=steps[name],
            psnr_mean=pm, psnr_std=pstd, ssim_mean=sm, ssim_std=sstd,
            mse_mean=mse,
            calls_per_image=0 if tr is None else tr.calls_per_rep,
            ms_per_image=0.0 if tr is None else tr.mean_ms,
            diversity=divers[name]))

    t_row = next(r for r in rows if r.name == teacher_row_name(s))
    s_row = next(r for r in rows if r.name == STUDENT_ROW)
    extras = {
        "wall_ratio_teacher_vs_student":
            t_row.ms_per_image / s_row.ms_per_image,
        "call_ratio_teacher_vs_student":
            t_row.calls_per_image / s_row.calls_per_image,
        "seed": seed,
    }
    return EvalSummary(rows=tuple(rows), n_examples=len(heldout),
                       extras=extras)


def heldout_mse(student: Denoiser, s: Schedule, heldout,
                seed: int = 0) -> float:
    """Single-number held-out score for ablation comparisons."""
    x0 = np.stack([p.x0 for p in heldout])
    y = np.stack([p.y for p in heldout])
    eps = rng_mod.normal_f32(rng_mod.stream(seed, rng_mod.EVAL), x0.shape)
    pred = sample_student(student, s, y, eps=eps)
    return float(np.mean((pred - x0) ** 2))


def heldout_psnr_one_step(model: Denoiser, s: Schedule, heldout,
                          seed: int = 0) -> float:
    """Mean one-call PSNR of a model used as a single-step sampler."""
    x0 = np.stack([p.x0 for p in heldout])
    y = np.stack([p.y for p in heldout])
    eps = rng_mod.normal_f32(rng_mod.stream(seed, rng_mod.EVAL), x0.shape)
    pred = sample_student(model, s, y, eps=eps)
    return float(np.mean([psnr(pred[i], x0[i]) for i in range(len(x0))]))
