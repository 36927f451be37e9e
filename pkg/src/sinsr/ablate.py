"""Paired ablation experiments checking the expected result orderings.

Three experiments, each reduced to an ordering claim that must hold on
held-out data (majority across seeds where training noise matters):

  pairs      students distilled from deterministic teacher trajectories
             beat students distilled from stochastic ones
  size       at quarter width, the distilled one-step student beats the
             diffusion-trained model collapsed to one step
  inversion  the learned inversion round-trips better than inverting
             the reverse updates numerically
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import denoiser as dn
from . import rng as rng_mod
from .distill import (MODE_DISTILL_ONLY, MODE_FULL, MODE_STOCHASTIC_PAIRS,
                      run_distillation, train_teacher)
from .denoiser import Denoiser, DenoiserConfig, schedule_gains
from .errors import ConfigError
from .evaluate import heldout_mse, heldout_psnr_one_step
from .sampler import (invert_ddim_style, invert_student,
                      sample_deterministic, sample_student)
from .schedule import Schedule

EXPERIMENTS = ("pairs", "size", "inversion")


@dataclass(frozen=True)
class Ordering:
    """One pass/fail verdict with the evidence that produced it."""

    experiment: str
    passed: bool
    detail: str


def ablate_pair_quality(teacher_ckpt, train_pairs, heldout, iters: int,
                        seeds=(0, 1, 2), batch_size: int = 8,
                        lr: float = 2e-4, cache_pairs: bool = True
                        ) -> tuple[list[dict], Ordering]:
    """Deterministic vs stochastic distillation targets, same budget.

    Both arms train with the distillation term only, so target quality
    is the only difference between them.
    """
    rows = []
    for seed in seeds:
        det, s, _ = run_distillation(
            teacher_ckpt, train_pairs, iters=iters, mode=MODE_DISTILL_ONLY,
            seed=seed, batch_size=batch_size, lr=lr, cache_pairs=cache_pairs)
        sto, _, _ = run_distillation(
            teacher_ckpt, train_pairs, iters=iters,
            mode=MODE_STOCHASTIC_PAIRS, seed=seed, batch_size=batch_size,
            lr=lr, cache_pairs=cache_pairs)
        mse_det = heldout_mse(det, s, heldout, seed=seed)
        mse_sto = heldout_mse(sto, s, heldout, seed=seed)
        rows.append({"seed": seed, "mse_deterministic": mse_det,
                     "mse_stochastic": mse_sto,
                     "deterministic_better": mse_det < mse_sto})
    wins = sum(r["deterministic_better"] for r in rows)
    return rows, Ordering(
        experiment="pairs", passed=wins * 2 > len(rows),
        detail=f"deterministic targets win {wins}/{len(rows)} seeds")


def ablate_model_size(train_pairs, heldout, s: Schedule,
                      config: DenoiserConfig, workdir,
                      teacher_iters: int, distill_iters: int,
                      seeds=(0, 1, 2), batch_size: int = 8,
                      teacher_lr: float = 1e-3, student_lr: float = 2e-4,
                      cache_pairs: bool = True) -> tuple[list[dict], Ordering]:
    """Quarter-width model: diffusion objective vs distilled mapping.

    Each seed trains its own small multi-step model, then distills it
    into a one-step student; the claim is that the one-step student
    beats the small model's own single-call use.
    """
    small_cfg = config.quarter()
    rows = []
    for seed in seeds:
        model = Denoiser(small_cfg, t_max=s.T,
                         rng=rng_mod.stream(seed, rng_mod.MODEL_INIT,
                                            index=1),
                         skip_gains=schedule_gains(s))
        train_teacher(model, s, train_pairs, iters=teacher_iters,
                      rng=rng_mod.stream(seed, rng_mod.TEACHER_TRAIN,
                                         index=1),
                      batch_size=batch_size, lr=teacher_lr)
        ckpt = os.path.join(workdir, f"quarter_teacher_seed{seed}.ckpt")
        dn.save(model, s, ckpt)
        student, _, _ = run_distillation(
            ckpt, train_pairs, iters=distill_iters, mode=MODE_FULL,
            seed=seed, batch_size=batch_size, lr=student_lr,
            cache_pairs=cache_pairs)
        p_teacher = heldout_psnr_one_step(model, s, heldout, seed=seed)
        p_student = heldout_psnr_one_step(student, s, heldout, seed=seed)
        rows.append({"seed": seed, "teacher1_psnr": p_teacher,
                     "student1_psnr": p_student,
                     "student_better": p_student > p_teacher})
    wins = sum(r["student_better"] for r in rows)
    return rows, Ordering(
        experiment="size", passed=wins * 2 > len(rows),
        detail=f"one-step student wins {wins}/{len(rows)} seeds")


def ablate_inversion(teacher: Denoiser, student: Denoiser, s: Schedule,
                     heldout) -> tuple[list[dict], Ordering]:
    """Round-trip error of the two inversion routes on each example."""
    if not heldout:
        raise ConfigError("held-out set is empty")
    x0 = np.stack([p.x0 for p in heldout])
    y = np.stack([p.y for p in heldout])

    xT_learned = invert_student(student, s, x0, y)
    recon_learned = sample_student(student, s, y, x_start=xT_learned)
    xT_numeric = invert_ddim_style(teacher, s, x0, y)
    recon_numeric = sample_deterministic(teacher, s, y,
                                         x_start=xT_numeric).x0_hat

    rows = []
    for i in range(len(heldout)):
        m_l = float(np.mean((recon_learned[i] - x0[i]) ** 2))
        m_n = float(np.mean((recon_numeric[i] - x0[i]) ** 2))
        rows.append({"item": i, "mse_learned": m_l, "mse_numeric": m_n})
    mean_l = float(np.mean([r["mse_learned"] for r in rows]))
    mean_n = float(np.mean([r["mse_numeric"] for r in rows]))
    finite = all(np.isfinite(r["mse_learned"]) and np.isfinite(r["mse_numeric"])
                 for r in rows)
    return rows, Ordering(
        experiment="inversion", passed=bool(finite and mean_l <= mean_n),
        detail=f"mean round-trip mse learned {mean_l:.4e} vs "
               f"numeric {mean_n:.4e}")
