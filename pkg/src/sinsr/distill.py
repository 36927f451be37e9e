"""Training procedures: teacher pretraining and one-step distillation.

The teacher learns ordinary clean-image prediction at random timesteps.
The student starts as a copy of the teacher and is trained to collapse
the teacher's whole T-step deterministic sampling map into one forward
call, with three mean-squared losses at equal weight:

  distill  f(x_T, y, T) vs the teacher's multi-step output for this x_T
  inverse  f(teacher_output, y, 0) vs x_T   (the network learns to invert)
  gt       f(stopgrad(f(x0, y, 0)), y, T) vs x0  (reconstruct ground truth
           from the student's own inversion; no gradient through the
           inversion that produced the starting point)

Pairs are built on the fly by default, exactly as the sampling loop
defines them; ``cache_pairs`` trades disk/memory for the T-fold teacher
cost by freezing one pair per corpus batch and cycling through them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import denoiser as dn
from . import rng as rng_mod
from .denoiser import Denoiser
from .errors import ConfigError, NumericError, StateError
from .metrics import psnr, ssim
from .optim import Adam
from .sampler import sample_deterministic, sample_stochastic, sample_student
from .schedule import Schedule, initial_state, marginal_sample

TEACHER_LR = 1e-4
STUDENT_LR = 5e-5
BATCH_SIZE = 8

LOSS_DISTILL = "distill"
LOSS_INVERSE = "inverse"
LOSS_GT = "gt"
ALL_LOSSES = (LOSS_DISTILL, LOSS_INVERSE, LOSS_GT)

MODE_FULL = "full"
MODE_DISTILL_ONLY = "distill_only"
MODE_STOCHASTIC_PAIRS = "stochastic_pairs"
MODES = (MODE_FULL, MODE_DISTILL_ONLY, MODE_STOCHASTIC_PAIRS)


@dataclass(frozen=True)
class DistillBatch:
    """One training tuple: inputs, noise, noised state, teacher target."""

    x0: np.ndarray
    y: np.ndarray
    eps: np.ndarray
    xT: np.ndarray
    teacher_x0hat: np.ndarray


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    losses: dict[str, float]
    total: float
    wall_ms: float


@dataclass(frozen=True)
class EvalRecord:
    iteration: int
    psnr: float
    ssim: float


@dataclass
class TrainReport:
    records: list[TrainRecord] = field(default_factory=list)
    evals: list[EvalRecord] = field(default_factory=list)

    def final_total(self, window: int = 100) -> float:
        tail = self.records[-window:]
        return float(np.mean([r.total for r in tail]))


def _stack(corpus, idx) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.stack([corpus[i].x0 for i in idx])
    y = np.stack([corpus[i].y for i in idx])
    return x0, y


def train_teacher(model: Denoiser, s: Schedule, corpus, iters: int,
                  rng: np.random.Generator, batch_size: int = BATCH_SIZE,
                  lr: float = TEACHER_LR) -> TrainReport:
    """Clean-image prediction at uniformly random timesteps."""
    if not corpus:
        raise ConfigError("corpus is empty")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    opt = Adam(model.params, lr=lr)
    report = TrainReport()
    for it in range(1, iters + 1):
        t0 = time.perf_counter()
        idx = rng.integers(0, len(corpus), size=min(batch_size, len(corpus)))
        x0, y = _stack(corpus, idx)
        t = int(rng.integers(1, s.T + 1))
        eps = rng_mod.normal_f32(rng, x0.shape)
        xt = marginal_sample(s, x0, y, t, eps)
        loss = ad.mse(model.forward(xt, y, t), ad.Tensor(x0))
        ad.backward(loss)
        opt.step()
        val = loss.item()
        if not np.isfinite(val):
            raise NumericError(f"non-finite training loss at iteration {it}")
        report.records.append(TrainRecord(
            iteration=it, losses={"mse": val}, total=val,
            wall_ms=(time.perf_counter() - t0) * 1e3))
    return report


def build_distill_batch(teacher: Denoiser, s: Schedule, x0: np.ndarray,
                        y: np.ndarray, rng: np.random.Generator,
                        stochastic: bool = False) -> DistillBatch:
    """Draw eps, noise y up to x_T, and run the frozen teacher to a target.

    The deterministic sampler makes (x_T -> target) a function; the
    stochastic variant breaks that consistency on purpose (it exists to
    show how much the distillation target quality matters).
    """
    eps = rng_mod.normal_f32(rng, x0.shape)
    xT = initial_state(s, y, eps).astype(np.float32)
    if stochastic:
        x0hat = sample_stochastic(teacher, s, y, rng, eps=eps)
    else:
        x0hat = sample_deterministic(teacher, s, y, eps=eps).x0_hat
    return DistillBatch(x0=x0, y=y, eps=eps, xT=xT, teacher_x0hat=x0hat)


def sinsr_step(student: Denoiser, batch: DistillBatch, opt: Adam,
               enabled: tuple[str, ...] = ALL_LOSSES,
               weights: dict[str, float] | None = None) -> dict[str, float]:
    """One optimization step over the enabled loss terms.

    Loss terms not enabled are neither computed nor recorded, so a
    distill-only run does no inversion forward passes at all.
    """
    if opt.params is not student.params and \
            set(opt.params.keys()) != set(student.params.keys()):
        raise StateError("optimizer state does not cover the student parameters")
    for name in enabled:
        if name not in ALL_LOSSES:
            raise ConfigError(f"unknown loss term {name!r}")
    weights = weights or {}
    T = student.t_max

    xT = ad.Tensor(batch.xT)
    y = ad.Tensor(batch.y)
    x0 = ad.Tensor(batch.x0)
    target = ad.Tensor(batch.teacher_x0hat)

    terms: dict[str, ad.Tensor] = {}
    if LOSS_DISTILL in enabled:
        terms[LOSS_DISTILL] = ad.mse(student.forward(xT, y, T), target)
    if LOSS_INVERSE in enabled:
        terms[LOSS_INVERSE] = ad.mse(student.forward(target, y, 0), xT)
    if LOSS_GT in enabled:
        # the inversion that seeds this term is a constant input: values
        # pass through, gradients stop
        with ad.no_grad():
            inverted = student.forward(x0, y, 0)
        x_hat_T = inverted.detach()
        terms[LOSS_GT] = ad.mse(student.forward(x_hat_T, y, T), x0)

    total = None
    for name, term in terms.items():
        w = float(weights.get(name, 1.0))
        weighted = term if w == 1.0 else ad.mul(term, w)
        total = weighted if total is None else ad.add(total, weighted)
    if total is None:
        raise ConfigError("no loss terms enabled")
    ad.backward(total)
    opt.step()

    out = {name: term.item() for name, term in terms.items()}
    for name, val in out.items():
        if not np.isfinite(val):
            raise NumericError(f"non-finite {name} loss")
    return out


def _eval_student(student: Denoiser, s: Schedule, heldout,
                  eval_eps: np.ndarray) -> tuple[float, float]:
    x0 = np.stack([p.x0 for p in heldout])
    y = np.stack([p.y for p in heldout])
    pred = sample_student(student, s, y, eps=eval_eps)
    ps = [psnr(pred[i], x0[i]) for i in range(len(heldout))]
    ss = [ssim(pred[i], x0[i]) for i in range(len(heldout))]
    return float(np.mean(ps)), float(np.mean(ss))


def run_distillation(teacher_ckpt, corpus, iters: int, mode: str = MODE_FULL,
                     seed: int = 0, heldout=None, batch_size: int = BATCH_SIZE,
                     lr: float = STUDENT_LR, eval_every: int = 0,
                     cache_pairs: bool = False, student_init_ckpt=None,
                     weights: dict[str, float] | None = None
                     ) -> tuple[Denoiser, Schedule, TrainReport]:
    """Distill a frozen teacher checkpoint into a one-step student.

    The student is initialized from ``student_init_ckpt`` when given
    (e.g. a smaller pretrained model) and from the teacher otherwise.
    Returns the trained student, the schedule, and the full report.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not corpus:
        raise ConfigError("corpus is empty")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")

    teacher, s = dn.load(teacher_ckpt)
    student, s_student = dn.load(student_init_ckpt or teacher_ckpt)
    if s_student.T != s.T:
        raise ConfigError(f"student init schedule has T={s_student.T}, "
                          f"teacher has T={s.T}")

    enabled = ALL_LOSSES if mode == MODE_FULL else (LOSS_DISTILL,)
    stochastic = mode == MODE_STOCHASTIC_PAIRS
    opt = Adam(student.params, lr=lr)
    rng = rng_mod.stream(seed, rng_mod.DISTILL)
    eval_eps = None
    if heldout:
        eval_eps = rng_mod.normal_f32(rng_mod.stream(seed, rng_mod.EVAL),
                                      np.stack([p.x0 for p in heldout]).shape)

    cache: list[DistillBatch] = []
    if cache_pairs:
        for lo in range(0, len(corpus), batch_size):
            idx = range(lo, min(lo + batch_size, len(corpus)))
            x0, y = _stack(corpus, idx)
            cache.append(build_distill_batch(teacher, s, x0, y, rng,
                                             stochastic=stochastic))

    report = TrainReport()
    for it in range(1, iters + 1):
        t0 = time.perf_counter()
        try:
            if cache_pairs:
                batch = cache[(it - 1) % len(cache)]
            else:
                idx = rng.integers(0, len(corpus), size=min(batch_size, len(corpus)))
                x0, y = _stack(corpus, idx)
                batch = build_distill_batch(teacher, s, x0, y, rng,
                                            stochastic=stochastic)
            losses = sinsr_step(student, batch, opt, enabled=enabled,
                                weights=weights)
        except NumericError as e:
            raise NumericError(f"iteration {it}: {e}") from e
        total = sum(losses.values())
        report.records.append(TrainRecord(
            iteration=it, losses=losses, total=total,
            wall_ms=(time.perf_counter() - t0) * 1e3))
        if heldout and eval_every and (it % eval_every == 0 or it == iters):
            p, sm = _eval_student(student, s, heldout, eval_eps)
            report.evals.append(EvalRecord(iteration=it, psnr=p, ssim=sm))
    return student, s, report
