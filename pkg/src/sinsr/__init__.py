"""One-step residual-shifting diffusion super-resolution, CPU-only.

The forward corruption walks an image toward its degraded counterpart
along a monotone shift schedule while injecting scaled noise; the
reverse chain undoes it either stochastically or deterministically, and
a distilled student collapses the deterministic chain into a single
call that preserves sample quality and supports learned inversion.

Layout:
    schedule   shift schedule and forward/reverse process algebra
    autodiff   minimal reverse-mode tape over float32 numpy arrays
    denoiser   small convolutional denoiser with timestep conditioning
    data       synthetic paired corpus generation and image I/O
    sampler    multi-step samplers, one-step student, inversion
    distill    teacher pretraining and one-step distillation losses
    verify     numeric certification of the reverse-process algebra
    evaluate   held-out comparison of methods (quality, speed, variety)
    ablate     paired ordering experiments
    report     delimited output and matplotlib figures
    cli        subcommand front end over all of the above
"""

from . import rng
from .autodiff import Tensor, no_grad
from .data import (CorpusConfig, SrPair, load_corpus, make_corpus,
                   save_corpus)
from .denoiser import Denoiser, DenoiserConfig, load, save, schedule_gains
from .distill import (MODE_DISTILL_ONLY, MODE_FULL, MODE_STOCHASTIC_PAIRS,
                      run_distillation, sinsr_step, train_teacher)
from .errors import (ConfigError, FormatError, IoError, NumericError,
                     RangeError, SinsrError, StateError)
from .evaluate import evaluate_methods
from .metrics import psnr, ssim
from .sampler import (invert_ddim_style, invert_student,
                      sample_deterministic, sample_stochastic,
                      sample_student)
from .schedule import (Schedule, initial_state, make_schedule,
                       marginal_sample, reverse_coeffs)
from .verify import run_suite

__version__ = "0.1.0"

__all__ = [
    "CorpusConfig", "ConfigError", "Denoiser", "DenoiserConfig",
    "FormatError", "IoError", "MODE_DISTILL_ONLY", "MODE_FULL",
    "MODE_STOCHASTIC_PAIRS", "NumericError", "RangeError",
    "Schedule", "SinsrError", "SrPair", "StateError", "Tensor",
    "evaluate_methods",
    "initial_state", "invert_ddim_style", "invert_student", "load",
    "load_corpus", "make_corpus", "make_schedule",
    "marginal_sample", "no_grad", "psnr", "reverse_coeffs", "rng",
    "run_distillation", "run_suite", "sample_deterministic",
    "sample_stochastic", "sample_student", "save", "save_corpus",
    "schedule_gains",
    "sinsr_step", "ssim", "train_teacher", "__version__",
]
