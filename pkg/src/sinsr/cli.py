"""Subcommand dispatch: every run reads a flat config, writes its
artifacts plus the resolved config into one output directory, and
returns a process exit code (0 ok, 1 property failure, 2 bad config,
3 I/O trouble).

Usage:  sinsr <command> [--config PATH] [--strict] [--key value]...

Flag overrides use the config key names with hyphens allowed
(``--heldout-count 16``); ``--strict`` additionally pins BLAS thread
counts before numerics load when the entry point handles it.
"""

from __future__ import annotations

import os
import sys
from dataclasses import replace

import numpy as np

from . import denoiser as dn
from . import rng as rng_mod
from .ablate import (EXPERIMENTS, ablate_inversion, ablate_model_size,
                     ablate_pair_quality)
from .config import Field, REQUIRED, resolve, write_resolved
from .data import (CorpusConfig, export_image, load_corpus, make_corpus,
                   save_corpus)
from .denoiser import Denoiser, DenoiserConfig, schedule_gains
from .distill import MODE_FULL, TrainReport, run_distillation, train_teacher
from .errors import (ConfigError, FormatError, IoError, RangeError,
                     SinsrError)
from .evaluate import evaluate_methods
from .metrics import EvalSummary, psnr, ssim
from .sampler import (invert_student, sample_deterministic,
                      sample_stochastic, sample_student)
from .schedule import make_schedule
from .verify import first_failure, run_suite
from . import report as rpt

_SCHEDULE_KEYS = {
    "T": Field(int, 15),
    "eta_1": Field(float, 0.001),
    "eta_T": Field(float, 0.999),
    "p": Field(float, 3.0),
    "kappa": Field(float, 2.0),
}

_MODEL_KEYS = {
    "base_channels": Field(int, 32),
    "depth": Field(int, 2),
    "time_embed_dim": Field(int, 16),
}

SCHEMAS: dict[str, dict[str, Field]] = {
    "gen-data": {
        "out_dir": Field(str, "runs/gen-data"),
        "strict": Field(bool, False),
        "count": Field(int, 512),
        "hr_size": Field(int, 32),
        "scale": Field(int, 4),
        "channels": Field(int, 1),
        "blur_sigma": Field(float, 2.0),
        "noise_sigma": Field(float, 0.01),
        "seed": Field(int, 0),
        "preview": Field(int, 4),
    },
    "train-teacher": {
        "out_dir": Field(str, "runs/teacher"),
        "strict": Field(bool, False),
        "corpus": Field(str),
        "iters": Field(int, 8000),
        "batch_size": Field(int, 8),
        "lr": Field(float, 1e-4),
        "heldout_count": Field(int, 32),
        "seed": Field(int, 0),
        **_SCHEDULE_KEYS,
        **_MODEL_KEYS,
    },
    "distill": {
        "out_dir": Field(str, "runs/student"),
        "strict": Field(bool, False),
        "teacher": Field(str),
        "corpus": Field(str),
        "iters": Field(int, 3000),
        "mode": Field(str, MODE_FULL),
        "batch_size": Field(int, 8),
        "lr": Field(float, 5e-5),
        "eval_every": Field(int, 250),
        "cache_pairs": Field(bool, False),
        "student_init": Field(str, ""),
        "heldout_count": Field(int, 32),
        "seed": Field(int, 0),
    },
    "sample": {
        "out_dir": Field(str, "runs/sample"),
        "strict": Field(bool, False),
        "model": Field(str),
        "corpus": Field(str),
        "route": Field(str, "deterministic"),
        "index": Field(int, 0),
        "count": Field(int, 4),
        "draws": Field(int, 1),
        "seed": Field(int, 0),
    },
    "invert": {
        "out_dir": Field(str, "runs/invert"),
        "strict": Field(bool, False),
        "student": Field(str),
        "corpus": Field(str),
        "index": Field(int, 0),
        "count": Field(int, 4),
        "seed": Field(int, 0),
    },
    "eval": {
        "out_dir": Field(str, "runs/eval"),
        "strict": Field(bool, False),
        "teacher": Field(str),
        "student": Field(str),
        "corpus": Field(str),
        "heldout_count": Field(int, 32),
        "seed": Field(int, 0),
        "timing_reps": Field(int, 5),
        "timing_warmup": Field(int, 1),
        "diversity_draws": Field(int, 4),
    },
    "verify": {
        "out_dir": Field(str, "runs/verify"),
        "strict": Field(bool, False),
        "pairs": Field(int, 10000),
        "transport_cases": Field(int, 100),
        "mc_draws": Field(int, 100000),
        "fault": Field(str, ""),
        "seed": Field(int, 0),
        **_SCHEDULE_KEYS,
    },
    "ablate": {
        "out_dir": Field(str, "runs/ablate"),
        "strict": Field(bool, False),
        "corpus": Field(str),
        "teacher": Field(str, ""),
        "student": Field(str, ""),
        "which": Field(str, "all"),
        "iters": Field(int, 600),
        "teacher_iters": Field(int, 4000),
        "n_seeds": Field(int, 3),
        "heldout_count": Field(int, 32),
        "batch_size": Field(int, 8),
        "lr": Field(float, 2e-4),
        "teacher_lr": Field(float, 1e-3),
        "cache_pairs": Field(bool, True),
        "seed": Field(int, 0),
        **_MODEL_KEYS,
    },
}


def _out(cfg: dict, *names: str) -> str:
    return os.path.join(cfg["out_dir"], *names)


def _write_config(cfg: dict) -> None:
    write_resolved(cfg, _out(cfg, "config.resolved"))


# Strict mode promises byte-identical artifacts across reruns; wall-clock
# measurements are the one field that cannot keep that promise, so they are
# zeroed before anything is written.
def _scrub_train_timing(report: TrainReport) -> TrainReport:
    return TrainReport(records=[replace(r, wall_ms=0.0)
                                for r in report.records],
                       evals=list(report.evals))


def _scrub_eval_timing(summary: EvalSummary) -> EvalSummary:
    return EvalSummary(rows=[replace(r, ms_per_image=0.0)
                             for r in summary.rows],
                       n_examples=summary.n_examples,
                       extras={**summary.extras,
                               "wall_ratio_teacher_vs_student": 0.0})


def _split_heldout(pairs, heldout_count: int):
    if heldout_count < 0:
        raise ConfigError(f"heldout_count must be >= 0, got {heldout_count}")
    if heldout_count >= len(pairs):
        raise ConfigError(
            f"heldout_count {heldout_count} leaves no training data "
            f"(corpus has {len(pairs)})")
    if heldout_count == 0:
        return pairs, []
    return pairs[:-heldout_count], pairs[-heldout_count:]


def _load_pair_slice(path, index: int, count: int):
    pairs, _ = load_corpus(path)
    if index < 0 or count < 1 or index + count > len(pairs):
        raise ConfigError(
            f"index {index} + count {count} out of range for corpus of "
            f"{len(pairs)}")
    return pairs[index:index + count]


def _schedule(cfg: dict):
    return make_schedule(T=cfg["T"], eta_1=cfg["eta_1"], eta_T=cfg["eta_T"],
                         p=cfg["p"], kappa=cfg["kappa"])


def cmd_gen_data(cfg: dict) -> int:
    ccfg = CorpusConfig(count=cfg["count"], hr_size=cfg["hr_size"],
                        scale=cfg["scale"], channels=cfg["channels"],
                        blur_sigma=cfg["blur_sigma"],
                        noise_sigma=cfg["noise_sigma"], seed=cfg["seed"])
    pairs = make_corpus(ccfg)
    corpus_path = _out(cfg, "corpus.bin")
    save_corpus(pairs, ccfg, corpus_path)

    panels = []
    for i in range(min(cfg["preview"], len(pairs))):
        export_image(pairs[i].x0, _out(cfg, f"preview{i}_truth.pgm"
                                       if ccfg.channels == 1 else
                                       f"preview{i}_truth.ppm"))
        export_image(pairs[i].y, _out(cfg, f"preview{i}_input.pgm"
                                      if ccfg.channels == 1 else
                                      f"preview{i}_input.ppm"))
        panels += [(f"truth {i}", pairs[i].x0), (f"input {i}", pairs[i].y)]
    if panels:
        rpt.fig_image_grid(panels, _out(cfg, "preview.png"), per_row=4)
    _write_config(cfg)

    mean_psnr = float(np.mean([psnr(p.y, p.x0) for p in pairs]))
    print(f"wrote {len(pairs)} pairs to {corpus_path} "
          f"(input PSNR {mean_psnr:.2f} dB)")
    return 0


def cmd_train_teacher(cfg: dict) -> int:
    pairs, ccfg = load_corpus(cfg["corpus"])
    train, _ = _split_heldout(pairs, cfg["heldout_count"])
    s = _schedule(cfg)
    model = Denoiser(
        DenoiserConfig(image_channels=ccfg.channels,
                       base_channels=cfg["base_channels"],
                       depth=cfg["depth"],
                       time_embed_dim=cfg["time_embed_dim"]),
        t_max=s.T, rng=rng_mod.stream(cfg["seed"], rng_mod.MODEL_INIT),
        skip_gains=schedule_gains(s))
    report = train_teacher(model, s, train, iters=cfg["iters"],
                           rng=rng_mod.stream(cfg["seed"],
                                              rng_mod.TEACHER_TRAIN),
                           batch_size=cfg["batch_size"], lr=cfg["lr"])
    ckpt = _out(cfg, "teacher.ckpt")
    dn.save(model, s, ckpt)
    if cfg["strict"]:
        report = _scrub_train_timing(report)
    rpt.train_records_jsonl(report, _out(cfg, "train_log.jsonl"))
    rpt.train_summary_csv(report, _out(cfg, "train_summary.csv"))
    rpt.fig_train_curve(report, _out(cfg, "train_curve.png"),
                        title="teacher training")
    _write_config(cfg)
    print(f"teacher: {len(train)} examples, {cfg['iters']} iters, "
          f"loss {report.records[0].total:.4f} -> "
          f"{report.final_total():.4f}; saved {ckpt}")
    return 0


def cmd_distill(cfg: dict) -> int:
    pairs, _ = load_corpus(cfg["corpus"])
    train, heldout = _split_heldout(pairs, cfg["heldout_count"])
    student, s, report = run_distillation(
        cfg["teacher"], train, iters=cfg["iters"], mode=cfg["mode"],
        seed=cfg["seed"], heldout=heldout, batch_size=cfg["batch_size"],
        lr=cfg["lr"], eval_every=cfg["eval_every"],
        cache_pairs=cfg["cache_pairs"],
        student_init_ckpt=cfg["student_init"] or None)
    ckpt = _out(cfg, "student.ckpt")
    dn.save(student, s, ckpt)
    if cfg["strict"]:
        report = _scrub_train_timing(report)
    rpt.train_records_jsonl(report, _out(cfg, "train_log.jsonl"))
    rpt.train_summary_csv(report, _out(cfg, "train_summary.csv"))
    rpt.fig_train_curve(report, _out(cfg, "train_curve.png"),
                        title=f"distillation ({cfg['mode']})")
    _write_config(cfg)
    tail = f", held-out PSNR {report.evals[-1].psnr:.2f} dB" \
        if report.evals else ""
    print(f"student: {cfg['iters']} iters ({cfg['mode']}), total "
          f"{report.records[0].total:.4f} -> {report.final_total():.4f}"
          f"{tail}; saved {ckpt}")
    return 0


def cmd_sample(cfg: dict) -> int:
    model, s = dn.load(cfg["model"])
    pairs = _load_pair_slice(cfg["corpus"], cfg["index"], cfg["count"])
    if cfg["draws"] < 1:
        raise ConfigError(f"draws must be >= 1, got {cfg['draws']}")
    route = cfg["route"]
    x0 = np.stack([p.x0 for p in pairs])
    y = np.stack([p.y for p in pairs])

    rows = []
    panels = []
    ext = "pgm" if x0.shape[1] == 1 else "ppm"
    for i, p in enumerate(pairs):
        export_image(p.y, _out(cfg, f"item{i}_input.{ext}"))
        export_image(p.x0, _out(cfg, f"item{i}_truth.{ext}"))
        panels += [(f"input {i}", p.y), (f"truth {i}", p.x0)]
    for d in range(cfg["draws"]):
        gen = rng_mod.stream(cfg["seed"], rng_mod.EVAL, index=d)
        eps = rng_mod.normal_f32(gen, x0.shape)
        if route == "deterministic":
            pred = sample_deterministic(model, s, y, eps=eps).x0_hat
        elif route == "stochastic":
            pred = sample_stochastic(model, s, y, gen, eps=eps)
        elif route == "student":
            pred = sample_student(model, s, y, eps=eps)
        else:
            raise ConfigError(
                f"unknown route {route!r}; expected deterministic, "
                f"stochastic, or student")
        for i in range(len(pairs)):
            out = np.clip(pred[i], 0.0, 1.0)
            export_image(out, _out(cfg, f"item{i}_out{d}.{ext}"))
            rows.append({"item": cfg["index"] + i, "draw": d,
                         "psnr": psnr(pred[i], x0[i]),
                         "ssim": ssim(pred[i], x0[i])})
            panels.append((f"out {i} draw {d}", out))
    rpt.write_csv(rows, _out(cfg, "metrics.csv"))
    rpt.fig_image_grid(panels, _out(cfg, "samples.png"), per_row=4)
    _write_config(cfg)
    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    print(f"{route} sampling: {len(pairs)} items x {cfg['draws']} draws, "
          f"mean PSNR {mean_psnr:.2f} dB; artifacts in {cfg['out_dir']}")
    return 0


def cmd_invert(cfg: dict) -> int:
    student, s = dn.load(cfg["student"])
    pairs = _load_pair_slice(cfg["corpus"], cfg["index"], cfg["count"])
    x0 = np.stack([p.x0 for p in pairs])
    y = np.stack([p.y for p in pairs])
    xT = invert_student(student, s, x0, y)
    recon = sample_student(student, s, y, x_start=xT)

    rows = []
    panels = []
    ext = "pgm" if x0.shape[1] == 1 else "ppm"
    for i in range(len(pairs)):
        mse = float(np.mean((recon[i] - x0[i]) ** 2))
        rows.append({"item": cfg["index"] + i, "roundtrip_mse": mse,
                     "roundtrip_psnr": psnr(recon[i], x0[i])})
        state = xT[i]
        lo, hi = float(state.min()), float(state.max())
        vis = (state - lo) / (hi - lo) if hi > lo else state * 0.0
        export_image(np.clip(recon[i], 0.0, 1.0),
                     _out(cfg, f"item{i}_roundtrip.{ext}"))
        panels += [(f"truth {i}", x0[i]),
                   (f"inverted state {i}", vis),
                   (f"round trip {i}", np.clip(recon[i], 0.0, 1.0))]
    rpt.write_csv(rows, _out(cfg, "roundtrip.csv"))
    rpt.fig_image_grid(panels, _out(cfg, "invert.png"), per_row=3)
    _write_config(cfg)
    mean_mse = float(np.mean([r["roundtrip_mse"] for r in rows]))
    print(f"learned inversion round trip over {len(pairs)} items: "
          f"mean MSE {mean_mse:.4e}; artifacts in {cfg['out_dir']}")
    return 0


def cmd_eval(cfg: dict) -> int:
    teacher, s = dn.load(cfg["teacher"])
    student, s2 = dn.load(cfg["student"])
    if not np.array_equal(s.eta, s2.eta) or s.kappa != s2.kappa:
        raise ConfigError("teacher and student checkpoints carry "
                          "different schedules")
    pairs, _ = load_corpus(cfg["corpus"])
    _, heldout = _split_heldout(pairs, cfg["heldout_count"])
    if not heldout:
        raise ConfigError("heldout_count must be >= 1 for eval")
    summary = evaluate_methods(
        teacher, student, s, heldout, seed=cfg["seed"],
        timing_reps=cfg["timing_reps"], timing_warmup=cfg["timing_warmup"],
        diversity_draws=cfg["diversity_draws"])
    if cfg["strict"]:
        summary = _scrub_eval_timing(summary)
    rpt.eval_summary_csv(summary, _out(cfg, "eval.csv"))
    rpt.eval_summary_json(summary, _out(cfg, "eval.json"))
    rpt.fig_method_bars(summary, _out(cfg, "method_bars.png"))

    gen = rng_mod.stream(cfg["seed"], rng_mod.EVAL)
    x0 = np.stack([p.x0 for p in heldout])
    y = np.stack([p.y for p in heldout])
    eps = rng_mod.normal_f32(gen, x0.shape)
    n_show = min(2, len(heldout))
    teacher_pred = sample_deterministic(
        teacher, s, y[:n_show], eps=eps[:n_show]).x0_hat
    student_pred = sample_student(student, s, y[:n_show], eps=eps[:n_show])
    panels = []
    for i in range(n_show):
        panels += [
            (f"input {i}", y[i]), (f"truth {i}", x0[i]),
            (f"teacher-{s.T} {i}", np.clip(teacher_pred[i], 0, 1)),
            ("student-1 %d" % i, np.clip(student_pred[i], 0, 1)),
        ]
    rpt.fig_image_grid(panels, _out(cfg, "examples.png"), per_row=4)
    _write_config(cfg)

    print(rpt.format_eval_table(summary))
    ratio = summary.extras["wall_ratio_teacher_vs_student"]
    calls = summary.extras["call_ratio_teacher_vs_student"]
    print(f"teacher/student wall-clock ratio {ratio:.1f}x, "
          f"call ratio {calls:.0f}:1")
    return 0


def cmd_verify(cfg: dict) -> int:
    s = _schedule(cfg)
    results = run_suite(s, seed=cfg["seed"], n_pairs=cfg["pairs"],
                        n_cases=cfg["transport_cases"],
                        n_draws=cfg["mc_draws"],
                        fault=cfg["fault"] or None)
    rows = [{"check": r.name, "passed": r.passed, "worst": r.worst,
             "tol": r.tol, "detail": r.detail} for r in results]
    rpt.write_csv(rows, _out(cfg, "verify.csv"))
    _write_config(cfg)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<26} "
              f"worst {r.worst:.3e} vs tol {r.tol:g}  ({r.detail})")
    bad = first_failure(results)
    if bad is not None:
        print(f"first failing property: {bad.name}")
        return 1
    return 0


def cmd_ablate(cfg: dict) -> int:
    which = (EXPERIMENTS if cfg["which"] == "all"
             else tuple(w.strip() for w in cfg["which"].split(",")))
    for w in which:
        if w not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {w!r}; expected subset of "
                f"{EXPERIMENTS} or 'all'")
    pairs, ccfg = load_corpus(cfg["corpus"])
    train, heldout = _split_heldout(pairs, cfg["heldout_count"])
    if not heldout:
        raise ConfigError("heldout_count must be >= 1 for ablate")
    seeds = tuple(cfg["seed"] + i for i in range(cfg["n_seeds"]))
    orderings = []

    if "pairs" in which:
        if not cfg["teacher"]:
            raise ConfigError("experiment 'pairs' needs the teacher key")
        rows, order = ablate_pair_quality(
            cfg["teacher"], train, heldout, iters=cfg["iters"],
            seeds=seeds, batch_size=cfg["batch_size"], lr=cfg["lr"],
            cache_pairs=cfg["cache_pairs"])
        rpt.write_csv(rows, _out(cfg, "ablate_pairs.csv"))
        rpt.fig_paired_bars(
            "distillation target quality", "deterministic pairs",
            "stochastic pairs", rows, "mse_deterministic",
            "mse_stochastic", _out(cfg, "ablate_pairs.png"),
            ylabel="held-out MSE")
        orderings.append(order)

    if "size" in which:
        s = dn.load(cfg["teacher"])[1] if cfg["teacher"] else make_schedule()
        rows, order = ablate_model_size(
            train, heldout, s,
            DenoiserConfig(image_channels=ccfg.channels,
                           base_channels=cfg["base_channels"],
                           depth=cfg["depth"],
                           time_embed_dim=cfg["time_embed_dim"]),
            workdir=cfg["out_dir"], teacher_iters=cfg["teacher_iters"],
            distill_iters=cfg["iters"], seeds=seeds,
            batch_size=cfg["batch_size"], teacher_lr=cfg["teacher_lr"],
            student_lr=cfg["lr"], cache_pairs=cfg["cache_pairs"])
        rpt.write_csv(rows, _out(cfg, "ablate_size.csv"))
        rpt.fig_paired_bars(
            "quarter-width model, one-step use", "diffusion-trained",
            "distilled student", rows, "teacher1_psnr", "student1_psnr",
            _out(cfg, "ablate_size.png"), ylabel="held-out PSNR (dB)")
        orderings.append(order)

    if "inversion" in which:
        if not cfg["teacher"] or not cfg["student"]:
            raise ConfigError(
                "experiment 'inversion' needs teacher and student keys")
        teacher, s = dn.load(cfg["teacher"])
        student, s2 = dn.load(cfg["student"])
        if not np.array_equal(s.eta, s2.eta):
            raise ConfigError("teacher and student checkpoints carry "
                              "different schedules")
        rows, order = ablate_inversion(teacher, student, s, heldout)
        rpt.write_csv(rows, _out(cfg, "ablate_inversion.csv"))
        rpt.fig_scatter_compare(
            "inversion round-trip error", rows, "mse_numeric",
            "mse_learned", _out(cfg, "ablate_inversion.png"),
            label_x="numeric inversion MSE", label_y="learned inversion MSE")
        orderings.append(order)

    _write_config(cfg)
    ok = True
    for o in orderings:
        print(f"{'PASS' if o.passed else 'FAIL'}  {o.experiment:<10} "
              f"{o.detail}")
        ok = ok and o.passed
    return 0 if ok else 1


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train-teacher": cmd_train_teacher,
    "distill": cmd_distill,
    "sample": cmd_sample,
    "invert": cmd_invert,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "ablate": cmd_ablate,
}

USAGE = """usage: sinsr <command> [--config PATH] [--strict] [--key value]...

commands:
  gen-data       generate a synthetic paired corpus
  train-teacher  pretrain the multi-step model
  distill        distill the teacher into a one-step student
  sample         run a sampler over corpus items and export images
  invert         learned inversion round trip on corpus items
  eval           compare methods on the held-out split
  verify         certify the reverse-process algebra numerically
  ablate         run the paired ordering experiments

Config files are flat `key = value` text; flags override file values
(`--iters 500`). `--strict` (or SINSR_STRICT=1) pins single-threaded
numerics for bitwise reproducibility.
"""


def parse_argv(argv: list[str]):
    if not argv or argv[0] in ("-h", "--help", "help"):
        return None
    command = argv[0]
    config_path = None
    overrides: dict[str, str] = {}
    i = 1
    while i < len(argv):
        tok = argv[i]
        if tok in ("-h", "--help"):
            return None
        if tok == "--strict":
            overrides["strict"] = "true"
            i += 1
            continue
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"expected --key value, got {tok!r}")
        key = tok[2:].replace("-", "_")
        if i + 1 >= len(argv):
            raise ConfigError(f"flag {tok} is missing its value")
        value = argv[i + 1]
        i += 2
        if key == "config":
            config_path = value
        else:
            overrides[key] = value
    return command, config_path, overrides


def run(argv: list[str]) -> int:
    try:
        parsed = parse_argv(argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if parsed is None:
        print(USAGE, end="")
        return 0
    command, config_path, overrides = parsed
    if command not in HANDLERS:
        print(f"unknown command {command!r}\n\n{USAGE}",
              end="", file=sys.stderr)
        return 2
    if os.environ.get("SINSR_STRICT") == "1":
        overrides.setdefault("strict", "true")
    try:
        cfg = resolve(SCHEMAS[command], config_path, overrides)
        os.makedirs(cfg["out_dir"], exist_ok=True)
        return HANDLERS[command](cfg)
    except (ConfigError, RangeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (IoError, FormatError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    except SinsrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
