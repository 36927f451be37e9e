"""Subcommand front end: exit codes, artifacts, and the tiny pipeline.

The expensive pieces run once per session in a shared directory: a
small corpus, a briefly trained teacher, and a briefly distilled
student feed the downstream subcommand tests.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

import sinsr.denoiser as dn
import sinsr.rng as rng_mod
from sinsr._main import main
from sinsr.data import load_corpus


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """gen-data -> train-teacher -> distill on tiny settings.

    Returns the run root; subdirectories d/, t/, s/ hold the corpus,
    teacher, and student artifacts.
    """
    root = tmp_path_factory.mktemp("cli_pipeline")
    started = time.monotonic()
    assert run_cli("gen-data", "--out-dir", str(root / "d"),
                   "--count", "8", "--hr-size", "16", "--preview", "2") == 0
    assert run_cli("train-teacher", "--corpus", str(root / "d" / "corpus.bin"),
                   "--out-dir", str(root / "t"), "--iters", "200",
                   "--base-channels", "8", "--heldout-count", "2",
                   "--lr", "1e-3") == 0
    assert run_cli("distill", "--teacher", str(root / "t" / "teacher.ckpt"),
                   "--corpus", str(root / "d" / "corpus.bin"),
                   "--out-dir", str(root / "s"), "--iters", "200",
                   "--cache-pairs", "true", "--eval-every", "100",
                   "--heldout-count", "2", "--lr", "1e-3") == 0
    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"tiny pipeline took {elapsed:.0f}s"
    return root


class TestGenData:
    def test_artifacts(self, pipeline):
        d = pipeline / "d"
        for name in ("corpus.bin", "config.resolved", "preview.png",
                     "preview0_input.pgm", "preview1_truth.pgm"):
            assert (d / name).exists(), name
        pairs, cfg = load_corpus(d / "corpus.bin")
        assert len(pairs) == 8 and cfg.hr_size == 16

    def test_resolved_config_reflects_overrides(self, pipeline):
        text = (pipeline / "d" / "config.resolved").read_text()
        assert "count = 8" in text
        assert "hr_size = 16" in text


class TestTrainTeacher:
    def test_artifacts(self, pipeline):
        t = pipeline / "t"
        for name in ("teacher.ckpt", "train_log.jsonl", "train_summary.csv",
                     "train_curve.png", "config.resolved"):
            assert (t / name).exists(), name

    def test_log_is_json_lines(self, pipeline):
        lines = (pipeline / "t" / "train_log.jsonl").read_text().splitlines()
        assert len(lines) == 200
        rec = json.loads(lines[-1])
        assert rec["iteration"] == 200
        assert np.isfinite(rec["total"])

    def test_checkpoint_loads(self, pipeline):
        model, s = dn.load(pipeline / "t" / "teacher.ckpt")
        assert s.T == 15
        assert model.config.base_channels == 8


class TestDistill:
    def test_artifacts(self, pipeline):
        s = pipeline / "s"
        for name in ("student.ckpt", "train_log.jsonl", "train_summary.csv",
                     "train_curve.png", "config.resolved"):
            assert (s / name).exists(), name

    def test_summary_records_heldout_evals(self, pipeline):
        text = (pipeline / "s" / "train_summary.csv").read_text()
        assert "eval_psnr_at_100" in text
        assert "eval_psnr_at_200" in text


class TestSample:
    def test_deterministic_route(self, pipeline, tmp_path):
        out = tmp_path / "sa"
        assert run_cli("sample", "--model", str(pipeline / "t" / "teacher.ckpt"),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(out), "--count", "2") == 0
        for name in ("item0_out0.pgm", "item1_input.pgm", "item0_truth.pgm",
                     "metrics.csv", "samples.png", "config.resolved"):
            assert (out / name).exists(), name

    def test_stochastic_multi_draw(self, pipeline, tmp_path):
        out = tmp_path / "sc"
        assert run_cli("sample", "--model", str(pipeline / "t" / "teacher.ckpt"),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(out), "--count", "1",
                       "--route", "stochastic", "--draws", "2") == 0
        a = (out / "item0_out0.pgm").read_bytes()
        b = (out / "item0_out1.pgm").read_bytes()
        assert a != b

    def test_student_route(self, pipeline, tmp_path):
        out = tmp_path / "sb"
        assert run_cli("sample", "--model", str(pipeline / "s" / "student.ckpt"),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(out), "--count", "1",
                       "--route", "student") == 0
        assert (out / "item0_out0.pgm").exists()

    def test_unknown_route_is_config_error(self, pipeline, tmp_path):
        assert run_cli("sample", "--model", str(pipeline / "t" / "teacher.ckpt"),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(tmp_path / "x"),
                       "--route", "psychic") == 2

    def test_out_of_range_slice_is_config_error(self, pipeline, tmp_path):
        assert run_cli("sample", "--model", str(pipeline / "t" / "teacher.ckpt"),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(tmp_path / "x"),
                       "--index", "7", "--count", "3") == 2


class TestInvert:
    def test_roundtrip_artifacts(self, pipeline, tmp_path):
        out = tmp_path / "inv"
        assert run_cli("invert", "--student", str(pipeline / "s" / "student.ckpt"),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(out), "--count", "2") == 0
        for name in ("roundtrip.csv", "invert.png", "item0_roundtrip.pgm",
                     "config.resolved"):
            assert (out / name).exists(), name
        rows = (out / "roundtrip.csv").read_text().splitlines()
        assert rows[0].startswith("item,")
        assert len(rows) == 3


class TestEval:
    def test_artifacts_and_row_structure(self, pipeline, tmp_path):
        out = tmp_path / "e"
        assert run_cli("eval", "--teacher", str(pipeline / "t" / "teacher.ckpt"),
                       "--student", str(pipeline / "s" / "student.ckpt"),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(out), "--heldout-count", "2",
                       "--timing-reps", "3") == 0
        for name in ("eval.csv", "eval.json", "method_bars.png",
                     "examples.png", "config.resolved"):
            assert (out / name).exists(), name
        payload = json.loads((out / "eval.json").read_text())
        methods = [r["method"] for r in payload["rows"]]
        assert methods == ["input-y", "teacher-15", "teacher-1", "student-1"]
        assert payload["extras"]["call_ratio_teacher_vs_student"] == 15.0

    def test_untrained_student_loses_to_teacher(self, pipeline, tmp_path):
        # Sanity ordering: a freshly initialized one-step model cannot
        # match a trained multi-step chain.
        fresh = dn.Denoiser(
            dn.DenoiserConfig(base_channels=8), t_max=15,
            rng=rng_mod.stream(7, rng_mod.MODEL_INIT))
        _, s = dn.load(pipeline / "t" / "teacher.ckpt")
        ckpt = tmp_path / "fresh.ckpt"
        dn.save(fresh, s, ckpt)
        out = tmp_path / "e_fresh"
        assert run_cli("eval", "--teacher", str(pipeline / "t" / "teacher.ckpt"),
                       "--student", str(ckpt),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(out), "--heldout-count", "2",
                       "--timing-reps", "3") == 0
        payload = json.loads((out / "eval.json").read_text())
        by_name = {r["method"]: r for r in payload["rows"]}
        assert by_name["teacher-15"]["psnr_mean"] > \
            by_name["student-1"]["psnr_mean"]

    def test_schedule_mismatch_rejected(self, pipeline, tmp_path):
        other = dn.Denoiser(dn.DenoiserConfig(base_channels=8), t_max=5,
                            rng=rng_mod.stream(0, rng_mod.MODEL_INIT))
        from sinsr.schedule import make_schedule
        ckpt = tmp_path / "other.ckpt"
        dn.save(other, make_schedule(T=5), ckpt)
        assert run_cli("eval", "--teacher", str(pipeline / "t" / "teacher.ckpt"),
                       "--student", str(ckpt),
                       "--corpus", str(pipeline / "d" / "corpus.bin"),
                       "--out-dir", str(tmp_path / "x"),
                       "--heldout-count", "2") == 2


class TestVerify:
    def test_default_schedule_passes(self, tmp_path, capsys):
        out = tmp_path / "v"
        code = run_cli("verify", "--out-dir", str(out),
                       "--pairs", "2000", "--mc-draws", "20000")
        assert code == 0
        assert (out / "verify.csv").exists()
        text = capsys.readouterr().out
        assert text.count("PASS") == 4 and "FAIL" not in text

    def test_injected_coefficient_fault_fails(self, tmp_path, capsys):
        code = run_cli("verify", "--out-dir", str(tmp_path / "vf"),
                       "--pairs", "2000", "--mc-draws", "20000",
                       "--fault", "coeff-bias")
        assert code == 1
        text = capsys.readouterr().out
        assert "first failing property: coefficient-identities" in text

    def test_single_step_schedule_passes(self, tmp_path):
        assert run_cli("verify", "--out-dir", str(tmp_path / "v1"),
                       "--T", "1", "--pairs", "500",
                       "--mc-draws", "1000") == 0

    def test_unknown_fault_is_config_error(self, tmp_path):
        assert run_cli("verify", "--out-dir", str(tmp_path / "x"),
                       "--fault", "gremlins") == 2


class TestStrictReproducibility:
    def test_rerun_is_byte_identical(self, pipeline, tmp_path):
        args = ("train-teacher",
                "--corpus", str(pipeline / "d" / "corpus.bin"),
                "--iters", "30", "--base-channels", "8",
                "--heldout-count", "2", "--strict")
        a, b = tmp_path / "r1", tmp_path / "r2"
        assert run_cli(*args, "--out-dir", str(a)) == 0
        assert run_cli(*args, "--out-dir", str(b)) == 0
        for name in ("teacher.ckpt", "train_summary.csv", "train_log.jsonl",
                     "train_curve.png"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_env_var_equals_flag(self, pipeline, tmp_path, monkeypatch):
        args = ("distill", "--teacher", str(pipeline / "t" / "teacher.ckpt"),
                "--corpus", str(pipeline / "d" / "corpus.bin"),
                "--iters", "10", "--heldout-count", "2",
                "--cache-pairs", "true")
        a, b = tmp_path / "r1", tmp_path / "r2"
        monkeypatch.setenv("SINSR_STRICT", "1")
        assert run_cli(*args, "--out-dir", str(a)) == 0
        monkeypatch.delenv("SINSR_STRICT")
        assert run_cli(*args, "--out-dir", str(b), "--strict") == 0
        assert (a / "config.resolved").read_text() == \
            (b / "config.resolved").read_text().replace(str(b), str(a))
        assert (a / "student.ckpt").read_bytes() == \
            (b / "student.ckpt").read_bytes()
        assert (a / "train_summary.csv").read_bytes() == \
            (b / "train_summary.csv").read_bytes()


class TestArgvAndExitCodes:
    def test_no_args_prints_usage(self, capsys):
        assert run_cli() == 0
        assert "usage: sinsr" in capsys.readouterr().out

    def test_unknown_command(self, capsys):
        assert run_cli("transmogrify") == 2
        assert "unknown command" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path):
        assert run_cli("gen-data", "--out-dir", str(tmp_path / "x"),
                       "--bogus", "1") == 2

    def test_flag_missing_value(self):
        assert run_cli("gen-data", "--count") == 2

    def test_bare_token_rejected(self):
        assert run_cli("gen-data", "count", "5") == 2

    def test_missing_input_file_is_io_error(self, tmp_path):
        assert run_cli("train-teacher", "--corpus",
                       str(tmp_path / "missing.bin"),
                       "--out-dir", str(tmp_path / "x")) == 3

    def test_config_file_plus_override(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text(f"count = 4\nhr_size = 16\n"
                       f"out_dir = {tmp_path / 'out'}\n")
        assert run_cli("gen-data", "--config", str(cfg),
                       "--count", "3") == 0
        pairs, _ = load_corpus(tmp_path / "out" / "corpus.bin")
        assert len(pairs) == 3

    def test_missing_required_key(self, tmp_path):
        assert run_cli("distill", "--out-dir", str(tmp_path / "x")) == 2

    def test_console_script_entry_point(self):
        # One subprocess round trip proves the installed entry point
        # and exit-code propagation; everything else runs in-process.
        proc = subprocess.run([sys.executable, "-m", "sinsr", "--help"],
                              capture_output=True, text=True,
                              env={**os.environ})
        assert proc.returncode == 0
        assert "usage: sinsr" in proc.stdout
