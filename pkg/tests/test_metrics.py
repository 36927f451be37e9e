"""Metric correctness against independent reference implementations."""

import numpy as np
import pytest
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from sinsr import metrics as mt
from sinsr.errors import ConfigError, ShapeError
from sinsr.rng import stream


class TestPsnr:
    def test_identical_capped(self):
        x = np.random.default_rng(0).random((1, 16, 16)).astype(np.float32)
        assert mt.psnr(x, x) == 99.0

    def test_direct_arithmetic(self):
        a = np.zeros(100)
        b = np.full(100, 0.1)
        assert mt.psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_matches_reference(self):
        gen = stream(60, 6)
        for _ in range(10):
            a = gen.random((16, 16)).astype(np.float32)
            b = np.clip(a + 0.05 * gen.standard_normal((16, 16)).astype(np.float32),
                        0, 1)
            want = peak_signal_noise_ratio(a.astype(np.float64),
                                           b.astype(np.float64), data_range=1.0)
            assert mt.psnr(a, b) == pytest.approx(want, abs=1e-6)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            mt.psnr(np.zeros((4, 4)), np.zeros((5, 5)))


class TestSsim:
    def test_self_similarity(self):
        x = stream(61, 6).random((1, 16, 16)).astype(np.float32)
        assert mt.ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric(self):
        gen = stream(62, 6)
        a = gen.random((16, 16)).astype(np.float32)
        b = gen.random((16, 16)).astype(np.float32)
        assert mt.ssim(a, b) == pytest.approx(mt.ssim(b, a), abs=1e-9)

    def test_contrast_inversion_scores_low(self):
        gen = stream(63, 6)
        x = (gen.random((24, 24)) > 0.5).astype(np.float32)
        assert mt.ssim(x, 1.0 - x) < 0.2

    def test_matches_reference(self):
        gen = stream(64, 6)
        for _ in range(10):
            a = gen.random((20, 20))
            b = np.clip(a + 0.1 * gen.standard_normal((20, 20)), 0, 1)
            want = structural_similarity(a, b, win_size=7, data_range=1.0,
                                         gaussian_weights=False)
            assert mt.ssim(a, b) == pytest.approx(want, abs=1e-7)

    def test_multichannel_is_channel_mean(self):
        gen = stream(65, 6)
        a = gen.random((3, 16, 16))
        b = np.clip(a + 0.1 * gen.standard_normal((3, 16, 16)), 0, 1)
        per_channel = [mt.ssim(a[c], b[c]) for c in range(3)]
        assert mt.ssim(a, b) == pytest.approx(np.mean(per_channel), abs=1e-12)

    def test_too_small_image(self):
        with pytest.raises(ConfigError):
            mt.ssim(np.zeros((6, 6)), np.zeros((6, 6)))


class TestDiversity:
    def test_identical_outputs_zero(self):
        x = np.ones((1, 8, 8), np.float32)
        assert mt.diversity([x, x.copy(), x.copy()]) == 0.0

    def test_constant_offset(self):
        x = np.zeros((1, 8, 8), np.float32)
        assert mt.diversity([x, x + 0.1]) == pytest.approx(0.1, abs=1e-7)

    def test_needs_two(self):
        with pytest.raises(ConfigError):
            mt.diversity([np.zeros((1, 4, 4))])


class TestTiming:
    def test_counts_and_stats(self):
        calls = {"n": 0}
        a = np.random.default_rng(0).random((200, 200))

        def fn():
            calls["n"] += 3
            np.dot(a, a)

        r = mt.timed_sample(fn, warmup=2, reps=20, counter=lambda: calls["n"])
        assert r.calls_per_rep == 3
        assert r.mean_ms > 0.0
        assert r.std_ms >= 0.0
        assert r.std_ms / r.mean_ms < 0.5

    def test_reps_floor(self):
        with pytest.raises(ConfigError):
            mt.timed_sample(lambda: None, warmup=0, reps=2)

    def test_no_counter(self):
        r = mt.timed_sample(lambda: None, warmup=0, reps=3)
        assert r.calls_per_rep == 0


class TestSummaryTypes:
    def test_row_lookup(self):
        row = mt.MethodRow(name="teacher", steps=15, psnr_mean=20.0, psnr_std=1.0,
                           ssim_mean=0.8, ssim_std=0.05, mse_mean=0.01,
                           calls_per_image=15, ms_per_image=5.0, diversity=0.01)
        summary = mt.EvalSummary(rows=(row,), n_examples=8)
        assert summary.row("teacher") is row
        with pytest.raises(KeyError):
            summary.row("nope")

    def test_steps_floor(self):
        with pytest.raises(ConfigError):
            mt.MethodRow(name="x", steps=0, psnr_mean=0, psnr_std=0,
                         ssim_mean=0, ssim_std=0, mse_mean=0,
                         calls_per_image=1, ms_per_image=1.0, diversity=0.0)
