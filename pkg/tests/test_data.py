"""Corpus generation, degradation, persistence, and image export."""

import numpy as np
import pytest

from sinsr import data as dt
from sinsr.errors import ConfigError, FormatError, IoError, ShapeError


def small_cfg(**kw):
    defaults = dict(count=4, hr_size=32, scale=4, channels=1, seed=0)
    defaults.update(kw)
    return dt.CorpusConfig(**defaults)


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            small_cfg(count=0)
        with pytest.raises(ConfigError):
            small_cfg(hr_size=30)  # not divisible by 4
        with pytest.raises(ConfigError):
            small_cfg(channels=2)
        with pytest.raises(ConfigError):
            small_cfg(blur_sigma=-1.0)
        with pytest.raises(ConfigError):
            small_cfg(noise_sigma=-0.1)


class TestGenHr:
    def test_deterministic(self):
        cfg = small_cfg()
        a = dt.gen_hr(3, cfg)
        b = dt.gen_hr(3, cfg)
        np.testing.assert_array_equal(a, b)
        c = dt.gen_hr(4, cfg)
        assert not np.array_equal(a, c)

    def test_range_and_dtype(self):
        img = dt.gen_hr(0, small_cfg())
        assert img.dtype == np.float32
        assert img.shape == (1, 32, 32)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_contrast_span_on_average(self):
        cfg = small_cfg(count=100)
        mins, maxs = [], []
        for i in range(100):
            img = dt.gen_hr(i, cfg)
            mins.append(float(img.min()))
            maxs.append(float(img.max()))
        assert np.mean(mins) <= 0.1
        assert np.mean(maxs) >= 0.9

    def test_high_frequency_energy_present(self):
        # energy above half the low-resolution Nyquist: detail to restore
        cfg = small_cfg(count=20)
        f = np.fft.fftfreq(cfg.hr_size)
        fr = np.sqrt(f[:, None] ** 2 + f[None, :] ** 2)
        cutoff = 0.5 / cfg.scale / 2.0
        energies = []
        for i in range(20):
            spec = np.abs(np.fft.fft2(dt.gen_hr(i, cfg)[0])) ** 2
            energies.append(float(spec[fr > cutoff].mean()))
        assert np.mean(energies) > 0.0
        assert min(energies) > 0.0

    def test_rgb_shape(self):
        img = dt.gen_hr(0, small_cfg(channels=3))
        assert img.shape == (3, 32, 32)


class TestDegrade:
    def test_constant_invariance_exact(self):
        cfg = small_cfg(blur_sigma=0.0, noise_sigma=0.0)
        x0 = np.full((1, 32, 32), 0.37, np.float32)
        np.testing.assert_array_equal(dt.degrade(x0, cfg, 0), x0)

    def test_deterministic(self):
        cfg = small_cfg()
        x0 = dt.gen_hr(1, cfg)
        np.testing.assert_array_equal(dt.degrade(x0, cfg, 1),
                                      dt.degrade(x0, cfg, 1))

    def test_strictly_lossy(self):
        cfg = small_cfg()
        for i in range(4):
            p = dt.make_pair(i, cfg)
            assert float(np.mean((p.x0 - p.y) ** 2)) > 0.0

    def test_psnr_band(self):
        # bounds pinned from the generator calibration run
        cfg = small_cfg(count=100)
        ps = []
        for i in range(100):
            p = dt.make_pair(i, cfg)
            mse = float(np.mean((p.x0 - p.y) ** 2))
            ps.append(10 * np.log10(1.0 / mse))
        assert 18.0 <= np.mean(ps) <= 28.0

    def test_shape_check(self):
        cfg = small_cfg()
        with pytest.raises(ShapeError):
            dt.degrade(np.zeros((1, 16, 16), np.float32), cfg, 0)


class TestBilinear:
    def test_constant_exact(self):
        x = np.full((1, 8, 8), 0.3, np.float32)
        np.testing.assert_array_equal(dt.bilinear_up(x, 32),
                                      np.full((1, 32, 32), 0.3, np.float32))

    def test_shape(self):
        assert dt.bilinear_up(np.zeros((2, 8, 8), np.float32), 32).shape == (2, 32, 32)

    def test_preserves_linear_ramp_interior(self):
        # bilinear interpolation reproduces affine signals away from edges
        src = np.arange(8, dtype=np.float32).reshape(1, 1, 8).repeat(8, axis=1)
        up = dt.bilinear_up(src, 32)
        expect = (np.arange(32, dtype=np.float64) + 0.5) / 4.0 - 0.5
        interior = slice(4, 28)
        np.testing.assert_allclose(up[0, 16, interior], expect[interior],
                                   atol=1e-5)


class TestSplit:
    def test_disjoint_by_construction(self):
        cfg = small_cfg(count=6)
        train = dt.make_corpus(cfg)
        held = dt.make_corpus(cfg, start=cfg.count)
        train_seeds = {p.seed for p in train}
        held_seeds = {p.seed for p in held}
        assert train_seeds.isdisjoint(held_seeds)


class TestCorpusFile:
    def test_round_trip_bitwise(self, tmp_path):
        cfg = small_cfg()
        pairs = dt.make_corpus(cfg)
        path = tmp_path / "corpus.dat"
        dt.save_corpus(pairs, cfg, path)
        loaded, cfg2 = dt.load_corpus(path)
        assert cfg2 == cfg
        assert len(loaded) == len(pairs)
        for a, b in zip(pairs, loaded):
            assert a.seed == b.seed
            np.testing.assert_array_equal(a.x0, b.x0)
            np.testing.assert_array_equal(a.y, b.y)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_bytes(b"WRONGMAG" + b"\0" * 64)
        with pytest.raises(FormatError):
            dt.load_corpus(path)

    def test_truncation_fuzz(self, tmp_path):
        cfg = small_cfg(count=2)
        pairs = dt.make_corpus(cfg)
        path = tmp_path / "corpus.dat"
        dt.save_corpus(pairs, cfg, path)
        raw = path.read_bytes()
        rng = np.random.default_rng(0)
        for cut in sorted(rng.choice(len(raw) - 1, size=8, replace=False)):
            path.write_bytes(raw[: int(cut)])
            with pytest.raises((IoError, FormatError)) as exc:
                dt.load_corpus(path)
            if isinstance(exc.value, IoError):
                assert "byte" in str(exc.value)

    def test_trailing_bytes_rejected(self, tmp_path):
        cfg = small_cfg(count=2)
        pairs = dt.make_corpus(cfg)
        path = tmp_path / "corpus.dat"
        dt.save_corpus(pairs, cfg, path)
        path.write_bytes(path.read_bytes() + b"zz")
        with pytest.raises(FormatError):
            dt.load_corpus(path)

    def test_count_mismatch_rejected(self, tmp_path):
        cfg = small_cfg(count=3)
        pairs = dt.make_corpus(cfg)
        with pytest.raises(ConfigError):
            dt.save_corpus(pairs[:2], cfg, tmp_path / "c.dat")


class TestImageExport:
    def test_constant_half_quantizes_to_128(self, tmp_path):
        path = tmp_path / "gray.pgm"
        dt.export_image(np.full((1, 4, 4), 0.5, np.float32), path)
        raw = path.read_bytes()
        header = b"P5\n4 4\n255\n"
        assert raw.startswith(header)
        assert set(raw[len(header):]) == {128}

    def test_header_contract(self, tmp_path):
        path = tmp_path / "img.pgm"
        dt.export_image(np.zeros((1, 3, 5), np.float32), path)
        assert path.read_bytes().startswith(b"P5\n5 3\n255\n")

    def test_round_trip_within_quantization(self, tmp_path):
        img = dt.gen_hr(0, small_cfg())
        path = tmp_path / "img.pgm"
        dt.export_image(img, path)
        back = dt.import_image(path)
        assert back.shape == img.shape
        assert float(np.abs(back - img).max()) <= 0.5 / 255.0 + 1e-7

    def test_rgb_ppm(self, tmp_path):
        img = dt.gen_hr(0, small_cfg(channels=3))
        path = tmp_path / "img.ppm"
        dt.export_image(img, path)
        assert path.read_bytes().startswith(b"P6\n32 32\n255\n")
        back = dt.import_image(path)
        assert back.shape == img.shape
        assert float(np.abs(back - img).max()) <= 0.5 / 255.0 + 1e-7

    def test_bad_shape(self, tmp_path):
        with pytest.raises(ShapeError):
            dt.export_image(np.zeros((2, 4, 4), np.float32), tmp_path / "x.pgm")
