from __future__ import division

import unittest
import math

import numpy as np
import torch
from numpy.testing import assert_allclose
from scipy import stats

from vscc import ConfigurationError
from vscc.channel import (ChannelConfig, ChannelReport, snr_to_noise_variance,
                          power_normalize, apply_awgn, transmit,
                          measure_empirical_snr)
from vscc.utils import make_rng


class TestSnr(unittest.TestCase):

    def test_noise_variance(self):

        self.assertEqual(snr_to_noise_variance(0), 1.)
        assert_allclose(snr_to_noise_variance(10), 0.1)
        assert_allclose(snr_to_noise_variance(-5), 3.16227766, rtol=1e-8)
        assert_allclose(snr_to_noise_variance(10, signal_power=4), 0.4)

        for sp in [0, -1, np.inf, np.nan]:
            with self.assertRaises(ValueError):
                snr_to_noise_variance(3, signal_power=sp)
        with self.assertRaises(ValueError):
            snr_to_noise_variance(np.inf)

    def test_config(self):

        c = ChannelConfig(5)
        assert_allclose(c.noise_variance, 10 ** -0.5)
        self.assertFalse(c.is_noiseless)
        self.assertTrue(ChannelConfig().is_noiseless)
        self.assertEqual(ChannelConfig.noiseless().noise_variance, 0)

        for snr in [-15, -5, 0, 5, 25]:
            self.assertTrue(ChannelConfig(snr).noise_variance > 0)

        c = ChannelConfig(10, normalize_power=False, signal_power=2.)
        assert_allclose(c.noise_variance, 0.2)
        # normalizing forces the unit power convention
        c = ChannelConfig(10, normalize_power=True, signal_power=2.)
        assert_allclose(c.noise_variance, 0.1)

        with self.assertRaises(ConfigurationError):
            ChannelConfig(np.nan)
        with self.assertRaises(ConfigurationError):
            ChannelConfig(-np.inf)

        c = ChannelConfig(-5, seed=3)
        self.assertEqual(ChannelConfig.from_dict(c.to_dict()), c)
        self.assertEqual(sorted(c.to_dict()),
                         ['normalize_power', 'seed', 'snr_db'])
        self.assertIn('noise_variance', repr(c))

    def test_report(self):

        with self.assertRaises(ValueError):
            ChannelReport(1., 0, 1.)
        with self.assertRaises(ValueError):
            ChannelReport(1., 10, -1.)


class TestPowerNormalize(unittest.TestCase):

    def test_values(self):

        x, s = power_normalize([2., 2., 2., 2.])
        assert_allclose(x, [1, 1, 1, 1])
        self.assertEqual(s, 2)

        x, s = power_normalize([0., 0.])
        assert_allclose(x, [0, 0])
        self.assertEqual(s, 1)

        x, s = power_normalize([3., 4.])
        assert_allclose(s, np.sqrt(12.5))
        assert_allclose(x, [3 / np.sqrt(12.5), 4 / np.sqrt(12.5)])

        rng = np.random.default_rng(0)
        x, _ = power_normalize(rng.normal(3, 7, size=(10, 4, 5)))
        assert_allclose(np.mean(x ** 2), 1, atol=1e-6)

        with self.assertRaises(ValueError):
            power_normalize([])

    def test_torch(self):

        t = torch.tensor([3., 4.], dtype=torch.float64, requires_grad=True)
        x, s = power_normalize(t)
        assert_allclose(float(s), np.sqrt(12.5))
        assert_allclose(float(torch.mean(x ** 2)), 1)
        x.sum().backward()
        self.assertTrue(torch.all(torch.isfinite(t.grad)))

        x, s = power_normalize(torch.zeros(3))
        self.assertEqual(float(s), 1)
        with self.assertRaises(ValueError):
            power_normalize(torch.zeros(0))


class TestAwgn(unittest.TestCase):

    def test_noiseless(self):

        x = np.random.default_rng(0).normal(size=100)
        out = apply_awgn(x, ChannelConfig(), make_rng(0))
        np.testing.assert_array_equal(out, x)
        self.assertIsNot(out, x)

        t = torch.randn(10)
        out = apply_awgn(t, ChannelConfig(), make_rng(0, kind='torch'))
        self.assertTrue(torch.equal(out, t))

    def test_variance(self):

        out = apply_awgn(np.zeros(10 ** 6), ChannelConfig(0), make_rng(1))
        self.assertTrue(0.995 <= np.var(out) <= 1.005)
        assert_allclose(np.mean(out), 0, atol=5e-3)

    def test_determinism(self):

        x = np.linspace(-1, 1, 1000)
        c = ChannelConfig(3)
        a = apply_awgn(x, c, make_rng(42))
        b = apply_awgn(x, c, make_rng(42))
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, apply_awgn(x, c, make_rng(43))))

        t = torch.linspace(-1, 1, 1000)
        a = apply_awgn(t, c, make_rng(42, kind='torch'))
        b = apply_awgn(t, c, make_rng(42, kind='torch'))
        self.assertTrue(torch.equal(a, b))

    def test_additivity(self):

        n = 10 ** 6
        x = np.random.default_rng(5).normal(size=n)
        c = ChannelConfig(2)
        noise_a = apply_awgn(x, c, make_rng(1)) - x
        noise_b = apply_awgn(np.zeros(n), c, make_rng(2))
        # two-sided F test of equal variances at 1% significance
        f = np.var(noise_a, ddof=1) / np.var(noise_b, ddof=1)
        p = 2 * min(stats.f.cdf(f, n - 1, n - 1), stats.f.sf(f, n - 1, n - 1))
        self.assertTrue(p > 0.01)

    def test_wrong_rng(self):

        with self.assertRaises(ValueError):
            apply_awgn(np.zeros(3), ChannelConfig(0), make_rng(0, 'torch'))
        with self.assertRaises(ValueError):
            apply_awgn(torch.zeros(3), ChannelConfig(0), make_rng(0))


class TestCalibration(unittest.TestCase):

    def test_empirical_snr(self):

        n = 10 ** 6
        rng = np.random.default_rng(0)
        x, _ = power_normalize(rng.normal(size=n))
        for snr in [-10, -5, 0, 5, 15, 25]:
            y = apply_awgn(x, ChannelConfig(snr), rng)
            r = measure_empirical_snr(x, y)
            self.assertTrue(abs(r.empirical_snr_db - snr) < 0.1)
            self.assertEqual(r.symbol_count, n)
            assert_allclose(r.mean_signal_power, 1, rtol=1e-6)

    def test_measure(self):

        x = np.arange(10.)
        r = measure_empirical_snr(x, x)
        self.assertEqual(r.empirical_snr_db, np.inf)

        n = 10 ** 6
        rng = np.random.default_rng(3)
        x, _ = power_normalize(rng.normal(size=n))
        noise = rng.normal(size=n)
        r1 = measure_empirical_snr(x, x + noise)
        self.assertTrue(abs(r1.empirical_snr_db) < 0.1)
        r2 = measure_empirical_snr(2 * x, 2 * x + noise)
        assert_allclose(r2.empirical_snr_db - r1.empirical_snr_db,
                        20 * math.log10(2), atol=1e-8)

        with self.assertRaises(ValueError):
            measure_empirical_snr(np.zeros(3), np.zeros(4))

        t = torch.ones(5)
        r = measure_empirical_snr(t, t + 0.1)
        assert_allclose(r.empirical_snr_db, 20, rtol=1e-5)


class TestTransmit(unittest.TestCase):

    def test_scale_is_restored(self):

        x = np.random.default_rng(0).normal(0, 5, size=10 ** 5)
        y, s = transmit(x, ChannelConfig(10), make_rng(0), return_scale=True)
        assert_allclose(s, np.sqrt(np.mean(x ** 2)))
        # the noise scales with the signal: the SNR is the nominal one
        r = measure_empirical_snr(x, y)
        self.assertTrue(abs(r.empirical_snr_db - 10) < 0.1)

        np.testing.assert_array_equal(transmit(x, ChannelConfig(),
                                               make_rng(0)), x)

    def test_no_normalization(self):

        x = np.full(10 ** 5, 3.)
        c = ChannelConfig(0, normalize_power=False)
        y = transmit(x, c, make_rng(0))
        assert_allclose(np.var(y - x), 1, rtol=0.02)

    def test_gradient(self):

        t = torch.randn(4, 2, 3, 3, dtype=torch.float64, requires_grad=True)
        y = transmit(t, ChannelConfig(5), make_rng(0, kind='torch'))
        y.sum().backward()
        self.assertTrue(torch.all(torch.isfinite(t.grad)))
