"""Tests for the nonlinear channel model."""

import numpy as np
import pytest

from cgpr.channel import ChannelConfig, channel_output, equalizer_pairs, noise_variance, simulate_channel, source_signal
from cgpr.errors import ConfigError


class TestConfig:
    def test_defaults(self):
        c = ChannelConfig()
        assert (c.h0, c.h1) == (-0.9 + 0.8j, 0.6 - 0.7j)
        assert (c.snr_db, c.filter_len, c.delay, c.amplitude) == (16.0, 5, 2, 0.70)

    def test_presets(self):
        strong = ChannelConfig.preset("strong", circular=False)
        assert (strong.a2, strong.a3) == (0.2 + 0.25j, 0.12 + 0.09j)
        assert strong.rho == 0.1
        soft = ChannelConfig.preset("soft")
        assert (soft.a2, soft.a3) == (0.1 + 0.15j, 0.06 + 0.05j)
        assert soft.rho == pytest.approx(1 / np.sqrt(2))

    def test_invalid(self):
        with pytest.raises(ConfigError):
            ChannelConfig(rho=1.5)
        with pytest.raises(ConfigError):
            ChannelConfig.preset("medium")
        with pytest.raises(ConfigError):
            ChannelConfig.from_dict({"taps": 3})

    def test_dict_roundtrip(self):
        c = ChannelConfig.preset("strong", circular=False, snr_db=20.0)
        assert ChannelConfig.from_dict(c.to_dict()) == c


class TestChannel:
    def test_impulse_response(self):
        c = ChannelConfig(a2=0, a3=0)
        s = np.zeros(4, dtype=complex)
        s[0] = 1
        q, r = channel_output(s, c)
        np.testing.assert_array_equal(q, [-0.9 + 0.8j, 0.6 - 0.7j, 0, 0])
        np.testing.assert_array_equal(r, q)

    def test_nonlinearity(self):
        c = ChannelConfig.preset("soft")
        s = np.array([0.3 + 0.1j, -0.2j])
        t = c.h0 * s + c.h1 * np.array([0, s[0]])
        q, _ = channel_output(s, c)
        np.testing.assert_allclose(q, t + c.a2 * t**2 + c.a3 * t**3, rtol=1e-15)

    def test_snr_calibration(self):
        c = ChannelConfig.preset("strong")
        rng = np.random.default_rng(0)
        s = source_signal(c, 100_000, rng)
        q, r = channel_output(s, c, rng)
        snr = 10 * np.log10(np.mean(np.abs(q) ** 2) / np.mean(np.abs(r - q) ** 2))
        assert abs(snr - 16.0) <= 0.2
        assert noise_variance(c, q) == pytest.approx(np.mean(np.abs(q) ** 2) / 10**1.6)

    def test_circular_source(self):
        s = source_signal(ChannelConfig.preset("soft", True), 100_000, np.random.default_rng(1))
        m = s**2
        assert abs(m.mean()) <= 5 * np.std(m) / np.sqrt(m.size)
        assert np.mean(np.abs(s) ** 2) == pytest.approx(0.49, rel=0.02)

    def test_noncircular_source(self):
        s = source_signal(ChannelConfig.preset("soft", False), 100_000, np.random.default_rng(2))
        m = s**2
        assert abs(m.mean()) > 10 * np.std(m) / np.sqrt(m.size)

    def test_simulate_deterministic(self):
        a = simulate_channel(ChannelConfig(), 50, seed=3)
        b = simulate_channel(ChannelConfig(), 50, seed=3)
        np.testing.assert_array_equal(a[1], b[1])
        assert a[0].shape == a[1].shape == (50,)

    def test_simulate_precondition(self):
        with pytest.raises(ConfigError):
            simulate_channel(ChannelConfig(), 6, seed=0)


class TestEqualizerPairs:
    def test_window_layout(self):
        s = np.arange(10) * 1j
        r = np.arange(10).astype(complex)
        X, y = equalizer_pairs(s, r, 5, 2)
        assert X.shape == (6, 5)
        # first target s(2) sees [r(4), r(3), r(2), r(1), r(0)]
        np.testing.assert_array_equal(X[0], [4, 3, 2, 1, 0])
        assert y[0] == 2j
        np.testing.assert_array_equal(X[-1], [9, 8, 7, 6, 5])
        assert y[-1] == 7j

    def test_pair_count(self):
        s, r = simulate_channel(ChannelConfig(), 3004, seed=0)
        X, y = equalizer_pairs(s, r, 5, 2)
        assert len(y) == 3000
