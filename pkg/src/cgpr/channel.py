"""Nonlinear channel model used by the equalization benchmark."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

PRESETS = {
    "soft": (0.1 + 0.15j, 0.06 + 0.05j),
    "strong": (0.2 + 0.25j, 0.12 + 0.09j),
}
CIRCULAR_RHO = 1 / np.sqrt(2)


@dataclass(frozen=True)
class ChannelConfig:
    """Linear filter ``t(n) = h0 s(n) + h1 s(n-1)``, memoryless
    ``q = t + a2 t^2 + a3 t^3``, additive circular noise at ``snr_db``.

    The source is ``s(n) = amplitude (sqrt(1 - rho^2) X(n) + j rho Y(n))``
    with independent standard normal ``X``, ``Y``.  The equalizer sees
    windows ``[r(n+D), ..., r(n+D-L+1)]`` and targets ``s(n)``.
    """

    h0: complex = -0.9 + 0.8j
    h1: complex = 0.6 - 0.7j
    a2: complex = PRESETS["soft"][0]
    a3: complex = PRESETS["soft"][1]
    snr_db: float = 16.0
    rho: float = CIRCULAR_RHO
    amplitude: float = 0.70
    filter_len: int = 5
    delay: int = 2

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        if self.filter_len < 1 or self.delay < 0:
            raise ConfigError("filter_len must be >= 1 and delay >= 0")

    @classmethod
    def preset(cls, nonlinearity="soft", circular=True, **overrides):
        if nonlinearity not in PRESETS:
            raise ConfigError(f"unknown channel {nonlinearity!r}; expected soft or strong")
        a2, a3 = PRESETS[nonlinearity]
        rho = CIRCULAR_RHO if circular else 0.1
        return cls(**{"a2": a2, "a3": a3, "rho": rho, **overrides})

    def to_dict(self):
        out = {}
        for key, value in asdict(self).items():
            out[key] = [value.real, value.imag] if isinstance(value, complex) else value
        return out

    @classmethod
    def from_dict(cls, data):
        kwargs = {}
        for key, value in data.items():
            if key in ("h0", "h1", "a2", "a3") and isinstance(value, (list, tuple)):
                value = complex(value[0], value[1])
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def source_signal(config, n, rng):
    x = rng.standard_normal(n)
    y = rng.standard_normal(n)
    return config.amplitude * (np.sqrt(1 - config.rho**2) * x + 1j * config.rho * y)


def channel_output(s, config, rng=None):
    """Received signal for source ``s``; noiseless when ``rng`` is None or SNR is infinite.

    Returns ``(q, r)``: the noiseless channel output and the received signal.
    """
    s = np.asarray(s, dtype=complex)
    t = config.h0 * s
    t[1:] += config.h1 * s[:-1]
    q = t + config.a2 * t**2 + config.a3 * t**3
    if rng is None or not np.isfinite(config.snr_db):
        return q, q.copy()
    noise_var = np.mean(np.abs(q) ** 2) / 10 ** (config.snr_db / 10)
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal(len(q)) + 1j * rng.standard_normal(len(q)))
    return q, q + noise


def simulate_channel(config, n_samples, seed):
    """Draw a source sequence and pass it through the channel.

    Returns ``(s, r)``.
    """
    if n_samples < config.filter_len + config.delay:
        raise ConfigError(f"need at least filter_len + delay = {config.filter_len + config.delay} samples")
    rng = np.random.default_rng(seed)
    s = source_signal(config, n_samples, rng)
    _, r = channel_output(s, config, rng)
    return s, r


def noise_variance(config, q):
    return float(np.mean(np.abs(q) ** 2) / 10 ** (config.snr_db / 10))


def equalizer_pairs(s, r, filter_len, delay):
    """Inputs ``[r(n+D), ..., r(n+D-L+1)]`` and targets ``s(n)`` for every valid n.

    Returns ``len(s) - filter_len + 1`` pairs.
    """
    s = np.asarray(s)
    r = np.asarray(r)
    first = filter_len - 1 - delay
    last = len(r) - 1 - delay
    idx = np.arange(max(first, 0), last + 1)
    lags = np.arange(filter_len)
    X = r[idx[:, None] + delay - lags[None, :]]
    return X, s[idx]
