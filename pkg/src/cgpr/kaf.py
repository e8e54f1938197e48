"""
Online complex kernel-LMS baselines with novelty-criterion sparsification.

The filters predict ``y_hat(x) = sum_m c_m k(x_m, x)`` over a growing
dictionary of past inputs.  A sample ``(x, y)`` with a priori error
``e = y - y_hat(x)`` joins the dictionary with coefficient ``step * e`` only
if it is farther than ``delta1`` from every atom and ``|e| > delta2``; the
first sample is always admitted.  Otherwise the filter is left unchanged.

The augmented variant (ACKLMS) carries a second coefficient per atom on the
conjugate kernel, ``y_hat(x) = sum_m a_m k(x_m, x) + b_m conj(k(x_m, x))``,
both set to ``step * e`` at admission.  These update rules are
reconstructions of the published algorithms, not bit-level ports.
"""

from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, KernelKind, KernelParams, cross_gram

DEFAULT_DELTA1 = 0.15
DEFAULT_DELTA2 = 0.2


@dataclass(frozen=True)
class KafSettings:
    kind: KernelKind
    gamma: float
    step: float
    augmented: bool = False
    delta1: float = DEFAULT_DELTA1
    delta2: float = DEFAULT_DELTA2
    amplitude: float = 1.0

    def to_dict(self):
        return {
            "kind": KernelKind.parse(self.kind).value,
            "gamma": self.gamma,
            "step": self.step,
            "augmented": self.augmented,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "amplitude": self.amplitude,
        }


def baseline_settings(name, channel="soft", **overrides):
    """Published settings for each baseline (NCKLMS2 depends on the channel)."""
    table = {
        "NCKLMS2": {
            "soft": KafSettings(KernelKind.PRIOR_ART_COMPLEX_GAUSSIAN, gamma=10.0**2, step=1 / 8),
            "strong": KafSettings(KernelKind.PRIOR_ART_COMPLEX_GAUSSIAN, gamma=5.0**2, step=1 / 4),
        },
        "ACKLMS": KafSettings(KernelKind.PRIOR_ART_COMPLEX_GAUSSIAN, gamma=10.0**2, step=1 / 8, augmented=True),
        "NCKLMS2-i": KafSettings(KernelKind.INDEPENDENT, gamma=5.0**2, step=1 / 8),
        "NCKLMS2-G": KafSettings(KernelKind.COMPLEX_METRIC_GAUSSIAN, gamma=5.0**2, step=1 / 4),
    }
    if name not in table:
        raise KeyError(f"unknown baseline {name!r}")
    settings = table[name]
    if isinstance(settings, dict):
        settings = settings[channel]
    if overrides:
        settings = KafSettings(**{**settings.__dict__, **overrides})
    return settings


@dataclass
class KafState:
    """Dictionary, coefficients and settings of one online filter."""

    settings: KafSettings
    dim: int
    dictionary: np.ndarray = field(default=None, repr=False)
    coefficients: np.ndarray = field(default=None, repr=False)
    conj_coefficients: np.ndarray = field(default=None, repr=False)
    size: int = 0

    def __post_init__(self):
        if self.dictionary is None:
            self.dictionary = np.zeros((16, self.dim), dtype=complex)
            self.coefficients = np.zeros(16, dtype=complex)
            self.conj_coefficients = np.zeros(16, dtype=complex)
        self.kernel = Kernel(self.settings.kind, KernelParams(gamma=self.settings.gamma, amplitude=self.settings.amplitude))

    @property
    def atoms(self):
        return self.dictionary[: self.size]

    def _grow(self):
        cap = 2 * self.dictionary.shape[0]
        for name in ("dictionary", "coefficients", "conj_coefficients"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)


def kaf_predict(state, x):
    """Filter output at ``x``; 0 for an empty dictionary."""
    if state.size == 0:
        return 0j
    x = np.asarray(x, dtype=complex).reshape(1, -1)
    k = cross_gram(state.kernel.kind, state.kernel.params, state.atoms, x)[:, 0]
    with np.errstate(invalid="ignore", over="ignore"):
        out = state.coefficients[: state.size] @ k
        if state.settings.augmented:
            out = out + state.conj_coefficients[: state.size] @ k.conj()
    return complex(out)


def kaf_step(state, x, y):
    """Predict, compute the a priori error and apply the novelty-criterion update.

    Returns ``(state, error)``; ``state`` is updated in place.
    """
    x = np.asarray(x, dtype=complex).reshape(-1)
    e = complex(y) - kaf_predict(state, x)
    s = state.settings
    if state.size == 0:
        admit = True
    else:
        dist = np.sqrt(np.min(np.sum(np.abs(state.atoms - x) ** 2, axis=1)))
        admit = dist > s.delta1 and abs(e) > s.delta2
    if admit:
        if state.size == state.dictionary.shape[0]:
            state._grow()
        state.dictionary[state.size] = x
        state.coefficients[state.size] = s.step * e
        state.conj_coefficients[state.size] = s.step * e if s.augmented else 0
        state.size += 1
    return state, e


def run_filter(settings, inputs, targets):
    """Run one filter over a sequence; returns the a priori errors."""
    inputs = np.asarray(inputs, dtype=complex)
    state = KafState(settings, inputs.shape[1])
    errors = np.empty(len(targets), dtype=complex)
    for i, (x, y) in enumerate(zip(inputs, targets)):
        _, errors[i] = kaf_step(state, x, y)
    return errors, state
