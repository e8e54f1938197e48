"""
Complex covariance functions.

Four kernel kinds are provided:

``complex_metric_gaussian``
    ``exp(-|x - x'|^2 / gamma)`` with the Hermitian norm of the complex
    difference.  Real valued, stationary and isotropic.
``convolution_proper``
    Proper kernel built by filtering two independent white noises.  With
    ``d = x' - x``::

        k = (v_r^2 + v_rj^2) exp(-|d|^2 / 2 gamma)
            + j v_r v_rj [exp(-|d - mu|^2 / 2 gamma) - exp(-|d + mu|^2 / 2 gamma)]

    The imaginary part is skew-symmetric and vanishes at zero lag; the
    overall ``(pi gamma / 2)^d`` constant of the convolution is dropped.
``prior_art_complex_gaussian``
    ``exp(-(x - conj(x'))^T (x - conj(x')) / gamma)``.  Hermitian but
    neither stationary nor bounded: the exponent grows with the imaginary
    parts of the inputs.
``independent``
    ``kappa(x_r, x'_r) + kappa(x_j, x'_j) + j (kappa(x_r, x'_j) - kappa(x_j, x'_r))``
    with ``kappa(a, b) = amplitude * exp(-|a - b|^2 / gamma)`` on real vectors.

Inputs are arrays of shape ``(n, d)``; a 1-D array is read as ``n`` scalar
inputs.  Gradients with respect to positive parameters (``gamma``,
``amplitude``) are taken with respect to their logarithm.
"""

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, KernelOverflowWarning, UnknownHyperparameter

OVERFLOW_EXPONENT = 700.0


class KernelKind(enum.Enum):
    COMPLEX_METRIC_GAUSSIAN = "complex_metric_gaussian"
    CONVOLUTION_PROPER = "convolution_proper"
    PRIOR_ART_COMPLEX_GAUSSIAN = "prior_art_complex_gaussian"
    INDEPENDENT = "independent"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown kernel kind {value!r}; expected one of {names}") from None

    def reads(self, dim):
        """Hyperparameter ids this kind depends on, for input dimension ``dim``."""
        if self is KernelKind.CONVOLUTION_PROPER:
            mu = [f"mu_re_{k}" for k in range(dim)] + [f"mu_im_{k}" for k in range(dim)]
            return ("gamma", *mu, "v_r", "v_rj")
        if self is KernelKind.INDEPENDENT:
            return ("gamma", "amplitude")
        return ("gamma",)


POSITIVE_PARAMS = frozenset({"gamma", "amplitude"})


@dataclass(frozen=True)
class KernelParams:
    """Kernel hyperparameters.

    ``mu`` is stored as a tuple of complex numbers, one per input
    dimension.  Each kind reads only the fields listed by
    `KernelKind.reads`.
    """

    gamma: float = 1.0
    mu: tuple = field(default=(0j,))
    v_r: float = 1.0
    v_rj: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        mu = tuple(complex(m) for m in np.atleast_1d(np.asarray(self.mu, dtype=complex)))
        object.__setattr__(self, "mu", mu)
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError(f"amplitude must be positive and finite, got {self.amplitude}")
        if not all(np.isfinite(m) for m in mu):
            raise ValueError("mu must be finite")

    @property
    def mu_array(self):
        return np.array(self.mu, dtype=complex)

    def get(self, name):
        """Value of hyperparameter ``name`` (log value for positive parameters)."""
        if name in POSITIVE_PARAMS:
            return float(np.log(getattr(self, name)))
        if name in ("v_r", "v_rj"):
            return float(getattr(self, name))
        part, k = _mu_coordinate(name)
        mu = self.mu_array
        if k >= mu.shape[0]:
            raise UnknownHyperparameter(name)
        return float(mu[k].real if part == "re" else mu[k].imag)

    def set(self, name, value):
        """Copy with hyperparameter ``name`` set (log value for positive parameters)."""
        if name in POSITIVE_PARAMS:
            return replace(self, **{name: float(np.exp(value))})
        if name in ("v_r", "v_rj"):
            return replace(self, **{name: float(value)})
        part, k = _mu_coordinate(name)
        mu = self.mu_array
        if k >= mu.shape[0]:
            raise UnknownHyperparameter(name)
        mu[k] = complex(value, mu[k].imag) if part == "re" else complex(mu[k].real, value)
        return replace(self, mu=tuple(mu))


def _mu_coordinate(name):
    parts = name.split("_")
    if len(parts) == 3 and parts[0] == "mu" and parts[1] in ("re", "im") and parts[2].isdigit():
        return parts[1], int(parts[2])
    raise UnknownHyperparameter(name)


def as_inputs(X):
    """Coerce inputs to a complex ``(n, d)`` array."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    elif X.ndim != 2:
        raise DimensionMismatch(f"inputs must be at most 2-D, got shape {X.shape}")
    return X


def _pair(X1, X2):
    X1 = as_inputs(X1)
    X2 = as_inputs(X2)
    if X1.shape[1] != X2.shape[1]:
        raise DimensionMismatch(f"input dimensions differ: {X1.shape[1]} vs {X2.shape[1]}")
    return X1, X2


def _sqdist(A, B):
    # direct differences keep the result exactly symmetric
    diff = B[None, :, :] - A[:, None, :]
    return np.sum(diff.real**2 + diff.imag**2, axis=-1)


def _check_mu(params, dim):
    mu = params.mu_array
    if mu.shape[0] == 1 and dim > 1 and mu[0] == 0:
        return np.zeros(dim, dtype=complex)
    if mu.shape[0] != dim:
        raise DimensionMismatch(f"mu has {mu.shape[0]} components, inputs have dimension {dim}")
    return mu


def _convolution_terms(params, X1, X2):
    d = X2[None, :, :] - X1[:, None, :]
    mu = _check_mu(params, X1.shape[1])
    dm = d - mu
    dp = d + mu
    D0 = np.sum(d.real**2 + d.imag**2, axis=-1)
    Dm = np.sum(dm.real**2 + dm.imag**2, axis=-1)
    Dp = np.sum(dp.real**2 + dp.imag**2, axis=-1)
    g2 = 2.0 * params.gamma
    return d, dm, dp, D0, Dm, Dp, np.exp(-D0 / g2), np.exp(-Dm / g2), np.exp(-Dp / g2)


def _prior_art_exponent(X1, X2):
    diff = X1[:, None, :] - X2.conj()[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _warn_overflow(Q, gamma):
    if np.any(-Q.real / gamma > OVERFLOW_EXPONENT):
        warnings.warn(
            "prior-art complex Gaussian kernel exponent exceeds 700; values overflow",
            KernelOverflowWarning,
            stacklevel=3,
        )


def cross_gram(kind, params, X1, X2):
    """Matrix ``K[i, l] = k(X1[i], X2[l])``."""
    kind = KernelKind.parse(kind)
    X1, X2 = _pair(X1, X2)
    gamma = params.gamma
    if kind is KernelKind.COMPLEX_METRIC_GAUSSIAN:
        return np.exp(-_sqdist(X1, X2) / gamma).astype(complex)
    if kind is KernelKind.CONVOLUTION_PROPER:
        *_, E0, Em, Ep = _convolution_terms(params, X1, X2)
        vr, vrj = params.v_r, params.v_rj
        return (vr**2 + vrj**2) * E0 + 1j * (vr * vrj) * (Em - Ep)
    if kind is KernelKind.PRIOR_ART_COMPLEX_GAUSSIAN:
        Q = _prior_art_exponent(X1, X2)
        _warn_overflow(Q, gamma)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(-Q / gamma)
    if kind is KernelKind.INDEPENDENT:
        a = params.amplitude
        R1, J1, R2, J2 = X1.real, X1.imag, X2.real, X2.imag

        def kappa(A, B):
            diff = B[None, :, :] - A[:, None, :]
            return a * np.exp(-np.sum(diff**2, axis=-1) / gamma)

        return kappa(R1, R2) + kappa(J1, J2) + 1j * (kappa(R1, J2) - kappa(J1, R2))
    raise AssertionError(kind)


def gram(kind, params, X):
    """Gram matrix ``K[i, l] = k(X[i], X[l])``; Hermitian for every kind."""
    X = as_inputs(X)
    if X.shape[0] == 0:
        raise DimensionMismatch("gram of an empty input set")
    return cross_gram(kind, params, X, X)


def kernel_diag(kind, params, X):
    """``k(x, x)`` for each row of ``X`` (real)."""
    kind = KernelKind.parse(kind)
    X = as_inputs(X)
    n = X.shape[0]
    if kind is KernelKind.COMPLEX_METRIC_GAUSSIAN:
        return np.ones(n)
    if kind is KernelKind.CONVOLUTION_PROPER:
        return np.full(n, params.v_r**2 + params.v_rj**2)
    if kind is KernelKind.INDEPENDENT:
        return np.full(n, 2.0 * params.amplitude)
    # prior-art: (x - conj(x))^T (x - conj(x)) = -4 |x_j|^2
    Q = -4.0 * np.sum(X.imag**2, axis=1)
    _warn_overflow(Q, params.gamma)
    with np.errstate(over="ignore"):
        return np.exp(-Q / params.gamma)


def gram_gradient(kind, params, X, which, X2=None):
    """Entrywise derivative of the (cross-)Gram matrix w.r.t. hyperparameter ``which``.

    Positive parameters are differentiated with respect to their log.

    Raises
    ------
    UnknownHyperparameter
        If ``kind`` does not read ``which``.
    """
    kind = KernelKind.parse(kind)
    X1 = as_inputs(X)
    X2 = X1 if X2 is None else as_inputs(X2)
    X1, X2 = _pair(X1, X2)
    if which not in kind.reads(X1.shape[1]):
        raise UnknownHyperparameter(f"{kind.value} kernel has no hyperparameter {which!r}")
    gamma = params.gamma

    if kind is KernelKind.COMPLEX_METRIC_GAUSSIAN:
        D = _sqdist(X1, X2)
        return (np.exp(-D / gamma) * D / gamma).astype(complex)

    if kind is KernelKind.CONVOLUTION_PROPER:
        d, dm, dp, D0, Dm, Dp, E0, Em, Ep = _convolution_terms(params, X1, X2)
        vr, vrj = params.v_r, params.v_rj
        g2 = 2.0 * gamma
        if which == "gamma":
            return (vr**2 + vrj**2) * E0 * D0 / g2 + 1j * vr * vrj * (Em * Dm / g2 - Ep * Dp / g2)
        if which == "v_r":
            return 2 * vr * E0 + 1j * vrj * (Em - Ep)
        if which == "v_rj":
            return 2 * vrj * E0 + 1j * vr * (Em - Ep)
        part, k = _mu_coordinate(which)
        take = np.real if part == "re" else np.imag
        return 1j * vr * vrj * (Em * take(dm[..., k]) + Ep * take(dp[..., k])) / gamma

    if kind is KernelKind.PRIOR_ART_COMPLEX_GAUSSIAN:
        Q = _prior_art_exponent(X1, X2)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(-Q / gamma) * Q / gamma

    a = params.amplitude
    R1, J1, R2, J2 = X1.real, X1.imag, X2.real, X2.imag

    def kappa(A, B):
        diff = B[None, :, :] - A[:, None, :]
        D = np.sum(diff**2, axis=-1)
        E = a * np.exp(-D / gamma)
        return E * D / gamma if which == "gamma" else E

    return kappa(R1, R2) + kappa(J1, J2) + 1j * (kappa(R1, J2) - kappa(J1, R2))


@dataclass(frozen=True)
class Kernel:
    """A kernel kind bound to its hyperparameters."""

    kind: KernelKind
    params: KernelParams = field(default_factory=KernelParams)

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))

    def __call__(self, X1, X2):
        return cross_gram(self.kind, self.params, X1, X2)

    def gram(self, X):
        return gram(self.kind, self.params, X)

    def diag(self, X):
        return kernel_diag(self.kind, self.params, X)

    def gradient(self, X, which, X2=None):
        return gram_gradient(self.kind, self.params, X, which, X2)

    def hyperparameters(self, dim):
        return self.kind.reads(dim)

    def with_params(self, **changes):
        return Kernel(self.kind, replace(self.params, **changes))

    def to_dict(self):
        mu = self.params.mu_array
        return {
            "kind": self.kind.value,
            "gamma": self.params.gamma,
            "mu_re": mu.real.tolist(),
            "mu_im": mu.imag.tolist(),
            "v_r": self.params.v_r,
            "v_rj": self.params.v_rj,
            "amplitude": self.params.amplitude,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        kind = KernelKind.parse(data.pop("kind"))
        mu_re = np.atleast_1d(np.asarray(data.pop("mu_re", [0.0]), dtype=float))
        mu_im = np.atleast_1d(np.asarray(data.pop("mu_im", np.zeros_like(mu_re)), dtype=float))
        if mu_re.shape != mu_im.shape:
            raise ValueError("mu_re and mu_im must have the same length")
        allowed = {"gamma", "v_r", "v_rj", "amplitude"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown kernel fields: {sorted(unknown)}")
        params = KernelParams(mu=tuple(mu_re + 1j * mu_im), **{k: float(v) for k, v in data.items()})
        return cls(kind, params)


def eval_complex_metric_gaussian(x, x2, gamma):
    return complex(cross_gram(KernelKind.COMPLEX_METRIC_GAUSSIAN, KernelParams(gamma=gamma), _vec(x), _vec(x2))[0, 0])


def eval_convolution_proper(x, x2, params):
    return complex(cross_gram(KernelKind.CONVOLUTION_PROPER, params, _vec(x), _vec(x2))[0, 0])


def eval_prior_art_complex_gaussian(x, x2, gamma):
    return complex(cross_gram(KernelKind.PRIOR_ART_COMPLEX_GAUSSIAN, KernelParams(gamma=gamma), _vec(x), _vec(x2))[0, 0])


def eval_independent(x, x2, gamma, amplitude=1.0):
    params = KernelParams(gamma=gamma, amplitude=amplitude)
    return complex(cross_gram(KernelKind.INDEPENDENT, params, _vec(x), _vec(x2))[0, 0])


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=complex))[None, :]
