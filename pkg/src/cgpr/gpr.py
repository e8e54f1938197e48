"""
Proper complex Gaussian-process regression.

With ``C = K(X, X) + noise_var * I`` and training outputs ``y``::

    mean = K(X*, X) C^{-1} y
    cov  = K(X*, X*) - K(X*, X) C^{-1} K(X, X*)
    log p(y) = -y^H C^{-1} y - log det C - n log(pi)

The posterior pseudo-covariance is zero and is not returned.  A fitted
model caches the Cholesky factor ``L`` of ``C`` and the whitened outputs
``w = L^{-1} y``; ``alpha = C^{-1} y`` is derived lazily.
"""

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import linalg
from .errors import DimensionMismatch, NotPositiveDefinite
from .kernels import Kernel, as_inputs
from .linalg import pivoted_cholesky


@dataclass(frozen=True)
class ComplexDataset:
    """Complex input vectors (n, d) paired with complex scalar outputs (n,)."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        X = as_inputs(self.inputs)
        y = np.asarray(self.outputs, dtype=complex).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{X.shape[0]} inputs but {y.shape[0]} outputs")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def __len__(self):
        return self.n

    def subset(self, index):
        return ComplexDataset(self.inputs[index], self.outputs[index])

    def append(self, x, y):
        x = np.asarray(x, dtype=complex).reshape(1, -1)
        if x.shape[1] != self.dim:
            raise DimensionMismatch(f"input has dimension {x.shape[1]}, dataset has {self.dim}")
        return ComplexDataset(np.vstack([self.inputs, x]), np.append(self.outputs, complex(y)))

    def to_csv(self, path):
        d = self.dim
        header = [f"x_re_{k}" for k in range(d)] + [f"x_im_{k}" for k in range(d)] + ["y_re", "y_im"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for x, y in zip(self.inputs, self.outputs):
                writer.writerow([repr(float(v)) for v in (*x.real, *x.imag, y.real, y.imag)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: missing header row")
            rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
        d = sum(1 for h in header if h.startswith("x_re_"))
        expected = [f"x_re_{k}" for k in range(d)] + [f"x_im_{k}" for k in range(d)] + ["y_re", "y_im"]
        if header != expected:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = rows.reshape(-1, 2 * d + 2)
        X = rows[:, :d] + 1j * rows[:, d : 2 * d]
        y = rows[:, 2 * d] + 1j * rows[:, 2 * d + 1]
        return cls(X, y)


@dataclass(frozen=True)
class PosteriorPredictive:
    """Posterior mean, variances and (optionally) full covariance at test inputs."""

    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray = None


class GprModel:
    """A fitted proper complex GP.  Immutable; `append` returns a new model."""

    def __init__(self, dataset, kernel, noise_var, factor, whitened, jitter=0.0):
        self.dataset = dataset
        self.kernel = kernel
        self.noise_var = float(noise_var)
        self.factor = factor
        self.whitened = whitened
        self.jitter = jitter

    @property
    def n(self):
        return self.dataset.n

    @cached_property
    def alpha(self):
        """``C^{-1} y``."""
        return linalg.solve_upper(self.factor, self.whitened)

    def covariance_matrix(self):
        X = self.dataset.inputs
        return self.kernel.gram(X) + (self.noise_var + self.jitter) * np.eye(self.n)

    def predict(self, test_inputs, full_cov=True):
        return predict(self, test_inputs, full_cov=full_cov)

    def log_marginal_likelihood(self):
        return log_marginal_likelihood(self)

    def append(self, x, y):
        return append_observation(self, x, y)

    def __repr__(self):
        return f"GprModel(n={self.n}, kernel={self.kernel.kind.value}, noise_var={self.noise_var:.4g})"


def _check_noise(noise_var):
    if not (np.isfinite(noise_var) and noise_var > 0):
        raise ValueError(f"noise_var must be strictly positive, got {noise_var}")


def fit(dataset, kernel, noise_var, capacity=None):
    """Factor ``C = K + noise_var I`` and whiten the outputs.

    Diagonal jitter is added only if the plain factorization fails
    (see `linalg.jittered_cholesky`).
    """
    _check_noise(noise_var)
    if dataset.n < 1:
        raise ValueError("dataset is empty")
    C = kernel.gram(dataset.inputs) + noise_var * np.eye(dataset.n)
    factor, jitter = linalg.jittered_cholesky(C, capacity=capacity)
    whitened = linalg.solve_lower(factor, dataset.outputs)
    return GprModel(dataset, kernel, noise_var, factor, whitened, jitter)


def _test_inputs(model, test_inputs):
    Xs = as_inputs(test_inputs)
    if Xs.shape[1] != model.dataset.dim:
        raise DimensionMismatch(f"test inputs have dimension {Xs.shape[1]}, training inputs {model.dataset.dim}")
    return Xs


def predict(model, test_inputs, full_cov=True):
    """Posterior predictive at ``test_inputs``.

    With ``full_cov=False`` only the marginal variances are computed, which
    keeps memory linear in the number of test points.
    """
    Xs = _test_inputs(model, test_inputs)
    cross = model.kernel(model.dataset.inputs, Xs)  # K(X, X*)
    Z = linalg.solve_lower(model.factor, cross)
    mean = Z.conj().T @ model.whitened
    prior_var = model.kernel.diag(Xs)
    variance = prior_var - np.sum(np.abs(Z) ** 2, axis=0)
    cov = None
    if full_cov:
        cov = model.kernel.gram(Xs) - Z.conj().T @ Z
        cov = 0.5 * (cov + cov.conj().T)
        np.fill_diagonal(cov, variance)
    return PosteriorPredictive(mean, variance, cov)


def log_marginal_likelihood(model):
    """``-y^H C^{-1} y - log det C - n log(pi)``."""
    w = model.whitened
    return -float(np.vdot(w, w).real) - linalg.log_det(model.factor) - model.n * np.log(np.pi)


def _whiten_input(model, x):
    x = np.asarray(x, dtype=complex).reshape(1, -1)
    if x.shape[1] != model.dataset.dim:
        raise DimensionMismatch(f"input has dimension {x.shape[1]}, model has {model.dataset.dim}")
    column = model.kernel(model.dataset.inputs, x)[:, 0]
    return x, linalg.solve_lower(model.factor, column)


def _extend(model, x, y, z):
    diag = model.kernel.diag(x)[0] + model.noise_var + model.jitter
    factor = linalg.extend_factor_solved(model.factor, z, diag)
    mean = np.vdot(z, model.whitened)
    delta = factor.diag[-1]
    whitened = np.append(model.whitened, (complex(y) - mean) / delta)
    return GprModel(model.dataset.append(x, y), model.kernel, model.noise_var, factor, whitened, model.jitter)


def append_observation(model, x, y):
    """Model conditioned on one more observation, via a rank-one factor extension."""
    x, z = _whiten_input(model, x)
    return _extend(model, x, y, z)


def online_step(model, x, y):
    """Predict the mean at ``x`` from the current model, then append ``(x, y)``.

    Returns ``(prediction, new_model)``; the two share one triangular solve.
    """
    x, z = _whiten_input(model, x)
    prediction = complex(np.vdot(z, model.whitened))
    return prediction, _extend(model, x, y, z)


def online_predictions(dataset, kernel, noise_var):
    """Mean at each input given all earlier pairs, for the whole sequence at once.

    Equivalent to chaining `online_step` from an empty model: row ``i`` of
    the Cholesky factor of ``C`` is ``conj(L_i^{-1} K(X[:i], x_i))``, so the
    one-step-ahead means are ``(L - diag L) @ w`` with ``w = L^{-1} y``.
    The first prediction (no data yet) is 0.

    Returns
    -------
    predictions : (n,) complex ndarray
    model : GprModel
        Fitted on the full dataset.
    """
    model = fit(dataset, kernel, noise_var)
    L = model.factor.L
    predictions = np.tril(L, -1) @ model.whitened
    return predictions, model


def _composite_draws(G, count, rng):
    """Draw proper complex vectors with covariance ``G G^H``.

    The stacked real vector ``[f_r; f_j]`` is drawn with factor
    ``R(G) / sqrt(2)``, ``R(G) = [[Re G, -Im G], [Im G, Re G]]``, whose
    outer product is the composite covariance 1/2 [[K_r, -K_j], [K_j, K_r]].
    The 1/2 is the per-component share of the complex variance.
    """
    n, r = G.shape
    R = np.block([[G.real, -G.imag], [G.imag, G.real]]) / np.sqrt(2.0)
    z = rng.standard_normal((count, 2 * r))
    stacked = z @ R.T
    return stacked[:, :n] + 1j * stacked[:, n:]


def sample_prior(kernel, X, count, seed, rtol=1e-12):
    """Draw ``count`` functions from the proper prior ``N(0, K, 0)`` at ``X``.

    The covariance is factored with a pivoted Cholesky that stops at
    ``rtol * max diag``, which copes with the numerically rank-deficient
    Grams of smooth kernels on dense grids.

    Returns
    -------
    (count, n) complex ndarray
    """
    X = as_inputs(X)
    G = pivoted_cholesky(kernel.diag(X), lambda i: kernel(X[i : i + 1], X)[0], rtol=rtol)
    if G.shape[1] == 0:
        raise NotPositiveDefinite("prior covariance has no positive pivot")
    return _composite_draws(G, count, np.random.default_rng(seed))


def sample_posterior(model, test_inputs, count, seed, rtol=1e-12):
    """Draw ``count`` functions from the posterior at ``test_inputs``."""
    post = predict(model, test_inputs, full_cov=True)
    cov = post.covariance
    G = pivoted_cholesky(np.maximum(post.variance, 0.0), lambda i: cov[i], rtol=rtol)
    draws = _composite_draws(G, count, np.random.default_rng(seed)) if G.shape[1] else np.zeros((count, len(post.mean)), complex)
    return post.mean[None, :] + draws
