"""
Stacked-real (multiple-output) form of proper complex GP regression.

A proper complex process ``f = f_r + j f_j`` with Hermitian covariance
``K = K_r + j K_j`` has the real block covariance::

    cov([f_r; f_j]) = [[K_rr, K_rj], [K_jr, K_jj]] = 1/2 [[K_r, -K_j], [K_j, K_r]]

Complex noise of variance sigma^2 puts sigma^2 / 2 on each real component.
This module is deliberately plain (dense 2n x 2n solves) because the test
suite uses it as an independent check of the complex formulation.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, NotHermitian
from .kernels import as_inputs, cross_gram, gram
from .linalg import HERMITIAN_RTOL


@dataclass(frozen=True)
class CompositeRealSystem:
    """Block covariance ``[[K_rr, K_rj], [K_jr, K_jj]]`` and stacked outputs."""

    K_rr: np.ndarray
    K_rj: np.ndarray
    K_jr: np.ndarray
    K_jj: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray = None

    @property
    def n(self):
        return self.K_rr.shape[0]

    @property
    def matrix(self):
        return np.block([[self.K_rr, self.K_rj], [self.K_jr, self.K_jj]])

    @property
    def stacked_outputs(self):
        if self.outputs is None:
            return None
        y = np.asarray(self.outputs, dtype=complex)
        return np.concatenate([y.real, y.imag])

    def to_complex(self):
        """Recover ``K = 2 K_rr - 2j K_rj``."""
        return 2.0 * self.K_rr - 2j * self.K_rj


def composite_blocks(K):
    """Real blocks ``(K_rr, K_rj, K_jr, K_jj)`` of a Hermitian complex covariance."""
    K = np.asarray(K, dtype=complex)
    scale = np.max(np.abs(K)) if K.size else 0.0
    if K.ndim == 2 and K.shape[0] == K.shape[1] and np.max(np.abs(K - K.conj().T), initial=0.0) > HERMITIAN_RTOL * scale:
        raise NotHermitian("complex covariance is not Hermitian")
    K_rr = 0.5 * K.real
    return K_rr, -0.5 * K.imag, 0.5 * K.imag, K_rr


def build_composite(kind, params, X, outputs=None):
    """Stacked-real covariance of the proper process at inputs ``X``."""
    X = as_inputs(X)
    K = gram(kind, params, X)
    K_rr, K_rj, K_jr, K_jj = composite_blocks(K)
    return CompositeRealSystem(K_rr, K_rj, K_jr, K_jj, X, outputs)


def predict_composite(system, noise_var, kind, params, test_input, outputs=None):
    """Stacked-real posterior mean ``(y_r, y_j)`` at one test input.

    Solves with ``C = K_R + (noise_var / 2) I_{2n}``.
    """
    y = system.outputs if outputs is None else outputs
    if y is None:
        raise ValueError("no training outputs")
    y = np.asarray(y, dtype=complex)
    n = system.n
    if y.shape != (n,):
        raise DimensionMismatch(f"system has {n} inputs but {y.shape} outputs")
    x = as_inputs(np.atleast_1d(test_input)[None, :] if np.ndim(test_input) <= 1 else test_input)
    if x.shape != (1, system.inputs.shape[1]):
        raise DimensionMismatch(f"test input must have dimension {system.inputs.shape[1]}")
    k = cross_gram(kind, params, x, system.inputs)[0]
    # cross-covariance of [f_r(x*); f_j(x*)] with [f_r(X); f_j(X)]
    k_rr = 0.5 * k.real
    k_rj = -0.5 * k.imag
    cross = np.block([[k_rr, k_rj], [-k_rj, k_rr]])
    C = system.matrix + 0.5 * noise_var * np.eye(2 * n)
    stacked = np.concatenate([y.real, y.imag])
    coef = sla.solve(C, stacked, assume_a="sym")
    out = cross @ coef
    return float(out[0]), float(out[1])


def kercon_terms(K, v):
    """Both sides of ``v^H K v = v_r^T K_r v_r + v_j^T K_r v_j - 2 v_r^T K_j v_j``."""
    K = np.asarray(K, dtype=complex)
    v = np.asarray(v, dtype=complex)
    Kr, Kj = K.real, K.imag
    vr, vj = v.real, v.imag
    direct = np.vdot(v, K @ v)
    expanded = vr @ Kr @ vr + vj @ Kr @ vj - 2.0 * vr @ Kj @ vj
    return direct, expanded
