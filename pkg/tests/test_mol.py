"""Tests for the stacked-real (multiple-output) formulation."""

import numpy as np
import pytest

from cgpr import gpr
from cgpr.errors import DimensionMismatch, NotHermitian
from cgpr.kernels import Kernel, KernelKind, KernelParams, gram
from cgpr.mol import build_composite, composite_blocks, kercon_terms, predict_composite

CP_PARAMS = KernelParams(gamma=1.125, mu=(2 + 2j,), v_r=1.0, v_rj=1.0)


def random_inputs(rng, n, scale=2.0):
    return scale * (rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1)))


class TestBuildComposite:
    def test_real_kernel_has_no_cross_blocks(self):
        X = random_inputs(np.random.default_rng(0), 6)
        sys_ = build_composite(KernelKind.CONVOLUTION_PROPER, KernelParams(mu=(1j,), v_rj=0.0), X)
        assert not np.any(sys_.K_rj) and not np.any(sys_.K_jr)

    def test_roundtrip_to_complex(self):
        X = random_inputs(np.random.default_rng(1), 8)
        sys_ = build_composite(KernelKind.CONVOLUTION_PROPER, CP_PARAMS, X)
        K = gram(KernelKind.CONVOLUTION_PROPER, CP_PARAMS, X)
        np.testing.assert_allclose(sys_.to_complex(), K, atol=1e-13)

    def test_proper_structure(self):
        X = random_inputs(np.random.default_rng(2), 10)
        sys_ = build_composite(KernelKind.CONVOLUTION_PROPER, CP_PARAMS, X)
        np.testing.assert_allclose(sys_.K_rr, sys_.K_jj, atol=1e-13)
        np.testing.assert_allclose(sys_.K_rj, -sys_.K_rj.T, atol=1e-13)
        M = sys_.matrix
        assert M.shape == (20, 20)
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-10 * 20 * np.max(np.diag(M))

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitian):
            composite_blocks(np.array([[1.0, 1j], [1j, 1.0]]))


class TestPredictComposite:
    @pytest.mark.parametrize("kind", [KernelKind.CONVOLUTION_PROPER, KernelKind.COMPLEX_METRIC_GAUSSIAN])
    def test_matches_complex_engine(self, kind):
        rng = np.random.default_rng(3)
        X = random_inputs(rng, 15)
        y = rng.standard_normal(15) + 1j * rng.standard_normal(15)
        noise = 0.05
        sys_ = build_composite(kind, CP_PARAMS, X, y)
        model = gpr.fit(gpr.ComplexDataset(X, y), Kernel(kind, CP_PARAMS), noise)
        for xs in random_inputs(rng, 4):
            yr, yj = predict_composite(sys_, noise, kind, CP_PARAMS, xs)
            ref = gpr.predict(model, xs[None, :]).mean[0]
            assert abs(complex(yr, yj) - ref) <= 1e-9 * max(abs(ref), 1e-12)

    def test_zero_outputs(self):
        X = random_inputs(np.random.default_rng(4), 5)
        sys_ = build_composite(KernelKind.CONVOLUTION_PROPER, CP_PARAMS, X, np.zeros(5))
        assert predict_composite(sys_, 0.1, KernelKind.CONVOLUTION_PROPER, CP_PARAMS, [0.5j]) == (0.0, 0.0)

    def test_dimension_checks(self):
        X = random_inputs(np.random.default_rng(5), 5)
        sys_ = build_composite(KernelKind.CONVOLUTION_PROPER, CP_PARAMS, X, np.ones(5))
        with pytest.raises(DimensionMismatch):
            predict_composite(sys_, 0.1, KernelKind.CONVOLUTION_PROPER, CP_PARAMS, [0.5j, 1.0])
        with pytest.raises(DimensionMismatch):
            predict_composite(sys_, 0.1, KernelKind.CONVOLUTION_PROPER, CP_PARAMS, [0.5j], outputs=np.ones(4))

    def test_uncorrelated_case_uses_same_solve(self):
        rng = np.random.default_rng(6)
        X = random_inputs(rng, 7)
        y = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        p = KernelParams(gamma=0.9, mu=(0j,), v_r=1.0, v_rj=0.0)
        sys_ = build_composite(KernelKind.CONVOLUTION_PROPER, p, X, y)
        xs = np.array([0.3 - 0.2j])
        k = gram(KernelKind.CONVOLUTION_PROPER, p, np.vstack([X, xs[None, :]]))[-1, :-1].real / 2
        C = sys_.K_rr + 0.05 * np.eye(7)
        yr, yj = predict_composite(sys_, 0.1, KernelKind.CONVOLUTION_PROPER, p, xs)
        assert yr == pytest.approx(k @ np.linalg.solve(C, y.real), rel=1e-10)
        assert yj == pytest.approx(k @ np.linalg.solve(C, y.imag), rel=1e-10)


class TestKercon:
    def test_real_expansion(self):
        rng = np.random.default_rng(7)
        X = random_inputs(rng, 12)
        K = gram(KernelKind.CONVOLUTION_PROPER, CP_PARAMS, X)
        maxdiag = np.max(np.diag(K).real)
        for _ in range(20):
            v = rng.standard_normal(12) + 1j * rng.standard_normal(12)
            direct, expanded = kercon_terms(K, v)
            assert abs(direct.imag) <= 1e-10 * np.vdot(v, v).real * maxdiag
            assert direct.real >= -1e-10 * np.vdot(v, v).real * maxdiag
            assert abs(direct.real - expanded) <= 1e-10 * max(1.0, abs(expanded))
