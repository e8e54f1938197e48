"""Tests for marginal-likelihood gradients and the optimizer."""

import numpy as np
import pytest

from cgpr import gpr
from cgpr.errors import KernelOverflowWarning, NotPositiveDefinite, UnknownHyperparameter
from cgpr.hyperlearn import (
    LOG_POSITIVE,
    REAL,
    HyperParameter,
    HyperSpec,
    OptimizeOptions,
    likelihood_gradient,
    maximize,
    pack,
    unpack,
)
from cgpr.kernels import Kernel, KernelKind, KernelParams


def make_data(n, seed=0, d=1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return gpr.ComplexDataset(X, y)


def smooth_data(n, seed=0, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-3, 3, (n, 1)) + 1j * rng.uniform(-3, 3, (n, 1))
    f = gpr.sample_prior(Kernel(KernelKind.COMPLEX_METRIC_GAUSSIAN, KernelParams(gamma=2.0)), X, 1, seed)[0]
    y = f + noise * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    return gpr.ComplexDataset(X, y)


def lml_at(data, kind, spec, theta, params, noise):
    p, nv = unpack(spec, theta, params, noise)
    return gpr.log_marginal_likelihood(gpr.fit(data, Kernel(kind, p), nv))


def fd_gradient(data, kind, spec, theta, params, noise, h=1e-6):
    g = np.empty(len(theta))
    for i in range(len(theta)):
        e = np.zeros(len(theta))
        e[i] = h
        g[i] = (lml_at(data, kind, spec, theta + e, params, noise) - lml_at(data, kind, spec, theta - e, params, noise)) / (2 * h)
    return g


class TestHyperSpec:
    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            HyperSpec((("gamma", LOG_POSITIVE), ("gamma", LOG_POSITIVE)))

    def test_log_domain_only_for_positive(self):
        with pytest.raises(ValueError):
            HyperSpec((("mu_re_0", LOG_POSITIVE),))

    def test_unresolvable_id(self):
        spec = HyperSpec((("v_rj", REAL),))
        with pytest.raises(UnknownHyperparameter):
            spec.validate(KernelKind.COMPLEX_METRIC_GAUSSIAN, 1)

    def test_dict_roundtrip(self):
        spec = HyperSpec.default(KernelKind.CONVOLUTION_PROPER, 1)
        assert HyperSpec.from_dict(spec.to_dict()) == spec
        assert spec.names == ["gamma", "mu_re_0", "mu_im_0", "v_r", "v_rj", "noise_var"]

    def test_pack_unpack(self):
        spec = HyperSpec.default(KernelKind.CONVOLUTION_PROPER, 1)
        params = KernelParams(gamma=2.0, mu=(1 - 1j,), v_r=0.5, v_rj=-0.3)
        theta = pack(spec, params, 0.1)
        np.testing.assert_allclose(theta, [np.log(2.0), 1.0, -1.0, 0.5, -0.3, np.log(0.1)])
        p, nv = unpack(spec, theta, KernelParams(), 1.0)
        assert p.gamma == pytest.approx(2.0) and p.mu == pytest.approx((1 - 1j,)) and nv == pytest.approx(0.1)


class TestGradient:
    def test_noise_component_zero_outputs(self):
        data = make_data(5)
        zero = gpr.ComplexDataset(data.inputs, np.zeros(5))
        kernel = Kernel(KernelKind.CONVOLUTION_PROPER, KernelParams(gamma=0.8, mu=(1j,), v_r=1.0, v_rj=0.6))
        model = gpr.fit(zero, kernel, 0.3)
        g = likelihood_gradient(model, HyperSpec((("noise_var", REAL),)))
        lam = np.linalg.eigvalsh(kernel.gram(data.inputs) + 0.3 * np.eye(5))
        assert g[0] < 0
        assert g[0] == pytest.approx(-np.sum(1 / lam), rel=1e-12)

    @pytest.mark.parametrize("kind", list(KernelKind))
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(1)
        for trial in range(4):
            data = make_data(8, seed=trial, d=1)
            data = gpr.ComplexDataset(0.6 * data.inputs, data.outputs)
            params = KernelParams(
                gamma=float(np.exp(rng.uniform(-0.5, 1))),
                mu=(complex(rng.uniform(-1, 1), rng.uniform(-1, 1)),),
                v_r=float(rng.uniform(0.5, 1.5)),
                v_rj=float(rng.uniform(-1, 1)),
                amplitude=float(np.exp(rng.uniform(-0.3, 0.3))),
            )
            spec = HyperSpec.default(kind, 1)
            noise = float(np.exp(rng.uniform(-2, 0)))
            model = gpr.fit(data, Kernel(kind, params), noise)
            g = likelihood_gradient(model, spec)
            fd = fd_gradient(data, kind, spec, pack(spec, params, noise), params, noise)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * np.max(np.abs(fd)))

    def test_natural_domain_chain_rule(self):
        data = make_data(6, seed=3)
        params = KernelParams(gamma=1.7)
        spec = HyperSpec((("gamma", REAL), ("noise_var", REAL)))
        model = gpr.fit(data, Kernel(KernelKind.COMPLEX_METRIC_GAUSSIAN, params), 0.2)
        g = likelihood_gradient(model, spec)
        fd = fd_gradient(data, KernelKind.COMPLEX_METRIC_GAUSSIAN, spec, np.array([1.7, 0.2]), params, 0.2)
        np.testing.assert_allclose(g, fd, rtol=1e-6)

    def test_zero_at_bisected_stationary_point(self):
        data = smooth_data(25, seed=4)
        kind = KernelKind.COMPLEX_METRIC_GAUSSIAN
        spec = HyperSpec((("gamma", LOG_POSITIVE),))
        params = KernelParams()

        def fd(t):
            return fd_gradient(data, kind, spec, np.array([t]), params, 0.01, h=1e-5)[0]

        lo, hi = np.log(0.05), np.log(50.0)
        assert fd(lo) > 0 > fd(hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if fd(mid) > 0 else (lo, mid)
        t = 0.5 * (lo + hi)
        model = gpr.fit(data, Kernel(kind, params.set("gamma", t)), 0.01)
        assert abs(likelihood_gradient(model, spec)[0]) <= 1e-6


class TestMaximize:
    def setup_method(self):
        self.data = smooth_data(30, seed=5)
        self.spec = HyperSpec((("gamma", LOG_POSITIVE), ("noise_var", LOG_POSITIVE)))

    def test_trace_nondecreasing_and_converges(self):
        params, noise, report = maximize(self.data, KernelKind.COMPLEX_METRIC_GAUSSIAN, self.spec, OptimizeOptions(seed=0))
        values = [L for _, L in report.trace]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        assert report.converged and report.grad_norm <= 1e-6
        assert report.log_likelihood == pytest.approx(values[-1])
        assert params.gamma == report.params.gamma and noise == report.noise_var

    def test_optimal_start_exits_quickly(self):
        _, _, report = maximize(self.data, KernelKind.COMPLEX_METRIC_GAUSSIAN, self.spec, OptimizeOptions(seed=0))
        theta = pack(self.spec, report.params, report.noise_var)
        _, _, again = maximize(self.data, KernelKind.COMPLEX_METRIC_GAUSSIAN, self.spec, OptimizeOptions(seed=0), starts=[theta])
        assert again.converged and again.iterations <= 2

    def test_zero_iterations(self):
        base = KernelParams(gamma=0.7)
        params, noise, report = maximize(
            self.data, KernelKind.COMPLEX_METRIC_GAUSSIAN, self.spec, OptimizeOptions(max_iter=0, restarts=1), base_params=base, noise_var=0.3
        )
        assert params.gamma == pytest.approx(0.7) and noise == pytest.approx(0.3)
        assert not report.converged and report.iterations == 0

    def test_log_vs_natural_domain(self):
        # one-dimensional slice that is concave around the optimum
        kind = KernelKind.COMPLEX_METRIC_GAUSSIAN
        opts = OptimizeOptions(restarts=1, max_iter=500, grad_tol=1e-8, max_move=0.5)
        base = KernelParams(gamma=1.0)
        _, _, a = maximize(self.data, kind, HyperSpec((("gamma", LOG_POSITIVE),)), opts, base_params=base, noise_var=0.01)
        _, _, b = maximize(self.data, kind, HyperSpec((("gamma", REAL),)), opts, base_params=base, noise_var=0.01)
        assert a.log_likelihood == pytest.approx(b.log_likelihood, abs=1e-6)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            maximize(self.data.subset([0]), KernelKind.COMPLEX_METRIC_GAUSSIAN, self.spec)
        with pytest.raises(ValueError):
            maximize(self.data, KernelKind.COMPLEX_METRIC_GAUSSIAN, HyperSpec(()))

    def test_failure_carries_params(self):
        data = gpr.ComplexDataset(np.array([[30j], [31j], [32j]]), np.ones(3))
        spec = HyperSpec((("gamma", LOG_POSITIVE),))
        with pytest.raises(NotPositiveDefinite) as info, pytest.warns(KernelOverflowWarning):
            maximize(data, KernelKind.PRIOR_ART_COMPLEX_GAUSSIAN, spec, OptimizeOptions(restarts=1), noise_var=0.1, starts=[np.array([0.0])])
        assert info.value.params["kernel"].gamma == pytest.approx(1.0)

    def test_deterministic(self):
        runs = [maximize(self.data, KernelKind.COMPLEX_METRIC_GAUSSIAN, self.spec, OptimizeOptions(seed=3))[2] for _ in range(2)]
        assert runs[0].to_dict() == runs[1].to_dict()

    def test_recovers_mu(self):
        # the likelihood is multimodal in mu; restarts must find the right mode
        rng = np.random.default_rng(2)
        truth = KernelParams(gamma=1.125, mu=(2 + 2j,), v_r=1.0, v_rj=1.0)
        X = rng.uniform(-6, 5, (150, 1)) + 1j * rng.uniform(-6, 5, (150, 1))
        f = gpr.sample_prior(Kernel(KernelKind.CONVOLUTION_PROPER, truth), X, 1, 0)[0]
        y = f + 0.1 * (rng.standard_normal(150) + 1j * rng.standard_normal(150)) / np.sqrt(2)
        spec = HyperSpec((("gamma", LOG_POSITIVE), ("mu_re_0", REAL), ("mu_im_0", REAL), ("noise_var", LOG_POSITIVE)))
        params, _, _ = maximize(
            gpr.ComplexDataset(X, y), KernelKind.CONVOLUTION_PROPER, spec, OptimizeOptions(seed=0), base_params=KernelParams(mu=(0j,), v_rj=1.0)
        )
        assert abs(params.mu[0].real - 2) < 0.35 and abs(params.mu[0].imag - 2) < 0.35
