import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import golden_section_min
from p4ip.anscombe import anscombe_forward
from p4ip.denoisers import (FunctionDenoiser, gaussian_filter_denoiser, identity_denoiser,
                            tikhonov_prox_denoiser)
from p4ip.imaging import bin_down
from p4ip.operators import convolution, identity
from p4ip.optim import LbfgsConfig
from p4ip.solver import (ANSCOMBE_LAMBDA, SolverError, SolverParams, anscombe_matching_offset,
                         p4ip_multi_run, p4ip_run, restore_with_binning, transform_curve,
                         x_update_denoise, x_update_general, x_update_multi)


class TestClosedForm:
    def test_golden_ratio(self):
        x = x_update_denoise(np.array([1.0]), np.array([2.0]), np.array([0.0]), 1.0)
        # y = 1, v - u = 2, lambda = 1:  -1/x + 1 + (x - 2) = 0  =>  x^2 - x - 1 = 0
        assert x[0] == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-15)

    def test_zero_counts(self):
        x = x_update_denoise(np.zeros(3), np.array([-1.0, 0.5, 3.0]), np.zeros(3), 2.0)
        np.testing.assert_allclose(x, [0.0, 0.0, 3.0 - 0.5], atol=1e-15)

    @settings(max_examples=200)
    @given(st.floats(1e-3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 1000))
    def test_nonnegative_and_stationary(self, lam, w, y):
        x = float(x_update_denoise(np.array([y], float), np.array([w]), np.array([0.0]), lam)[0])
        assert x >= 0
        if y > 0:
            residual = -y / x + 1 + lam * (x - w)
            assert abs(residual) <= 1e-9 * (1 + y / x + lam * abs(x) + lam * abs(w))

    def test_matches_brute_force(self, rng):
        n = 2000
        lam = rng.uniform(0.01, 10, n)
        w = rng.uniform(-5, 50, n)
        y = rng.integers(0, 101, n).astype(float)
        x = x_update_denoise(y, w, np.zeros(n), lam)
        np.testing.assert_allclose(x, golden_section_min(y, w, lam), atol=1e-8, rtol=0)

    def test_rejects_bad_lambda(self):
        with pytest.raises(ValueError):
            x_update_denoise(np.ones(2), np.ones(2), np.ones(2), 0.0)

    def test_multi_reduces_to_single(self, rng):
        y = rng.poisson(4, (6, 6)).astype(float)
        v, u = rng.random((6, 6)) * 5, rng.random((6, 6))
        np.testing.assert_array_equal(x_update_multi(y, [v], [u], 0.7), x_update_denoise(y, v, u, 0.7))

    def test_multi_stationarity(self, rng):
        y = rng.integers(1, 30, (5, 5)).astype(float)
        vs = [rng.random((5, 5)) * 10 for _ in range(3)]
        us = [rng.standard_normal((5, 5)) for _ in range(3)]
        lam = 0.4
        x = x_update_multi(y, vs, us, lam)
        grad = -y / x + 1 + lam * sum(x - v + u for v, u in zip(vs, us))
        np.testing.assert_allclose(grad, 0, atol=1e-10)


class TestGeneral:
    def test_identity_agrees_with_closed_form(self, rng):
        for _ in range(5):
            y = rng.poisson(3.0, (8, 8)).astype(float)
            v, u = rng.random((8, 8)) * 6 - 1, rng.standard_normal((8, 8)) * 0.3
            lam = float(rng.uniform(0.1, 3))
            x = x_update_general(y, v, u, lam, identity(), y.copy(), LbfgsConfig(grad_tol=1e-12))
            np.testing.assert_allclose(x, x_update_denoise(y, v, u, lam), atol=1e-5)

    def test_blur_stationarity(self, rng):
        H = convolution("uniform9")
        y = rng.poisson(5.0, (16, 16)).astype(float) + 1
        v = rng.random((16, 16)) * 5 + 1
        u = np.zeros_like(v)
        lam = 0.5
        x = x_update_general(y, v, u, lam, H, y.copy(), LbfgsConfig(grad_tol=1e-10, max_iters=500))
        g = H.adjoint(1 - y / H.apply(x)) + lam * (x - v + u)
        free = x > 1e-9
        assert np.max(np.abs(g[free])) < 1e-6
        assert np.all(g[~free] >= -1e-6)


class TestTransformCurve:
    def test_anscombe_identity(self):
        y = np.arange(0, 1001) * 0.1
        diff = transform_curve(ANSCOMBE_LAMBDA, anscombe_matching_offset(), y) - anscombe_forward(y)
        np.testing.assert_allclose(diff, 2 * math.sqrt(3 / 8), atol=1e-12, rtol=0)

    @pytest.mark.parametrize("offset", [-3.0, 0.0, 5.0, 20.0])
    def test_monotone(self, offset):
        c = transform_curve(0.25, offset, np.linspace(0, 50, 501))
        assert np.all(np.diff(c) > 0)


class TestParams:
    def test_presets(self):
        p = SolverParams.preset(2.0)
        assert (p.lambda0, p.lambda_step, p.beta, p.iters) == (0.25, 1.05, 1.0, 60)
        q = SolverParams.preset(2.0, deblurring=True, iters=5)
        assert (q.lambda0, q.lambda_step, q.iters) == (0.1, 1.03, 5)

    def test_schedule(self):
        p = SolverParams(lambda0=0.5, lambda_step=2.0, beta=2.0)
        assert p.lambda_at(3) == 4.0
        assert p.sigma_at(3) == pytest.approx(math.sqrt(0.5))
        assert p.sigma_at(0, beta=0.5) == 1.0

    @pytest.mark.parametrize("kwargs", [dict(lambda0=0), dict(lambda0=1, lambda_step=0.9),
                                        dict(lambda0=1, beta=0), dict(lambda0=1, iters=-1),
                                        dict(lambda0=1, output="w")])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            SolverParams(**kwargs)


class TestRun:
    def test_tikhonov_oracle(self, rng):
        y = rng.poisson(3.0, (8, 8)).astype(float)
        params = SolverParams(lambda0=1.0, iters=500)
        out, report = p4ip_run(y, None, tikhonov_prox_denoiser(), params)
        target = golden_section_min(y, np.zeros_like(y), np.ones_like(y))
        assert np.max(np.abs(out - target)) < 1e-4
        assert report.iters == 500 and len(report.sigmas) == 500

    def test_identity_denoiser_fixed_point(self, rng):
        # with D = I and y > 0 the iteration settles at x = v = y
        y = rng.integers(1, 10, (6, 6)).astype(float)
        out, report = p4ip_run(y, None, identity_denoiser(), SolverParams(lambda0=1.0, iters=300))
        np.testing.assert_allclose(out, y, atol=1e-6)
        assert report.primal_residuals[-1] < 1e-8

    def test_report_schedule(self, rng):
        y = rng.poisson(2.0, (8, 8)).astype(float)
        params = SolverParams(lambda0=0.5, lambda_step=1.1, iters=4)
        _, report = p4ip_run(y, None, gaussian_filter_denoiser(), params)
        np.testing.assert_allclose(report.lambdas, [0.5 * 1.1**k for k in range(4)])
        np.testing.assert_allclose(report.sigmas, [math.sqrt(1 / lam) for lam in report.lambdas])

    def test_output_x(self, rng):
        y = rng.poisson(2.0, (8, 8)).astype(float)
        base = dict(lambda0=0.5, iters=3, keep_iterates=True)
        v_out, rep = p4ip_run(y, None, gaussian_filter_denoiser(), SolverParams(**base))
        x_out, _ = p4ip_run(y, None, gaussian_filter_denoiser(), SolverParams(output="x", **base))
        np.testing.assert_array_equal(v_out, rep.iterates[-1][1][0])
        np.testing.assert_array_equal(x_out, rep.iterates[-1][0])

    def test_denoiser_failure_wrapped(self, rng):
        calls = []

        def flaky(img, sigma):
            calls.append(sigma)
            if len(calls) == 3:
                raise RuntimeError("boom")
            return img

        with pytest.raises(SolverError) as err:
            p4ip_run(np.ones((4, 4)), None, FunctionDenoiser(flaky), SolverParams(lambda0=1, iters=10))
        assert err.value.report.iters == 2
        assert "boom" in err.value.report.error

    def test_deblur_run_nonnegative(self, rng):
        clean = np.zeros((24, 24))
        clean[6:18, 6:18] = 3.0
        H = convolution("uniform9")
        y = rng.poisson(np.maximum(H.apply(clean), 0)).astype(float)
        out, report = p4ip_run(y, H, gaussian_filter_denoiser(), SolverParams.preset(3.0, True, iters=5))
        assert out.shape == y.shape and np.all(np.isfinite(out))
        assert report.method == "p4ip-deblur" and len(report.inner_iterations) == 5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            p4ip_run(np.ones((4, 4)), convolution("uniform9", shape=(5, 5)), identity_denoiser(),
                     SolverParams(lambda0=1))


class TestMultiPrior:
    def params(self, **kw):
        return SolverParams(lambda0=0.3, lambda_step=1.05, iters=8, keep_iterates=True, **kw)

    def test_single_prior_bit_identical(self, rng):
        y = rng.poisson(2.0, (16, 16)).astype(float)
        d = gaussian_filter_denoiser()
        a, ra = p4ip_run(y, None, d, self.params())
        b, rb = p4ip_multi_run(y, None, [(d, 1.0)], self.params())
        np.testing.assert_array_equal(a, b)
        for (xa, va, ua), (xb, vb, ub) in zip(ra.iterates, rb.iterates):
            np.testing.assert_array_equal(xa, xb)
            np.testing.assert_array_equal(va[0], vb[0])
            np.testing.assert_array_equal(ua[0], ub[0])

    def test_identical_priors_stay_equal(self, rng):
        y = rng.poisson(2.0, (16, 16)).astype(float)
        d = gaussian_filter_denoiser()
        _, report = p4ip_multi_run(y, None, [(d, 1.0), (d, 1.0)], self.params())
        for _, vs, us in report.iterates:
            np.testing.assert_array_equal(vs[0], vs[1])
            np.testing.assert_array_equal(us[0], us[1])

    def test_per_prior_sigmas(self, rng):
        y = rng.poisson(2.0, (8, 8)).astype(float)
        _, report = p4ip_multi_run(y, None, [(identity_denoiser(), 1.0), (identity_denoiser(), 4.0)],
                                   self.params())
        s1, s2 = report.sigmas[0]
        assert s2 == pytest.approx(2 * s1)

    def test_rejects_bad_beta(self):
        with pytest.raises(ValueError):
            p4ip_multi_run(np.ones((4, 4)), None, [(identity_denoiser(), 0.0)], self.params())


class TestBinning:
    def test_constant_scene(self):
        y = np.full((12, 12), 2.0)
        out, report = restore_with_binning(y, identity_denoiser(), SolverParams(lambda0=0.5, iters=200), 3)
        assert out.shape == (12, 12)
        np.testing.assert_allclose(out, 2.0, atol=1e-5)
        assert report.method == "p4ip-bin"

    def test_factor_one_matches_plain(self, rng):
        y = rng.poisson(1.0, (12, 12)).astype(float)
        params = SolverParams(lambda0=0.5, lambda_step=1.05, iters=5)
        a, _ = restore_with_binning(y, gaussian_filter_denoiser(), params, 1)
        b, _ = p4ip_run(y, None, gaussian_filter_denoiser(), params)
        np.testing.assert_array_equal(a, b)

    def test_lambda_rescaled(self, rng):
        y = rng.poisson(1.0, (9, 9)).astype(float)
        _, report = restore_with_binning(y, identity_denoiser(), SolverParams(lambda0=0.9, iters=1), 3)
        assert report.lambdas[0] == pytest.approx(0.1)

    def test_conservation(self, rng):
        y = rng.poisson(0.2, (30, 30)).astype(float)
        assert bin_down(y, 3).sum() == y.sum()
