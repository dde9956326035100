"""Martingale-problem machinery: test functions, generator process, z-tests,
quadratic variation.

Ground truth: with K == 1, mu == 0, sigma == 1 the state is a discrete
Brownian motion and Mf is an exact discrete-time martingale up to the
left-point Riemann bias of order dt, far below the detection threshold at
the sizes used here.
"""
import math

import numpy as np
import pytest

from volterra_lab.coefficients import make_coefficient
from volterra_lab.engine import SimConfig, make_initial_curve, simulate
from volterra_lab.errors import InsufficientPaths
from volterra_lab.kernels import make_kernel
from volterra_lab.martingale import (
    MartingaleTestReport,
    TestFunction,
    bump_test_function,
    battery_scale,
    compute_Mf,
    compute_Mf_ensemble,
    default_battery,
    generator,
    martingale_test,
    qv_test,
    run_battery,
)

ZERO = make_coefficient("constant", c=0.0)
ONE = make_coefficient("constant", c=1.0)
K1 = make_kernel("constant", horizon=1.0)


@pytest.fixture(scope="module")
def brownian():
    cfg = SimConfig(T=1.0, steps=256, paths=8000, seed=501)
    return simulate(cfg, ZERO, ONE, K1, K1)


class TestTestFunction:
    def test_bump_edges_vanish(self):
        f = bump_test_function(2.0)
        for z in (2.0, -2.0, 2.5, -9.0):
            assert f.f(z) == 0.0
            assert f.fprime(z) == 0.0
            assert f.fsecond(z) == 0.0

    def test_bump_center(self):
        f = bump_test_function(2.0)
        assert f.f(0.0) == pytest.approx(1.0)
        assert f.fprime(0.0) == pytest.approx(0.0, abs=1e-14)

    def test_derivative_consistency_enforced(self):
        with pytest.raises(ValueError, match="derivative"):
            TestFunction(
                f=lambda z: np.where(np.abs(z) < 1, (1 - np.asarray(z) ** 2) ** 3, 0.0),
                fprime=lambda z: np.where(np.abs(z) < 1, -6 * np.asarray(z) * (1 - np.asarray(z) ** 2) ** 2, 0.0),
                fsecond=lambda z: np.zeros_like(np.asarray(z, dtype=float)),  # wrong
                support_radius=1.0,
            )

    def test_edge_vanishing_enforced(self):
        with pytest.raises(ValueError, match="vanish"):
            TestFunction(
                f=lambda z: np.ones_like(np.asarray(z, dtype=float)),
                fprime=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
                fsecond=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
                support_radius=1.0,
            )

    def test_default_battery_size(self):
        fns = default_battery(3.0)
        assert len(fns) == 6
        assert len({f.label for f in fns}) == 6


class TestGenerator:
    def test_direct_substitution(self):
        mu = make_coefficient("constant", c=1.0)
        sig = make_coefficient("constant", c=2.0)
        f = bump_test_function(3.0, (0.0, 0.0, 1.0))
        z = np.linspace(-2.5, 2.5, 11)
        out = generator(mu, sig, f, 0.3, z, z)
        expected = f.fprime(z) + 0.5 * 4.0 * f.fsecond(z)
        assert np.allclose(out, expected, rtol=0, atol=1e-14)

    def test_degenerate_diffusion(self):
        mu = make_coefficient("sin_tx")
        f = bump_test_function(2.0)
        x = np.array([0.4, -0.2])
        out = generator(mu, ZERO, f, 0.7, x, x)
        assert np.allclose(out, np.sin(0.7 * x) * f.fprime(x), atol=1e-15)

    def test_linearity_in_f(self):
        mu = make_coefficient("linear", a=0.2, b=0.5)
        sig = make_coefficient("sqrt_abs")
        fa = bump_test_function(2.0, (1.0, 0.5))
        fb = bump_test_function(2.0, (0.0, 0.0, 2.0))
        fab = bump_test_function(2.0, (3.0, 1.5, 4.0))  # 3*fa + 2*fb
        z = np.linspace(-1.9, 1.9, 17)
        lhs = generator(mu, sig, fab, 0.1, z, z)
        rhs = 3.0 * generator(mu, sig, fa, 0.1, z, z) + 2.0 * generator(mu, sig, fb, 0.1, z, z)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-13)


class TestComputeMf:
    def test_zero_function_is_zero(self, brownian):
        f = bump_test_function(3.0, (0.0,))
        mf = compute_Mf_ensemble(brownian, ZERO, ONE, f)
        assert np.all(mf == 0.0)

    def test_bundle_matches_ensemble(self, brownian):
        f = bump_test_function(3.0)
        mf_ens = compute_Mf_ensemble(brownian, ZERO, ONE, f)
        mf_b = compute_Mf(brownian.bundle(5), ZERO, ONE, f)
        assert np.allclose(mf_b, mf_ens[5], rtol=0, atol=1e-12)

    def test_brownian_increments_centered(self, brownian):
        f = bump_test_function(3.0)
        mf = compute_Mf_ensemble(brownian, ZERO, ONE, f)
        inc = mf[:, -1] - mf[:, 0]
        se = float(np.std(inc, ddof=1)) / math.sqrt(inc.shape[0])
        assert abs(float(np.mean(inc))) < 3 * se

    def test_deterministic_drift_fundamental_theorem(self):
        # sigma == 0, mu == 1, K == 1: Z_t = t and Mf_T ~ f(0) + O(dt)
        cfg = SimConfig(T=1.0, steps=512, paths=4, seed=2)
        ens = simulate(cfg, ONE, ZERO, K1, K1)
        f = bump_test_function(2.0)
        mf = compute_Mf_ensemble(ens, ONE, ZERO, f)
        sup_f2 = float(np.max(np.abs(f.fsecond(np.linspace(-2, 2, 801)))))
        bound = 0.75 * sup_f2 * ens.dt  # left-rule bias for integral of f'
        assert abs(mf[0, -1] - f.f(0.0)) <= max(bound, 1e-10)


class TestMartingaleTest:
    def test_brownian_passes(self, brownian):
        f = bump_test_function(1.2 * battery_scale(brownian) / 1.3)
        rep = martingale_test(brownian, ZERO, ONE, f)
        assert rep.passed, rep.entries
        assert rep.max_abs_z <= rep.threshold

    def test_corrupted_generator_detected(self, brownian):
        def broken(mu, sigma, f, t, x, z):
            sig = np.asarray(sigma.eval(t, x), dtype=float)
            return (np.asarray(mu.eval(t, x), dtype=float) * f.fprime(z)
                    + sig ** 2 * f.fsecond(z))  # missing the 1/2

        reports = run_battery(brownian, ZERO, ONE, gen_fn=broken)
        worst = max(r.max_abs_z for r in reports)
        assert worst > 10.0
        assert any(not r.passed for r in reports)

    def test_degenerate_model_all_zero(self):
        cfg = SimConfig(T=1.0, steps=64, paths=1200, seed=8)
        ens = simulate(cfg, ZERO, ZERO, K1, K1)
        f = bump_test_function(1.0)
        rep = martingale_test(ens, ZERO, ZERO, f)
        assert rep.passed
        assert rep.max_abs_z == 0.0

    def test_insufficient_paths(self, brownian):
        f = bump_test_function(2.0)
        cfg = SimConfig(T=1.0, steps=32, paths=64, seed=3)
        small = simulate(cfg, ZERO, ONE, K1, K1)
        with pytest.raises(InsufficientPaths):
            martingale_test(small, ZERO, ONE, f)

    def test_battery_passes_brownian(self, brownian):
        reports = run_battery(brownian, ZERO, ONE)
        assert all(isinstance(r, MartingaleTestReport) for r in reports)
        assert all(r.passed for r in reports)
        assert max(r.max_abs_z for r in reports) <= 4.0


class TestQv:
    def test_brownian_qv(self):
        cfg = SimConfig(T=1.0, steps=1024, paths=2000, seed=4)
        ens = simulate(cfg, ZERO, ONE, K1, K1, keep=("A", "M"))
        rep = qv_test(ens, ONE)
        assert rep.passed
        assert rep.measured["median_relative_error"] <= 0.05

    def test_geometric_sigma(self):
        sig = make_coefficient("linear", a=0.0, b=1.0)
        cfg = SimConfig(T=1.0, steps=1024, paths=2000, seed=5,
                        x0=make_initial_curve("constant", c=1.0))
        ens = simulate(cfg, ZERO, sig, K1, K1, keep=("A", "M"))
        rep = qv_test(ens, sig)
        assert rep.passed
        assert rep.measured["median_relative_error"] <= 0.05

    def test_zero_sigma(self):
        cfg = SimConfig(T=1.0, steps=128, paths=1100, seed=6)
        ens = simulate(cfg, ZERO, ZERO, K1, K1)
        rep = qv_test(ens, ZERO)
        assert rep.passed
        assert rep.measured["median_relative_error"] == 0.0

    def test_error_halves_with_refinement(self):
        errs = {}
        for N in (256, 512, 1024):
            cfg = SimConfig(T=1.0, steps=N, paths=1500, seed=7)
            ens = simulate(cfg, ZERO, ONE, K1, K1, keep=("A", "M"))
            errs[N] = qv_test(ens, ONE).measured["median_relative_error"]
        slope = np.polyfit(np.log([256, 512, 1024]),
                           np.log([errs[256], errs[512], errs[1024]]), 1)[0]
        assert -0.7 <= slope <= -0.3
