"""Kernel evaluation, singular quadrature and assumption certificates.

Expected values come from closed-form antiderivatives:
  * integral of (1-s)^(-1/4) over [0, 1] = 4/3          (power law)
  * integral of (1-s)^(-1/4) over [1/2, 1] = (4/3) 2^(-3/4)
  * L2 norm of u^(-1/4) on [0, 1] = sqrt(2)
"""
import math

import numpy as np
import pytest

from volterra_lab.errors import (
    DivergentIntegral,
    DomainError,
    GridTooCoarse,
    MissingDerivative,
    SingularityError,
)
from volterra_lab.kernels import (
    KernelSpec,
    RegularityParams,
    cell_integral,
    check_base_integrability,
    check_regularity,
    check_structural,
    dyadic_pair_grid,
    kernel_eval,
    lq_norm,
    make_kernel,
)


@pytest.fixture
def const1():
    return make_kernel("constant", horizon=2.0, c=1.0)


@pytest.fixture
def frac025():
    return make_kernel("fractional", horizon=2.0, alpha=0.25)


def frac_no_closed_form(alpha, horizon=2.0):
    """Fractional kernel with the power-law shortcut stripped, so integrals
    must go through the graded quadrature path."""
    return KernelSpec(
        horizon=horizon,
        profile=lambda u: np.asarray(u, dtype=float) ** (-alpha),
        singularity_alpha=alpha,
        label=f"fractional-quad(alpha={alpha})",
    )


class TestEval:
    def test_constant(self, const1):
        assert kernel_eval(const1, 0.3, 0.7) == 1.0

    def test_fractional_unit_gap(self, frac025):
        assert kernel_eval(frac025, 0.0, 1.0) == pytest.approx(1.0)

    def test_singular_diagonal_raises(self):
        k = make_kernel("fractional", horizon=1.0, alpha=0.5)
        with pytest.raises(SingularityError):
            kernel_eval(k, 0.5, 0.5)

    def test_constant_diagonal_ok(self, const1):
        assert kernel_eval(const1, 0.5, 0.5) == 1.0

    def test_domain_error(self, const1):
        with pytest.raises(DomainError):
            kernel_eval(const1, 0.8, 0.3)
        with pytest.raises(DomainError):
            kernel_eval(const1, -0.1, 0.3)

    def test_convolution_consistency(self, frac025):
        # two-argument evaluation must agree with the profile exactly
        s = np.linspace(0.0, 0.9, 7)
        t = np.full_like(s, 1.3)
        via_pair = kernel_eval(frac025, s, t)
        via_profile = frac025.profile(t - s)
        assert np.array_equal(via_pair, via_profile)

    def test_vectorized(self, const1):
        out = kernel_eval(const1, np.array([0.1, 0.2]), np.array([0.5, 0.6]))
        assert out.shape == (2,)


class TestCellIntegral:
    def test_constant_cell(self, const1):
        assert cell_integral(const1, 0.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_fractional_full_cell(self, frac025):
        assert cell_integral(frac025, 0.0, 1.0, 1.0) == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_fractional_half_cell(self, frac025):
        expected = (4.0 / 3.0) * 0.5 ** 0.75
        assert cell_integral(frac025, 0.5, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_graded_quadrature_matches_antiderivative(self):
        # same integrals without the closed-form shortcut
        k = frac_no_closed_form(0.25)
        assert cell_integral(k, 0.0, 1.0, 1.0) == pytest.approx(4.0 / 3.0, rel=1e-8)
        assert cell_integral(k, 0.5, 1.0, 1.0) == pytest.approx(
            (4.0 / 3.0) * 0.5 ** 0.75, rel=1e-8
        )

    def test_interior_cell_adaptive(self):
        k = frac_no_closed_form(0.25)
        exact = (4.0 / 3.0) * (0.5 ** 0.75 - 0.25 ** 0.75)
        assert cell_integral(k, 0.5, 0.75, 1.0) == pytest.approx(exact, rel=1e-10)

    def test_exponential_cell(self):
        k = make_kernel("exponential", horizon=1.0, lam=2.0)
        # integral of exp(-2(1-s)) over [0, 1] = (1 - exp(-2)) / 2
        expected = (1.0 - math.exp(-2.0)) / 2.0
        assert cell_integral(k, 0.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-10)

    def test_bad_cell_raises(self, const1):
        with pytest.raises(DomainError):
            cell_integral(const1, 0.5, 0.4, 1.0)
        with pytest.raises(DomainError):
            cell_integral(const1, 0.0, 1.1, 1.0)


class TestLqNorm:
    def test_fractional_l2(self, frac025):
        assert lq_norm(frac025, 1.0, 2.0) == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_constant_l1(self, const1):
        assert lq_norm(const1, 2.0, 1.0) == pytest.approx(2.0)

    def test_divergent(self):
        k = make_kernel("fractional", horizon=1.0, alpha=0.5)
        with pytest.raises(DivergentIntegral):
            lq_norm(k, 1.0, 2.0)

    def test_graded_matches_closed_form(self):
        k = frac_no_closed_form(0.25)
        assert lq_norm(k, 1.0, 2.0) == pytest.approx(math.sqrt(2.0), rel=1e-8)

    def test_steep_l1_finite(self):
        k = make_kernel("fractional", horizon=1.0, alpha=0.9)
        # integral of u^-0.9 over [0, t] = 10 t^0.1
        assert lq_norm(k, 1.0, 1.0) == pytest.approx(10.0, rel=1e-12)

    def test_refinement_stability(self):
        # halving the cells must not move the value beyond ~10x the tolerance
        k = frac_no_closed_form(0.25)
        v1 = lq_norm(k, 1.0, 2.0)
        v2 = math.sqrt(2.0)
        assert abs(v1 - v2) / v2 < 1e-9


class TestBaseIntegrability:
    def test_pass(self, const1, frac025):
        rep = check_base_integrability(const1, frac025, np.linspace(0.25, 2.0, 8))
        assert rep.passed
        assert rep.measured["max_l1_mu"] == pytest.approx(2.0)
        assert rep.measured["max_l2_sigma"] == pytest.approx(math.sqrt(2.0 * 2.0 ** 0.5), rel=1e-10)

    def test_l2_divergent_fails(self, const1):
        bad = make_kernel("fractional", horizon=2.0, alpha=0.5)
        rep = check_base_integrability(const1, bad, [1.0, 2.0])
        assert not rep.passed
        assert rep.worst_ratio == math.inf

    def test_steep_drift_passes(self, const1):
        steep = make_kernel("fractional", horizon=2.0, alpha=0.9)
        rep = check_base_integrability(steep, const1, [1.0, 2.0])
        assert rep.passed


class TestRegularity:
    def test_fractional_admissible(self):
        alpha = 0.25
        p = 16.0
        gamma = 0.5 - alpha - 1.0 / p
        k_mu = make_kernel("constant", horizon=1.0)
        k_sig = make_kernel("fractional", horizon=1.0, alpha=alpha)
        rep = check_regularity(k_mu, k_sig, RegularityParams(p=p, gamma=gamma),
                               dyadic_pair_grid(1.0))
        assert rep.passed
        # tail integral of the diffusion kernel scales exactly like
        # h^(1 - 2 alpha p / (p - 2))
        expected_slope = 1.0 - 2.0 * alpha * p / (p - 2.0)
        assert rep.measured["sigma_tail_slope"] == pytest.approx(expected_slope, abs=1e-3)

    def test_fractional_inadmissible_gamma(self):
        # alpha = 0.45 with p = 16 makes the diffusion increment integral
        # diverge, so gamma = 0.1875 cannot be certified
        k_mu = make_kernel("constant", horizon=1.0)
        k_sig = make_kernel("fractional", horizon=1.0, alpha=0.45)
        rep = check_regularity(k_mu, k_sig, RegularityParams(p=16.0, gamma=0.1875),
                               dyadic_pair_grid(1.0))
        assert not rep.passed

    def test_constant_pair_passes(self):
        # pairs admissible for the constant kernel need 2 gamma p/(p-2) <= 1
        k = make_kernel("constant", horizon=1.0)
        for p, gamma in [(8.0, 0.3), (16.0, 0.2), (12.0, 0.35), (10.0, 0.25)]:
            rep = check_regularity(k, k, RegularityParams(p=p, gamma=gamma),
                                   dyadic_pair_grid(1.0))
            assert rep.passed, (p, gamma)

    def test_constant_pair_fails_when_exponent_exceeds_one(self):
        # gamma so large that h <= C h^e with e > 1 admits no constant
        k = make_kernel("constant", horizon=1.0)
        rep = check_regularity(k, k, RegularityParams(p=6.0, gamma=0.45),
                               dyadic_pair_grid(1.0))
        assert not rep.passed

    def test_too_few_scales(self):
        k = make_kernel("constant", horizon=1.0)
        with pytest.raises(GridTooCoarse):
            check_regularity(k, k, RegularityParams(p=8.0, gamma=0.3),
                             dyadic_pair_grid(1.0, n_scales=4))

    def test_param_validation(self):
        with pytest.raises(ValueError, match="p must exceed 4"):
            RegularityParams(p=3.0, gamma=0.3)
        with pytest.raises(ValueError, match="gamma"):
            RegularityParams(p=8.0, gamma=0.6)


class TestStructural:
    def test_exponential_both_branches(self):
        k_mu = make_kernel("constant", horizon=1.0)
        k_sig = make_kernel("exponential", horizon=1.0, lam=1.0)
        rep = check_structural(k_mu, k_sig, p_struct=4.0)
        assert rep.passed
        assert rep.measured["branch_smooth"]
        assert rep.measured["branch_convolution"]
        # closed form: sup_t (int_0^t e^{-4u} du)^{1/4} at t = 1
        expected = ((1.0 - math.exp(-4.0)) / 4.0) ** 0.25
        assert rep.measured["sigma_partial1_lp_sup"] == pytest.approx(expected, rel=1e-8)

    def test_fractional_convolution_only(self):
        k_mu = make_kernel("constant", horizon=1.0)
        k_sig = make_kernel("fractional", horizon=1.0, alpha=0.25)
        rep = check_structural(k_mu, k_sig, p_struct=2.0)
        assert rep.passed
        assert not rep.measured["branch_smooth"]
        assert rep.measured["branch_convolution"]

    def test_missing_derivative(self):
        k_mu = make_kernel("constant", horizon=1.0)
        k_sig = KernelSpec(
            horizon=1.0,
            general_eval=lambda s, t: s * t,
            bound=1.0,
            label="product",
        )
        with pytest.raises(MissingDerivative):
            check_structural(k_mu, k_sig, p_struct=2.0, require_branch="smooth")

    def test_general_kernel_neither_branch_fails(self):
        k_mu = make_kernel("constant", horizon=1.0)
        k_sig = KernelSpec(
            horizon=1.0,
            general_eval=lambda s, t: s * t,
            label="product",
        )
        rep = check_structural(k_mu, k_sig, p_struct=2.0)
        assert not rep.passed


class TestLipschitzProfile:
    def test_table_kernel(self):
        k = make_kernel("lipschitz_profile", horizon=1.0,
                        table=[(0.0, 1.0), (0.5, 0.5), (1.0, 0.5)])
        assert kernel_eval(k, 0.75, 1.0) == pytest.approx(0.75)
        # cell integral over [0, 1] at t = 1: trapezoid of the profile
        expected = 0.5 * (1.0 + 0.5) * 0.5 + 0.5 * 0.5
        assert cell_integral(k, 0.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-9)

    def test_partial1_integral_identity(self):
        # K(s,t) - K(0,t) must equal the integral of the declared derivative
        k = make_kernel("exponential", horizon=1.0, lam=3.0)
        t = 0.8
        for s in [0.2, 0.5, 0.8]:
            from scipy.integrate import quad
            val, _ = quad(lambda u: float(k.partial1(np.array([u]), np.array([t]))[0]), 0.0, s)
            lhs = kernel_eval(k, s, t) - kernel_eval(k, 0.0, t)
            assert lhs == pytest.approx(val, abs=1e-10)
