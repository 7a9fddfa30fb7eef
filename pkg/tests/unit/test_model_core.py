"""Tests for the baseline closed form and equilibrium strategies."""
import math

import numpy as np
import pytest

from robust_bandit.analysis.model_core import (
    as_belief,
    conditional_mean,
    cutoff,
    derive_closed_form,
    diffusion_coefficient,
    exponent,
    implied_alpha,
    lower_bound,
    optimal_allocation,
    power_kernel,
    value_derivative,
    value_function,
    worst_case_drift,
)
from robust_bandit.models.params import InvalidBeliefError


class TestClosedForm:
    @pytest.mark.parametrize("name", ["ambiguity_cost", "eta", "lam", "p_bar"])
    def test_caption_constants(self, baseline_params, caption_oracle, name):
        cf = derive_closed_form(baseline_params)
        assert getattr(cf, name) == pytest.approx(caption_oracle[name], rel=1e-9)

    def test_caption_explores(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        assert cf.explores

    def test_gamma_is_ignored(self, caption_params, baseline_params):
        assert derive_closed_form(caption_params) == derive_closed_form(baseline_params)

    def test_lambda_solves_characteristic_equation(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        assert cf.lam > 1.0
        assert cf.lam * (cf.lam - 1.0) == pytest.approx(baseline_params.delta / cf.phi ** 2)

    def test_cutoff_below_eta(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        assert 0.0 < cf.p_bar <= cf.eta

    def test_never_explore(self, never_explore_params):
        cf = derive_closed_form(never_explore_params)
        assert cf.eta > 1.0
        assert cf.p_bar == 1.0
        assert cf.coeff is None
        assert not cf.explores

    def test_cutoff_boundary_cases(self):
        assert cutoff(1.2, 1.0) == 1.0
        assert cutoff(1.2, 1.4) == 1.0
        assert cutoff(1.5, 0.0) == 0.0

    def test_exponent_increases_with_discount_rate(self):
        assert exponent(0.5, 1.0) < exponent(0.9, 1.0) < exponent(2.0, 1.0)

    def test_cutoff_falls_as_ambiguity_aversion_weakens(self, baseline_params):
        alphas = np.linspace(0.1, 0.5, 40)
        bars = [derive_closed_form(baseline_params.replace(alpha=a)).p_bar for a in alphas]
        assert np.all(np.diff(bars) < 0.0)


class TestValueFunction:
    def test_value_matching(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        assert value_function(baseline_params, cf, cf.p_bar) == baseline_params.r

    def test_safe_region_is_flat(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        p = np.linspace(0.0, cf.p_bar, 50)
        np.testing.assert_array_equal(value_function(baseline_params, cf, p), baseline_params.r)

    def test_endpoint_at_one(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        expected = baseline_params.theta_high - baseline_params.ambiguity_cost
        assert value_function(baseline_params, cf, 1.0) == pytest.approx(expected, abs=1e-15)

    def test_interior_value(self, baseline_params, caption_oracle):
        cf = derive_closed_form(baseline_params)
        expected = caption_oracle["v_at_0.6"]
        assert value_function(baseline_params, cf, 0.6) == pytest.approx(expected, rel=1e-9)

    def test_scalar_and_array_agree(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        grid = np.linspace(0.0, 1.0, 21)
        vec = value_function(baseline_params, cf, grid)
        for p, v in zip(grid, vec):
            assert value_function(baseline_params, cf, float(p)) == pytest.approx(v, abs=1e-15)

    def test_smooth_pasting(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        assert value_derivative(baseline_params, cf, cf.p_bar, side="left") == 0.0
        right = value_derivative(baseline_params, cf, cf.p_bar, side="right")
        assert right == pytest.approx(0.0, abs=1e-10)

    def test_finite_difference_slopes_meet_at_cutoff(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        p = cf.p_bar
        v0 = value_function(baseline_params, cf, p)
        gaps = []
        for h in (1e-2, 1e-3, 1e-4):
            left = (v0 - value_function(baseline_params, cf, p - h)) / h
            right = (value_function(baseline_params, cf, p + h) - v0) / h
            gaps.append(abs(right - left))
        assert gaps[1] < 0.5 * gaps[0]
        assert gaps[2] < 0.5 * gaps[1]
        assert gaps[2] < 1e-2

    def test_derivative_matches_finite_difference(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        p, h = 0.7, 1e-6
        fd = (value_function(baseline_params, cf, p + h)
              - value_function(baseline_params, cf, p - h)) / (2 * h)
        assert value_derivative(baseline_params, cf, p) == pytest.approx(fd, rel=1e-6)

    def test_convex_and_nondecreasing(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        v = value_function(baseline_params, cf, np.linspace(0.0, 1.0, 2001))
        assert np.all(np.diff(v) >= -1e-12)
        assert np.all(np.diff(v, n=2) >= -1e-12)

    def test_above_commitment_bound(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        p = np.linspace(0.0, 1.0, 501)
        assert np.all(value_function(baseline_params, cf, p) >= lower_bound(baseline_params, p) - 1e-12)

    def test_never_explore_value_is_safe_return(self, never_explore_params):
        cf = derive_closed_form(never_explore_params)
        v = value_function(never_explore_params, cf, np.linspace(0.0, 1.0, 11))
        np.testing.assert_array_equal(v, never_explore_params.r)
        assert value_function(never_explore_params, cf, 0.9) == never_explore_params.r

    def test_invalid_belief(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        with pytest.raises(InvalidBeliefError):
            value_function(baseline_params, cf, 1.2)
        with pytest.raises(InvalidBeliefError):
            value_function(baseline_params, cf, np.array([0.1, -0.1]))


class TestStrategies:
    def test_allocation_is_bang_bang(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        assert optimal_allocation(cf, 0.0) == 0
        assert optimal_allocation(cf, cf.p_bar) == 0
        assert optimal_allocation(cf, 0.5) == 1
        assert optimal_allocation(cf, 1.0) == 1

    def test_worst_case_drift(self, baseline_params):
        assert worst_case_drift(baseline_params, 1.0) == pytest.approx(-2.571429, rel=1e-6)
        assert worst_case_drift(baseline_params, 0.0) == 0.0
        assert worst_case_drift(baseline_params, 0.25) == pytest.approx(-2.571429 / 2, rel=1e-6)

    def test_worst_case_drift_rejects_bad_allocation(self, baseline_params):
        with pytest.raises(ValueError):
            worst_case_drift(baseline_params, 1.5)

    def test_implied_alpha_round_trip(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        assert implied_alpha(baseline_params, cf.p_bar) == pytest.approx(0.14, rel=1e-9)

    def test_implied_alpha_below_neutral_cutoff(self, baseline_params):
        with pytest.raises(ValueError):
            implied_alpha(baseline_params, 0.03)
        with pytest.raises(ValueError):
            implied_alpha(baseline_params, 1.0)


class TestHelpers:
    def test_conditional_mean(self, baseline_params):
        assert conditional_mean(baseline_params, 0.25) == 0.25

    def test_diffusion_vanishes_at_endpoints(self, baseline_params):
        phi = diffusion_coefficient(baseline_params, np.array([0.0, 0.5, 1.0]))
        assert phi[0] == 0.0 and phi[2] == 0.0
        assert phi[1] == pytest.approx((1.0 / 0.4) ** 2 / 16)

    def test_power_kernel_endpoint_limits(self):
        assert power_kernel(0.0, 1.5, 0.5) == 0.0
        assert power_kernel(0.0, -0.5, 1.0) == math.inf
        assert power_kernel(1.0, 0.5, 0.0) == 1.0
        assert power_kernel(1.0, 0.5, 2.0) == 0.0

    def test_power_kernel_anchor(self):
        assert power_kernel(0.3, 1.7, -0.7, anchor=0.3) == pytest.approx(1.0)
        direct = 0.3 ** 1.7 * 0.7 ** -0.7 / (0.6 ** 1.7 * 0.4 ** -0.7)
        assert power_kernel(0.3, 1.7, -0.7, anchor=0.6) == pytest.approx(direct)

    def test_as_belief_scalar_and_array(self):
        assert as_belief(0.5) == 0.5
        np.testing.assert_array_equal(as_belief([0.0, 1.0]), np.array([0.0, 1.0]))
