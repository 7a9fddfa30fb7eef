"""Tests for the Monte-Carlo belief and payoff simulator."""
import math

import pytest

from robust_bandit.analysis.belief_sim import (
    SimConfig,
    SimResult,
    martingale_check,
    payoff_consistent,
    quadratic_variation_profile,
    simulate_equilibrium,
)
from robust_bandit.analysis.model_core import derive_closed_form, value_function


# ─── Helpers ──────────────────────────────────────────────────────────────────

def small_config(**overrides) -> SimConfig:
    values = dict(n_paths=600, dt=1e-2, horizon=5.0, seed=11, initial_belief=0.6, chunk_size=128)
    values.update(overrides)
    return SimConfig(**values)


def make_result(payoff_mean: float, payoff_se: float, truncation_bound: float = 0.0) -> SimResult:
    return SimResult(
        payoff_mean=payoff_mean, payoff_se=payoff_se,
        entropy_mean=0.0, entropy_se=0.0,
        terminal_belief_mean=0.5, terminal_belief_se=0.0,
        absorption_frac=0.0, truncation_bound=truncation_bound,
        n_paths=100, n_steps=10, horizon=1.0,
    )


class TestSimConfig:
    def test_steps_round_up(self):
        cfg = small_config(dt=0.3, horizon=1.0)
        assert cfg.n_steps == 4
        assert cfg.effective_horizon == pytest.approx(1.2)

    def test_exact_division(self):
        assert small_config(dt=0.01, horizon=5.0).n_steps == 500

    @pytest.mark.parametrize("overrides", [
        {"n_paths": 0},
        {"dt": 0.0},
        {"dt": 6.0},
        {"chunk_size": 0},
        {"workers": 0},
        {"initial_belief": 1.5},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ValueError):
            small_config(**overrides)


class TestDeterminism:
    def test_same_seed_same_result(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        a = simulate_equilibrium(baseline_params, cf, small_config())
        b = simulate_equilibrium(baseline_params, cf, small_config())
        assert a.to_dict() == b.to_dict()

    def test_worker_count_does_not_change_result(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        serial = simulate_equilibrium(baseline_params, cf, small_config(workers=1))
        threaded = simulate_equilibrium(baseline_params, cf, small_config(workers=3))
        assert serial.to_dict() == threaded.to_dict()

    def test_different_seed_differs(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        a = simulate_equilibrium(baseline_params, cf, small_config(seed=1))
        b = simulate_equilibrium(baseline_params, cf, small_config(seed=2))
        assert a.payoff_mean != b.payoff_mean


class TestEquilibriumPaths:
    def test_absorbed_start_is_deterministic(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        cfg = small_config(initial_belief=0.2)
        result = simulate_equilibrium(baseline_params, cf, cfg)
        expected = baseline_params.r * (1.0 - math.exp(-baseline_params.delta * cfg.effective_horizon))
        assert result.payoff_mean == pytest.approx(expected, rel=1e-12)
        assert result.payoff_se == pytest.approx(0.0, abs=1e-12)
        assert result.entropy_mean == 0.0
        assert result.absorption_frac == 1.0
        assert result.terminal_belief_mean == pytest.approx(0.2, abs=1e-15)

    def test_beliefs_stay_in_unit_interval(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        result = simulate_equilibrium(baseline_params, cf, small_config(initial_belief=0.95))
        assert 0.0 <= result.terminal_belief_mean <= 1.0

    def test_truncation_bound(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        cfg = small_config()
        result = simulate_equilibrium(baseline_params, cf, cfg)
        cost = baseline_params.ambiguity_cost
        max_flow = max(baseline_params.r, cost - baseline_params.theta_low,
                       baseline_params.theta_high - cost)
        expected = math.exp(-baseline_params.delta * cfg.effective_horizon) * max_flow
        assert result.truncation_bound == pytest.approx(expected)

    @pytest.mark.slow
    @pytest.mark.parametrize("p0", [0.4, 0.5, 0.6, 0.8])
    def test_payoff_matches_closed_form(self, baseline_params, p0):
        cf = derive_closed_form(baseline_params)
        cfg = SimConfig(n_paths=100_000, dt=1e-3, horizon=30.0, seed=20240611,
                        initial_belief=p0, workers=4)
        result = simulate_equilibrium(baseline_params, cf, cfg)
        reference = value_function(baseline_params, cf, p0)
        assert payoff_consistent(result, reference, bias_allowance=2e-3)
        assert 0.0 < result.absorption_frac < 1.0


class TestForcedAllocation:
    def test_entropy_under_full_allocation(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        cfg = small_config()
        result = simulate_equilibrium(baseline_params, cf, cfg, forced_mu=1.0)
        tail = math.exp(-baseline_params.delta * cfg.effective_horizon)
        expected = 2.571429 ** 2 / (2 * baseline_params.delta) * (1.0 - tail)
        assert result.entropy_mean == pytest.approx(expected, rel=1e-6)
        assert result.entropy_se == pytest.approx(0.0, abs=1e-12)
        assert result.forced_mu == 1.0

    def test_safe_allocation_freezes_belief(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        cfg = small_config()
        result = simulate_equilibrium(baseline_params, cf, cfg, forced_mu=0.0)
        tail = math.exp(-baseline_params.delta * cfg.effective_horizon)
        assert result.terminal_belief_mean == pytest.approx(0.6, abs=1e-15)
        assert result.entropy_mean == 0.0
        assert result.payoff_mean == pytest.approx(baseline_params.r * (1.0 - tail), rel=1e-12)

    def test_rejects_bad_allocation(self, baseline_params):
        cf = derive_closed_form(baseline_params)
        with pytest.raises(ValueError):
            simulate_equilibrium(baseline_params, cf, small_config(), forced_mu=1.5)


class TestDiagnostics:
    def test_martingale_under_full_allocation(self, baseline_params):
        diag = martingale_check(baseline_params, small_config(n_paths=2000, initial_belief=0.5), 1.0)
        assert diag.passed
        assert diag.standard_error > 0.0

    def test_martingale_trivial_when_frozen(self, baseline_params):
        diag = martingale_check(baseline_params, small_config(), 0.0)
        assert diag.mean_increment == 0.0
        assert diag.standard_error == 0.0
        assert diag.passed

    def test_quadratic_variation_matches_model(self, baseline_params):
        cfg = small_config(n_paths=400, horizon=2.0, initial_belief=0.5)
        profile = quadratic_variation_profile(baseline_params, cfg, bins=10)
        assert profile.counts.sum() == cfg.n_paths * cfg.n_steps
        for i in range(1, 9):
            if profile.counts[i] < 1000:
                continue
            gap = abs(profile.empirical_rate[i] - profile.model_rate[i])
            assert gap <= 5.0 * profile.standard_error[i]

    def test_payoff_consistency_slack(self):
        assert payoff_consistent(make_result(1.0, 0.01), 1.029)
        assert not payoff_consistent(make_result(1.0, 0.01), 1.031)
        assert payoff_consistent(make_result(1.0, 0.01, truncation_bound=0.01), 1.039)
        assert payoff_consistent(make_result(1.0, 0.0), 1.04, bias_allowance=0.05)
