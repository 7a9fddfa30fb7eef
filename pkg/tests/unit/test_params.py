"""Tests for parameter validation and belief checks."""
import json
import math
from pathlib import Path

import pytest
from pydantic import ValidationError

from robust_bandit.models.params import (
    InvalidBeliefError,
    InvalidParamsError,
    MissingExpertSignalError,
    ModelParams,
    check_belief,
    require_expert,
    validate_params,
)

FIXTURES_DIR = Path(__file__).parent.parent / "fixtures"


def load_caption_params() -> dict:
    return json.loads((FIXTURES_DIR / "fig_caption_params.json").read_text())


def _fields(exc: InvalidParamsError) -> set:
    return {name for name, _ in exc.problems}


class TestValidateParams:
    def test_caption_params_are_valid(self):
        params = validate_params(load_caption_params())
        assert isinstance(params, ModelParams)
        assert params.gamma == 0.3
        assert params.has_expert

    def test_existing_instance_returned_unchanged(self, caption_params):
        assert validate_params(caption_params) is caption_params

    @pytest.mark.parametrize("name", ["sigma", "delta", "alpha", "gamma"])
    def test_non_positive_scale_rejected(self, name):
        raw = {**load_caption_params(), name: 0.0}
        with pytest.raises(InvalidParamsError) as info:
            validate_params(raw)
        assert name in _fields(info.value)

    def test_theta_ordering_rejected(self):
        raw = {**load_caption_params(), "theta_low": 1.0, "theta_high": 1.0, "r": 1.0}
        with pytest.raises(InvalidParamsError) as info:
            validate_params(raw)
        assert "theta_high" in _fields(info.value)

    def test_r_outside_return_range_rejected(self):
        raw = {**load_caption_params(), "r": 1.5}
        with pytest.raises(InvalidParamsError) as info:
            validate_params(raw)
        assert _fields(info.value) == {"r"}

    def test_every_field_violation_reported(self):
        raw = {**load_caption_params(), "sigma": -1.0, "delta": 0.0, "alpha": -0.5}
        with pytest.raises(InvalidParamsError) as info:
            validate_params(raw)
        assert {"sigma", "delta", "alpha"} <= _fields(info.value)

    def test_both_ordering_violations_reported(self):
        raw = {**load_caption_params(), "theta_low": 1.0, "theta_high": 0.0, "r": 0.5}
        with pytest.raises(InvalidParamsError) as info:
            validate_params(raw)
        assert _fields(info.value) == {"theta_high", "r"}

    def test_non_finite_return_rejected(self):
        raw = {**load_caption_params(), "r": math.inf}
        with pytest.raises(InvalidParamsError) as info:
            validate_params(raw)
        assert "r" in _fields(info.value)

    def test_missing_field_rejected(self):
        raw = load_caption_params()
        del raw["delta"]
        with pytest.raises(InvalidParamsError) as info:
            validate_params(raw)
        assert "delta" in _fields(info.value)

    def test_unknown_field_rejected(self):
        with pytest.raises(InvalidParamsError):
            validate_params({**load_caption_params(), "rho": 0.1})

    def test_error_is_a_value_error(self):
        with pytest.raises(ValueError):
            validate_params({**load_caption_params(), "sigma": -1.0})

    def test_gamma_is_optional(self):
        raw = load_caption_params()
        del raw["gamma"]
        assert validate_params(raw).has_expert is False


class TestModelParams:
    def test_ambiguity_cost(self, caption_params):
        assert caption_params.ambiguity_cost == pytest.approx(0.5142857, rel=1e-6)

    def test_frozen(self, caption_params):
        with pytest.raises(ValidationError):
            caption_params.alpha = 1.0

    def test_replace_revalidates(self, caption_params):
        assert caption_params.replace(alpha=0.2).alpha == 0.2
        with pytest.raises(InvalidParamsError):
            caption_params.replace(alpha=-0.2)

    def test_without_expert(self, caption_params):
        assert caption_params.without_expert().gamma is None
        assert caption_params.gamma == 0.3


class TestBeliefChecks:
    @pytest.mark.parametrize("p", [0.0, 0.5, 1.0])
    def test_valid_beliefs(self, p):
        assert check_belief(p) == p

    @pytest.mark.parametrize("p", [-1e-12, 1.0000001, math.nan, math.inf])
    def test_invalid_beliefs(self, p):
        with pytest.raises(InvalidBeliefError):
            check_belief(p)

    def test_require_expert(self, caption_params, baseline_params):
        assert require_expert(caption_params) == 0.3
        with pytest.raises(MissingExpertSignalError):
            require_expert(baseline_params)
