"""Shared test fixtures."""
import json
from pathlib import Path

import pytest

from robust_bandit.models.params import ModelParams, validate_params

FIXTURES_DIR = Path(__file__).parent / "fixtures"
CAPTION_PARAMS_FILE = FIXTURES_DIR / "fig_caption_params.json"
CAPTION_ORACLE_FILE = FIXTURES_DIR / "fig_caption_oracle.json"


def load_caption_params() -> dict:
    return json.loads(CAPTION_PARAMS_FILE.read_text())


@pytest.fixture(name="caption_params")
def caption_params_fixture() -> ModelParams:
    """Figure-caption parameters with the expert signal (gamma = 0.3)."""
    return validate_params(load_caption_params())


@pytest.fixture(name="caption_oracle")
def caption_oracle_fixture() -> dict:
    """Closed-form constants for the caption parameters, computed outside the package."""
    return json.loads(CAPTION_ORACLE_FILE.read_text())


@pytest.fixture(name="baseline_params")
def baseline_params_fixture(caption_params: ModelParams) -> ModelParams:
    """Figure-caption parameters without the expert signal."""
    return caption_params.without_expert()


@pytest.fixture(name="never_explore_params")
def never_explore_params_fixture(baseline_params: ModelParams) -> ModelParams:
    """alpha = 0.06 pushes eta above one."""
    return baseline_params.replace(alpha=0.06)
