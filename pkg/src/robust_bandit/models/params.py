"""
Model primitives: the safe/ambiguous return rates, volatilities, discount
rate, robustness multiplier and the optional expert-signal volatility.

ModelParams is an immutable pydantic model so that a parameter set can be
loaded from a JSON file, echoed into a run manifest and passed between
threads without copying. Every analysis module takes a validated instance.
"""
import math
from typing import Any, List, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


# ── Exceptions ────────────────────────────────────────────────────────────────

class InvalidParamsError(ValueError):
    """Raised when a parameter set violates one or more model invariants."""

    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = problems
        detail = "; ".join(f"{field}: {msg}" for field, msg in problems)
        super().__init__(f"invalid model parameters ({detail})")


class InvalidBeliefError(ValueError):
    """Raised when a belief lies outside [0, 1] or is not a finite number."""


class MissingExpertSignalError(ValueError):
    """Raised when an expert-signal computation gets params without gamma."""


# ── Parameters ────────────────────────────────────────────────────────────────

class ModelParams(BaseModel):
    """Primitive constants of the robust two-armed bandit."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    r: float                      # safe-arm return rate
    theta_low: float              # low ambiguous return
    theta_high: float             # high ambiguous return
    sigma: float = Field(gt=0, allow_inf_nan=False)  # ambiguous-arm volatility
    delta: float = Field(gt=0, allow_inf_nan=False)  # discount rate
    alpha: float = Field(gt=0, allow_inf_nan=False)  # robustness multiplier
    gamma: Optional[float] = Field(default=None, gt=0, allow_inf_nan=False)  # expert signal

    @model_validator(mode="after")
    def _check_return_ordering(self) -> "ModelParams":
        problems = []
        for name in ("r", "theta_low", "theta_high"):
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{name}: must be finite")
        if not problems:
            if self.theta_low >= self.theta_high:
                problems.append("theta_high: must be strictly greater than theta_low")
            if not (self.theta_low <= self.r <= self.theta_high):
                problems.append("r: must lie within [theta_low, theta_high]")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def theta_range(self) -> float:
        return self.theta_high - self.theta_low

    @property
    def ambiguity_cost(self) -> float:
        """Constant flow penalty sigma^2 delta / (2 alpha) on the ambiguous arm."""
        return self.sigma ** 2 * self.delta / (2.0 * self.alpha)

    @property
    def has_expert(self) -> bool:
        return self.gamma is not None

    def without_expert(self) -> "ModelParams":
        return self.model_copy(update={"gamma": None})

    def replace(self, **changes: Any) -> "ModelParams":
        """Return a validated copy with some fields changed."""
        return validate_params({**self.model_dump(), **changes})


def _problems_from(exc: ValidationError) -> List[Tuple[str, str]]:
    problems: List[Tuple[str, str]] = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err["loc"])
        msg = str(err["msg"]).removeprefix("Value error, ")
        if loc:
            problems.append((loc, msg))
            continue
        # Model-level checks report "field: message" pairs joined by "; ".
        for chunk in msg.split("; "):
            field, _, text = chunk.partition(": ")
            problems.append((field, text) if text else ("params", chunk))
    return problems


def validate_params(raw: Union[ModelParams, Mapping[str, Any]]) -> ModelParams:
    """
    Validate a parameter set against all model invariants.

    Args:
        raw: an existing ModelParams (re-checked) or a mapping of field values.

    Returns:
        The validated ModelParams; an existing instance is returned unchanged.

    Raises:
        InvalidParamsError: with one (field, message) entry per violation.
    """
    data = raw.model_dump() if isinstance(raw, ModelParams) else dict(raw)
    try:
        checked = ModelParams.model_validate(data)
    except ValidationError as exc:
        raise InvalidParamsError(_problems_from(exc)) from exc
    return raw if isinstance(raw, ModelParams) else checked


def require_expert(params: ModelParams) -> float:
    """Return gamma, or raise if the params describe the baseline model."""
    if params.gamma is None:
        raise MissingExpertSignalError(
            "expert-signal volatility gamma is required for this computation"
        )
    return params.gamma


def check_belief(p: float) -> float:
    """Return p as a float if it is a valid belief in [0, 1]."""
    p = float(p)
    if not math.isfinite(p) or p < 0.0 or p > 1.0:
        raise InvalidBeliefError(f"belief must lie in [0, 1], got {p!r}")
    return p
